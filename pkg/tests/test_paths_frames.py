import json

import numpy as np
import pytest

from geowiener.errors import DegenerateFrameError, DomainError, UsageError
from geowiener.frames import (
    DevelopmentDriver,
    brownian_sample,
    develop,
    develop_batch,
    develop_ode,
    frame_from_ambient,
    frame_orthonormalize,
    frame_to_ambient,
    ric_operator,
)
from geowiener.geometry import geodesic_shoot, parallel_transport, transport_along_path
from geowiener.manifolds import ChartPoint, Euclidean, Hyperbolic2, Sphere2, TangentVec, Torus
from geowiener.paths import Partition, PiecewiseGeodesicPath, energy


def _excess(a, b, c):
    # spherical excess of a unit-sphere triangle (L'Huilier / Eriksson)
    num = abs(np.dot(a, np.cross(b, c)))
    den = 1 + a @ b + b @ c + c @ a
    return 2 * np.arctan2(num, den)


def _signed_angle(p, w0, w1):
    return np.arctan2(np.dot(np.cross(p, w0), w1), np.dot(w0, w1))


TRIANGLES = [
    (np.eye(3)[0], np.eye(3)[1], np.eye(3)[2]),
    tuple(v / np.linalg.norm(v) for v in (np.array([0.0, 0.1, -1.0]), np.array([0.4, 0.0, -1.0]), np.array([0.1, 0.5, -1.0]))),
]


@pytest.mark.parametrize("tri", TRIANGLES)
def test_sphere_holonomy_closed_form_route(tri):
    s = Sphere2(1.0)
    a = tri[0]
    w = s.default_frame(a)[:, 0]
    p = a
    for q in tri[1:] + (a,):
        p_next, _, W = s.exp_transport(p, s.log(p, q), w[:, None])
        p, w = p_next, W[:, 0]
    w0 = s.default_frame(a)[:, 0]
    assert np.allclose(p, a, atol=1e-12)
    assert abs(abs(_signed_angle(a, w0, w)) - _excess(*tri)) <= 1e-5


@pytest.mark.parametrize("tri", TRIANGLES)
def test_sphere_holonomy_chart_ode_route(tri):
    s = Sphere2(1.0)
    a = tri[0]
    c, ch = s.from_ambient(a)
    x = ChartPoint(c, ch)
    F = frame_from_ambient(s, a, s.default_frame(a))
    w = F.vector(0)
    for q in tri[1:] + (a,):
        p = s.to_ambient(x.coords, x.chart_id)
        v = TangentVec(x, s.chart_tangent(x.coords, x.chart_id, s.log(p, q)))
        seg = geodesic_shoot(s, x, v, 1.0)
        w = parallel_transport(s, seg, TangentVec(x, w.components))
        x = w.base
    w_amb = s.embed_jacobian(x.coords, x.chart_id) @ w.components
    assert np.allclose(s.to_ambient(x.coords, x.chart_id), a, atol=1e-7)
    assert abs(abs(_signed_angle(a, s.default_frame(a)[:, 0], w_amb)) - _excess(*tri)) <= 1e-5


def test_partition_constructors():
    P = Partition.uniform(2.0, 8)
    assert P.N == 8 and P.T == 2.0 and P.mesh == pytest.approx(0.25)
    D = Partition.dyadic(3)
    assert D.N == 24 and D.T == 3.0 and D.mesh == 0.125
    assert Partition.uniform(1.0, 4) == Partition(np.linspace(0, 1, 5))
    assert int(P.segment_of(0.25)) == 1 and int(P.segment_of(2.0)) == 7
    for bad in ([0.0], [0.1, 1.0], [0.0, 0.5, 0.5]):
        with pytest.raises(DomainError):
            Partition(np.array(bad))
    with pytest.raises(DomainError):
        P.segment_of(2.5)


def test_flat_development_is_the_polygon():
    m = Euclidean(2)
    P = Partition(np.array([0.0, 0.3, 0.5, 1.2]))
    b = np.array([[[1.0, 0.0], [0.0, 2.0], [-1.0, 1.0]]])
    batch = develop_batch(m, np.zeros(2), np.eye(2), b, P)
    expect = np.vstack([np.zeros(2), np.cumsum(b[0] * P.dt[:, None], axis=0)])
    assert np.allclose(batch.points[0], expect)
    assert batch.energy()[0] == pytest.approx(np.sum(b[0] ** 2 * P.dt[:, None]))
    assert np.allclose(batch.point_at(0.4)[0], expect[1] + 0.1 * b[0, 1])


@pytest.mark.parametrize("m,x", [(Sphere2(1.0), ChartPoint([0.2, 0.1])), (Hyperbolic2(-1.0), ChartPoint([0.0, 1.0]))])
def test_development_matches_chart_ode(m, x):
    u = frame_orthonormalize(m, x, np.eye(2))
    P = Partition.uniform(1.0, 5)
    rng = np.random.default_rng(0)
    drv = DevelopmentDriver(P, rng.normal(size=(5, 2)))
    path, frames = develop(m, x, u, drv)
    knots, ode_frames = develop_ode(m, x, u, drv)
    for k in range(6):
        assert np.allclose(path.points[k], m.to_ambient(knots[k].coords, knots[k].chart_id), atol=1e-7)
        p_ode, F_ode = frame_to_ambient(m, ode_frames[k])
        assert np.allclose(path.frames[k], F_ode, atol=1e-7)


def test_develop_rejects_mismatched_inputs():
    m = Sphere2()
    x = ChartPoint([0.0, 0.0])
    u = frame_orthonormalize(m, ChartPoint([0.1, 0.0]), np.eye(2))
    with pytest.raises(UsageError):
        DevelopmentDriver(Partition.uniform(1, 3), np.zeros((2, 2)))
    with pytest.raises(UsageError):
        develop(m, x, u, DevelopmentDriver(Partition.uniform(1, 3), np.zeros((3, 2))))


def test_frame_orthonormalize_detects_rank_loss():
    m = Hyperbolic2()
    x = ChartPoint([0.0, 2.0])
    u = frame_orthonormalize(m, x, np.array([[1.0, 1.0], [0.0, 1.0]]))
    g = m.metric(x.coords)
    assert np.allclose(u.columns.T @ g @ u.columns, np.eye(2))
    with pytest.raises(DegenerateFrameError):
        frame_orthonormalize(m, x, np.array([[1.0, 2.0], [1.0, 2.0]]))


def test_ricci_in_a_frame():
    for m, K in ((Sphere2(2.0), 0.25), (Hyperbolic2(-0.5), -0.5), (Torus([1, 1]), 0.0)):
        x = ChartPoint([0.3, 0.9])
        u = frame_orthonormalize(m, x, np.eye(2))
        assert np.allclose(ric_operator(m, u), K * np.eye(2), atol=1e-5)


def test_transport_along_path_flat_and_closed_loop():
    m = Euclidean(2)
    P = Partition.uniform(1.0, 3)
    path = PiecewiseGeodesicPath(develop_batch(m, np.zeros(2), np.eye(2), np.ones((1, 3, 2)), P))
    w = TangentVec(ChartPoint([0.0, 0.0]), [0.3, -0.2])
    out = transport_along_path(m, path, w, 0.0, 1.0)
    assert np.allclose(out.components, [0.3, -0.2])
    with pytest.raises(DomainError):
        transport_along_path(m, path, w, 0.5, 0.2)


def test_path_json_roundtrip():
    m = Sphere2(1.0)
    batch, inc = brownian_sample(m, ChartPoint([0.1, 0.2]), frame_orthonormalize(m, ChartPoint([0.1, 0.2]), np.eye(2)), 1.0, 6, 9)
    path = batch[0]
    again = PiecewiseGeodesicPath.from_json(path.to_json())
    assert np.allclose(again.points, path.points, atol=1e-14)
    assert json.loads(path.to_json())["manifold"] == {"manifold": "sphere2", "radius": 1.0}
    assert energy(again) == pytest.approx(energy(path))
    assert inc.shape == (1, 6, 2)


def test_brownian_sample_is_reproducible():
    m = Hyperbolic2()
    x = ChartPoint([0.0, 1.0])
    u = frame_orthonormalize(m, x, np.eye(2))
    a, _ = brownian_sample(m, x, u, 1.0, 4, 11, samples=3)
    b, _ = brownian_sample(m, x, u, 1.0, 4, 11, samples=3)
    c, _ = brownian_sample(m, x, u, 1.0, 4, 12, samples=3)
    assert np.array_equal(a.points, b.points)
    assert not np.array_equal(a.points, c.points)
