import math

import numpy as np
import pytest

from geowiener.cylinder import Constant, bump
from geowiener.errors import CostCapError, UsageError
from geowiener.frames import develop_batch
from geowiener.infinite_horizon import (
    _wls_slope,
    d_infinity,
    dyadic_estimate,
    extended_functional,
    phi_extend,
    trichotomy_experiment,
)
from geowiener.manifolds import Euclidean, Hyperbolic2, Sphere2, Torus
from geowiener.paths import Partition, PiecewiseGeodesicPath


def _flat_path(b, T=1.0):
    m = Euclidean(2)
    b = np.asarray(b, dtype=float)
    return PiecewiseGeodesicPath(develop_batch(m, np.zeros(2), np.eye(2), b[None], Partition.uniform(T, b.shape[0])))


def test_extension_doubles_back_along_last_segment():
    path = _flat_path([[1.0, 0.0], [0.0, 2.0]])
    ext = phi_extend(path)
    end = path.point_at(1.0)
    assert np.allclose(ext.eval(1.0), end)
    assert np.allclose(ext.eval(1.25), end - 0.25 * np.array([0.0, 2.0]))
    assert np.allclose(ext.velocity(3.0), [0.0, -2.0])
    fwd = phi_extend(path, sign=1)
    assert np.allclose(fwd.eval(1.5), end + 0.5 * np.array([0.0, 2.0]))
    with pytest.raises(UsageError):
        phi_extend(path, sign=0)
    with pytest.raises(UsageError):
        ext.eval(-1.0)


def test_extension_on_sphere_stays_on_the_sphere_with_constant_speed():
    s = Sphere2(1.0)
    p0 = np.array([0.0, 0.0, -1.0])
    batch = develop_batch(s, p0, s.default_frame(p0), np.array([[[0.5, 1.0], [1.5, -0.2]]]), Partition.uniform(1.0, 2))
    ext = phi_extend(PiecewiseGeodesicPath(batch))
    for t in (1.3, 4.0, 10.0):
        q = ext.eval(t)
        assert np.linalg.norm(q) == pytest.approx(1.0, abs=1e-12)
        assert np.linalg.norm(ext.velocity(t)) == pytest.approx(np.hypot(1.5, 0.2), rel=1e-12)


def test_d_infinity_metric_properties():
    a = phi_extend(_flat_path([[1.0, 0.0], [0.0, 1.0]]))
    b = phi_extend(_flat_path([[1.0, 0.0], [0.0, 1.1]]))
    c = phi_extend(_flat_path([[0.9, 0.0], [0.0, 1.0]]))
    assert d_infinity(a, a) == 0.0
    dab, dba = d_infinity(a, b), d_infinity(b, a)
    assert dab == dba and 0 < dab <= 1.0
    # tails separate linearly when the final velocities differ
    assert dab == 1.0
    assert d_infinity(a, c) <= d_infinity(a, b) + d_infinity(b, c) + 1e-12
    # same final velocity: the tail keeps a constant offset of 0.05
    assert d_infinity(a, c) == pytest.approx(0.05, abs=1e-12)


def test_d_infinity_curved_tail_probe():
    s = Sphere2(1.0)
    p0 = np.array([0.0, 0.0, -1.0])
    P = Partition.uniform(1.0, 2)
    mk = lambda b: phi_extend(PiecewiseGeodesicPath(develop_batch(s, p0, s.default_frame(p0), np.array([b]), P)))
    a, b = mk([[0.5, 0.0], [0.5, 0.0]]), mk([[0.5, 0.0], [0.52, 0.0]])
    # both extensions run along the same great circle, a constant speed offset apart
    d = d_infinity(a, b)
    assert 0 < d <= 1.0


def test_extended_functional_evaluates_beyond_horizon():
    m = Euclidean(2)
    path = _flat_path([[1.0, 0.0], [1.0, 0.0]])
    F = bump(m, np.array([1.0, 0.0]), 0.5, 2.0)
    # γ(1) = (1, 0), extension reaches the origin at t = 2; ψ = d^2 / 2 = 0.5
    val = extended_functional(F)(path.as_batch())
    assert val[0] == pytest.approx(math.exp(-0.5 / 0.25), rel=1e-12)


def test_dyadic_estimate_flat_mass_and_cost_cap():
    m = Euclidean(2)
    r = dyadic_estimate(m, np.zeros(2), Constant(1.0, 1.0), 2, "G0", 200, 0)
    assert r.mean == pytest.approx(1.0, abs=1e-8)
    with pytest.raises(CostCapError) as exc:
        dyadic_estimate(m, np.zeros(2), Constant(1.0, 1.0), 4, "G0", 10, 0, cap_segments=24)
    assert exc.value.suggested_cap == 64
    with pytest.raises(UsageError):
        dyadic_estimate(m, np.zeros(2), Constant(1.0, 1.0), 0, "G0", 10, 0)


def test_wls_slope_exact_on_lines():
    x = np.array([1.0, 2.0, 3.0])
    s, se = _wls_slope(x, 0.5 - 0.25 * x, np.array([0.1, 0.2, 0.1]))
    assert s == pytest.approx(-0.25) and se > 0


def test_trichotomy_small_run_has_expected_signs():
    models = {
        "sphere2": (Sphere2(1.0), np.array([0.0, 0.0, -1.0])),
        "torus": (Torus([1.0, 1.0]), np.zeros(2)),
        "hyperbolic2": (Hyperbolic2(-1.0), Hyperbolic2(-1.0).to_ambient(np.array([0.0, 1.0]))),
    }
    res = trichotomy_experiment(models, horizons=(0.5, 1.0), mesh=0.25, levels=(1,), samples=400, seed=1)
    fits = res["fits"]
    assert fits["torus"]["slope"] == pytest.approx(0.0, abs=1e-8)
    assert fits["sphere2"]["slope"] < -0.1 and fits["hyperbolic2"]["slope"] > 0.1
    assert fits["torus"]["predicted"] == 0.0 and math.copysign(1, fits["torus"]["predicted"]) == 1
    assert {r["partition"] for r in res["rows"]} == {"uniform", "dyadic"}
