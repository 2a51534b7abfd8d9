import numpy as np
import pytest
from scipy import integrate, special

from geowiener.errors import AccuracyError, DomainError, NoOracleError
from geowiener.heat_kernel import HeatKernelOracle, p, quad_grid, semigroup_defect
from geowiener.manifolds import Euclidean, Hyperbolic2, MetricManifold, Sphere2, Torus


def sphere_series(t, rho, r=1.0, terms=400):
    l = np.arange(terms)
    c = (2 * l + 1) / (4 * np.pi * r * r) * np.exp(-l * (l + 1) * t / (2 * r * r))
    return float(np.sum(c * special.eval_legendre(l, np.cos(rho / r))))


def mckean_quad(t, rho):
    # kernel of e^{tΔ} on H^2(-1), integrated directly
    def f(s):
        gap = 2 * np.sinh(0.5 * (s + rho)) * np.sinh(0.5 * (s - rho))
        return s * np.exp(-s * s / (4 * t)) / np.sqrt(gap)

    upper = max(rho, np.sqrt(240 * t)) + 2.0
    val, _ = integrate.quad(f, rho, upper, epsabs=0, epsrel=1e-11, limit=400)
    return np.sqrt(2) * np.exp(-t / 4) / (4 * np.pi * t) ** 1.5 * val


@pytest.mark.parametrize("t", [0.05, 0.5, 2.0])
@pytest.mark.parametrize("rho", [0.0, 0.7, 2.5])
def test_sphere_kernel_against_legendre_series(t, rho):
    orc = HeatKernelOracle(Sphere2(1.0))
    assert orc.radial(t, rho) == pytest.approx(sphere_series(t, rho), rel=1e-10, abs=1e-14)


@pytest.mark.parametrize("t", [0.1, 0.5, 2.0])
@pytest.mark.parametrize("rho", [0.01, 0.8, 3.0])
def test_hyperbolic_kernel_against_direct_integral(t, rho):
    orc = HeatKernelOracle(Hyperbolic2(-1.0))
    # Δ/2 convention: p_t = q_{t/2}
    assert orc.radial(t, rho) == pytest.approx(mckean_quad(t / 2, rho), rel=1e-9)


def test_curvature_scaling():
    h1, h2 = HeatKernelOracle(Hyperbolic2(-1.0)), HeatKernelOracle(Hyperbolic2(-4.0))
    s1, s2 = HeatKernelOracle(Sphere2(1.0)), HeatKernelOracle(Sphere2(0.5))
    # metric scaled by 1/4: distances halve, times scale by 1/4, densities by 4
    assert h2.radial(0.1, 0.3) == pytest.approx(4 * h1.radial(0.4, 0.6), rel=1e-10)
    assert s2.radial(0.1, 0.3) == pytest.approx(4 * s1.radial(0.4, 0.6), rel=1e-10)


@pytest.mark.parametrize("m", [Sphere2(1.0), Hyperbolic2(-1.0)], ids=repr)
def test_short_time_diagonal(m):
    # p_t(x, x) = (2πt)^{-1} (1 + Scal t / 12 + O(t^2)) for e^{tΔ/2}
    t = 1e-3
    val = HeatKernelOracle(m).radial(t, 0.0) * 2 * np.pi * t
    assert val == pytest.approx(1 + 2 * m.curvature * t / 12, abs=5e-6)


def test_flat_and_torus_kernels():
    m = Euclidean(2)
    x, y = np.zeros(2), np.array([0.3, -0.4])
    assert p(m, 0.5, x, y) == pytest.approx(np.exp(-0.25 / 1.0) / (np.pi))
    tor = Torus([1.0, 1.0])
    orc = HeatKernelOracle(tor)
    # image sum against an independent Fourier series
    d = np.array([0.3, 0.45])
    img = orc._wrapped_1d(0.05, d, 1.0)
    k = np.arange(1, 200)
    four = (1 + 2 * np.sum(np.exp(-(2 * np.pi * k) ** 2 * 0.05 / 2) * np.cos(2 * np.pi * k * d[:, None]), axis=-1))
    assert np.allclose(img, four, rtol=1e-12)
    assert orc.p(0.3, np.zeros(2), d) == pytest.approx(orc.p(0.3, np.zeros(2), d + 1.0))


MODELS = [Euclidean(2), Torus([1.0, 2.0]), Sphere2(1.0), Sphere2(2.0), Hyperbolic2(-1.0), Hyperbolic2(-0.5)]


@pytest.mark.parametrize("m", MODELS, ids=repr)
@pytest.mark.parametrize("t", [0.1, 0.5, 1.5])
def test_mass_one(m, t):
    orc = HeatKernelOracle(m)
    x = None if isinstance(m, (Euclidean, Torus)) else m.to_ambient(np.array([0.1, 0.9]))
    g = quad_grid(m, 64, center=x, t=t)
    x = np.zeros(m.ambient_dim) if x is None else x
    assert abs(g.integrate(orc.p(t, x, g.points)) - 1) <= 1e-6


@pytest.mark.parametrize("m", MODELS, ids=repr)
def test_semigroup_property(m):
    x = np.zeros(m.ambient_dim)
    if isinstance(m, (Sphere2, Hyperbolic2)):
        x = m.to_ambient(np.array([0.1, 0.9]))
    F = m.default_frame(x)
    y, _, _ = m.exp_transport(x, F @ np.array([0.5, 0.3]))
    assert semigroup_defect(m, 0.2, 0.3, x, y) <= 1e-5
    assert semigroup_defect(m, 0.5, 1.0, x, y) <= 1e-5


def test_symmetry_and_positivity():
    for m in MODELS[2:]:
        orc = HeatKernelOracle(m)
        x = m.to_ambient(np.array([0.1, 0.9]))
        y = m.to_ambient(np.array([-0.4, 1.3]))
        assert orc.p(0.4, x, y) == orc.p(0.4, y, x)
        assert orc.p(0.4, x, y) > 0


def test_errors():
    with pytest.raises(NoOracleError):
        HeatKernelOracle(MetricManifold(lambda u: np.eye(2), 2))
    with pytest.raises(DomainError):
        p(Euclidean(2), 0.0, np.zeros(2), np.zeros(2))
    with pytest.raises(DomainError):
        quad_grid(Euclidean(2), 4)
    with pytest.raises(AccuracyError) as exc:
        HeatKernelOracle(Sphere2(1.0), max_terms=50).sphere_terms(1e-4)
    assert exc.value.achieved_bound > 0
