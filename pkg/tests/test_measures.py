import math
import warnings

import numpy as np
import pytest
from scipy import stats

from geowiener.cylinder import BumpProduct, Constant, CylinderFunction, FlatCosine, LegendreZonal, SquaredNorm, bump
from geowiener.errors import ConfigurationError, NoOracleError, UsageError
from geowiener.frames import develop_batch
from geowiener.manifolds import Euclidean, Hyperbolic2, MetricManifold, Sphere2, Torus
from geowiener.measures import (
    DiscreteMixture,
    FiniteDimMeasure,
    PointMass,
    UniformChartBox,
    convergence_sweep,
    density,
    estimate,
    free_path_estimate,
    result_from_values,
    scal_weight,
    wiener_cylinder_exact,
    wiener_mc,
)
from geowiener.paths import Partition, PiecewiseGeodesicPath

SOUTH = np.array([0.0, 0.0, -1.0])


class CoshDistance(CylinderFunction):
    """cosh d(x0, y) on H^2(-1): Δ cosh ρ = 2 cosh ρ."""

    def __init__(self, m, x0, time):
        self.m, self.x0, self.times = m, x0, (time,)

    def f(self, points):
        return np.cosh(self.m.distance(self.x0, points[0]))


class TorusCosine(CylinderFunction):
    def __init__(self, time):
        self.times = (time,)

    def f(self, points):
        return np.cos(2 * np.pi * points[0][:, 0])


def test_normalizers():
    P = Partition(np.array([0.0, 0.25, 1.0]))
    g1 = FiniteDimMeasure(Euclidean(2), np.zeros(2), "G1", P)
    g0 = FiniteDimMeasure(Euclidean(2), np.zeros(2), "G0", P)
    assert g1.Z == pytest.approx((2 * np.pi) ** 2)
    assert g0.Z == pytest.approx(np.prod((np.sqrt(2 * np.pi) * P.dt) ** 2))
    with pytest.raises(UsageError):
        FiniteDimMeasure(Euclidean(2), np.zeros(2), "G2", P)


@pytest.mark.parametrize("kind", ["G1", "G0"])
def test_flat_density_is_the_gaussian_law_of_b(kind):
    m = Euclidean(2)
    P = Partition(np.array([0.0, 0.3, 0.5, 1.0]))
    b = np.array([[0.4, -1.0], [2.0, 0.1], [-0.3, 0.7]])
    path = PiecewiseGeodesicPath(develop_batch(m, np.zeros(2), np.eye(2), b[None], P))
    cov = np.repeat(1 / P.dt, 2)
    ref = stats.multivariate_normal(np.zeros(6), np.diag(cov)).pdf(b.ravel())
    assert density(FiniteDimMeasure(m, np.zeros(2), kind, P), path) == pytest.approx(ref, rel=1e-8)


@pytest.mark.parametrize("kind", ["G1", "G0"])
def test_flat_weights_are_one(kind):
    m = Euclidean(2)
    P = Partition.uniform(1.0, 4)
    r = estimate(FiniteDimMeasure(m, np.zeros(2), kind, P), lambda batch: np.ones(batch.size), 500, 1)
    assert r.mean == pytest.approx(1.0, abs=1e-8)
    assert r.ess == pytest.approx(500, rel=1e-8)
    assert r.rejected == 0


def test_flat_estimates_match_gaussian_values():
    m = Euclidean(2)
    x0 = np.array([0.1, -0.2])
    P = Partition.uniform(1.0, 4)
    for F in (
        bump(m, np.array([0.5, 0.3]), 0.7, 1.0),
        FlatCosine(m, [1.0, -0.5], 0.75),
        BumpProduct(m, [[0.4, 0.0], [-0.2, 0.5]], [0.6, 0.9], [0.5, 1.0]),
        SquaredNorm(m, np.zeros(2), 1.0),
    ):
        r = estimate(FiniteDimMeasure(m, x0, "G1", P), F, 4000, 7)
        assert r.within(F.flat_expectation(x0), k=4.0)


def test_flat_closed_forms_against_quadrature():
    m = Euclidean(2)
    x0 = np.array([0.1, -0.2])
    for F in (bump(m, np.array([0.5, 0.3]), 0.7, 1.0), FlatCosine(m, [1.0, -0.5], 0.75),
              BumpProduct(m, [[0.4, 0.0], [-0.2, 0.5]], [0.6, 0.9], [0.5, 1.0])):
        assert wiener_cylinder_exact(m, x0, F) == pytest.approx(F.flat_expectation(x0), rel=1e-7)


@pytest.mark.parametrize("T", [0.3, 1.0])
def test_eigenfunction_truths(T):
    s = Sphere2(1.0)
    for l in (1, 2, 3):
        val = wiener_cylinder_exact(s, SOUTH, LegendreZonal(s, SOUTH, l, T))
        assert val == pytest.approx(math.exp(-l * (l + 1) * T / 2), abs=1e-10)
    h = Hyperbolic2(-1.0)
    x0 = h.to_ambient(np.array([0.0, 1.0]))
    assert wiener_cylinder_exact(h, x0, CoshDistance(h, x0, T)) == pytest.approx(math.exp(T), rel=1e-7)
    tor = Torus([1.0, 1.0])
    assert wiener_cylinder_exact(tor, np.zeros(2), TorusCosine(T), resolution=32) == pytest.approx(
        math.exp(-2 * np.pi**2 * T), abs=1e-12
    )


def test_two_time_quadrature_on_sphere_matches_markov_factorisation():
    # E[P1(X_s·x0) P1(X_t·x0)] = E[P1(X_s·x0) e^{-(t-s)} P1(X_s·x0)]
    s = Sphere2(1.0)

    class P1Pair(CylinderFunction):
        times = (0.2, 0.5)

        def f(self, points):
            return (points[0] @ SOUTH) * (points[1] @ SOUTH)

    class P1Sq(CylinderFunction):
        times = (0.2,)

        def f(self, points):
            return (points[0] @ SOUTH) ** 2

    lhs = wiener_cylinder_exact(s, SOUTH, P1Pair())
    rhs = math.exp(-0.3) * wiener_cylinder_exact(s, SOUTH, P1Sq())
    assert lhs == pytest.approx(rhs, abs=1e-6)


def test_wiener_mc_against_truth():
    s = Sphere2(1.0)
    F = LegendreZonal(s, SOUTH, 1, 0.5)
    r = wiener_mc(s, SOUTH, F, 0.5, 32, 4000, 3)
    assert r.within(math.exp(-0.5), k=3.0, floor=0.01)


def test_estimate_is_independent_of_worker_count():
    s = Sphere2(1.0)
    meas = FiniteDimMeasure(s, SOUTH, "G0", Partition.uniform(0.5, 4))
    F = LegendreZonal(s, SOUTH, 1, 0.5)
    a = estimate(meas, F, 2500, 42, workers=1)
    b = estimate(meas, F, 2500, 42, workers=3)
    c = estimate(meas, F, 2500, 43, workers=1)
    assert (a.mean, a.stderr, a.ess) == (b.mean, b.stderr, b.ess)
    assert a.mean != c.mean


def test_low_ess_warns():
    w = np.array([1e6] + [1e-6] * 99)
    with pytest.warns(RuntimeWarning, match="effective sample size"):
        r = result_from_values(w, w, 0)
    assert r.ess < 10 and r.warning


def test_jackknife_equals_standard_error_for_plain_means():
    y = np.random.default_rng(0).normal(size=200)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        r = result_from_values(y, np.ones(200), 0)
    assert r.stderr == pytest.approx(np.std(y, ddof=1) / np.sqrt(200), rel=1e-12)


def test_scal_weight():
    s = Sphere2(2.0)
    batch = develop_batch(s, np.array([0, 0, -2.0]), s.default_frame(np.array([0, 0, -2.0])), np.ones((3, 5, 2)),
                          Partition.uniform(1.5, 5))
    assert np.allclose(scal_weight(batch), math.exp(-1.5 * 0.5 / 6))


def test_free_path_point_mass_and_mixture():
    m = Euclidean(2)
    P = Partition.uniform(1.0, 2)
    F = bump(m, np.array([0.3, 0.0]), 0.6, 1.0)
    a, b = np.zeros(2), np.array([1.0, 0.5])
    r0 = free_path_estimate(m, PointMass(a), "G1", F, P, 3000, 5)
    assert r0.mean == estimate(FiniteDimMeasure(m, a, "G1", P), F, 3000, 5).mean
    mix = free_path_estimate(m, DiscreteMixture([a, b], [0.25, 0.75]), "G0", F, P, 6000, 5)
    exact = 0.25 * F.flat_expectation(a) + 0.75 * F.flat_expectation(b)
    assert mix.within(exact, k=4.0)
    box = free_path_estimate(m, UniformChartBox([0, 0], [1, 1]), "G1", Constant(1.0, 1.0), P, 100, 5)
    assert box.mean == pytest.approx(1.0)
    with pytest.raises(ConfigurationError):
        DiscreteMixture([a, b], [0.5, 0.6])
    with pytest.raises(ConfigurationError):
        free_path_estimate(m, "uniform", "G1", F, P, 10, 0)


def test_convergence_sweep_g0_truth_includes_curvature_factor():
    s = Sphere2(1.0)
    F = Constant(1.0, 0.5)
    res = convergence_sweep(s, SOUTH, F, "G0", [Partition.uniform(0.5, 2), Partition.uniform(0.5, 4)], 200, 0)
    assert res["truth"] == pytest.approx(math.exp(-1 / 6), rel=1e-10)
    assert [r["N"] for r in res["rows"]] == [2, 4]


def test_no_oracle_for_generic_metric():
    mm = MetricManifold(lambda u: np.eye(2), 2)
    with pytest.raises(NoOracleError):
        wiener_cylinder_exact(mm, np.zeros(2), Constant(1.0, 1.0))
