"""The measures P^1 and P^0 on piecewise geodesic paths, and Wiener ground truth.

Both measures are represented by densities over development coordinates
``b``.  Estimates use importance sampling with proposal ``b_i ~ N(0, I/Δ_i)``
(the flat P^1 law), for which the weights reduce to

    w1 = sqrt(det G1) / ∏ Δ_i^{n/2},     w0 = sqrt(det G0) / ∏ Δ_i^{3n/2}.

The proposal path is the geodesic random walk, so the same samples serve
Wiener-measure Monte Carlo (unit weights).  P^0 is a finite measure on
curved models; estimates are unnormalised weighted means.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .cylinder import CylinderFunction
from .errors import ConfigurationError, NoOracleError, UsageError
from .frames import develop_batch, gaussian_increments
from .gram import gram_batch, logdet_batch, vol_density
from .heat_kernel import HeatKernelOracle, quad_grid
from .manifolds import ChartPoint, Euclidean, Hyperbolic2, Sphere2, Torus
from .paths import Partition
from .sampling import chunk_plan, chunk_rng, map_chunks

__all__ = [
    "FiniteDimMeasure",
    "EstimatorResult",
    "density",
    "log_weights",
    "estimate",
    "estimate_many",
    "scal_weight",
    "wiener_cylinder_exact",
    "wiener_mc",
    "PointMass",
    "DiscreteMixture",
    "UniformChartBox",
    "free_path_estimate",
    "convergence_sweep",
    "result_from_values",
]

TAG_DRIVER = 0
TAG_START = 1


def _ambient_start(m, x):
    if isinstance(x, ChartPoint):
        m.check_point(x)
        return m.to_ambient(x.coords, x.chart_id)
    return np.asarray(x, dtype=float)


@dataclass(frozen=True, eq=False)
class FiniteDimMeasure:
    """``Z^{-1} e^{-E/2} Vol_G`` on development coordinates over a partition.

    ``kind`` is ``"G1"``, ``"G0"`` or ``"wiener"`` (geodesic random walk,
    unit weights, used for Wiener-measure Monte Carlo).
    """

    model: object
    start: np.ndarray
    kind: str
    partition: Partition
    frame: np.ndarray = None

    def __post_init__(self):
        if self.kind not in ("G0", "G1", "wiener"):
            raise UsageError(f"unknown measure kind {self.kind!r}")
        start = _ambient_start(self.model, self.start)
        object.__setattr__(self, "start", start)
        if self.frame is None:
            object.__setattr__(self, "frame", self.model.default_frame(start))

    @property
    def n(self):
        return self.model.dim

    @property
    def log_Z(self):
        n, dt = self.n, self.partition.dt
        if self.kind == "G0":
            return float(n * np.sum(0.5 * math.log(2 * math.pi) + np.log(dt)))
        return 0.5 * n * self.partition.N * math.log(2 * math.pi)

    @property
    def Z(self):
        return math.exp(self.log_Z)


@dataclass(frozen=True)
class EstimatorResult:
    mean: float
    stderr: float
    ess: float
    samples: int
    seed: int
    rejected: int = 0
    warning: str = ""
    extra: dict = field(default_factory=dict, compare=False)

    def within(self, value, k=3.0, floor=0.0):
        return abs(self.mean - value) <= k * self.stderr + floor


def result_from_values(y, w, seed, rejected=0, extra=None):
    """Unnormalised weighted mean ``mean(y)`` (``y = w F``) with jackknife stderr."""
    y = np.asarray(y, dtype=float)
    S = y.size
    total = np.sum(y)
    mean = total / S
    if S > 1:
        loo = (total - y) / (S - 1)
        se = math.sqrt((S - 1) / S * float(np.sum((loo - np.mean(loo)) ** 2)))
    else:
        se = math.inf
    sw, sw2 = float(np.sum(w)), float(np.sum(np.asarray(w) ** 2))
    ess = sw * sw / sw2 if sw2 > 0 else 0.0
    msg = ""
    if ess < 10:
        msg = f"low effective sample size ({ess:.3g})"
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
    return EstimatorResult(float(mean), float(se), float(ess), int(S), int(seed), int(rejected), msg, dict(extra or {}))


def log_weights(measure: FiniteDimMeasure, batch):
    """Log importance weights of proposal-drawn paths and a mask of valid samples."""
    if measure.kind == "wiener":
        return np.zeros(batch.size), np.ones(batch.size, dtype=bool)
    G = gram_batch(measure.model, batch.points[:, 0], batch.frames[:, 0], batch.b, batch.partition, (measure.kind,))
    ld, ok, _ = logdet_batch(G[measure.kind])
    expo = 1.5 if measure.kind == "G0" else 0.5
    ref = expo * measure.n * float(np.sum(np.log(batch.partition.dt)))
    return np.where(ok, 0.5 * ld - ref, -np.inf), ok


def density(measure: FiniteDimMeasure, path):
    """``Z^{-1} e^{-E(γ)/2} sqrt(det G)`` with respect to Lebesgue measure ``db``."""
    if measure.kind == "wiener":
        raise UsageError("the wiener kind has no density over development coordinates")
    if path.partition != measure.partition:
        raise UsageError("path is not built on the measure's partition")
    vol = vol_density(path, measure.kind)
    return math.exp(-0.5 * path.energy() - measure.log_Z) * vol


def _chunk_driver(measure, F, seed, starts=None):
    m = measure.model
    part = measure.partition

    def run(k, size):
        rng = chunk_rng(seed, k, TAG_DRIVER)
        b = gaussian_increments(rng, part, size, m.dim)
        if starts is None:
            p0, F0 = measure.start, measure.frame
        else:
            p0 = starts(k, size)
            F0 = m.default_frame(p0)
        batch = develop_batch(m, p0, F0, b, part)
        lw, ok = log_weights(measure, batch)
        if isinstance(F, (list, tuple)):
            vals = np.stack([np.asarray(f(batch), dtype=float) for f in F], axis=-1)
        else:
            vals = np.asarray(F(batch), dtype=float)
        return np.exp(lw), ok, vals

    return run


def _run(measure, F, samples, seed, workers=None, starts=None, extra=None):
    if samples < 1:
        raise UsageError("samples must be >= 1")
    parts = map_chunks(_chunk_driver(measure, F, seed, starts), chunk_plan(samples), workers)
    w = np.concatenate([p[0] for p in parts])
    ok = np.concatenate([p[1] for p in parts])
    vals = np.concatenate([p[2] for p in parts])
    w = np.where(ok, w, 0.0)
    y = np.where(ok, w * vals, 0.0)
    return result_from_values(y, w, seed, int(np.sum(~ok)), extra)


def estimate(measure: FiniteDimMeasure, F, samples, seed, workers=None) -> EstimatorResult:
    """Importance-sampled ``∫ F dP^kind`` (unnormalised)."""
    return _run(measure, F, samples, seed, workers)


def estimate_many(measure: FiniteDimMeasure, Fs, samples, seed, workers=None):
    """Estimates of several functionals from one set of weighted samples.

    Same draws and weights as :func:`estimate` with the same seed, so the
    entries agree with separate calls.
    """
    Fs = list(Fs)
    if samples < 1:
        raise UsageError("samples must be >= 1")
    parts = map_chunks(_chunk_driver(measure, Fs, seed), chunk_plan(samples), workers)
    w = np.concatenate([p[0] for p in parts])
    ok = np.concatenate([p[1] for p in parts])
    vals = np.concatenate([p[2] for p in parts], axis=0)
    w = np.where(ok, w, 0.0)
    rej = int(np.sum(~ok))
    return [result_from_values(np.where(ok, w * vals[:, k], 0.0), w, seed, rej) for k in range(len(Fs))]


def scal_weight(path_or_batch):
    """``exp(-(1/6) ∫ Scal(γ) dt)`` by the trapezoid rule over the knots."""
    batch = path_or_batch.as_batch() if hasattr(path_or_batch, "as_batch") else path_or_batch
    S = batch.model.scal_at(batch.points)
    t = batch.partition.times
    integral = np.sum(0.5 * (S[:, 1:] + S[:, :-1]) * np.diff(t), axis=-1)
    w = np.exp(-integral / 6.0)
    return float(w[0]) if hasattr(path_or_batch, "as_batch") else w


def wiener_mc(m, x, F, T, steps, samples, seed, workers=None) -> EstimatorResult:
    """Plain Monte Carlo over geodesic-random-walk paths with ``steps`` uniform steps."""
    measure = FiniteDimMeasure(m, x, "wiener", Partition.uniform(T, steps))
    return _run(measure, F, samples, seed, workers)


# -- exact finite-dimensional distributions ----------------------------------


def _grid_for(m, x, t, resolution):
    if isinstance(m, Torus):
        return quad_grid(m, resolution)
    if isinstance(m, Euclidean):
        # Gaussian tail outside 6 sqrt(t) is ~2e-9 per coordinate
        return quad_grid(m, resolution, center=x, t=t, radius=6 * np.sqrt(t))
    if isinstance(m, Sphere2):
        return quad_grid(m, resolution, center=x)
    if isinstance(m, Hyperbolic2):
        return quad_grid(m, resolution, center=x, t=t)
    raise NoOracleError(f"no Wiener quadrature for {m!r}")


def _cylinder_quadrature(m, x, F, resolution):
    orc = HeatKernelOracle(m)
    times = F.times
    if len(times) == 1:
        g = _grid_for(m, x, times[0], resolution)
        vals = F.f([g.points])
        return g.integrate(orc.p(times[0], x, g.points) * vals)
    g = _grid_for(m, x, times[1], resolution)
    P = g.points
    k1 = orc.p(times[0], x, P) * g.weights
    K = orc.p(times[1] - times[0], P[:, None, :], P[None, :, :]) * g.weights[None, :]
    n = P.shape[0]
    y1 = np.repeat(P, n, axis=0)
    y2 = np.tile(P, (n, 1))
    f = F.f([y1, y2]).reshape(n, n)
    return float(np.sum(k1[:, None] * K * f))


def wiener_cylinder_exact(m, x, F: CylinderFunction, oracle=None, resolution=None, return_error=False):
    """``E F(B)`` for Brownian motion from ``x`` by nested heat-kernel quadrature.

    At most two time points.  The error estimate is the change under grid
    coarsening by a factor 3/4.
    """
    if not isinstance(F, CylinderFunction):
        raise UsageError("wiener_cylinder_exact needs a CylinderFunction")
    if len(F.times) > 2:
        raise UsageError("quadrature is limited to cylinder functions with at most 2 times")
    HeatKernelOracle(m)  # raises NoOracleError for unsupported models
    x = _ambient_start(m, x)
    if resolution is None:
        resolution = 96 if len(F.times) == 1 else (48 if isinstance(m, Euclidean) and not isinstance(m, Torus) else 36)
    val = _cylinder_quadrature(m, x, F, resolution)
    if not return_error:
        return val
    coarse = _cylinder_quadrature(m, x, F, max(8, int(resolution * 3 // 4)))
    return val, abs(val - coarse)


# -- free path space ------------------------------------------------------------


class PointMass:
    def __init__(self, x):
        self.x = x

    def sample(self, m, rng, size):
        return np.broadcast_to(_ambient_start(m, self.x), (size, m.ambient_dim)).copy()


class DiscreteMixture:
    def __init__(self, points, weights):
        w = np.asarray(weights, dtype=float)
        if len(points) != w.size or np.any(w < 0) or not np.isclose(w.sum(), 1.0):
            raise ConfigurationError("mixture weights must be non-negative and sum to 1")
        self.points = list(points)
        self.weights = w

    def sample(self, m, rng, size):
        pts = np.stack([_ambient_start(m, p) for p in self.points])
        idx = rng.choice(len(self.points), size=size, p=self.weights)
        return pts[idx]


class UniformChartBox:
    """Uniform in chart coordinates on a box ``[lo, hi]`` (chart 0)."""

    def __init__(self, lo, hi, chart_id=0):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        self.chart_id = chart_id

    def sample(self, m, rng, size):
        u = self.lo + (self.hi - self.lo) * rng.random((size, self.lo.size))
        return np.stack([m.to_ambient(c, self.chart_id) for c in u])


def free_path_estimate(m, mu, kind, F, partition, samples, seed, workers=None) -> EstimatorResult:
    """``∫_M ∫ F dP^kind_x dμ(x)``: draw ``x ~ μ`` per sample, then a path from ``x``."""
    if not hasattr(mu, "sample"):
        raise ConfigurationError(f"unsupported initial distribution {mu!r}")
    if isinstance(mu, PointMass):
        return estimate(FiniteDimMeasure(m, mu.x, kind, partition), F, samples, seed, workers)
    probe = mu.sample(m, np.random.default_rng(0), 1)[0]
    measure = FiniteDimMeasure(m, probe, kind, partition)

    def starts(k, size):
        return mu.sample(m, chunk_rng(seed, k, TAG_START), size)

    return _run(measure, F, samples, seed, workers, starts=starts)


# -- convergence sweep ----------------------------------------------------------


def convergence_sweep(m, x, F, kind, partitions, samples, seed, truth=None, workers=None):
    """Estimate over several partitions and compare against the Wiener truth.

    Returns a dict with ``rows`` (mesh, N, mean, stderr, ess, samples, seed,
    error) and ``truth``; for ``kind="G0"`` the truth is multiplied by the
    scalar-curvature factor (exact for constant curvature).  ``slope`` is the
    least-squares slope of log|error| against log mesh over rows whose error
    exceeds twice the stderr (``nan`` when fewer than two qualify).
    """
    if len(partitions) < 2:
        raise UsageError("a sweep needs at least two partitions")
    T = partitions[0].T
    if truth is None:
        truth = wiener_cylinder_exact(m, x, F)
        if kind == "G0":
            if m.curvature is None:
                raise NoOracleError("G0 truth needs constant scalar curvature")
            truth *= math.exp(-T * m.dim * (m.dim - 1) * m.curvature / 6.0)
    rows = []
    for P in partitions:
        r = estimate(FiniteDimMeasure(m, x, kind, P), F, samples, seed, workers)
        rows.append(
            {
                "mesh": P.mesh,
                "N": P.N,
                "mean": r.mean,
                "stderr": r.stderr,
                "ess": r.ess,
                "samples": r.samples,
                "seed": r.seed,
                "error": r.mean - truth,
            }
        )
    sig = [(row["mesh"], abs(row["error"])) for row in rows if abs(row["error"]) > 2 * row["stderr"]]
    slope = float("nan")
    if len(sig) >= 2:
        lx = np.log([s[0] for s in sig])
        ly = np.log([s[1] for s in sig])
        slope = float(np.polyfit(lx, ly, 1)[0])
    return {"rows": rows, "truth": truth, "slope": slope}

