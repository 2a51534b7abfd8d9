"""Dyadic partitions on [0, N], the geodesic extension map and the trichotomy experiment.

A finite-horizon path is extended past ``T`` by the geodesic from ``γ(T)``
with initial vector ``-γ'(T-)`` (so it doubles back); ``sign=+1`` continues
forward instead and exists for sensitivity runs only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cylinder import Constant
from .errors import CostCapError, UsageError
from .manifolds import ChartPoint, Euclidean, Torus
from .measures import FiniteDimMeasure, _ambient_start, estimate
from .paths import Partition, PathBatch

__all__ = [
    "ExtendedPath",
    "phi_extend",
    "d_infinity",
    "extended_functional",
    "dyadic_estimate",
    "trichotomy_experiment",
    "DEFAULT_SEGMENT_CAP",
]

DEFAULT_SEGMENT_CAP = 64


@dataclass(frozen=True, eq=False)
class ExtendedPath:
    """``φ_T(γ)`` for a path (or a batch of paths) on ``[0, T]``."""

    path: object
    end_point: np.ndarray
    end_vector: np.ndarray
    sign: int = -1

    @property
    def T(self):
        return self.path.partition.T

    @property
    def model(self):
        return self.path.model

    def eval(self, t):
        """Ambient point(s) at time ``t >= 0``."""
        if t < 0:
            raise UsageError("extended paths live on [0, inf)")
        if t <= self.T:
            return self.path.point_at(t)
        q, _, _ = self.model.exp_transport(self.end_point, self.end_vector, tau=t - self.T)
        return q

    def eval_chart(self, t):
        if isinstance(self.path, PathBatch):
            raise UsageError("eval_chart needs a single path")
        coords, chart = self.model.from_ambient(self.eval(t))
        return ChartPoint(coords, chart)

    def velocity(self, t):
        if t < self.T:
            return self.path.velocity_at(t)
        if t == self.T:
            return self.end_vector
        _, v, _ = self.model.exp_transport(self.end_point, self.end_vector, tau=t - self.T)
        return v


def phi_extend(path, sign=-1) -> ExtendedPath:
    """Extension by the geodesic from ``γ(T)`` with initial vector ``sign · γ'(T-)``."""
    if sign not in (-1, 1):
        raise UsageError("sign must be -1 or +1")
    T = path.partition.T
    p = path.point_at(T)
    v = path.velocity_at(T, "-")
    return ExtendedPath(path, np.array(p), sign * np.array(v), sign)


def _flat_tail_sup(m, a: ExtendedPath, b: ExtendedPath, start):
    """sup over ``s >= start`` of min(|Δp + (s - start) Δv|, 1) for two flat tails."""
    pa, pb = a.eval(start), b.eval(start)
    dv = a.velocity(start) - b.velocity(start)
    if np.linalg.norm(dv) > 0:
        return 1.0
    return min(float(np.linalg.norm(pa - pb)), 1.0)


def d_infinity(gamma: ExtendedPath, sigma: ExtendedPath, probe=None, tail=20.0, tail_points=2001):
    """``sup_t min(d(γ(t), σ(t)), 1)`` over a probe grid.

    The default grid is every knot of both paths plus 64 points per unit
    time up to the larger horizon.  Beyond it, flat tails are handled in
    closed form; otherwise the tails are probed on ``tail_points`` times up
    to ``horizon + tail``.
    """
    m = gamma.model
    H = max(gamma.T, sigma.T)
    if probe is None:
        probe = np.unique(
            np.concatenate([gamma.path.partition.times, sigma.path.partition.times, np.linspace(0, H, int(64 * H) + 2)])
        )
    probe = np.asarray(probe, dtype=float)
    best = 0.0
    for t in probe:
        best = max(best, min(float(m.distance(gamma.eval(t), sigma.eval(t))), 1.0))
        if best >= 1.0:
            return 1.0
    if isinstance(m, Euclidean) and not isinstance(m, Torus):
        return max(best, _flat_tail_sup(m, gamma, sigma, H))
    for t in np.linspace(H, H + tail, tail_points):
        best = max(best, min(float(m.distance(gamma.eval(t), sigma.eval(t))), 1.0))
        if best >= 1.0:
            return 1.0
    return best


def extended_functional(F, sign=-1):
    """Path functional ``batch -> F(φ_T(γ))`` for a cylinder function ``F``."""

    def G(batch):
        ext = phi_extend(batch, sign)
        return F.f([ext.eval(t) for t in F.times])

    return G


def dyadic_estimate(m, x, F, level, kind, samples, seed, cap_segments=DEFAULT_SEGMENT_CAP, sign=-1, workers=None):
    """``∫ F∘φ_N dP^kind_{x,N}`` on the dyadic partition of ``[0, N]``."""
    if level < 1:
        raise UsageError("dyadic level must be >= 1")
    segs = level * 2**level
    if segs > cap_segments:
        # largest level within the cap
        L = 1
        while (L + 1) * 2 ** (L + 1) <= cap_segments:
            L += 1
        raise CostCapError(
            f"level {level} needs {segs} segments, above the cap of {cap_segments} (level {L} fits)",
            suggested_cap=segs,
        )
    part = Partition.dyadic(level)
    return estimate(FiniteDimMeasure(m, x, kind, part), extended_functional(F, sign), samples, seed, workers)


def _one(batch):
    return np.ones(batch.size)


def trichotomy_experiment(models, horizons=(1, 2, 3), mesh=0.125, levels=(1, 2, 3), samples=2000, seed=0,
                          cap_segments=DEFAULT_SEGMENT_CAP, workers=None):
    """Log G0 mass against horizon for several models.

    ``models`` maps a label to ``(model, start)``.  Uniform partitions of
    ``[0, H]`` at the fixed ``mesh`` give the fitted slope (least squares with
    intercept, weighted by inverse variance); dyadic levels are reported as
    extra rows.  The prediction is ``-Scal / 6`` per unit horizon.
    """
    rows, fits = [], {}
    for label, (m, x) in models.items():
        x = _ambient_start(m, x)
        pred = -m.dim * (m.dim - 1) * (m.curvature or 0.0) / 6.0 + 0.0
        hs, lm, se = [], [], []
        for H in horizons:
            N = int(round(H / mesh))
            if N > cap_segments:
                raise CostCapError(f"horizon {H} at mesh {mesh} needs {N} segments", suggested_cap=N)
            r = estimate(FiniteDimMeasure(m, x, "G0", Partition.uniform(H, N)), _one, samples, seed, workers)
            hs.append(float(H))
            lm.append(math.log(r.mean))
            se.append(r.stderr / r.mean)
            rows.append({"model": label, "partition": "uniform", "horizon": float(H), "mesh": H / N,
                         "log_mass": lm[-1], "stderr": se[-1], "predicted_slope": pred})
        for L in levels:
            r = dyadic_estimate(m, x, Constant(1.0, time=1.0), L, "G0", samples, seed, cap_segments, workers=workers)
            rows.append({"model": label, "partition": "dyadic", "horizon": float(L), "mesh": 2.0**-L,
                         "log_mass": math.log(r.mean), "stderr": r.stderr / r.mean, "predicted_slope": pred})
        slope, slope_se = _wls_slope(np.array(hs), np.array(lm), np.array(se))
        fits[label] = {"slope": slope, "slope_stderr": slope_se, "predicted": pred}
    for row in rows:
        row["fitted_slope"] = fits[row["model"]]["slope"]
    return {"rows": rows, "fits": fits}


def _wls_slope(x, y, se):
    """Weighted least-squares slope with intercept; falls back to equal weights when se = 0."""
    if np.all(se > 0):
        w = 1.0 / se**2
    else:
        w = np.ones_like(x)
    X = np.stack([np.ones_like(x), x], axis=1)
    A = X.T @ (w[:, None] * X)
    beta = np.linalg.solve(A, X.T @ (w * y))
    if x.size > 2 or np.all(se > 0):
        cov = np.linalg.inv(A)
        if not np.all(se > 0):
            resid = y - X @ beta
            cov = cov * (resid @ resid) / max(x.size - 2, 1)
        slope_se = float(np.sqrt(max(cov[1, 1], 0.0)))
    else:
        slope_se = 0.0
    return float(beta[1]), slope_se
