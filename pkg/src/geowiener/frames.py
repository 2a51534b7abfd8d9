"""Orthonormal frames, Cartan development and geodesic random walks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFrameError, IntegrationError, UsageError
from .geometry import DEFAULT_ODE, geodesic_shoot, parallel_transport
from .manifolds import ChartPoint, ManifoldModel, TangentVec
from .paths import Partition, PathBatch, PiecewiseGeodesicPath

__all__ = [
    "OrthonormalFrame",
    "DevelopmentDriver",
    "frame_orthonormalize",
    "ric_operator",
    "frame_to_ambient",
    "develop",
    "develop_batch",
    "develop_ode",
    "brownian_sample",
    "brownian_batch",
    "gaussian_increments",
]


@dataclass(frozen=True, eq=False)
class OrthonormalFrame:
    """Chart components of ``u e_1, ..., u e_n`` stored as matrix columns."""

    base: ChartPoint
    columns: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "columns", np.asarray(self.columns, dtype=float).copy())

    def vector(self, a):
        return TangentVec(self.base, self.columns[:, a])

    def apply(self, coeffs):
        """``u a`` as a tangent vector."""
        return TangentVec(self.base, self.columns @ np.asarray(coeffs, dtype=float))


@dataclass(frozen=True, eq=False)
class DevelopmentDriver:
    partition: Partition
    increments: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.increments, dtype=float)
        if b.ndim != 2 or b.shape[0] != self.partition.N:
            raise UsageError(
                f"expected {self.partition.N} increments, got array of shape {b.shape}"
            )
        object.__setattr__(self, "increments", b)


def frame_orthonormalize(m: ManifoldModel, x: ChartPoint, columns, tol=1e-12) -> OrthonormalFrame:
    """Gram-Schmidt of the given columns in the metric g_x."""
    A = np.asarray(columns, dtype=float)
    g = m.metric(x.coords, x.chart_id)
    scale = np.sqrt(np.max(np.abs(np.diag(A.T @ g @ A)))) if A.size else 0.0
    out = np.empty_like(A)
    for k in range(A.shape[1]):
        w = A[:, k].copy()
        # twice is enough for numerical orthogonality
        for _ in range(2):
            for j in range(k):
                w -= (out[:, j] @ g @ w) * out[:, j]
        nw = np.sqrt(max(w @ g @ w, 0.0))
        if nw <= tol * max(scale, 1e-300):
            raise DegenerateFrameError(f"column {k} is linearly dependent on the previous ones")
        out[:, k] = w / nw
    return OrthonormalFrame(x, out)


def ric_operator(m: ManifoldModel, u: OrthonormalFrame) -> np.ndarray:
    """Matrix ``A[a, b] = Ric(u e_a, u e_b)``."""
    Ric = m.ricci(u.base.coords, u.base.chart_id)
    A = u.columns.T @ Ric @ u.columns
    return 0.5 * (A + A.T)


def frame_to_ambient(m: ManifoldModel, u: OrthonormalFrame):
    """Ambient base point ``(d,)`` and frame ``(d, n)``."""
    J = m.embed_jacobian(u.base.coords, u.base.chart_id)
    return m.to_ambient(u.base.coords, u.base.chart_id), J @ u.columns


def frame_from_ambient(m: ManifoldModel, p, F) -> OrthonormalFrame:
    coords, chart = m.from_ambient(p)
    cols = np.stack([m.chart_tangent(coords, chart, F[:, a]) for a in range(F.shape[1])], axis=1)
    return OrthonormalFrame(ChartPoint(coords, chart), cols)


def develop_batch(m: ManifoldModel, start, frame0, b, partition: Partition) -> PathBatch:
    """Roll development coordinates ``b (B, N, n)`` into piecewise geodesics.

    ``start (B, d)`` and ``frame0 (B, d, n)`` are ambient; they may also be
    given without the batch axis, in which case they are shared.
    """
    b = np.asarray(b, dtype=float)
    B, N, n = b.shape
    if N != partition.N:
        raise UsageError(f"driver has {N} segments, partition has {partition.N}")
    d = m.ambient_dim
    p = np.broadcast_to(np.asarray(start, dtype=float), (B, d)).copy()
    F = np.broadcast_to(np.asarray(frame0, dtype=float), (B, d, n)).copy()
    points = np.empty((B, N + 1, d))
    frames = np.empty((B, N + 1, d, n))
    v_start = np.empty((B, N, d))
    v_end = np.empty((B, N, d))
    points[:, 0] = p
    frames[:, 0] = F
    dt = partition.dt
    for i in range(N):
        v = np.matmul(F, b[:, i, :, None])[..., 0]
        p, ve, F = m.exp_transport(p, v, F, tau=dt[i])
        v_start[:, i] = v
        v_end[:, i] = ve
        points[:, i + 1] = p
        frames[:, i + 1] = F
    return PathBatch(m, partition, b, points, v_start, v_end, frames)


def develop(m: ManifoldModel, x0: ChartPoint, frame0: OrthonormalFrame, driver: DevelopmentDriver):
    """Develop a driver from ``(x0, frame0)``; returns the path and its knot frames."""
    m.check_point(x0)
    if frame0.base.chart_id != x0.chart_id or not np.allclose(frame0.base.coords, x0.coords, rtol=0, atol=1e-12):
        raise UsageError("frame is not based at x0")
    p0, F0 = frame_to_ambient(m, frame0)
    batch = develop_batch(m, p0, F0, driver.increments[None], driver.partition)
    path = PiecewiseGeodesicPath(batch)
    knot_frames = [frame_from_ambient(m, path.points[k], path.frames[k]) for k in range(driver.partition.N + 1)]
    return path, knot_frames


def develop_ode(m: ManifoldModel, x0: ChartPoint, frame0: OrthonormalFrame, driver: DevelopmentDriver, ode=DEFAULT_ODE):
    """Same as :func:`develop` but shooting and transporting with the chart ODE.

    Slow; kept as an independent route for cross-checks.  Returns the knot
    points and knot frames in chart form.
    """
    x, u = x0, frame0
    knots, frames = [x0], [frame0]
    for i, dt in enumerate(driver.partition.dt):
        v = u.apply(driver.increments[i])
        try:
            seg = geodesic_shoot(m, x, v, float(dt), ode)
            cols = parallel_transport(m, seg, [u.vector(a) for a in range(m.dim)], ode)
        except IntegrationError as exc:
            exc.segment = i
            raise
        x = cols[0].base
        u = OrthonormalFrame(x, np.stack([c.components for c in cols], axis=1))
        knots.append(x)
        frames.append(u)
    return knots, frames


def gaussian_increments(rng, partition: Partition, size, n):
    """Development coordinates of the flat Brownian law: ``b_i ~ N(0, I / Δ_i)``."""
    z = rng.standard_normal((size, partition.N, n))
    return z / np.sqrt(partition.dt)[None, :, None]


def brownian_batch(m: ManifoldModel, start, frame0, partition: Partition, rng, size) -> PathBatch:
    """Geodesic random walk: development of Gaussian increments with covariance Δt I."""
    b = gaussian_increments(rng, partition, size, m.dim)
    return develop_batch(m, start, frame0, b, partition)


def brownian_sample(m: ManifoldModel, x0: ChartPoint, frame0: OrthonormalFrame, T, steps, rng_seed, samples=1):
    """Reproducible geodesic-random-walk samples from ``(x0, frame0)``.

    Returns ``(paths, driver_increments)`` where ``paths`` is a
    :class:`PathBatch` (knot points and frames inside) and the increments
    are ``b_i Δ_i t`` with shape ``(samples, steps, n)``.
    """
    from .sampling import chunk_plan, chunk_rng

    if steps < 1:
        raise UsageError("steps must be >= 1")
    part = Partition.uniform(T, steps)
    p0, F0 = frame_to_ambient(m, frame0)
    bs = [gaussian_increments(chunk_rng(rng_seed, k), part, size, m.dim) for k, size in chunk_plan(samples)]
    b = np.concatenate(bs, axis=0)
    batch = develop_batch(m, p0, F0, b, part)
    return batch, batch.increments()
