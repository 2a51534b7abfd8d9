"""Variation fields, the discrete metrics G1 and G0, and their volume densities.

Variation fields ``X^{(i,a)} = dPhi/db_i^a`` of the development map are
obtained by central differences of batched developments.  For G1 the
covariant rate at ``t_{j-1}+`` is the covariant derivative, in the
variation parameter, of the segment start velocity ``u_{j-1} b_j``
(symmetry lemma); in the ambient picture that is the tangential projection
of the ambient difference quotient.  G0 evaluates ``X`` at right endpoints
``t_j``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMetricError, NumericalError, UsageError
from .frames import develop_batch
from .manifolds import ChartPoint, TangentVec
from .paths import PiecewiseGeodesicPath

__all__ = [
    "GramMatrices",
    "fd_step",
    "gram_batch",
    "gram_g1",
    "gram_g0",
    "grams",
    "logdet_batch",
    "vol_density",
    "tangent_basis_field",
    "covariant_rate",
]

KINDS = ("G0", "G1")
_BATCH_BUDGET = 8192  # developments per vectorised call


@dataclass(frozen=True, eq=False)
class GramMatrices:
    G1: np.ndarray
    G0: np.ndarray


def fd_step(b):
    """Default central-difference step ``1e-5 (1 + |b|_inf)`` per path: ``b (B, N, n) -> (B,)``."""
    b = np.asarray(b, dtype=float)
    return 1e-5 * (1.0 + np.max(np.abs(b.reshape(b.shape[0], -1)), axis=1))


def _gram_chunk(m, start, frame0, b, partition, h, kinds):
    """Central-difference Gram matrices for one chunk of paths.

    A perturbation of ``b_i`` leaves segments before ``i`` untouched, so the
    perturbed developments are seeded from the base path at knot ``i`` and
    only the rows whose segment has started are advanced.
    """
    B, N, n = b.shape
    M = N * n
    d = m.ambient_dim
    eta = m.eta
    dt = partition.dt
    # rows: base, then for each segment i the 2n perturbations (+e_a, -e_a)
    R = 1 + 2 * M
    p = np.empty((B, R, d))
    F = np.empty((B, R, d, n))
    drv = np.repeat(b[:, None], R, axis=1)
    steps = np.concatenate([np.eye(n), -np.eye(n)])[None] * h[:, None, None]
    for i in range(N):
        drv[:, 1 + 2 * n * i : 1 + 2 * n * (i + 1), i, :] += steps
    p[:, 0] = start
    F[:, 0] = frame0
    dV = np.zeros((B, M, N, d)) if "G1" in kinds else None
    dX = np.zeros((B, M, N, d)) if "G0" in kinds else None
    inv2h = (0.5 / h)[:, None, None]
    for j in range(N):
        lo, hi = 1 + 2 * n * j, 1 + 2 * n * (j + 1)
        p[:, lo:hi] = p[:, :1]
        F[:, lo:hi] = F[:, :1]
        pj, Fj = p[:, :hi], F[:, :hi]
        v = np.matmul(Fj, drv[:, :hi, j, :, None])[..., 0]
        q, _, Fq = m.exp_transport(pj, v, Fj, tau=dt[j])
        act = hi - 1
        if dV is not None:
            w = v[:, 1:].reshape(B, act // (2 * n), 2, n, d)
            diff = (w[:, :, 0] - w[:, :, 1]).reshape(B, act // 2, d) * inv2h
            dV[:, : act // 2, j] = m.project(pj[:, :1], diff)
        p[:, :hi] = q
        F[:, :hi] = Fq
        if dX is not None:
            w = q[:, 1:].reshape(B, act // (2 * n), 2, n, d)
            diff = (w[:, :, 0] - w[:, :, 1]).reshape(B, act // 2, d) * inv2h
            dX[:, : act // 2, j] = m.project(q[:, :1], diff)
    out = {}
    sq = np.sqrt(dt)[None, None, :, None]
    for key, D in (("G1", dV), ("G0", dX)):
        if D is None:
            continue
        A = (D * sq).reshape(B, M, N * d)
        G = np.matmul(A * np.tile(eta, N), A.transpose(0, 2, 1))
        out[key] = 0.5 * (G + G.transpose(0, 2, 1))
    return out


def gram_batch(m, start, frame0, b, partition, kinds=KINDS, h=None):
    """Gram matrices for a batch of development coordinates.

    Returns a dict ``kind -> (B, nN, nN)``.
    """
    b = np.asarray(b, dtype=float)
    if b.ndim != 3:
        raise UsageError("b must have shape (B, N, n)")
    for k in kinds:
        if k not in KINDS:
            raise UsageError(f"unknown Gram kind {k!r}")
    B, N, n = b.shape
    h = fd_step(b) if h is None else np.broadcast_to(np.asarray(h, dtype=float), (B,)).copy()
    if np.any(h <= 1e-14 * (1.0 + np.max(np.abs(b.reshape(B, -1)), axis=1))):
        raise NumericalError("finite-difference step underflow")
    start = np.asarray(start, dtype=float)
    frame0 = np.asarray(frame0, dtype=float)
    if start.ndim == 1:
        start = np.broadcast_to(start, (B, start.size))
    if frame0.ndim == 2:
        frame0 = np.broadcast_to(frame0, (B,) + frame0.shape)
    step = max(1, _BATCH_BUDGET // (2 * N * n + 1))
    parts = {k: [] for k in kinds}
    for s in range(0, B, step):
        sl = slice(s, s + step)
        res = _gram_chunk(m, start[sl], frame0[sl], b[sl], partition, h[sl], kinds)
        for k in kinds:
            parts[k].append(res[k])
    out = {k: np.concatenate(v, axis=0) for k, v in parts.items()}
    for k, G in out.items():
        if not np.all(np.isfinite(G)):
            raise NumericalError(f"non-finite entries in {k}")
    return out


def logdet_batch(G, rel_tol=1e-12):
    """``(log det G, ok, smallest eigenvalue)`` for a stack of symmetric matrices.

    ``ok`` is False where ``G`` is not numerically positive definite.
    """
    w = np.linalg.eigvalsh(G)
    lo = w[..., 0]
    ok = lo > rel_tol * np.abs(w[..., -1])
    with np.errstate(divide="ignore", invalid="ignore"):
        ld = np.where(ok, np.sum(np.log(np.where(ok[..., None], w, 1.0)), axis=-1), -np.inf)
    return ld, ok, lo


def _single(path: PiecewiseGeodesicPath, kinds, h=None):
    if h is not None:
        h = np.array([h], dtype=float)
    return gram_batch(path.model, path.start[None], path.start_frame[None], path.b[None], path.partition, kinds, h)


def gram_g1(path, h=None):
    return _single(path, ("G1",), h)["G1"][0]


def gram_g0(path, h=None):
    return _single(path, ("G0",), h)["G0"][0]


def grams(path, h=None) -> GramMatrices:
    res = _single(path, KINDS, h)
    return GramMatrices(res["G1"][0], res["G0"][0])


def vol_density(path, kind="G1", h=None):
    """``sqrt(det Gram)``: density of the Riemannian volume with respect to ``db``."""
    if kind not in KINDS:
        raise UsageError(f"unknown Gram kind {kind!r}")
    G = _single(path, (kind,), h)[kind]
    ld, ok, lo = logdet_batch(G)
    if not ok[0]:
        raise DegenerateMetricError(f"{kind} is not positive definite", smallest_eigenvalue=float(lo[0]))
    return float(np.exp(0.5 * ld[0]))


def _check_index(path, i, a):
    N, n = path.partition.N, path.model.dim
    if not (1 <= i <= N and 1 <= a <= n):
        raise UsageError(f"basis index (i={i}, a={a}) outside 1..{N} x 1..{n}")


def _variation_batch(path, i, a, h):
    b = path.b
    h = float(fd_step(b[None])[0]) if h is None else float(h)
    e = np.zeros_like(b)
    e[i - 1, a - 1] = h
    dev = develop_batch(path.model, path.start, path.start_frame, np.stack([b + e, b - e]), path.partition)
    return dev, h


def _to_tangent(m, p, w):
    coords, chart = m.from_ambient(p)
    x = ChartPoint(coords, chart)
    return TangentVec(x, m.chart_tangent(coords, chart, w))


def tangent_basis_field_ambient(path, i, a, t, h=None):
    """Ambient vector ``X^{(i,a)}(t)`` at ``path(t)`` (1-based indices)."""
    _check_index(path, i, a)
    dev, h = _variation_batch(path, i, a, h)
    q = dev.point_at(t)
    p = path.point_at(t)
    return path.model.project(p, (q[0] - q[1]) / (2 * h))


def tangent_basis_field(path, i, a, t, h=None) -> TangentVec:
    """Variation field ``X^{(i,a)}(t)`` in chart components at ``path(t)``."""
    w = tangent_basis_field_ambient(path, i, a, t, h)
    return _to_tangent(path.model, path.point_at(t), w)


def covariant_rate(path, i, a, j, h=None) -> TangentVec:
    """``nabla X^{(i,a)}(t_{j-1}+)/dt`` at the knot ``path(t_{j-1})``."""
    _check_index(path, i, a)
    if not 1 <= j <= path.partition.N:
        raise UsageError(f"segment {j} outside 1..{path.partition.N}")
    dev, h = _variation_batch(path, i, a, h)
    p = path.points[j - 1]
    w = path.model.project(p, (dev.v_start[0, j - 1] - dev.v_start[1, j - 1]) / (2 * h))
    return _to_tangent(path.model, p, w)
