"""Partitions and piecewise geodesic paths in development coordinates.

A path over a partition ``0 = t_0 < ... < t_N = T`` is determined by its
start point, start frame and the development coordinates ``b_1..b_N``:
on segment ``i`` it is the geodesic with initial velocity ``u_{i-1} b_i``,
where ``u_{i-1}`` is the start frame parallel-transported to ``t_{i-1}``.

Paths are kept in the ambient representation of the model
(see :mod:`geowiener.manifolds`).  :class:`PathBatch` holds many paths over
one partition with a leading sample axis; :class:`PiecewiseGeodesicPath` is
a single path.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .manifolds import ChartPoint, ManifoldModel, make_manifold

__all__ = ["Partition", "PathBatch", "PiecewiseGeodesicPath", "energy"]


@dataclass(frozen=True, eq=False)
class Partition:
    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise DomainError("a partition needs at least one segment")
        if t[0] != 0.0:
            raise DomainError("partitions start at 0")
        if np.any(np.diff(t) <= 0):
            raise DomainError("partition times must be strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    @classmethod
    def uniform(cls, T, N):
        if N < 1 or T <= 0:
            raise DomainError("need T > 0 and N >= 1")
        return cls(np.linspace(0.0, T, int(N) + 1))

    @classmethod
    def dyadic(cls, N):
        """Dyadic partition of ``[0, N]`` with mesh ``2**-N`` (``N * 2**N`` segments)."""
        if N < 1:
            raise DomainError("dyadic level must be >= 1")
        N = int(N)
        return cls(np.arange(N * 2**N + 1, dtype=float) / 2**N)

    @property
    def dt(self):
        return np.diff(self.times)

    @property
    def N(self):
        return self.times.size - 1

    @property
    def T(self):
        return float(self.times[-1])

    @property
    def mesh(self):
        return float(np.max(self.dt))

    def segment_of(self, t):
        """Index ``j`` of the segment ``[t_j, t_{j+1})`` containing ``t`` (last one is closed)."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.T * (1 + 1e-12)):
            raise DomainError(f"time {t} outside [0, {self.T}]")
        j = np.searchsorted(self.times, t, side="right") - 1
        return np.clip(j, 0, self.N - 1)

    def __eq__(self, other):
        return isinstance(other, Partition) and np.array_equal(self.times, other.times)

    def __hash__(self):
        return hash(self.times.tobytes())

    def __repr__(self):
        return f"Partition(N={self.N}, T={self.T:g}, mesh={self.mesh:g})"


@dataclass(eq=False)
class PathBatch:
    """Many piecewise geodesic paths over one partition.

    Shapes: ``b (B, N, n)``, ``points (B, N+1, d)``, ``v_start``/``v_end``
    ``(B, N, d)`` (ambient velocities at ``t_{i-1}+`` and ``t_i-``),
    ``frames (B, N+1, d, n)``.
    """

    model: ManifoldModel
    partition: Partition
    b: np.ndarray
    points: np.ndarray
    v_start: np.ndarray
    v_end: np.ndarray
    frames: np.ndarray

    @property
    def size(self):
        return self.b.shape[0]

    def __len__(self):
        return self.size

    @property
    def start(self):
        return self.points[:, 0]

    def energy(self):
        """Σ_i |b_i|^2 Δ_i t, exact for piecewise geodesics."""
        return np.einsum("bin,bin,i->b", self.b, self.b, self.partition.dt)

    def increments(self):
        """Euclidean driver increments ``b_i Δ_i t``."""
        return self.b * self.partition.dt[None, :, None]

    def _locate(self, t):
        j = int(self.partition.segment_of(t))
        return j, float(t) - self.partition.times[j]

    def point_at(self, t):
        j, tau = self._locate(t)
        if tau == 0.0:
            return self.points[:, j]
        q, _, _ = self.model.exp_transport(self.points[:, j], self.v_start[:, j], tau=tau)
        return q

    def velocity_at(self, t, side="+"):
        """Velocity at ``t``; at knots ``side`` selects the one-sided limit."""
        j, tau = self._locate(t)
        if tau == 0.0:
            if side == "-" and j > 0:
                return self.v_end[:, j - 1]
            if side == "-" and float(t) == self.partition.T:
                return self.v_end[:, -1]
            return self.v_start[:, j]
        if float(t) >= self.partition.T:
            return self.v_end[:, -1]
        _, v, _ = self.model.exp_transport(self.points[:, j], self.v_start[:, j], tau=tau)
        return v

    def frame_at(self, t):
        j, tau = self._locate(t)
        if tau == 0.0:
            return self.frames[:, j]
        _, _, F = self.model.exp_transport(self.points[:, j], self.v_start[:, j], self.frames[:, j], tau=tau)
        return F

    def positions(self, times):
        """Stack of ``point_at`` for several times: ``(B, len(times), d)``."""
        return np.stack([self.point_at(t) for t in times], axis=1)

    def __getitem__(self, k):
        sl = slice(k, k + 1) if isinstance(k, (int, np.integer)) else k
        sub = PathBatch(
            self.model, self.partition, self.b[sl], self.points[sl], self.v_start[sl], self.v_end[sl], self.frames[sl]
        )
        if isinstance(k, (int, np.integer)):
            return PiecewiseGeodesicPath(sub)
        return sub


class PiecewiseGeodesicPath:
    """A single element of the piecewise geodesic path space."""

    def __init__(self, batch: PathBatch):
        if batch.size != 1:
            raise ValueError("expected a batch of one path")
        self._batch = batch

    @property
    def model(self):
        return self._batch.model

    @property
    def partition(self):
        return self._batch.partition

    @property
    def b(self):
        return self._batch.b[0]

    @property
    def points(self):
        return self._batch.points[0]

    @property
    def v_start(self):
        return self._batch.v_start[0]

    @property
    def v_end(self):
        return self._batch.v_end[0]

    @property
    def frames(self):
        return self._batch.frames[0]

    @property
    def start(self):
        return self.points[0]

    @property
    def start_frame(self):
        return self.frames[0]

    def as_batch(self):
        return self._batch

    def point_at(self, t):
        return self._batch.point_at(t)[0]

    def velocity_at(self, t, side="+"):
        return self._batch.velocity_at(t, side)[0]

    def frame_at(self, t):
        return self._batch.frame_at(t)[0]

    def chart_point(self, t):
        coords, chart = self.model.from_ambient(self.point_at(t))
        return ChartPoint(coords, chart)

    def transport_ambient(self, vectors, t0, t1):
        """Parallel-transport ambient tangent columns ``(d, m)`` from ``t0`` to ``t1``."""
        m = self.model
        times = self.partition.times
        if t1 < t0:
            raise DomainError("t1 must not precede t0")
        vec = np.asarray(vectors, dtype=float)
        t = float(t0)
        p = self.point_at(t)
        v = self.velocity_at(t, "+")
        while t < t1:
            j = int(self.partition.segment_of(t))
            stop = min(float(t1), float(times[j + 1]))
            _, _, vec = m.exp_transport(p, v, vec, tau=stop - t)
            t = stop
            if t < t1:
                p = self.points[j + 1]
                v = self.v_start[j + 1]
        return vec

    def energy(self):
        return float(self._batch.energy()[0])

    def to_json(self):
        rec = {
            "manifold": self.model.config(),
            "x0": self.start.tolist(),
            "frame0": self.start_frame.tolist(),
            "partition": self.partition.times.tolist(),
            "b": self.b.tolist(),
            "knots": self.points.tolist(),
        }
        return json.dumps(rec)

    @classmethod
    def from_json(cls, text):
        from .frames import develop_batch

        rec = json.loads(text)
        cfg = dict(rec["manifold"])
        m = make_manifold(cfg.pop("manifold"), **cfg)
        part = Partition(rec["partition"])
        batch = develop_batch(
            m, np.array(rec["x0"])[None], np.array(rec["frame0"])[None], np.array(rec["b"])[None], part
        )
        return cls(batch)

    def __repr__(self):
        return f"PiecewiseGeodesicPath({self.model.name}, {self.partition})"


def energy(path):
    """Energy ∫|γ'|^2 dt of a piecewise geodesic path (or of each path in a batch)."""
    if isinstance(path, PathBatch):
        return path.energy()
    return path.energy()
