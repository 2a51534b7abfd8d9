"""Cylinder functions ``F(γ) = f(γ(t_1), ..., γ(t_k))`` on path batches.

Every function evaluates on ambient points and provides the Riemannian
gradient in each slot as an ambient tangent vector, so directional
derivatives are ``inner(grad_i, w)`` in the model's ambient form.
Several carry flat-space closed forms (Gaussian expectations and the
Gaussian integration by parts value) used as test oracles.
"""
from __future__ import annotations

import numpy as np
from numpy.polynomial import legendre

from .errors import UsageError
from .manifolds import Euclidean, Torus

__all__ = [
    "CylinderFunction",
    "Constant",
    "BumpProduct",
    "bump",
    "FlatCosine",
    "LegendreZonal",
    "SquaredNorm",
]


class CylinderFunction:
    """Base class.  Subclasses define ``times``, ``f`` and ``grad``."""

    times: tuple = ()

    def f(self, points):
        """``points``: list of ``(B, d)`` arrays, one per time; returns ``(B,)``."""
        raise NotImplementedError

    def grad(self, points):
        """List of ``(B, d)`` ambient Riemannian gradients, one per time."""
        raise NotImplementedError

    @property
    def horizon(self):
        return max(self.times) if self.times else 0.0

    def marginals(self, batch):
        return [batch.point_at(t) for t in self.times]

    def __call__(self, batch):
        return self.f(self.marginals(batch))

    def directional(self, batch, vectors):
        """``Σ_i inner(grad_i f, vectors[i])``; ``vectors[i]`` is ``(B, d)`` at ``γ(t_i)``."""
        pts = self.marginals(batch)
        m = batch.model
        return sum(m.inner(g, v) for g, v in zip(self.grad(pts), vectors))

    def flat_expectation(self, x0):
        """E F(W) for Brownian motion on flat space started at ``x0``; ``None`` if unknown."""
        return None

    def flat_ibp(self, x0, h):
        """E Σ_i <grad_i f, h(t_i)> in flat space; ``None`` if unknown."""
        return None

    def describe(self):
        return type(self).__name__


def _riemannian_grad(m, y, partials):
    """Turn ambient partial derivatives into the tangent gradient for ``m.inner``."""
    return m.project(y, partials * m.eta)


def _check_times(times):
    times = tuple(float(t) for t in times)
    if not times or any(t <= 0 for t in times) or any(b <= a for a, b in zip(times, times[1:])):
        raise UsageError("cylinder times must satisfy 0 < t_1 < ... < t_k")
    return times


class Constant(CylinderFunction):
    def __init__(self, value=1.0, time=1.0):
        self.value = float(value)
        self.times = _check_times([time])

    def f(self, points):
        return np.full(points[0].shape[0], self.value)

    def grad(self, points):
        return [np.zeros_like(p) for p in points]

    def flat_expectation(self, x0):
        return self.value

    def flat_ibp(self, x0, h):
        return 0.0

    def describe(self):
        return f"constant({self.value:g})"


class BumpProduct(CylinderFunction):
    """``∏_i exp(-ψ(y_i, c_i) / s_i^2)`` with ``ψ ≈ d^2/2`` the model's cylinder potential.

    Smooth and rapidly decaying; on flat space a product of Gaussians, which
    gives closed-form Wiener expectations.
    """

    def __init__(self, model, centers, scales, times, amplitude=1.0):
        self.model = model
        self.times = _check_times(times)
        k = len(self.times)
        self.centers = np.broadcast_to(np.asarray(centers, dtype=float), (k, model.ambient_dim)).copy()
        self.scales = np.broadcast_to(np.asarray(scales, dtype=float), (k,)).copy()
        if np.any(self.scales <= 0):
            raise UsageError("bump scales must be positive")
        self.amplitude = float(amplitude)

    def _factors(self, points):
        vals, grads = [], []
        for y, c, s in zip(points, self.centers, self.scales):
            psi, dpsi = self.model.cylinder_potential(y, c)
            v = np.exp(-psi / s**2)
            vals.append(v)
            grads.append(-dpsi / s**2 * v[:, None])
        return vals, grads

    def f(self, points):
        vals, _ = self._factors(points)
        return self.amplitude * np.prod(vals, axis=0)

    def grad(self, points):
        vals, grads = self._factors(points)
        out = []
        for i, (y, g) in enumerate(zip(points, grads)):
            others = np.full(y.shape[0], self.amplitude)
            for j, v in enumerate(vals):
                if j != i:
                    others = others * v
            out.append(_riemannian_grad(self.model, y, g * others[:, None]))
        return out

    def _gauss(self, x0, shifts):
        """Closed form of E ∏ exp(-|X_{t_i} + shift_i - c_i|^2 / 2 s_i^2) and its shift gradient."""
        t = np.array(self.times)
        C = np.minimum.outer(t, t)
        Q = np.linalg.inv(np.diag(self.scales**2) + C)
        det = np.linalg.det(np.eye(len(t)) + C / self.scales**2)
        mu = x0[None, :] + shifts - self.centers  # (k, n)
        n = mu.shape[1]
        quad = np.einsum("ia,ij,ja->", mu, Q, mu)
        val = self.amplitude * det ** (-n / 2) * np.exp(-0.5 * quad)
        return val, -val * (Q @ mu)

    def flat_expectation(self, x0):
        if not isinstance(self.model, Euclidean) or isinstance(self.model, Torus):
            return None
        x0 = np.asarray(x0, dtype=float)
        return float(self._gauss(x0, np.zeros_like(self.centers))[0])

    def flat_ibp(self, x0, h):
        if not isinstance(self.model, Euclidean) or isinstance(self.model, Torus):
            return None
        x0 = np.asarray(x0, dtype=float)
        H = np.stack([h.value(t) for t in self.times])
        _, dmu = self._gauss(x0, np.zeros_like(self.centers))
        return float(np.sum(dmu * H))

    def describe(self):
        return f"bump(times={list(self.times)}, scales={self.scales.tolist()})"


def bump(model, center, scale=0.5, time=1.0, amplitude=1.0):
    """Single-time bump ``f(γ_t) = exp(-ψ(γ_t, c) / s^2)``."""
    return BumpProduct(model, [center], [scale], [time], amplitude)


class FlatCosine(CylinderFunction):
    """``cos(<k, γ_t> + phase)`` on flat space."""

    def __init__(self, model, k, time=1.0, phase=0.0):
        if not isinstance(model, Euclidean):
            raise UsageError("FlatCosine needs a flat model")
        self.model = model
        self.k = np.asarray(k, dtype=float)
        self.times = _check_times([time])
        self.phase = float(phase)

    def f(self, points):
        return np.cos(points[0] @ self.k + self.phase)

    def grad(self, points):
        return [-np.sin(points[0] @ self.k + self.phase)[:, None] * self.k]

    def flat_expectation(self, x0):
        t = self.times[0]
        return float(np.cos(np.dot(self.k, x0) + self.phase) * np.exp(-0.5 * t * np.dot(self.k, self.k)))

    def flat_ibp(self, x0, h):
        t = self.times[0]
        damp = np.exp(-0.5 * t * np.dot(self.k, self.k))
        return float(-np.sin(np.dot(self.k, x0) + self.phase) * damp * np.dot(self.k, h.value(t)))

    def describe(self):
        return f"cosine(k={self.k.tolist()})"


class LegendreZonal(CylinderFunction):
    """``P_l(cos(d(x0, γ_t) / r))`` on a sphere of radius r: an eigenfunction of Δ."""

    def __init__(self, model, x0, degree=1, time=1.0):
        self.model = model
        self.x0 = np.asarray(x0, dtype=float)
        self.degree = int(degree)
        self.times = _check_times([time])
        self._c = np.zeros(self.degree + 1)
        self._c[-1] = 1.0

    def _u(self, y):
        r2 = np.sum(self.x0 * self.x0)
        return np.clip(y @ self.x0 / r2, -1.0, 1.0), r2

    def f(self, points):
        u, _ = self._u(points[0])
        return legendre.legval(u, self._c)

    def grad(self, points):
        y = points[0]
        u, r2 = self._u(y)
        dp = legendre.legval(u, legendre.legder(self._c))
        return [_riemannian_grad(self.model, y, dp[:, None] * self.x0 / r2)]

    def describe(self):
        return f"legendre(l={self.degree})"


class SquaredNorm(CylinderFunction):
    """``|γ_t - x0|^2`` on flat space (unbounded; moment checks only)."""

    def __init__(self, model, x0, time=1.0):
        self.model = model
        self.x0 = np.asarray(x0, dtype=float)
        self.times = _check_times([time])

    def f(self, points):
        d = points[0] - self.x0
        return np.sum(d * d, axis=-1)

    def grad(self, points):
        return [2 * (points[0] - self.x0)]

    def flat_expectation(self, x0):
        d = np.asarray(x0) - self.x0
        return float(self.model.dim * self.times[0] + d @ d)

    def flat_ibp(self, x0, h):
        # E 2 <W_t - c, h(t)> = 2 <x0 - c, h(t)>
        return float(2 * (np.asarray(x0) - self.x0) @ h.value(self.times[0]))
