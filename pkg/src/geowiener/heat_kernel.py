"""Heat kernels of ``e^{tΔ/2}`` on the shipped models and quadrature grids.

Conventions: the generator is half the Laplace-Beltrami operator, so on
``R^n`` the kernel is ``(2πt)^{-n/2} exp(-d^2 / 2t)``.  Kernels are
densities with respect to Riemannian volume.

* sphere of radius r: spectral series in Legendre polynomials;
* hyperbolic plane of curvature ``-c^2``: McKean's integral for ``H^2``,
  rescaled, evaluated by Gauss-Legendre after the substitution
  ``s = ρ + w^2`` which removes the endpoint singularity;
* flat torus: wrapped Gaussian (image sum) or its Fourier series, whichever
  converges faster.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre

from .errors import AccuracyError, DomainError, NoOracleError, UsageError
from .manifolds import ChartPoint, Euclidean, Hyperbolic2, ManifoldModel, Sphere2, Torus

__all__ = ["HeatKernelOracle", "QuadGrid", "p", "quad_grid", "oracle_for", "semigroup_defect"]

CONVENTION = "Delta/2"


def _ambient(m, x):
    if isinstance(x, ChartPoint):
        m.check_point(x)
        return m.to_ambient(x.coords, x.chart_id)
    return np.asarray(x, dtype=float)


@dataclass(frozen=True, eq=False)
class QuadGrid:
    """Weighted ambient nodes; ``tail_bound`` estimates the mass outside the grid."""

    points: np.ndarray
    weights: np.ndarray
    tail_bound: float = 0.0

    @property
    def total_weight(self):
        return float(np.sum(self.weights))

    def integrate(self, values):
        return float(np.dot(self.weights, values))

    def __len__(self):
        return self.weights.size


class HeatKernelOracle:
    """Exact heat kernel of a shipped model under the Δ/2 convention."""

    convention = CONVENTION

    def __init__(self, m: ManifoldModel, tol=1e-14, max_terms=200000, radial_nodes=160):
        if not isinstance(m, (Euclidean, Sphere2, Hyperbolic2)):
            raise NoOracleError(f"no heat-kernel oracle for {m!r}")
        self.m = m
        self.tol = tol
        self.max_terms = max_terms
        self.radial_nodes = radial_nodes

    # -- kernels ------------------------------------------------------------

    def p(self, t, x, y):
        if not np.all(np.asarray(t) > 0):
            raise DomainError("heat kernel needs t > 0")
        m = self.m
        x = _ambient(m, x)
        y = _ambient(m, y)
        if isinstance(m, Torus):
            return self._torus(t, m.log(x, y))
        if isinstance(m, Euclidean):
            d2 = np.sum((y - x) ** 2, axis=-1)
            return (2 * np.pi * t) ** (-m.dim / 2) * np.exp(-d2 / (2 * t))
        return self.radial(t, m.distance(x, y))

    def radial(self, t, rho):
        """Kernel as a function of geodesic distance (sphere and hyperbolic plane)."""
        m = self.m
        rho = np.asarray(rho, dtype=float)
        if isinstance(m, Sphere2):
            return self._sphere(t, rho)
        if isinstance(m, Hyperbolic2):
            return self._hyperbolic(t, rho)
        if isinstance(m, Euclidean) and not isinstance(m, Torus):
            return (2 * np.pi * t) ** (-m.dim / 2) * np.exp(-(rho**2) / (2 * t))
        raise UsageError(f"{m.name} kernel is not a function of distance alone")

    def _torus(self, t, diff):
        out = np.ones(np.shape(diff)[:-1])
        for k, L in enumerate(self.m.periods):
            out = out * self._wrapped_1d(t, diff[..., k], L)
        return out

    def _wrapped_1d(self, t, d, L):
        d = np.asarray(d, dtype=float)
        if t / L**2 < 0.1:
            # images: terms fall below tol once |d + kL| > sqrt(2t log(1/tol))
            kmax = int(np.ceil(np.sqrt(2 * t * np.log(1 / self.tol)) / L)) + 1
            k = np.arange(-kmax, kmax + 1)
            z = d[..., None] + k * L
            return np.sum(np.exp(-(z**2) / (2 * t)), axis=-1) / np.sqrt(2 * np.pi * t)
        kmax = int(np.ceil(L * np.sqrt(np.log(1 / self.tol) / (2 * t)) / (2 * np.pi))) + 1
        k = np.arange(1, kmax + 1)
        w = 2 * np.pi * k / L
        return (1 + 2 * np.sum(np.exp(-(w**2) * t / 2) * np.cos(w * d[..., None]), axis=-1)) / L

    def sphere_terms(self, t):
        """Number of Legendre terms used at time ``t`` and the truncation bound."""
        r = self.m.radius
        a = t / (2 * r * r)
        # tail Σ_{l>L} (2l+1) e^{-a l(l+1)} ≤ e^{-a L(L+1)} / a  (integral comparison)
        L = 1
        while np.exp(-a * L * (L + 1)) / a / (4 * np.pi * r * r) > self.tol:
            L = int(L * 1.5) + 1
            if L > self.max_terms:
                bound = np.exp(-a * self.max_terms * (self.max_terms + 1)) / a / (4 * np.pi * r * r)
                raise AccuracyError(f"sphere series needs more than {self.max_terms} terms", achieved_bound=bound)
        return L, np.exp(-a * L * (L + 1)) / a / (4 * np.pi * r * r)

    def _sphere(self, t, rho):
        r = self.m.radius
        L, _ = self.sphere_terms(t)
        l = np.arange(L + 1)
        c = (2 * l + 1) / (4 * np.pi * r * r) * np.exp(-l * (l + 1) * t / (2 * r * r))
        return legendre.legval(np.cos(rho / r), c)

    def _hyperbolic(self, t, rho):
        c = self.m.c
        return c * c * _mckean(c * c * t / 2, c * rho, self.radial_nodes)

    # -- grids ----------------------------------------------------------------

    def quad_grid(self, resolution, center=None, t=1.0, radius=None):
        return quad_grid(self.m, resolution, center=center, t=t, radius=radius, oracle=self)


def _log_sinh(x):
    x = np.asarray(x, dtype=float)
    big = x > 20
    small = np.log(np.sinh(np.where(big, 1.0, x)))
    return np.where(big, x - np.log(2.0) + np.log1p(-np.exp(-2 * np.where(big, x, 20.0))), small)


_GL_CACHE = {}


def _gl(n):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = legendre.leggauss(n)
    return _GL_CACHE[n]


def _mckean(t, rho, nodes):
    """Heat kernel of ``e^{tΔ}`` on ``H^2(-1)`` at distance ``rho``.

    p = sqrt(2) e^{-t/4} (4πt)^{-3/2} ∫_ρ^∞ s e^{-s^2/4t} (cosh s - cosh ρ)^{-1/2} ds.
    With ``s = ρ + w^2``: ``cosh s - cosh ρ = 2 sinh(ρ + w^2/2) sinh(w^2/2)``.
    """
    rho = np.asarray(rho, dtype=float)
    shape = rho.shape
    r = rho.reshape(-1, 1)
    # integrand is below e^{-40} relative to its peak once s - ρ exceeds this
    span = np.sqrt(4 * t * 40.0 + r * r) - r + 4 * t
    wmax = np.sqrt(span)
    x, wg = _gl(nodes)
    w = 0.5 * wmax * (x + 1)
    ww = 0.5 * wmax * wg
    s = r + w * w
    h = 0.5 * w * w
    # 2w ds-factor cancels the sqrt(sinh(w^2/2)) ~ w/sqrt(2) singular part
    with np.errstate(divide="ignore"):
        log_f = (
            np.log(2 * s)
            - s * s / (4 * t)
            - 0.5 * (np.log(2.0) + _log_sinh(r + h))
            - 0.5 * _log_sinh(h)
            + np.log(w)
        )
    f = np.exp(log_f)
    val = np.sum(f * ww, axis=1)
    pref = np.sqrt(2) * np.exp(-t / 4) / (4 * np.pi * t) ** 1.5
    return (pref * val).reshape(shape)


def oracle_for(m: ManifoldModel) -> HeatKernelOracle:
    return HeatKernelOracle(m)


def p(m: ManifoldModel, t, x, y):
    """Heat kernel ``p_t(x, y)`` of ``e^{tΔ/2}``; ``x, y`` are chart points or ambient arrays."""
    return oracle_for(m).p(t, x, y)


def _polar_nodes(m, center, radius, resolution, polar_weight):
    """Gauss-Legendre in geodesic radius, trapezoid in angle, about ``center``."""
    x, wg = _gl(resolution)
    r = 0.5 * radius * (x + 1)
    wr = 0.5 * radius * wg * polar_weight(r)
    na = 2 * resolution
    phi = 2 * np.pi * np.arange(na) / na
    F = m.default_frame(center)
    dirs = np.cos(phi)[:, None] * F[:, 0] + np.sin(phi)[:, None] * F[:, 1]
    v = r[:, None, None] * dirs[None]
    pts, _, _ = m.exp_transport(np.broadcast_to(center, v.shape), v, tau=1.0)
    w = np.repeat(wr, na) * (2 * np.pi / na)
    return pts.reshape(-1, m.ambient_dim), w


def quad_grid(m: ManifoldModel, resolution, center=None, t=1.0, radius=None, oracle=None) -> QuadGrid:
    """Weighted nodes for integrating against Riemannian volume.

    Parameters
    ----------
    resolution : int
        Nodes per direction (>= 8).
    center : ambient point, optional
        Centre of the grid (origin / pole by default).
    t : float
        Diffusion time the grid is meant for; sets the truncation radius on
        the non-compact models (``8 sqrt(t)`` flat, a Gaussian-times-volume
        bound on the hyperbolic plane).
    radius : float, optional
        Override the truncation radius.  On the sphere this restricts the grid
        to a geodesic cap.

    Notes
    -----
    Sphere and hyperbolic plane use geodesic polar coordinates about
    ``center`` (Gauss-Legendre radially, trapezoid in angle); the torus uses
    the periodic trapezoid rule; flat space uses a Gauss-Legendre box.
    """
    if resolution < 8:
        raise DomainError("resolution must be >= 8")
    resolution = int(resolution)
    if center is None:
        center = np.zeros(m.ambient_dim)
        if isinstance(m, Sphere2):
            center = np.array([0.0, 0.0, -m.radius])
        elif isinstance(m, Hyperbolic2):
            center = m.to_ambient(np.array([0.0, 1.0]))
    center = np.asarray(center, dtype=float)
    if isinstance(m, Torus):
        axes = [L * np.arange(resolution) / resolution for L in m.periods]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([g.ravel() for g in mesh], axis=-1) + center
        w = np.full(pts.shape[0], np.prod(m.periods) / pts.shape[0])
        return QuadGrid(pts, w, 0.0)
    if isinstance(m, Euclidean):
        R = 8 * np.sqrt(t) if radius is None else float(radius)
        x, wg = _gl(resolution)
        nodes, wts = R * x, R * wg
        mesh = np.meshgrid(*([nodes] * m.dim), indexing="ij")
        wmesh = np.meshgrid(*([wts] * m.dim), indexing="ij")
        pts = np.stack([g.ravel() for g in mesh], axis=-1) + center
        w = np.prod(np.stack([g.ravel() for g in wmesh], axis=-1), axis=-1)
        # Gaussian tail mass outside the box (union bound over coordinates)
        from scipy.special import erfc

        tail = float(m.dim * erfc(R / np.sqrt(2 * t)))
        return QuadGrid(pts, w, tail)
    if isinstance(m, Sphere2):
        r = m.radius
        R = np.pi * r if radius is None else min(float(radius), np.pi * r)
        pts, w = _polar_nodes(m, center, R, resolution, lambda s: r * np.sin(s / r))
        return QuadGrid(pts, w, 0.0)
    if isinstance(m, Hyperbolic2):
        c = m.c
        if radius is None:
            # mass density in ρ behaves like exp(-ρ^2/2t + cρ/2); push it below e^{-36}
            R = c * t / 2 + np.sqrt((c * t / 2) ** 2 + 72 * t)
        else:
            R = float(radius)
        pts, w = _polar_nodes(m, center, R, resolution, lambda s: np.sinh(c * s) / c)
        orc = oracle or HeatKernelOracle(m)
        tail = max(0.0, 1.0 - float(np.dot(w, orc.p(t, center, pts))))
        return QuadGrid(pts, w, tail)
    raise NoOracleError(f"no quadrature grid for {m!r}")


def semigroup_defect(m: ManifoldModel, s, t, x, y, resolution=64):
    """``|∫ p_s(x,z) p_t(z,y) dz - p_{s+t}(x,y)|`` using a grid centred at ``x``."""
    orc = oracle_for(m)
    x = _ambient(m, x)
    y = _ambient(m, y)
    radius = None
    if isinstance(m, Euclidean) and not isinstance(m, Torus):
        # the grid has to cover both factors: centre between x and y
        mid = 0.5 * (x + y)
        grid = quad_grid(m, resolution, center=mid, t=s + t, radius=8 * np.sqrt(s + t) + 0.5 * np.linalg.norm(y - x))
    else:
        if isinstance(m, Hyperbolic2):
            d = float(m.distance(x, y))
            c = m.c
            T = s + t
            radius = d + c * T / 2 + np.sqrt((c * T / 2) ** 2 + 72 * T)
        grid = quad_grid(m, resolution, center=x, t=s + t, radius=radius)
    lhs = grid.integrate(orc.p(s, x, grid.points) * orc.p(t, grid.points, y))
    return abs(lhs - float(orc.p(s + t, x, y)))
