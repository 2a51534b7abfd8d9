"""Model Riemannian manifolds.

Every model carries two views of the same geometry:

* a chart view (metric, Christoffel symbols, curvature tensors in local
  coordinates), used by the ODE integrators in :mod:`geowiener.geometry`;
* an embedded view, where points are vectors of an ambient space with a
  flat bilinear form ``eta`` (Euclidean for the sphere, Minkowski for the
  hyperboloid).  Geodesics and parallel transport along them are closed
  form there, and every function is vectorised over leading axes.

All models shipped here have constant sectional curvature, which is what
makes the embedded view exact.  :class:`MetricManifold` covers user-given
chart metrics through finite differences and has no embedded view.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, UsageError

__all__ = [
    "ChartPoint",
    "TangentVec",
    "ManifoldModel",
    "Euclidean",
    "Torus",
    "Sphere2",
    "Hyperbolic2",
    "MetricManifold",
    "make_manifold",
]


@dataclass(frozen=True, eq=False)
class ChartPoint:
    coords: np.ndarray
    chart_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "coords", np.asarray(self.coords, dtype=float).copy())


@dataclass(frozen=True, eq=False)
class TangentVec:
    base: ChartPoint
    components: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "components", np.asarray(self.components, dtype=float).copy()
        )


def _cs(K, s):
    """Generalised cosine/sine: ``C = cos(sqrt(K) s)``, ``S = sin(sqrt(K) s)/sqrt(K)``."""
    if K > 0:
        q = np.sqrt(K)
        return np.cos(q * s), np.sin(q * s) / q
    if K < 0:
        q = np.sqrt(-K)
        return np.cosh(q * s), np.sinh(q * s) / q
    s = np.asarray(s, dtype=float)
    return np.ones_like(s), s


class ManifoldModel:
    """Base class; subclasses fill in the chart and embedded geometry."""

    name = "abstract"
    dim = 0
    ambient_dim = 0
    n_charts = 1
    #: constant sectional curvature of the model, ``None`` if not constant
    curvature = None
    #: diagonal of the ambient bilinear form
    eta = None
    fd_step = 1e-5

    # -- chart view -------------------------------------------------------

    def in_domain(self, coords, chart_id=0):
        raise NotImplementedError

    def check_point(self, x):
        if not (0 <= x.chart_id < self.n_charts) or not self.in_domain(x.coords, x.chart_id):
            raise DomainError(
                f"{x.coords} is outside the domain of chart {x.chart_id} of {self}"
            )

    def metric(self, coords, chart_id=0):
        raise NotImplementedError

    def christoffel(self, coords, chart_id=0):
        """``Gamma[k, i, j]`` = Γ^k_ij."""
        return _christoffel_from_metric(lambda c: self.metric(c, chart_id), coords, self.fd_step)

    def christoffel_grad(self, coords, chart_id=0):
        """``dGamma[l, k, i, j]`` = ∂_l Γ^k_ij by central differences."""
        x = np.asarray(coords, dtype=float)
        n = x.size
        out = np.empty((n, n, n, n))
        for l in range(n):
            h = self.fd_step * max(1.0, abs(x[l]))
            e = np.zeros(n)
            e[l] = h
            out[l] = (self.christoffel(x + e, chart_id) - self.christoffel(x - e, chart_id)) / (2 * h)
        return out

    def riemann(self, coords, chart_id=0):
        """``R[l, i, j, k]`` = R^l_ijk with R(∂_i, ∂_j)∂_k = R^l_ijk ∂_l."""
        G = self.christoffel(coords, chart_id)
        dG = self.christoffel_grad(coords, chart_id)
        R = (
            np.einsum("iljk->lijk", dG)
            - np.einsum("jlik->lijk", dG)
            + np.einsum("lim,mjk->lijk", G, G)
            - np.einsum("ljm,mik->lijk", G, G)
        )
        return R

    def ricci(self, coords, chart_id=0):
        return np.einsum("iijk->jk", self.riemann(coords, chart_id))

    def scal(self, coords, chart_id=0):
        g = self.metric(coords, chart_id)
        return float(np.einsum("jk,jk->", np.linalg.inv(g), self.ricci(coords, chart_id)))

    def chart_margin(self, coords, chart_id=0):
        """Positive while the integrator may stay in ``chart_id``; zero triggers a switch."""
        return np.inf

    def transition(self, coords, src, dst):
        if src == dst:
            return np.asarray(coords, dtype=float)
        raise UsageError(f"{self} has a single chart")

    def transition_jacobian(self, coords, src, dst):
        return np.eye(self.dim)

    def other_chart(self, chart_id):
        return chart_id

    # -- embedded view ----------------------------------------------------

    def to_ambient(self, coords, chart_id=0):
        raise NotImplementedError

    def from_ambient(self, p):
        """Return ``(coords, chart_id)`` of an ambient point, picking the best chart."""
        raise NotImplementedError

    def embed_jacobian(self, coords, chart_id=0):
        """``(ambient_dim, dim)`` matrix pushing chart components to ambient vectors."""
        raise NotImplementedError

    def inner(self, u, v):
        """Ambient bilinear form, contracted over the last axis."""
        return np.sum(u * v * self.eta, axis=-1)

    def project(self, p, w):
        """Orthogonal projection of an ambient vector onto T_p M."""
        K = self.curvature
        if not K:
            return w
        return w - K * self.inner(w, p)[..., None] * p

    def exp_transport(self, p, v, vectors=None, tau=1.0):
        """Follow the geodesic ``s -> exp_p(s v)`` for ``s`` in ``[0, tau]``.

        Parameters
        ----------
        p : array (..., d)
        v : array (..., d)
            Initial velocity, tangent at ``p``.
        vectors : array (..., d, m), optional
            Tangent vectors at ``p`` (columns) to parallel-transport.
        tau : float or array broadcastable to ``p[..., 0]``

        Returns
        -------
        q, v_end, vectors_end
        """
        K = self.curvature
        speed = np.sqrt(np.maximum(self.inner(v, v), 0.0))
        safe = np.where(speed > 0, speed, 1.0)
        vhat = np.where((speed > 0)[..., None], v / safe[..., None], 0.0)
        arc = speed * tau
        C, S = _cs(K, arc)
        q = C[..., None] * p + S[..., None] * vhat
        that = -K * S[..., None] * p + C[..., None] * vhat
        v_end = speed[..., None] * that
        if vectors is None:
            return q, v_end, None
        a = np.sum(vectors * (vhat * self.eta)[..., :, None], axis=-2)
        out = vectors + (that - vhat)[..., :, None] * a[..., None, :]
        return q, v_end, out

    def distance(self, p, q):
        raise NotImplementedError

    def log(self, p, q):
        """Initial velocity of the minimising geodesic from p reaching q at time 1."""
        raise NotImplementedError

    def cylinder_potential(self, y, c):
        """Smooth approximation of ``d(y, c)**2 / 2`` used by bump functions.

        Returns ``(value, ambient_gradient)``; the gradient is the array of
        partial derivatives with respect to the ambient coordinates of ``y``.
        """
        raise NotImplementedError

    def default_frame(self, p):
        """An orthonormal frame (d, n) at ambient point(s) p."""
        raise NotImplementedError

    def scal_at(self, p):
        """Scalar curvature at ambient points (vectorised)."""
        K = self.curvature
        return np.full(np.shape(p)[:-1], self.dim * (self.dim - 1) * K)

    def ricci_frame(self, p, frames):
        """Ricci operator read in the frames: ``(..., n, n)`` array."""
        K = self.curvature
        n = self.dim
        shape = np.shape(p)[:-1]
        return np.broadcast_to((n - 1) * K * np.eye(n), shape + (n, n)).copy()

    def chart_tangent(self, coords, chart_id, w):
        """Chart components of an ambient tangent vector ``w`` at the chart point."""
        J = self.embed_jacobian(coords, chart_id)
        sol, *_ = np.linalg.lstsq(J, w, rcond=None)
        return sol

    def config(self):
        return {"manifold": self.name}

    def __repr__(self):
        return f"{type(self).__name__}({self.config()})"


def _christoffel_from_metric(metric, coords, step):
    """Γ^k_ij = ½ g^{kl} (∂_i g_lj + ∂_j g_li − ∂_l g_ij) with central differences."""
    x = np.asarray(coords, dtype=float)
    n = x.size
    dg = np.empty((n, n, n))
    for l in range(n):
        h = step * max(1.0, abs(x[l]))
        e = np.zeros(n)
        e[l] = h
        dg[l] = (metric(x + e) - metric(x - e)) / (2 * h)
    ginv = np.linalg.inv(metric(x))
    # dg[l, i, j] = ∂_l g_ij
    t = np.einsum("ilj->lij", dg) + np.einsum("jli->lij", dg) - dg
    return 0.5 * np.einsum("kl,lij->kij", ginv, t)


class _Conformal(ManifoldModel):
    """Chart metrics of the form g = exp(2 phi) δ with analytic phi."""

    def _phi(self, u, chart_id):
        raise NotImplementedError

    def _dphi(self, u, chart_id):
        raise NotImplementedError

    def _hphi(self, u, chart_id):
        raise NotImplementedError

    def metric(self, coords, chart_id=0):
        u = np.asarray(coords, dtype=float)
        return np.exp(2 * self._phi(u, chart_id)) * np.eye(self.dim)

    def christoffel(self, coords, chart_id=0):
        u = np.asarray(coords, dtype=float)
        d = self._dphi(u, chart_id)
        I = np.eye(self.dim)
        return (
            np.einsum("ki,j->kij", I, d)
            + np.einsum("kj,i->kij", I, d)
            - np.einsum("ij,k->kij", I, d)
        )

    def christoffel_grad(self, coords, chart_id=0):
        u = np.asarray(coords, dtype=float)
        H = self._hphi(u, chart_id)
        I = np.eye(self.dim)
        # dGamma[l, k, i, j]
        return (
            np.einsum("ki,jl->lkij", I, H)
            + np.einsum("kj,il->lkij", I, H)
            - np.einsum("ij,kl->lkij", I, H)
        )


class Euclidean(_Conformal):
    """Flat R^n in Cartesian coordinates."""

    curvature = 0.0

    def __init__(self, dim=2):
        if dim < 1:
            raise DomainError("dimension must be positive")
        self.dim = int(dim)
        self.ambient_dim = self.dim
        self.name = "euclidean"
        self.eta = np.ones(self.dim)

    def in_domain(self, coords, chart_id=0):
        return bool(np.all(np.isfinite(coords))) and np.size(coords) == self.dim

    def _phi(self, u, chart_id):
        return 0.0

    def _dphi(self, u, chart_id):
        return np.zeros(self.dim)

    def _hphi(self, u, chart_id):
        return np.zeros((self.dim, self.dim))

    def to_ambient(self, coords, chart_id=0):
        return np.asarray(coords, dtype=float).copy()

    def from_ambient(self, p):
        return np.asarray(p, dtype=float).copy(), 0

    def embed_jacobian(self, coords, chart_id=0):
        return np.eye(self.dim)

    def exp_transport(self, p, v, vectors=None, tau=1.0):
        # straight lines; parallel transport is the identity
        p = np.asarray(p, dtype=float)
        v = np.asarray(v, dtype=float)
        q = p + np.asarray(tau, dtype=float)[..., None] * v
        if vectors is None:
            return q, v.copy(), None
        return q, v.copy(), np.array(vectors, dtype=float)

    def distance(self, p, q):
        return np.linalg.norm(np.asarray(q) - np.asarray(p), axis=-1)

    def log(self, p, q):
        return np.asarray(q, dtype=float) - np.asarray(p, dtype=float)

    def cylinder_potential(self, y, c):
        diff = y - c
        return 0.5 * np.sum(diff * diff, axis=-1), diff

    def default_frame(self, p):
        p = np.asarray(p, dtype=float)
        return np.broadcast_to(np.eye(self.dim), p.shape[:-1] + (self.dim, self.dim)).copy()

    def config(self):
        return {"manifold": self.name, "dim": self.dim}


class Torus(Euclidean):
    """Flat torus R^n / (L_1 Z x ... x L_n Z).

    Points are stored in unwrapped (covering-space) coordinates so paths stay
    continuous; distances and cylinder potentials use the minimal image.
    """

    def __init__(self, periods=(1.0, 1.0)):
        periods = np.atleast_1d(np.asarray(periods, dtype=float))
        if np.any(periods <= 0):
            raise DomainError("torus periods must be positive")
        super().__init__(periods.size)
        self.name = "torus"
        self.periods = periods

    def wrap(self, p):
        return np.mod(p, self.periods)

    def _min_image(self, diff):
        L = self.periods
        return diff - L * np.round(diff / L)

    def distance(self, p, q):
        return np.linalg.norm(self._min_image(np.asarray(q) - np.asarray(p)), axis=-1)

    def log(self, p, q):
        return self._min_image(np.asarray(q, dtype=float) - np.asarray(p, dtype=float))

    def cylinder_potential(self, y, c):
        L = self.periods
        k = 2 * np.pi / L
        ang = k * (y - c)
        value = np.sum((1 - np.cos(ang)) / k**2, axis=-1)
        return value, np.sin(ang) / k

    def config(self):
        return {"manifold": self.name, "periods": [float(x) for x in self.periods]}


class Sphere2(_Conformal):
    """Round 2-sphere of radius r embedded in R^3 with two stereographic charts.

    Chart 0 projects from the north pole (covers everything but the north
    pole), chart 1 from the south pole.  The transition is the inversion
    ``u -> r^2 u / |u|^2``.  The integrator switches charts when ``|u|``
    reaches ``2r``; each chart is declared valid for ``|u| < 4r``.
    """

    dim = 2
    ambient_dim = 3
    n_charts = 2

    def __init__(self, radius=1.0):
        if radius <= 0:
            raise DomainError("radius must be positive")
        self.radius = float(radius)
        self.curvature = 1.0 / self.radius**2
        self.name = "sphere2"
        self.eta = np.ones(3)

    def in_domain(self, coords, chart_id=0):
        u = np.asarray(coords, dtype=float)
        return u.shape == (2,) and bool(np.all(np.isfinite(u))) and np.dot(u, u) < (4 * self.radius) ** 2

    def _phi(self, u, chart_id):
        r2 = self.radius**2
        return np.log(2 * r2) - np.log(r2 + np.dot(u, u))

    def _dphi(self, u, chart_id):
        return -2 * u / (self.radius**2 + np.dot(u, u))

    def _hphi(self, u, chart_id):
        s = self.radius**2 + np.dot(u, u)
        return -2 * np.eye(2) / s + 4 * np.outer(u, u) / s**2

    def chart_margin(self, coords, chart_id=0):
        u = np.asarray(coords)
        return (2 * self.radius) ** 2 - float(np.dot(u, u))

    def other_chart(self, chart_id):
        return 1 - chart_id

    def transition(self, coords, src, dst):
        u = np.asarray(coords, dtype=float)
        if src == dst:
            return u
        return self.radius**2 * u / np.dot(u, u)

    def transition_jacobian(self, coords, src, dst):
        u = np.asarray(coords, dtype=float)
        if src == dst:
            return np.eye(2)
        q = np.dot(u, u)
        return self.radius**2 * (np.eye(2) / q - 2 * np.outer(u, u) / q**2)

    def to_ambient(self, coords, chart_id=0):
        u = np.asarray(coords, dtype=float)
        r = self.radius
        q = np.sum(u * u, axis=-1)
        s = q + r * r
        xy = 2 * r * r * u / s[..., None]
        z = r * (q - r * r) / s
        if chart_id == 1:
            z = -z
        return np.concatenate([xy, z[..., None]], axis=-1)

    def from_ambient(self, p):
        p = np.asarray(p, dtype=float)
        r = self.radius
        if p[2] <= 0:
            return r * p[:2] / (r - p[2]), 0
        return r * p[:2] / (r + p[2]), 1

    def embed_jacobian(self, coords, chart_id=0):
        u = np.asarray(coords, dtype=float)
        r = self.radius
        s = np.dot(u, u) + r * r
        Jxy = 2 * r * r * (np.eye(2) / s - 2 * np.outer(u, u) / s**2)
        Jz = 4 * r**3 * u / s**2
        if chart_id == 1:
            Jz = -Jz
        return np.vstack([Jxy, Jz[None, :]])

    def distance(self, p, q):
        chord = np.linalg.norm(np.asarray(q) - np.asarray(p), axis=-1)
        return 2 * self.radius * np.arcsin(np.minimum(1.0, chord / (2 * self.radius)))

    def log(self, p, q):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        w = self.project(p, q - p)
        nw = np.linalg.norm(w, axis=-1)
        d = self.distance(p, q)
        safe = np.where(nw > 0, nw, 1.0)
        return np.where((nw > 0)[..., None], w * (d / safe)[..., None], 0.0)

    def cylinder_potential(self, y, c):
        # r^2 (1 - cos(d/r)) = r^2 - <y, c>
        return self.radius**2 - np.sum(y * c, axis=-1), -np.broadcast_to(c, np.shape(y)).copy()

    def default_frame(self, p):
        p = np.asarray(p, dtype=float)
        n = p / np.linalg.norm(p, axis=-1, keepdims=True)
        ref = np.where(
            (np.abs(n[..., 2]) < 0.9)[..., None], np.array([0.0, 0.0, 1.0]), np.array([1.0, 0.0, 0.0])
        )
        e1 = ref - np.sum(ref * n, axis=-1, keepdims=True) * n
        e1 /= np.linalg.norm(e1, axis=-1, keepdims=True)
        e2 = np.cross(n, e1)
        return np.stack([e1, e2], axis=-1)

    def config(self):
        return {"manifold": self.name, "radius": self.radius}


class Hyperbolic2(_Conformal):
    """Hyperbolic plane of curvature ``-c^2`` (``c > 0``).

    Chart: upper half-plane with metric ``(dx^2 + dy^2) / (c^2 y^2)``.
    Embedding: the hyperboloid ``<p, p>_L = -1/c^2`` in Minkowski space
    with signature ``(-, +, +)``.
    """

    dim = 2
    ambient_dim = 3

    def __init__(self, curvature=-1.0):
        if curvature >= 0:
            raise DomainError("hyperbolic curvature must be negative")
        self.curvature = float(curvature)
        self.c = float(np.sqrt(-curvature))
        self.name = "hyperbolic2"
        self.eta = np.array([-1.0, 1.0, 1.0])

    def in_domain(self, coords, chart_id=0):
        u = np.asarray(coords, dtype=float)
        return u.shape == (2,) and bool(np.all(np.isfinite(u))) and u[1] > 0

    def _phi(self, u, chart_id):
        return -np.log(self.c * u[1])

    def _dphi(self, u, chart_id):
        return np.array([0.0, -1.0 / u[1]])

    def _hphi(self, u, chart_id):
        return np.array([[0.0, 0.0], [0.0, 1.0 / u[1] ** 2]])

    def to_ambient(self, coords, chart_id=0):
        u = np.asarray(coords, dtype=float)
        x, y = u[..., 0], u[..., 1]
        s = x * x + y * y
        p = np.stack([(s + 1) / (2 * y), x / y, (s - 1) / (2 * y)], axis=-1)
        return p / self.c

    def from_ambient(self, p):
        p = np.asarray(p, dtype=float)
        den = self.c * (p[0] - p[2])
        return np.array([self.c * p[1] / den, 1.0 / den]), 0

    def embed_jacobian(self, coords, chart_id=0):
        x, y = float(coords[0]), float(coords[1])
        dx = np.array([x / y, 1 / y, x / y])
        dy = np.array([(y * y - x * x - 1) / (2 * y * y), -x / (y * y), (y * y - x * x + 1) / (2 * y * y)])
        return np.stack([dx, dy], axis=-1) / self.c

    def distance(self, p, q):
        diff = np.asarray(q) - np.asarray(p)
        chord = np.sqrt(np.maximum(self.inner(diff, diff), 0.0))
        return 2 / self.c * np.arcsinh(self.c * chord / 2)

    def log(self, p, q):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        w = self.project(p, q - p)
        nw = np.sqrt(np.maximum(self.inner(w, w), 0.0))
        d = self.distance(p, q)
        safe = np.where(nw > 0, nw, 1.0)
        return np.where((nw > 0)[..., None], w * (d / safe)[..., None], 0.0)

    def cylinder_potential(self, y, c):
        # (cosh(c d) - 1) / c^2 = -<y, c>_L - 1/c^2
        value = -self.inner(y, c) - 1.0 / self.c**2
        grad = -np.broadcast_to(c * self.eta, np.shape(y)).copy()
        return value, grad

    def default_frame(self, p):
        p = np.asarray(p, dtype=float)
        ref1 = np.array([0.0, 1.0, 0.0])
        ref2 = np.array([0.0, 0.0, 1.0])
        e1 = self.project(p, np.broadcast_to(ref1, p.shape))
        e1 /= np.sqrt(self.inner(e1, e1))[..., None]
        e2 = self.project(p, np.broadcast_to(ref2, p.shape))
        e2 = e2 - self.inner(e2, e1)[..., None] * e1
        e2 /= np.sqrt(self.inner(e2, e2))[..., None]
        return np.stack([e1, e2], axis=-1)

    def config(self):
        return {"manifold": self.name, "curvature": self.curvature}


class MetricManifold(ManifoldModel):
    """Single-chart manifold from a user-supplied metric callable.

    Christoffel symbols and curvature come from nested central differences
    with step ``1e-5`` scaled by the coordinate magnitude.  Mainly useful as
    an independent oracle for the closed-form models.
    """

    def __init__(self, metric, dim, domain=None, name="metric"):
        self._metric = metric
        self.dim = int(dim)
        self._domain = domain
        self.name = name

    def in_domain(self, coords, chart_id=0):
        ok = np.size(coords) == self.dim and bool(np.all(np.isfinite(coords)))
        if ok and self._domain is not None:
            ok = bool(self._domain(np.asarray(coords, dtype=float)))
        return ok

    def metric(self, coords, chart_id=0):
        return np.asarray(self._metric(np.asarray(coords, dtype=float)), dtype=float)


_MODELS = {
    "euclidean": lambda cfg: Euclidean(int(cfg.get("dim", 2))),
    "torus": lambda cfg: Torus(cfg.get("periods", (1.0,) * int(cfg.get("dim", 2)))),
    "sphere2": lambda cfg: Sphere2(float(cfg.get("radius", 1.0))),
    "hyperbolic2": lambda cfg: Hyperbolic2(float(cfg.get("curvature", -1.0))),
}


def make_manifold(name, **params):
    """Build a shipped model from configuration keys.

    >>> make_manifold("sphere2", radius=2.0).curvature
    0.25
    """
    try:
        factory = _MODELS[name]
    except KeyError:
        raise DomainError(f"unknown manifold {name!r}; expected one of {sorted(_MODELS)}") from None
    return factory(params)
