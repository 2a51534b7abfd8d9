"""Chart-level geodesics and parallel transport by adaptive ODE integration.

The integrator is scipy's Dormand-Prince 4(5) pair with dense output.
Chart boundaries are handled with terminal events: when the current chart
margin reaches zero, the state is re-expressed in the neighbouring chart
and integration restarts from there.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import DomainError, IntegrationError, UsageError
from .manifolds import ChartPoint, ManifoldModel, TangentVec

__all__ = [
    "ODEConfig",
    "GeodesicSegment",
    "riemann_inner",
    "scalar_curvature",
    "geodesic_shoot",
    "parallel_transport",
    "transport_along_path",
]


@dataclass(frozen=True)
class ODEConfig:
    atol: float = 1e-10
    rtol: float = 1e-9
    max_chart_switches: int = 64


DEFAULT_ODE = ODEConfig()


def riemann_inner(m: ManifoldModel, x: ChartPoint, u: TangentVec, v: TangentVec) -> float:
    """g_x(u, v) in the chart of ``x``."""
    for w in (u, v):
        if w.base.chart_id != x.chart_id or not np.allclose(w.base.coords, x.coords, rtol=0, atol=1e-12):
            raise UsageError("tangent vector is not based at x")
    g = m.metric(x.coords, x.chart_id)
    return float(u.components @ g @ v.components)


def scalar_curvature(m: ManifoldModel, x: ChartPoint) -> float:
    m.check_point(x)
    return m.scal(x.coords, x.chart_id)


def _rhs(m, chart_id, n, n_vec):
    def f(t, y):
        x = y[:n]
        v = y[n : 2 * n]
        G = m.christoffel(x, chart_id)
        out = np.empty_like(y)
        out[:n] = v
        Gv = np.einsum("kij,i->kj", G, v)
        out[n : 2 * n] = -Gv @ v
        if n_vec:
            W = y[2 * n :].reshape(n_vec, n)
            out[2 * n :] = -(W @ Gv.T).ravel()
        return out

    return f


@dataclass
class _Piece:
    t0: float
    t1: float
    chart_id: int
    sol: object


def _integrate(m, x, v, vectors, tau, cfg):
    """Integrate geodesic (and transported vectors) from chart state; returns pieces."""
    n = m.dim
    chart = x.chart_id
    y = np.concatenate([x.coords, v, *vectors]) if vectors else np.concatenate([x.coords, v])
    n_vec = len(vectors)
    t = 0.0
    pieces = []
    switches = 0
    while True:
        if m.n_charts > 1:
            def margin(tt, yy, _c=chart):
                return m.chart_margin(yy[:n], _c)

            margin.terminal = True
            margin.direction = -1
            events = [margin]
        else:
            events = None
        if t >= tau:
            break
        res = solve_ivp(
            _rhs(m, chart, n, n_vec),
            (t, tau),
            y,
            method="RK45",
            rtol=cfg.rtol,
            atol=cfg.atol,
            dense_output=True,
            events=events,
            first_step=None,
        )
        if res.status == -1:
            raise IntegrationError(f"geodesic integration failed: {res.message}", reached_time=float(res.t[-1]))
        t_end = float(res.t[-1])
        pieces.append(_Piece(t, t_end, chart, res.sol))
        y = res.y[:, -1]
        if res.status == 1 and t_end < tau:
            switches += 1
            if switches > cfg.max_chart_switches:
                raise IntegrationError("too many chart switches", reached_time=t_end)
            new = m.other_chart(chart)
            xs = y[:n]
            J = m.transition_jacobian(xs, chart, new)
            parts = [m.transition(xs, chart, new)] + [J @ y[n * (k + 1) : n * (k + 2)] for k in range(1 + n_vec)]
            y = np.concatenate(parts)
            chart = new
            t = t_end
            continue
        break
    if not pieces:
        pieces.append(_Piece(0.0, 0.0, chart, None))
    return pieces, y, chart


@dataclass(eq=False)
class GeodesicSegment:
    """Dense-output solution of the geodesic equation on ``[0, duration]``."""

    model: ManifoldModel
    start: ChartPoint
    initial_velocity: TangentVec
    duration: float
    pieces: list = field(repr=False)
    end_state: np.ndarray = field(repr=False)
    end_chart: int = 0
    ode: ODEConfig = field(default=DEFAULT_ODE, repr=False)

    def __call__(self, t):
        """Return ``(point, velocity)`` at time ``t``."""
        if t < -1e-15 or t > self.duration * (1 + 1e-12) + 1e-15:
            raise DomainError(f"time {t} outside [0, {self.duration}]")
        n = self.model.dim
        if self.duration == 0 or self.pieces[0].sol is None:
            return self.start, self.initial_velocity
        for pc in self.pieces:
            if t <= pc.t1 or pc is self.pieces[-1]:
                y = pc.sol(min(max(t, pc.t0), pc.t1))
                x = ChartPoint(y[:n], pc.chart_id)
                return x, TangentVec(x, y[n : 2 * n])
        raise AssertionError("unreachable")

    @property
    def end(self):
        n = self.model.dim
        x = ChartPoint(self.end_state[:n], self.end_chart)
        return x, TangentVec(x, self.end_state[n : 2 * n])

    def speed(self, t):
        x, v = self(t)
        return np.sqrt(riemann_inner(self.model, x, v, v))

    def residual(self, t, h=1e-4):
        """Geodesic-equation residual |x'' + Γ(x', x')| from dense output differences."""
        n = self.model.dim
        t0 = min(max(t, h), self.duration - h)
        (xm, _), (x0, v0), (xp, _) = self(t0 - h), self(t0), self(t0 + h)
        charts = {xm.chart_id, x0.chart_id, xp.chart_id}
        if len(charts) > 1:
            return 0.0
        acc = (xp.coords - 2 * x0.coords + xm.coords) / h**2
        G = self.model.christoffel(x0.coords, x0.chart_id)
        return float(np.linalg.norm(acc + np.einsum("kij,i,j->k", G, v0.components, v0.components)))


def _check_base(m, x, v):
    m.check_point(x)
    if v.base.chart_id != x.chart_id or not np.allclose(v.base.coords, x.coords, rtol=0, atol=1e-12):
        raise UsageError("velocity is not based at the start point")


def geodesic_shoot(m: ManifoldModel, x: ChartPoint, v: TangentVec, tau: float, ode: ODEConfig = DEFAULT_ODE):
    """Solve the geodesic equation from ``(x, v)`` for time ``tau``.

    A zero initial velocity gives the constant path.
    """
    if tau < 0:
        raise DomainError("duration must be non-negative")
    _check_base(m, x, v)
    if tau == 0 or not np.any(v.components):
        state = np.concatenate([x.coords, np.zeros(m.dim)])
        return GeodesicSegment(m, x, v, float(tau), [_Piece(0.0, float(tau), x.chart_id, _Const(state))], state, x.chart_id, ode)
    pieces, y, chart = _integrate(m, x, v.components, [], float(tau), ode)
    return GeodesicSegment(m, x, v, float(tau), pieces, y, chart, ode)


class _Const:
    def __init__(self, y):
        self.y = y

    def __call__(self, t):
        return self.y


def parallel_transport(m: ManifoldModel, seg: GeodesicSegment, w, ode: ODEConfig | None = None):
    """Parallel-transport tangent vector(s) at ``seg.start`` to the segment end.

    ``w`` may be a single :class:`TangentVec` or a list of them; the geodesic
    and the vectors are integrated jointly so the transported vectors are
    expressed in the chart where the segment ends.
    """
    ode = ode or seg.ode
    single = isinstance(w, TangentVec)
    ws = [w] if single else list(w)
    for wk in ws:
        if wk.base.chart_id != seg.start.chart_id or not np.allclose(wk.base.coords, seg.start.coords, rtol=0, atol=1e-12):
            raise UsageError("vector is not based at the segment start")
    if seg.duration == 0 or not np.any(seg.initial_velocity.components):
        x_end = seg.start
        out = [TangentVec(x_end, wk.components) for wk in ws]
        return out[0] if single else out
    pieces, y, chart = _integrate(
        m, seg.start, seg.initial_velocity.components, [wk.components for wk in ws], seg.duration, ode
    )
    n = m.dim
    x_end = ChartPoint(y[:n], chart)
    comps = [y[n * (k + 2) : n * (k + 3)] for k in range(len(ws))]
    if chart != seg.end_chart:
        J = m.transition_jacobian(x_end.coords, chart, seg.end_chart)
        x_end = ChartPoint(m.transition(x_end.coords, chart, seg.end_chart), seg.end_chart)
        comps = [J @ c for c in comps]
    out = [TangentVec(x_end, c) for c in comps]
    return out[0] if single else out


def transport_along_path(m: ManifoldModel, path, w: TangentVec, t0: float, t1: float) -> TangentVec:
    """Parallel translation along a piecewise geodesic path from ``t0`` to ``t1``.

    ``w`` is given in chart components at ``path(t0)``; the result is in the
    preferred chart of ``path(t1)``.  Segments are composed at the knots.
    """
    T = path.partition.T
    if not (0 <= t0 <= t1 <= T * (1 + 1e-12)):
        raise DomainError(f"need 0 <= t0 <= t1 <= {T}, got {t0}, {t1}")
    p0 = path.point_at(t0)
    if not np.allclose(m.to_ambient(w.base.coords, w.base.chart_id), p0, rtol=0, atol=1e-8):
        raise UsageError("vector is not based at path(t0)")
    amb = m.embed_jacobian(w.base.coords, w.base.chart_id) @ w.components
    vec = path.transport_ambient(amb[:, None], t0, t1)[:, 0]
    p1 = path.point_at(t1)
    c1, ch1 = m.from_ambient(p1)
    x1 = ChartPoint(c1, ch1)
    return TangentVec(x1, m.chart_tangent(c1, ch1, vec))
