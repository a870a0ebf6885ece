"""Escape dynamics near z = +-infinity in the noncompact regime.

For beta^2 + ecc^2 > 1 the energy surface is unbounded in z.  The chart

    x = (8 / (alpha sqrt(1+2 alpha) z))^{1/2},  y = p_z,
    u = varpi/r - 1/varpi,                      v = p_r,

with the rescaled time dt/dtau = K = 16/(alpha sqrt(1+2 alpha)) compactifies
z = +infinity into the invariant set {x = 0}, which carries the sphere
y^2 + u^2 + v^2 = rho_inf^2, rho_inf^2 = (1 - 2 varpi^2)/varpi^2, and its
equatorial periodic orbit {y = x = 0}.  The equator has degenerate stable
and unstable manifolds (graphs y = +-x + O(x^2) over each (u,v)-ray) which
separate trajectories escaping monotonically to z = +infinity from those
whose vertical velocity reverses.  This module provides the chart, the
vector field, escape classification, the stable-manifold graphs, transit
time/angle profiles exhibiting the twist blow-up near the manifold, and a
budgeted search for brake, parabolic, and brake-parabolic witnesses.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from . import flow
from .flow import State4
from .params import Params, RegimeTag, regime

__all__ = [
    "McGeheeState",
    "Outcome",
    "EscapeClassification",
    "Witness",
    "time_constant",
    "to_mcgehee",
    "to_flow",
    "mcgehee_rhs",
    "energy_residual",
    "infinity_orbit",
    "classify_escape",
    "rho_section_max",
    "stable_radius",
    "stable_manifold_graph",
    "twist_profile",
    "detect_parabolic_and_brake",
]


@dataclass(frozen=True)
class McGeheeState:
    x: float
    y: float
    u: float
    v: float

    def as_array(self):
        return np.array([self.x, self.y, self.u, self.v])

    @classmethod
    def from_array(cls, a):
        return cls(x=float(a[0]), y=float(a[1]), u=float(a[2]), v=float(a[3]))


def time_constant(p: Params) -> float:
    """K = 16 / (alpha sqrt(1 + 2 alpha)): dt = K dtau."""
    return 16.0 / (p.alpha * math.sqrt(1.0 + 2.0 * p.alpha))


def _xz_scale(p: Params) -> float:
    """c^2 with z = c^2 / x^2."""
    return 8.0 / (p.alpha * math.sqrt(1.0 + 2.0 * p.alpha))


def to_mcgehee(p: Params, s: State4) -> McGeheeState:
    if s.z <= 0.0:
        raise ValueError("chart requires z > 0")
    return McGeheeState(
        x=math.sqrt(_xz_scale(p) / s.z),
        y=s.p_z,
        u=p.varpi / s.r - 1.0 / p.varpi,
        v=s.p_r,
    )


def to_flow(p: Params, m: McGeheeState) -> State4:
    if m.x <= 0.0:
        raise ValueError("x must be positive to map back to a finite point")
    return State4(
        p_r=m.v,
        p_z=m.y,
        r=_radius(p, m.u),
        z=_xz_scale(p) / m.x**2,
    )


def _radius(p: Params, u: float) -> float:
    den = 1.0 + u * p.varpi
    if den <= 0.0:
        raise ValueError(f"u={u} outside the chart (1 + u varpi <= 0)")
    return p.varpi**2 / den


def mcgehee_rhs(p: Params, m: McGeheeState) -> np.ndarray:
    """Vector field in the rescaled time tau."""
    return _rhs(p)(0.0, m.as_array())


def _rhs(p: Params):
    K = time_constant(p)
    a = p.alpha
    w = p.varpi
    s2a = math.sqrt(1.0 + 2.0 * a)

    def rhs(tau, st):
        x, y, u, v = st[:4]
        r = w * w / (1.0 + u * w)
        corr = (a * a * r * r * x**4 / 64.0 + 1.0) ** (-1.5)
        out = np.empty(len(st))
        out[0] = -(x**3) * y
        out[1] = -corr * x**4
        out[2] = -w * K * v / (r * r)
        out[3] = w * K * u / (r * r) - corr * a * r * x**6 / (8.0 * s2a)
        if len(st) > 4:
            rho2 = u * u + v * v
            out[4] = (u * out[3] - v * out[2]) / rho2  # d/dtau arg(u + i v)
        return out

    return rhs


def energy_residual(p: Params, m: McGeheeState) -> float:
    """Deviation of the chart energy constraint from the -1 level."""
    r = _radius(p, m.u)
    corr = math.sqrt(p.alpha**2 * r * r * m.x**4 / 64.0 + 1.0)
    return (
        0.5 * (m.y**2 + m.u**2 + m.v**2)
        - 0.5 / p.varpi**2
        - 0.5 * m.x**2 / corr
        + 1.0
    )


def _g_section(p: Params, x: float, rho: float, theta: float) -> float:
    """Constraint function: y^2 - x^2 + rho^2 = g at the section x."""
    r = _radius(p, rho * math.cos(theta))
    corr = math.sqrt(p.alpha**2 * r * r * x**4 / 64.0 + 1.0)
    return (1.0 - 2.0 * p.varpi**2) / p.varpi**2 - x * x * (1.0 - 1.0 / corr)


def infinity_orbit(p: Params) -> float:
    """Radius rho_inf = sqrt(1 - 2 varpi^2)/varpi of the circular orbit on
    the sphere at infinity; defined in the noncompact regime only."""
    if regime(p).tag is not RegimeTag.SUPERCRITICAL:
        raise ValueError("orbit at infinity requires beta^2 + ecc^2 > 1")
    return math.sqrt(1.0 - 2.0 * p.varpi**2) / p.varpi


class Outcome(enum.Enum):
    ESCAPES_UP = "escapes_up"
    ESCAPES_DOWN = "escapes_down"
    RETURNS = "returns"
    UNRESOLVED = "unresolved"


@dataclass(frozen=True)
class EscapeClassification:
    outcome: Outcome
    witness_time: float       # rescaled time of the deciding event


ESCAPE_RATIO = 1.2


def classify_escape(
    p: Params,
    m0: McGeheeState,
    horizon: float | None = None,
    tol: float = 1e-10,
) -> EscapeClassification:
    """Forward classification in the chart.

    The vertical velocity y decreases strictly, so a sign change of y is a
    decisive RETURNS.  Conversely d(y/x)/dtau = x (y^2 - corr x^2) with
    corr <= 1, so the cone {y >= lambda x}, lambda > 1, is forward
    invariant and every trajectory in it escapes to z = +infinity: reaching
    it is a decisive ESCAPES_UP.  Near-manifold initial conditions may
    exhaust the horizon (UNRESOLVED).  The default horizon scales like
    x^-3, the intrinsic time scale of the degenerate equilibrium.
    """
    if horizon is None:
        horizon = 1e4 * max(1.0, (0.05 / m0.x) ** 3)
    lam = ESCAPE_RATIO
    if m0.y >= lam * m0.x > 0.0:
        return EscapeClassification(Outcome.ESCAPES_UP, 0.0)

    def ev_y(tau, st):
        return st[1]

    ev_y.terminal = True
    ev_y.direction = -1

    def ev_cone(tau, st):
        return st[1] - lam * st[0]

    ev_cone.terminal = True
    ev_cone.direction = 1

    sol = solve_ivp(
        _rhs(p), (0.0, horizon), m0.as_array(), method="DOP853",
        rtol=tol, atol=tol * 1e-2, events=[ev_y, ev_cone],
    )
    if not sol.success:
        raise flow.IntegrationError(sol.message)
    if sol.t_events[0].size:
        return EscapeClassification(Outcome.RETURNS, float(sol.t_events[0][0]))
    if sol.t_events[1].size:
        return EscapeClassification(Outcome.ESCAPES_UP, float(sol.t_events[1][0]))
    return EscapeClassification(Outcome.UNRESOLVED, horizon)


# ---------------------------------------------------------------------------
# Stable manifold over the section x = x0
# ---------------------------------------------------------------------------

def rho_section_max(p: Params, x0: float, theta: float) -> float:
    """Outer radius of the section {x = x0}: the y = 0 circle."""
    f = lambda rho: rho * rho - x0 * x0 - _g_section(p, x0, rho, theta)
    hi = infinity_orbit(p) + abs(x0) + 1.0
    return brentq(f, 0.0, hi, xtol=1e-14)


def _state_on_section(p: Params, x0: float, rho: float, theta: float) -> McGeheeState:
    y2 = _g_section(p, x0, rho, theta) + x0 * x0 - rho * rho
    if y2 < -1e-13:
        raise ValueError("radius outside the section")
    y2 = max(y2, 0.0)
    return McGeheeState(
        x=x0, y=math.sqrt(y2), u=rho * math.cos(theta), v=rho * math.sin(theta)
    )


def stable_radius(
    p: Params, x0: float, theta: float, tol: float = 1e-9, horizon: float | None = None
) -> float:
    """Radius rho_s(theta) of the stable circle on the section x = x0.

    Initial conditions with rho below it escape to z = +infinity, those
    above it return; located by bisection in rho.  Near the manifold the
    deciding time grows without bound (the equilibrium at infinity is
    degenerate), so the refinement stops early, at the width resolvable
    within the horizon, when a midpoint stays unresolved.
    """
    rho_max = rho_section_max(p, x0, theta)
    lo, hi = 1e-6 * rho_max, rho_max * (1.0 - 1e-12)

    def outcome(rho: float) -> Outcome:
        return classify_escape(p, _state_on_section(p, x0, rho, theta),
                               horizon=horizon).outcome

    if outcome(lo) is not Outcome.ESCAPES_UP or outcome(hi) is not Outcome.RETURNS:
        raise RuntimeError("stable circle not bracketed on the section")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        o = outcome(mid)
        if o is Outcome.UNRESOLVED:
            break
        if o is Outcome.ESCAPES_UP:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def stable_manifold_graph(
    p: Params, theta: float, x_grid, tol: float = 1e-9, horizon: float | None = None
) -> list[tuple[float, float]]:
    """Sample the stable-manifold graph y = y_s(x) over the ray at angle
    theta: for each x0 the boundary value of y0 between escape (above) and
    return (below), found by bisection in y0 within (0, 2 x0]."""
    out = []
    for x0 in x_grid:
        lo, hi = 0.0, 2.0 * x0

        def outcome(y0: float) -> Outcome:
            rho = _rho_from_y(p, x0, y0, theta)
            m0 = McGeheeState(x=x0, y=y0, u=rho * math.cos(theta), v=rho * math.sin(theta))
            return classify_escape(p, m0, horizon=horizon).outcome

        if outcome(hi) is not Outcome.ESCAPES_UP:
            raise RuntimeError(f"upper classification failed at x0={x0}")
        while hi - lo > tol * max(1.0, x0):
            mid = 0.5 * (lo + hi)
            o = outcome(mid)
            if o is Outcome.UNRESOLVED:
                break
            if o is Outcome.ESCAPES_UP:
                hi = mid
            else:
                lo = mid
        out.append((float(x0), 0.5 * (lo + hi)))
    return out


def _rho_from_y(p: Params, x: float, y: float, theta: float) -> float:
    f = lambda rho: rho * rho - (_g_section(p, x, rho, theta) + x * x - y * y)
    hi = infinity_orbit(p) + abs(x) + 1.0
    return brentq(f, 0.0, hi, xtol=1e-14)


# ---------------------------------------------------------------------------
# Twist profile near the stable circle
# ---------------------------------------------------------------------------

def check_twist_region(p: Params, x0: float) -> None:
    """The angular rate on the section must be dominated by varpi K / r^2;
    refuse x0 outside the smallness region."""
    if x0 > 0.1 * min(1.0, infinity_orbit(p)):
        raise ValueError(f"x0={x0} too large for the twist estimates")
    r_max = p.varpi**2 / (1.0 - infinity_orbit(p) * p.varpi)
    drive = p.varpi * time_constant(p) / r_max**2
    tail = p.alpha * r_max * x0**6 / (8.0 * math.sqrt(1.0 + 2.0 * p.alpha))
    tail /= 0.5 * infinity_orbit(p)
    if tail > 0.1 * drive:
        raise ValueError("higher-order angular terms not negligible at this x0")


def twist_profile(
    p: Params,
    x0: float,
    theta0: float,
    rho_grid,
    tol: float = 1e-10,
    horizon: float = 1e6,
) -> list[tuple[float, float, float]]:
    """Transit data from {x = x0, y > 0} to {x = x0, y < 0}.

    For each starting radius rho0 the trajectory dips toward the sphere at
    infinity and comes back; returns (rho0, T, Theta) with the transit time
    and the continuous angular advance of (u, v).  Theta grows without
    bound as rho0 approaches the stable radius from above.
    """
    check_twist_region(p, x0)
    out = []
    for rho0 in rho_grid:
        m0 = _state_on_section(p, x0, rho0, theta0)
        st0 = np.append(m0.as_array(), theta0)

        def ev_back(tau, st):
            return st[0] - x0

        ev_back.terminal = True
        ev_back.direction = 1

        sol = solve_ivp(
            _rhs(p), (0.0, horizon), st0, method="DOP853",
            rtol=tol, atol=tol * 1e-2, events=[ev_back],
        )
        if not sol.success:
            raise flow.IntegrationError(sol.message)
        if not sol.t_events[0].size:
            out.append((float(rho0), math.inf, math.inf))
            continue
        T = float(sol.t_events[0][0])
        theta_end = float(sol.y_events[0][0][4])
        out.append((float(rho0), T, theta_end - theta0))
    return out


# ---------------------------------------------------------------------------
# Brake / parabolic witness catalog
# ---------------------------------------------------------------------------

@dataclass
class Witness:
    kind: str                   # brake | parabolic | brake_parabolic
    state: State4               # representative point on {z = 0}
    residual: float
    witness_time: float
    validated: bool
    note: str = ""

    def to_json(self) -> str:
        s = self.state
        return json.dumps(
            {
                "kind": self.kind,
                "state": [s.p_r, s.p_z, s.r, s.z],
                "residual": self.residual,
                "witness_time": self.witness_time,
                "validated": self.validated,
                "note": self.note,
            }
        )


def _hill_boundary_arcs(p: Params):
    """Radial intervals of the Hill boundary arcs in z > 0.

    The boundary height diverges at r*_± = (1 ± sqrt(1-2 varpi^2))/2, so in
    the noncompact regime the z > 0 boundary splits into a graph over
    (r_-, r*_-) and one over (r*_+, r_+)."""
    r_minus, r_plus = flow.hill_radii(p)
    d = math.sqrt(1.0 - 2.0 * p.varpi**2)
    return (r_minus, 0.5 * (1.0 - d)), (0.5 * (1.0 + d), r_plus)


def _boundary_height(p: Params, r: float) -> float:
    g = lambda z: flow.potential(p, r, z) + 1.0
    if g(0.0) > 0.0:
        raise ValueError("radius outside the Hill region at z=0")
    hi = 1.0
    while g(hi) < 0.0:
        hi *= 2.0
        if hi > 1e8:
            raise ValueError("boundary height diverges")
    return brentq(g, 0.0, hi, xtol=1e-14)


def _fall_to_plane(p: Params, r: float, z0: float, tol: float = 1e-11):
    """Flow the momentum-free boundary state (0, 0, r, z0) forward to its
    first crossing of {z = 0}; returns (state at crossing, time)."""
    def ev(t, y):
        return y[3]

    ev.terminal = True
    ev.direction = -1
    r_guard = flow.COLLISION_FRACTION * flow.hill_radii(p)[0]

    def guard(t, y):
        return y[2] - r_guard

    guard.terminal = True
    guard.direction = -1
    sol = solve_ivp(
        lambda t, y: flow._rhs(p, y), (0.0, 1e5), [0.0, 0.0, r, z0],
        method="DOP853", rtol=tol, atol=tol * 1e-2, events=[ev, guard],
    )
    if not sol.success or not sol.t_events[0].size:
        raise flow.IntegrationError("no plane crossing")
    y = sol.y_events[0][0]
    return State4.from_array(y), float(sol.t_events[0][0])


def _classify_from_plane(p: Params, s: State4, z_switch: float = 10.0,
                         horizon: float = 1e4, tol: float = 1e-10) -> EscapeClassification:
    """Classify the forward fate of a plane state heading to z < 0.

    Uses the z -> -z mirror to reuse the upward chart: the outcome is
    ESCAPES_DOWN when the mirrored trajectory escapes upward."""
    sm = flow.z_symmetry(s)  # now p_z > 0, moving into z > 0

    def ev_pz(t, y):
        return y[1]

    ev_pz.terminal = True
    ev_pz.direction = -1

    def ev_far(t, y):
        return y[3] - z_switch

    ev_far.terminal = True
    ev_far.direction = 1
    sol = solve_ivp(
        lambda t, y: flow._rhs(p, y), (0.0, 1e5), list(sm.as_array()),
        method="DOP853", rtol=tol, atol=tol * 1e-2, events=[ev_pz, ev_far],
    )
    if not sol.success:
        raise flow.IntegrationError(sol.message)
    if sol.t_events[0].size:
        return EscapeClassification(Outcome.RETURNS, float(sol.t_events[0][0]))
    if not sol.t_events[1].size:
        return EscapeClassification(Outcome.UNRESOLVED, horizon)
    far = State4.from_array(sol.y_events[1][0])
    sub = classify_escape(p, to_mcgehee(p, far), horizon=horizon, tol=tol)
    if sub.outcome is Outcome.ESCAPES_UP:
        return EscapeClassification(Outcome.ESCAPES_DOWN, sub.witness_time)
    return sub


def _stable_circle_on_plane(p: Params, x0: float, thetas, tol: float = 1e-9):
    """Backward-flow the stable circle of the section x = x0 to {z = 0};
    yields (theta, plane state, backward time)."""
    out = []
    for th in thetas:
        rho = stable_radius(p, x0, th, tol=tol)
        m0 = _state_on_section(p, x0, rho, th)
        s0 = to_flow(p, m0)
        sol = solve_ivp(
            lambda t, y: -flow._rhs(p, y), (0.0, 1e5), list(s0.as_array()),
            method="DOP853", rtol=1e-11, atol=1e-13, events=[_plane_event()],
        )
        if not sol.success or not sol.t_events[0].size:
            continue
        out.append((th, State4.from_array(sol.y_events[0][0]), float(sol.t_events[0][0])))
    return out


def _plane_event():
    def ev(t, y):
        return y[3]

    ev.terminal = True
    ev.direction = -1
    return ev


def validate_escape_asymptotics(p: Params, s: State4, span: float = 200.0,
                                tol: float = 1e-10) -> bool:
    """Check that |z| increases monotonically with no vertical-velocity sign
    change along a long forward stretch (the escape-side validation)."""
    sgn = 1.0 if s.p_z >= 0.0 else -1.0
    sol = solve_ivp(lambda t, y: flow._rhs(p, y), (0.0, span), list(s.as_array()),
                    method="DOP853", rtol=tol, atol=tol * 1e-2,
                    t_eval=np.linspace(0.0, span, 200))
    if not sol.success:
        return False
    z = sgn * sol.y[3]
    pz = sgn * sol.y[1]
    return bool(np.all(np.diff(z) > 0.0) and np.all(pz > 0.0))


def detect_parabolic_and_brake(
    p: Params,
    x0: float | None = None,
    arc_samples: int = 60,
    circle_samples: int = 48,
    z_cap: float = 40.0,
    tol: float = 1e-8,
    brake_tol: float = 1e-6,
    do_brake: bool = True,
    do_parabolic: bool = True,
) -> list[Witness]:
    """Budgeted witness catalog for the noncompact regime.

    Traces (a) the first-hit image on {z = 0} of the upper Hill-boundary
    arcs and (b) the backward image of the stable circle of the section
    {x = x0}.  Sign changes of p_r along (a) give z-symmetric brake orbits;
    escape/return transitions of the continued trajectories of (a) give
    brake-parabolic witnesses; p_r sign changes along (b) give doubly
    parabolic witnesses (they are reversor-symmetric, hence backward
    parabolic as well).  The catalog may be partial; every witness carries
    a residual and a validation flag.
    """
    if regime(p).tag is not RegimeTag.SUPERCRITICAL:
        raise ValueError("witness search applies to the noncompact regime")
    if x0 is None:
        x0 = 0.1 * min(1.0, infinity_orbit(p))
    witnesses: list[Witness] = []

    # --- brake curve from the Hill-boundary arcs ------------------------
    for (ra, rb) in _hill_boundary_arcs(p) if do_brake else ():
        rs = np.linspace(ra, rb, arc_samples + 2)[1:-1]
        rows = []
        for r in rs:
            try:
                zb = _boundary_height(p, float(r))
            except ValueError:
                continue
            if zb > z_cap:
                continue
            try:
                s_cross, t_cross = _fall_to_plane(p, float(r), zb)
            except flow.IntegrationError:
                continue
            rows.append((float(r), s_cross, t_cross))
        # z-symmetric brake orbits: p_r = 0 on the curve
        for (r1, s1, t1), (r2, s2, t2) in zip(rows, rows[1:]):
            if s1.p_r == 0.0 or s1.p_r * s2.p_r >= 0.0:
                continue
            f = lambda r: _fall_to_plane(p, float(r), _boundary_height(p, float(r)))[0].p_r
            try:
                root = brentq(f, r1, r2, xtol=1e-13)
            except (ValueError, flow.IntegrationError):
                continue
            s_w, t_w = _fall_to_plane(p, float(root), _boundary_height(p, float(root)))
            if abs(s_w.p_r) <= brake_tol:
                witnesses.append(Witness(
                    kind="brake", state=s_w, residual=abs(s_w.p_r),
                    witness_time=t_w, validated=True,
                    note=f"boundary radius {root:.12g}",
                ))
        # brake-parabolic: escape/return transition of the continued fall
        outcomes = []
        for (r, s_cross, t_cross) in rows:
            try:
                c = _classify_from_plane(p, s_cross)
            except (flow.IntegrationError, ValueError):
                outcomes.append((r, None))
                continue
            outcomes.append((r, c.outcome))
        for (r1, o1), (r2, o2) in zip(outcomes, outcomes[1:]):
            if o1 is None or o2 is None or o1 is o2:
                continue
            if {o1, o2} != {Outcome.ESCAPES_DOWN, Outcome.RETURNS}:
                continue
            lo, hi = r1, r2
            o_lo = o1
            while hi - lo > tol:
                mid = 0.5 * (lo + hi)
                try:
                    s_mid, _ = _fall_to_plane(p, mid, _boundary_height(p, mid))
                    om = _classify_from_plane(p, s_mid).outcome
                except (flow.IntegrationError, ValueError):
                    break
                if om is o_lo:
                    lo = mid
                else:
                    hi = mid
            rw = 0.5 * (lo + hi)
            try:
                s_w, t_w = _fall_to_plane(p, rw, _boundary_height(p, rw))
                witnesses.append(Witness(
                    kind="brake_parabolic", state=s_w, residual=hi - lo,
                    witness_time=t_w, validated=hi - lo <= tol,
                    note=f"boundary radius {rw:.12g}",
                ))
            except (flow.IntegrationError, ValueError):
                pass

    # --- doubly parabolic witnesses from the stable circle --------------
    if not do_parabolic:
        return witnesses
    thetas = np.linspace(0.0, 2.0 * math.pi, circle_samples, endpoint=False)
    circle = _stable_circle_on_plane(p, x0, thetas)
    for (th1, s1, t1), (th2, s2, t2) in zip(circle, circle[1:] + circle[:1]):
        dth = (th2 - th1) % (2.0 * math.pi)
        if dth > 4.0 * math.pi / circle_samples + 1e-9:
            continue  # gap in the traced circle
        if s1.p_r == 0.0 or s1.p_r * s2.p_r >= 0.0:
            continue

        def f(th):
            rho = stable_radius(p, x0, float(th), tol=1e-10)
            sseg = _stable_circle_on_plane(p, x0, [float(th)])
            return seg[0][1].p_r if seg else math.nan

        try:
            root = brentq(f, th1, th1 + dth, xtol=1e-10)
        except (ValueError, flow.IntegrationError):
            continue
        seg = _stable_circle_on_plane(p, x0, [float(root)])
        if not seg:
            continue
        s_w = seg[0][1]
        ok = validate_escape_asymptotics(p, s_w)
        witnesses.append(Witness(
            kind="parabolic", state=s_w, residual=abs(s_w.p_r),
            witness_time=seg[0][2], validated=ok,
            note=f"stable-circle angle {root:.10g}",
        ))
    return witnesses
