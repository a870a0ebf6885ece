"""Disk return map of the open book, winding and linking invariants.

On a compact energy surface the pages

    Sigma_s = {arg(p_z + i z) = 2 pi s},   s in R/Z,

are disks bounded by the collinear orbit, all projecting onto the same
planar disk

    Upsilon = {(p_r, r) : p_r^2/2 + varpi^2/(2 r^2) - 1/(beta r) <= -1}.

The phase arg(p_z + i z) advances strictly monotonically along the flow, so
it serves as the independent variable: first-hitting maps between pages are
computed by integrating the flow reparametrized by the page phase, which
lands on the target page exactly and needs no event detection.  Return
time, return action (the loop integral of p dq), mean relative winding
numbers of point pairs, periodic points of the return map, and linking
numbers of the corresponding orbits are all built on this.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from . import flow
from .flow import State4
from .params import Params, RegimeTag, regime

__all__ = [
    "DiskPoint",
    "OrbitRecord",
    "WindingEstimate",
    "disk_defect",
    "boundary_distance",
    "in_disk",
    "lift_to_page",
    "hit_map",
    "return_map",
    "return_map_jacobian",
    "mean_winding",
    "winding_exact",
    "find_periodic_points",
    "linking_number",
    "pairing",
    "twist_realization",
    "disk_integral",
]

# Pairs closer to the boundary than this are evolved from a point projected
# inward to this depth; the result is flagged as extrapolated.
BOUNDARY_DEPTH = 1e-4


@dataclass(frozen=True)
class DiskPoint:
    p_r: float
    r: float

    def as_array(self):
        return np.array([self.p_r, self.r])


def disk_defect(p: Params, x: DiskPoint) -> float:
    """-1 - (planar energy); positive inside Upsilon, zero on the boundary."""
    return -1.0 - (0.5 * x.p_r**2 + p.varpi**2 / (2.0 * x.r**2) - 1.0 / (p.beta * x.r))


def boundary_distance(p: Params, x: DiskPoint) -> float:
    """First-order Euclidean distance from x to the boundary of Upsilon."""
    c = disk_defect(p, x)
    gr = -p.varpi**2 / x.r**3 + 1.0 / (p.beta * x.r**2)
    grad = math.hypot(x.p_r, gr)
    return c / grad if grad > 0.0 else c


def in_disk(p: Params, x: DiskPoint, tol: float = 1e-12) -> bool:
    return disk_defect(p, x) >= -tol


def _project_inward(p: Params, x: DiskPoint, depth: float) -> DiskPoint:
    """Move x along the inward defect gradient until its boundary distance
    reaches ``depth``; used for boundary and near-boundary inputs."""
    cur = boundary_distance(p, x)
    if cur >= depth:
        return x
    gr = -p.varpi**2 / x.r**3 + 1.0 / (p.beta * x.r**2)
    g = np.array([x.p_r, gr])
    n = np.linalg.norm(g)
    y = x.as_array() - (depth - cur) * g / n if n > 0 else x.as_array()
    return DiskPoint(p_r=float(y[0]), r=float(y[1]))


# ---------------------------------------------------------------------------
# Page lifts and phase-parametrized flow
# ---------------------------------------------------------------------------

def lift_to_page(p: Params, x: DiskPoint, s: float) -> State4:
    """Lift a disk point to the page Sigma_s.

    Sets (p_z, z) = rho (cos 2 pi s, sin 2 pi s) with the radius rho > 0
    solved from the energy constraint H = -1 (the constraint is strictly
    increasing in rho).
    """
    c = disk_defect(p, x)
    if c < 0.0:
        raise ValueError(f"point {x} outside the disk (defect {c})")
    cs, sn = math.cos(2.0 * math.pi * s), math.sin(2.0 * math.pi * s)

    def h(rho: float) -> float:
        st = State4(p_r=x.p_r, p_z=rho * cs, r=x.r, z=rho * sn)
        return flow.hamiltonian(p, st) + 1.0

    if c == 0.0:
        return State4(p_r=x.p_r, p_z=0.0, r=x.r, z=0.0)
    hi = math.sqrt(2.0 * c) + 1e-9
    while h(hi) < 0.0:
        hi *= 2.0
    rho = brentq(h, 0.0, hi, xtol=1e-15)
    return State4(p_r=x.p_r, p_z=rho * cs, r=x.r, z=rho * sn)


def _phase_rhs(p: Params):
    """Right-hand side of the flow reparametrized by the page phase s.

    State layout per tracked point: (p_r, p_z, r, z, t, action); the phase
    rate d(theta)/dt = (p_z^2 + g z^2)/(p_z^2 + z^2) is strictly positive.
    """
    opa = 1.0 + 2.0 * p.alpha
    w2 = p.varpi**2

    def rhs_point(y):
        p_r, p_z, r, z = y[:4]
        d2 = r * r + opa * z * z
        d3 = d2 * math.sqrt(d2)
        f = 4.0 / (p.alpha * d3)
        rho2 = p_z * p_z + z * z
        theta_dot = (p_z * p_z + f * opa * z * z) / rho2
        scale = 2.0 * math.pi / theta_dot
        return np.array(
            [
                (w2 / r**3 - 1.0 / r**2 - f * r) * scale,
                -f * opa * z * scale,
                p_r * scale,
                p_z * scale,
                scale,
                (p_r * p_r + p_z * p_z) * scale,
            ]
        )

    return rhs_point


def _integrate_phase(p: Params, y0, s_span, tol, t_eval=None, n_points: int = 1):
    """Integrate one or several points of the phase-parametrized flow."""
    rhs_point = _phase_rhs(p)

    def rhs_full(s, y):
        out = np.empty_like(y)
        for i in range(n_points):
            out[6 * i: 6 * (i + 1)] = rhs_point(y[6 * i: 6 * (i + 1)])
        return out

    sol = solve_ivp(
        rhs_full,
        s_span,
        y0,
        method="DOP853",
        rtol=tol,
        atol=tol * 1e-2,
        dense_output=t_eval is None,
        t_eval=t_eval,
    )
    if not sol.success:
        raise flow.IntegrationError(sol.message)
    return sol


def hit_map(
    p: Params, x: DiskPoint, s1: float, s2: float, tol: float = 1e-11
) -> tuple[DiskPoint, float, float]:
    """First-hitting map from page s1 to page s2 in disk coordinates.

    Returns (image point, transit time, transit action) where the action is
    the integral of p_r dr + p_z dz along the connecting arc.
    """
    if regime(p).tag is not RegimeTag.SUBCRITICAL:
        raise ValueError("hitting maps between pages require a compact surface")
    if s2 < s1:
        raise ValueError("s2 must be >= s1")
    if s2 == s1:
        return x, 0.0, 0.0
    x = _project_inward(p, x, BOUNDARY_DEPTH * 1e-3)
    st = lift_to_page(p, x, s1)
    y0 = np.array([st.p_r, st.p_z, st.r, st.z, 0.0, 0.0])
    sol = _integrate_phase(p, y0, (s1, s2), tol, t_eval=[s2])
    y = sol.y[:, -1]
    return DiskPoint(p_r=float(y[0]), r=float(y[2])), float(y[4]), float(y[5])


def return_map(p: Params, x: DiskPoint, tol: float = 1e-11) -> tuple[DiskPoint, float]:
    """First-return map of the disk and the return action."""
    img, _, act = hit_map(p, x, 0.0, 1.0, tol=tol)
    return img, act


def _return_k(p: Params, x: DiskPoint, k: int, tol: float) -> np.ndarray:
    """Images of x under 1..k returns; shape (k, 2)."""
    st = lift_to_page(p, x, 0.0)
    y0 = np.array([st.p_r, st.p_z, st.r, st.z, 0.0, 0.0])
    sol = _integrate_phase(p, y0, (0.0, float(k)), tol, t_eval=np.arange(1, k + 1, dtype=float))
    return np.column_stack([sol.y[0], sol.y[2]])


def return_map_jacobian(p: Params, x: DiskPoint, h: float = 1e-6, tol: float = 1e-12) -> np.ndarray:
    """Central-difference Jacobian of the return map at x."""
    J = np.empty((2, 2))
    for j, dv in enumerate([(h, 0.0), (0.0, h)]):
        xp = DiskPoint(p_r=x.p_r + dv[0], r=x.r + dv[1])
        xm = DiskPoint(p_r=x.p_r - dv[0], r=x.r - dv[1])
        yp, _ = return_map(p, xp, tol=tol)
        ym, _ = return_map(p, xm, tol=tol)
        J[0, j] = (yp.p_r - ym.p_r) / (2.0 * h)
        J[1, j] = (yp.r - ym.r) / (2.0 * h)
    return J


# ---------------------------------------------------------------------------
# Mean relative winding numbers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WindingEstimate:
    value: float
    n_used: int
    convergence_gap: float
    boundary_extrapolated: bool = False


def _pair_rhs(p: Params):
    rhs_point = _phase_rhs(p)

    def rhs(s, y):
        d1 = rhs_point(y[0:6])
        d2 = rhs_point(y[6:12])
        wx = y[0] - y[6]
        wy = y[2] - y[8]
        dwx = d1[0] - d2[0]
        dwy = d1[2] - d2[2]
        dang = (wx * dwy - wy * dwx) / (wx * wx + wy * wy)
        return np.concatenate([d1, d2, [dang]])

    return rhs


def _relative_angle_run(p: Params, x1: DiskPoint, x2: DiskPoint, n: int, tol: float,
                        checkpoints=None):
    """Continuous relative angle of the pair after n returns.

    Returns the angle increments (radians) at the requested integer
    checkpoints (default: only at n).
    """
    st1 = lift_to_page(p, x1, 0.0)
    st2 = lift_to_page(p, x2, 0.0)
    y0 = np.array([
        st1.p_r, st1.p_z, st1.r, st1.z, 0.0, 0.0,
        st2.p_r, st2.p_z, st2.r, st2.z, 0.0, 0.0,
        0.0,
    ])
    if checkpoints is None:
        checkpoints = [float(n)]
    sol = solve_ivp(
        _pair_rhs(p),
        (0.0, float(n)),
        y0,
        method="DOP853",
        rtol=tol,
        atol=tol * 1e-2,
        t_eval=checkpoints,
    )
    if not sol.success:
        raise flow.IntegrationError(sol.message)
    return sol.y[12]


def mean_winding(
    p: Params, x1: DiskPoint, x2: DiskPoint, n_max: int = 64, tol: float = 1e-10
) -> WindingEstimate:
    """Mean relative winding number of an (ordered) point pair.

    Estimated as the relative-angle increment per return over n_max returns,
    with the gap to the half-length estimate reported.  Points within
    BOUNDARY_DEPTH of the boundary (where the lift degenerates) are first
    projected inward to that depth and the estimate is flagged.
    """
    if math.hypot(x1.p_r - x2.p_r, x1.r - x2.r) < 1e-9:
        raise ValueError("winding undefined: points collide")
    extrap = False
    pts = []
    for x in (x1, x2):
        if boundary_distance(p, x) < BOUNDARY_DEPTH:
            pts.append(_project_inward(p, x, BOUNDARY_DEPTH))
            extrap = True
        else:
            pts.append(x)
    half = max(1, n_max // 2)
    angles = _relative_angle_run(p, pts[0], pts[1], n_max, tol,
                                 checkpoints=[float(half), float(n_max)])
    est = angles[-1] / (2.0 * math.pi * n_max)
    est_half = angles[0] / (2.0 * math.pi * half)
    return WindingEstimate(
        value=float(est),
        n_used=n_max,
        convergence_gap=abs(float(est - est_half)),
        boundary_extrapolated=extrap,
    )


def winding_exact(p: Params, x1: DiskPoint, x2: DiskPoint, period: int,
                  tol: float = 1e-10) -> tuple[float, float]:
    """Winding number of a pair of periodic points with common period.

    After ``period`` returns the difference vector recurs, so the angle
    increment is an exact multiple of 2 pi; returns (m/period, residual)
    where m is the nearest integer and the residual measures integrality.
    """
    ang = float(_relative_angle_run(p, x1, x2, period, tol)[-1])
    turns = ang / (2.0 * math.pi)
    m = round(turns)
    return m / period, abs(turns - m)


# ---------------------------------------------------------------------------
# Periodic points
# ---------------------------------------------------------------------------

@dataclass
class OrbitRecord:
    points: list[DiskPoint]
    k: int                      # prime period = linking number with the binding orbit
    action: float               # total return action over the k steps
    residual: float
    symmetric: bool = False

    def to_json(self) -> str:
        return json.dumps(
            {
                "k": self.k,
                "points": [[q.p_r, q.r] for q in self.points],
                "action": self.action,
                "residual": self.residual,
                "symmetric": self.symmetric,
            }
        )


def _orbit_from_point(p: Params, x: DiskPoint, k: int, tol: float) -> OrbitRecord | None:
    """Assemble an orbit record from a k-periodic point, reducing to the
    prime period and accumulating the action along the cycle."""
    st = lift_to_page(p, x, 0.0)
    y0 = np.array([st.p_r, st.p_z, st.r, st.z, 0.0, 0.0])
    sol = _integrate_phase(p, y0, (0.0, float(k)), tol,
                           t_eval=np.arange(1, k + 1, dtype=float))
    pts = np.column_stack([sol.y[0], sol.y[2]])
    residual = float(np.hypot(pts[-1, 0] - x.p_r, pts[-1, 1] - x.r))
    cycle = [x.as_array()] + [pts[i] for i in range(k - 1)]
    prime = k
    for d in range(1, k):
        if k % d == 0 and np.hypot(*(pts[d - 1] - x.as_array())) < 1e-7:
            prime = d
            break
    actions = np.diff(np.concatenate([[0.0], sol.y[5]]))
    action = float(np.sum(actions[:prime]))
    points = [DiskPoint(p_r=float(c[0]), r=float(c[1])) for c in cycle[:prime]]
    if any(not in_disk(p, q, tol=1e-9) for q in points):
        return None
    return OrbitRecord(points=points, k=prime, action=action, residual=residual)


def _newton_periodic(p: Params, seed: DiskPoint, k: int, tol: float,
                     max_iter: int = 14) -> DiskPoint | None:
    x = seed.as_array()
    fd = 1e-6

    def G(v):
        img = _return_k(p, DiskPoint(*v), k, tol=1e-11)[-1]
        return img - v

    try:
        g = G(x)
    except (flow.IntegrationError, ValueError):
        return None
    for _ in range(max_iter):
        if np.linalg.norm(g) < tol:
            return DiskPoint(p_r=float(x[0]), r=float(x[1]))
        J = np.empty((2, 2))
        try:
            for j in range(2):
                e = np.zeros(2)
                e[j] = fd
                J[:, j] = (G(x + e) - G(x - e)) / (2.0 * fd)
            step = np.linalg.solve(J, -g)
        except (np.linalg.LinAlgError, flow.IntegrationError, ValueError):
            return None
        lam = 1.0
        while lam > 1e-3:
            xn = x + lam * step
            if in_disk(p, DiskPoint(*xn), tol=-1e-9) and boundary_distance(
                    p, DiskPoint(*xn)) > BOUNDARY_DEPTH:
                try:
                    gn = G(xn)
                except (flow.IntegrationError, ValueError):
                    gn = None
                if gn is not None and np.linalg.norm(gn) < np.linalg.norm(g):
                    x, g = xn, gn
                    break
            lam *= 0.5
        else:
            return None
    return None


def _dedup(p: Params, records: list[OrbitRecord]) -> list[OrbitRecord]:
    out: list[OrbitRecord] = []
    for rec in records:
        dup = False
        for kept in out:
            if kept.k != rec.k:
                continue
            a = np.array([[q.p_r, q.r] for q in rec.points])
            b = np.array([[q.p_r, q.r] for q in kept.points])
            d = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1))
            if max(d.min(axis=0).max(), d.min(axis=1).max()) < 1e-5:
                dup = True
                break
        if not dup:
            out.append(rec)
    return out


def find_periodic_points(
    p: Params,
    k: int,
    seed_grid: int = 6,
    tol: float = 1e-10,
    symmetric_grid: int = 80,
) -> list[OrbitRecord]:
    """Search for periodic points of the return map with period dividing k.

    Reversible orbits are sought first on the symmetry line {p_r = 0}: a
    sign change of the p_r component of the k-th return brackets a point
    whose orbit closes after at most 2k returns.  A damped Newton iteration
    (finite-difference Jacobian) on psi^k(x) - x is then seeded on a grid
    over the disk interior (skipped when seed_grid = 0).  Orbits are
    reduced to their prime period and deduplicated by point-set distance.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    r_minus, r_plus = flow.hill_radii(p)
    found: list[OrbitRecord] = []

    # symmetry-line shooting
    rs, vals = [], []
    for r in np.linspace(r_minus, r_plus, symmetric_grid + 2)[1:-1]:
        x = DiskPoint(p_r=0.0, r=float(r))
        if boundary_distance(p, x) < 2 * BOUNDARY_DEPTH:
            continue
        try:
            img = _return_k(p, x, k, tol=1e-10)[-1]
        except (flow.IntegrationError, ValueError):
            continue
        rs.append(r)
        vals.append(img[0])
    for a, b, fa, fb in zip(rs, rs[1:], vals, vals[1:]):
        if fa == 0.0 or fa * fb >= 0.0:
            continue
        try:
            root = brentq(
                lambda r: _return_k(p, DiskPoint(0.0, float(r)), k, tol=1e-12)[-1][0],
                a, b, xtol=1e-13,
            )
        except (ValueError, flow.IntegrationError):
            continue
        x0 = DiskPoint(p_r=0.0, r=float(root))
        rec = _orbit_from_point(p, x0, 2 * k, tol=1e-12)
        if rec is not None and rec.residual < 1e-7 and (rec.k == k or k % rec.k == 0):
            rec.symmetric = True
            found.append(rec)

    # general Newton seeding
    if seed_grid > 0:
        for pr in np.linspace(-1.0, 1.0, seed_grid):
            for rr in np.linspace(r_minus, r_plus, seed_grid + 2)[1:-1]:
                pmax2 = 2.0 * disk_defect(p, DiskPoint(0.0, float(rr)))
                if pmax2 <= 0.0:
                    continue
                seed = DiskPoint(p_r=pr * math.sqrt(pmax2) * 0.85, r=float(rr))
                if boundary_distance(p, seed) < 2 * BOUNDARY_DEPTH:
                    continue
                sol = _newton_periodic(p, seed, k, tol)
                if sol is None:
                    continue
                rec = _orbit_from_point(p, sol, k, tol=1e-12)
                if rec is not None and rec.residual < 10 * tol and (rec.k == k or k % rec.k == 0):
                    rec.symmetric = any(abs(q.p_r) < 1e-9 for q in rec.points)
                    found.append(rec)

    return _dedup(p, found)


# ---------------------------------------------------------------------------
# Linking numbers and the twist interval
# ---------------------------------------------------------------------------

def _distinct(o1: OrbitRecord, o2: OrbitRecord) -> bool:
    a = np.array([[q.p_r, q.r] for q in o1.points])
    b = np.array([[q.p_r, q.r] for q in o2.points])
    d = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1))
    return float(d.min()) > 1e-6


def linking_number(p: Params, o1: OrbitRecord, o2: OrbitRecord,
                   tol: float = 1e-10) -> tuple[int, float]:
    """Linking number of two distinct periodic orbits.

    Sums the pair windings over all point pairs of the two cycles; the sum
    is an integer and the worst integrality residual is returned with it.
    """
    if not _distinct(o1, o2):
        raise ValueError("orbits are not geometrically distinct")
    L = math.lcm(o1.k, o2.k)
    total = 0.0
    worst = 0.0
    for x1 in o1.points:
        for x2 in o2.points:
            w, res = winding_exact(p, x1, x2, L, tol=tol)
            total += w
            worst = max(worst, res)
    lk = round(total)
    worst = max(worst, abs(total - lk))
    if worst > 0.05:
        raise RuntimeError(f"winding sum {total} too far from an integer")
    return int(lk), worst


def pairing(o1: OrbitRecord, o2: OrbitRecord, vol: float, lk: int) -> float:
    """Normalized linking/action pairing lk * vol / (T1 * T2)."""
    return lk * vol / (o1.action * o2.action)


@dataclass
class TwistRealization:
    target: float
    achieved: float | None
    pair: tuple[int, int] | None    # indices into the orbit list
    success: bool
    note: str = ""


def twist_realization(
    p: Params,
    target: float,
    orbits: list[OrbitRecord],
    interval: tuple[float, float],
    tol: float = 1e-3,
) -> TwistRealization:
    """Search the found-orbit pairs for a mean winding equal to ``target``.

    The target must lie strictly inside the twist interval.  Failure is
    reported with the nearest achieved value; the search is not exhaustive.
    """
    lo, hi = interval
    if not lo < target < hi:
        raise ValueError(f"target {target} not in the open twist interval ({lo}, {hi})")
    best = None
    best_pair = None
    for i in range(len(orbits)):
        for j in range(i + 1, len(orbits)):
            if not _distinct(orbits[i], orbits[j]):
                continue
            w, _ = winding_exact(p, orbits[i].points[0], orbits[j].points[0],
                                 math.lcm(orbits[i].k, orbits[j].k))
            if best is None or abs(w - target) < abs(best - target):
                best, best_pair = w, (i, j)
    if best is None:
        return TwistRealization(target=target, achieved=None, pair=None,
                                success=False, note="no distinct orbit pairs")
    return TwistRealization(
        target=target, achieved=best, pair=best_pair,
        success=abs(best - target) <= tol,
        note="" if abs(best - target) <= tol else "nearest value reported",
    )


# ---------------------------------------------------------------------------
# Quadrature over the disk
# ---------------------------------------------------------------------------

def disk_integral(p: Params, f, n_r: int = 32, n_p: int = 32) -> float:
    """Gauss-Legendre integral of f(DiskPoint) dp_r dr over Upsilon.

    The radial square-root endpoints are absorbed by the substitution
    r = r_mid + r_half sin(phi).
    """
    r_minus, r_plus = flow.hill_radii(p)
    r_mid, r_half = 0.5 * (r_plus + r_minus), 0.5 * (r_plus - r_minus)
    xg, wg = np.polynomial.legendre.leggauss(n_r)
    yg, vg = np.polynomial.legendre.leggauss(n_p)
    phis = 0.5 * math.pi * xg
    total = 0.0
    for phi, w in zip(phis, wg):
        r = r_mid + r_half * math.sin(phi)
        pmax = math.sqrt(max(2.0 * disk_defect(p, DiskPoint(0.0, r)), 0.0))
        if pmax == 0.0:
            continue
        row = sum(v * f(DiskPoint(p_r=float(pmax * y), r=float(r))) for y, v in zip(yg, vg))
        total += w * row * pmax * r_half * math.cos(phi) * 0.5 * math.pi
    return total
