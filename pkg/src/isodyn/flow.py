"""Reduced Hamiltonian flow, the collinear (Euler) orbit, and the Hill region.

Phase space is (p_r, p_z, r, z) with r > 0 and Hamiltonian

    H = (p_r^2 + p_z^2)/2 + V(r, z),
    V = varpi^2/(2 r^2) - 1/r - 4 / (alpha sqrt(r^2 + (1+2 alpha) z^2)).

All dynamics live on the level set H = -1.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.optimize import brentq

from .params import Params, RegimeTag, regime

__all__ = [
    "State4",
    "Trajectory",
    "HillRegion",
    "IntegrationError",
    "potential",
    "hamiltonian",
    "vector_field",
    "integrate",
    "integrate_verlet",
    "euler_orbit",
    "euler_period",
    "euler_time_period",
    "euler_radius",
    "hill_region",
    "z_symmetry",
    "momentum_reversal",
]

# Collision guard: integration aborts when r drops below this fraction of the
# inner Hill radius r_-.
COLLISION_FRACTION = 1e-6


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class State4:
    p_r: float
    p_z: float
    r: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.p_r, self.p_z, self.r, self.z])

    @classmethod
    def from_array(cls, y) -> "State4":
        return cls(p_r=float(y[0]), p_z=float(y[1]), r=float(y[2]), z=float(y[3]))


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray        # strictly increasing (decreasing runs are time-reflected)
    states: np.ndarray       # shape (n, 4), columns (p_r, p_z, r, z)
    energy_drift: float      # max |H + 1| over the samples
    sol: object = None       # dense-output solution, if available

    def state(self, i: int) -> State4:
        return State4.from_array(self.states[i])

    def to_csv(self, path, p: Params) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "p_r", "p_z", "r", "z", "H_plus_1"])
            for t, y in zip(self.times, self.states):
                h = hamiltonian(p, State4.from_array(y))
                w.writerow([t, y[0], y[1], y[2], y[3], h + 1.0])


def potential(p: Params, r: float, z: float) -> float:
    if r <= 0.0:
        raise ValueError(f"r must be positive, got {r}")
    d = math.sqrt(r * r + (1.0 + 2.0 * p.alpha) * z * z)
    return p.varpi**2 / (2.0 * r * r) - 1.0 / r - 4.0 / (p.alpha * d)


def hamiltonian(p: Params, s: State4) -> float:
    return 0.5 * (s.p_r**2 + s.p_z**2) + potential(p, s.r, s.z)


def _rhs(p: Params, y: np.ndarray) -> np.ndarray:
    p_r, p_z, r, z = y
    opa = 1.0 + 2.0 * p.alpha
    d2 = r * r + opa * z * z
    d3 = d2 * math.sqrt(d2)
    f = 4.0 / (p.alpha * d3)
    return np.array(
        [
            p.varpi**2 / r**3 - 1.0 / r**2 - f * r,
            -f * opa * z,
            p_r,
            p_z,
        ]
    )


def vector_field(p: Params, s: State4) -> State4:
    """Hamiltonian vector field (dp_r, dp_z, dr, dz)/dt."""
    if s.r <= 0.0:
        raise ValueError(f"r must be positive, got {s.r}")
    return State4.from_array(_rhs(p, s.as_array()))


def integrate(
    p: Params,
    s0: State4,
    t_end: float,
    tol: float = 1e-12,
    n_samples: int = 400,
    events: list[Callable] | None = None,
    dense: bool = True,
) -> Trajectory:
    """Integrate the flow from ``s0`` over [0, t_end] (t_end may be negative).

    Uses an adaptive 8th-order Runge-Kutta scheme with dense output; a guard
    event aborts on near-collision (r below a small fraction of the inner
    Hill radius).
    """
    if t_end == 0.0:
        y0 = s0.as_array()
        drift = abs(hamiltonian(p, s0) + 1.0) * 0.0
        return Trajectory(times=np.array([0.0]), states=y0[None, :], energy_drift=drift)

    r_guard = COLLISION_FRACTION * hill_radii(p)[0]

    def guard(t, y):
        return y[2] - r_guard

    guard.terminal = True
    guard.direction = -1

    evs = [guard] + (events or [])
    t_eval = np.linspace(0.0, t_end, max(2, n_samples))
    sol = solve_ivp(
        lambda t, y: _rhs(p, y),
        (0.0, t_end),
        s0.as_array(),
        method="DOP853",
        rtol=tol,
        atol=tol * 1e-2,
        dense_output=dense,
        events=evs,
        t_eval=t_eval,
    )
    if not sol.success:
        raise IntegrationError(sol.message)
    if sol.t_events[0].size > 0:
        raise IntegrationError(f"collision guard triggered at t={sol.t_events[0][0]}")
    times, states = sol.t, sol.y.T
    if t_end < 0.0:
        times, states = times[::-1], states[::-1]
    drift = float(np.max(np.abs([hamiltonian(p, State4.from_array(y)) + 1.0 for y in states])))
    return Trajectory(times=times, states=states, energy_drift=drift, sol=sol)


def integrate_verlet(p: Params, s0: State4, t_end: float, n_steps: int) -> Trajectory:
    """Fixed-step Stoermer-Verlet integration (H is separable).

    Secondary backend kept for conservation cross-checks only.
    """
    h = t_end / n_steps
    y = s0.as_array().copy()
    out = np.empty((n_steps + 1, 4))
    out[0] = y
    for i in range(n_steps):
        # half kick, full drift, half kick
        acc = _rhs(p, y)[:2]
        y[:2] += 0.5 * h * acc
        y[2] += h * y[0]
        y[3] += h * y[1]
        acc = _rhs(p, y)[:2]
        y[:2] += 0.5 * h * acc
        if y[2] <= 0.0:
            raise IntegrationError("collision during fixed-step integration")
        out[i + 1] = y
    times = np.linspace(0.0, t_end, n_steps + 1)
    drift = float(np.max(np.abs([hamiltonian(p, State4.from_array(v)) + 1.0 for v in out])))
    return Trajectory(times=times, states=out, energy_drift=drift)


# ---------------------------------------------------------------------------
# Euler orbit
# ---------------------------------------------------------------------------

def euler_radius(p: Params, theta: float) -> float:
    """Radius of the collinear orbit at true anomaly theta."""
    return p.varpi**2 * p.beta / (1.0 + p.ecc * math.cos(theta))


def euler_orbit(p: Params, theta: float) -> tuple[State4, float]:
    """Point of the collinear orbit at angle ``theta`` and its physical time.

    The orbit is p_r = (ecc / (varpi beta)) sin(theta), r = euler_radius,
    z = p_z = 0; the time is obtained from dt/dtheta = r^2 / varpi by
    adaptive quadrature.
    """
    p_r = p.ecc / (p.varpi * p.beta) * math.sin(theta)
    state = State4(p_r=p_r, p_z=0.0, r=euler_radius(p, theta), z=0.0)
    t, _ = quad(
        lambda th: euler_radius(p, th) ** 2 / p.varpi,
        0.0,
        theta,
        epsabs=1e-12,
        epsrel=1e-12,
        limit=200,
    )
    return state, t


def euler_period(p: Params) -> float:
    """Action (Reeb period) of the collinear orbit.

    Equals the loop integral of p_r dr, i.e. the symplectic area of the
    planar disk it bounds: 2 pi (1 - sqrt(1 - ecc^2)) / (sqrt(2) beta).
    This is the quantity entering all volume and twist-interval formulas;
    for the physical turnaround time see :func:`euler_time_period`.
    """
    return 2.0 * math.pi * (1.0 - math.sqrt(1.0 - p.ecc**2)) / (math.sqrt(2.0) * p.beta)


def euler_time_period(p: Params) -> float:
    """Physical (Hamiltonian-time) period of the collinear orbit.

    The planar subsystem is a Kepler problem with attraction 1/beta and
    angular momentum varpi, so at energy -1 the period pi/(sqrt(2) beta)
    depends on beta only.
    """
    return math.pi / (math.sqrt(2.0) * p.beta)


# ---------------------------------------------------------------------------
# Hill region
# ---------------------------------------------------------------------------

def hill_radii(p: Params) -> tuple[float, float]:
    """Intersections r_-+ = (1 -+ ecc)/(2 beta) of the Hill boundary with z=0."""
    return (1.0 - p.ecc) / (2.0 * p.beta), (1.0 + p.ecc) / (2.0 * p.beta)


@dataclass(frozen=True)
class HillRegion:
    r_minus: float
    r_plus: float
    z_plus: Callable[[float], float]
    unbounded: bool  # True in the supercritical regime (z_plus blows up inside)

    def to_csv(self, path, n: int = 200) -> None:
        rs = np.linspace(self.r_minus, self.r_plus, n)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "z_plus"])
            for r in rs:
                w.writerow([r, self.z_plus(r)])


def _z_plus_closed_form(p: Params, r: float) -> float:
    # V(r, z) = -1 solved for z >= 0:  sqrt(r^2 + (1+2a) z^2) = 4/(alpha W)
    # with W = 1 + varpi^2/(2 r^2) - 1/r; using 4/alpha = (1-beta)/beta and
    # 1 + 2 alpha = (1+7 beta)/(1-beta).
    w = 1.0 + p.varpi**2 / (2.0 * r * r) - 1.0 / r
    if w <= 0.0:
        return math.inf
    q = (1.0 - p.beta) / (p.beta * w)
    val = (q * q - r * r) * (1.0 - p.beta) / (1.0 + 7.0 * p.beta)
    return math.sqrt(max(val, 0.0))


def hill_region(p: Params, tol: float = 1e-12) -> HillRegion:
    """Hill region of the energy surface: r in [r_-, r_+], |z| <= z_plus(r).

    z_plus(r) is obtained per radius by safeguarded root finding on
    V(r, z) = -1, bracketed by the closed-form solution.  In the
    supercritical regime z_plus is infinite on an inner radial band; those
    radii return ``inf`` and the region is flagged unbounded.
    """
    r_minus, r_plus = hill_radii(p)
    unbounded = regime(p).tag is RegimeTag.SUPERCRITICAL

    def z_plus(r: float) -> float:
        if not r_minus <= r <= r_plus:
            raise ValueError(f"r={r} outside [{r_minus}, {r_plus}]")
        z_hat = _z_plus_closed_form(p, r)
        if math.isinf(z_hat):
            return math.inf
        if z_hat == 0.0:
            return 0.0
        g = lambda z: potential(p, r, z) + 1.0
        hi = 1.5 * z_hat + 1e-12
        while g(hi) < 0.0:
            hi *= 2.0
        return brentq(g, 0.0, hi, xtol=tol)

    return HillRegion(r_minus=r_minus, r_plus=r_plus, z_plus=z_plus, unbounded=unbounded)


# ---------------------------------------------------------------------------
# Discrete symmetries
# ---------------------------------------------------------------------------

def z_symmetry(s: State4) -> State4:
    """Reflection (p_r, p_z, r, z) -> (p_r, -p_z, r, -z); commutes with the flow."""
    return State4(p_r=s.p_r, p_z=-s.p_z, r=s.r, z=-s.z)


def momentum_reversal(s: State4) -> State4:
    """Antisymplectic reversor (p -> -p); conjugates the flow to its inverse."""
    return State4(p_r=-s.p_r, p_z=-s.p_z, r=s.r, z=s.z)
