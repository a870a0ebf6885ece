"""Transverse linearized dynamics along the collinear orbit.

The out-of-plane linearization, written in the orbit's rotating frame and
parametrized by the true anomaly theta, is the periodic linear system

    xi' = J [[1, 0], [0, Q(theta)]] xi,    Q = 1 + 7 beta / (1 + ecc cos theta),

whose second component solves the Ince-type Hill equation
x'' = -Q(theta) x.  This module computes fundamental solutions, monodromy
conjugacy classes, rotation numbers, Maslov-type indices for unit-circle
boundary conditions, Fourier compressions of the associated quadratic form,
and the parameter curves where the monodromy has a prescribed eigenvalue.
"""

from __future__ import annotations

import cmath
import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .params import Params, RegimeTag, regime

__all__ = [
    "SymplecticPath2",
    "IndexData",
    "DegenerateCurve",
    "MonotonicityReport",
    "hill_coefficient",
    "fundamental_solution",
    "rotation_number",
    "euler_rotation_number",
    "omega_index_and_nullity",
    "omega_index_from_rotation",
    "morse_index_fourier",
    "trace_degenerate_curve",
    "check_monotonicity",
]

# Angle of the small symplectic rotation used to push index crossings off the
# path endpoints; only endpoint-degenerate cases are sensitive to it.
ENDPOINT_SHIFT = 1e-6

ECC_CAP = 0.995  # the coefficient peaks like 7 beta/(1-ecc); beyond this we refuse


def hill_coefficient(beta: float, ecc: float, theta: float) -> float:
    """Periodic coefficient Q(theta) = 1 + 7 beta / (1 + ecc cos theta)."""
    if not 0.0 <= ecc < 1.0:
        raise ValueError(f"ecc must lie in [0,1), got {ecc}")
    return 1.0 + 7.0 * beta / (1.0 + ecc * math.cos(theta))


@dataclass
class SymplecticPath2:
    """Discretized fundamental solution of the transverse linear system."""

    beta: float
    ecc: float
    m: int                    # number of periods covered: theta in [0, 2 pi m]
    thetas: np.ndarray
    matrices: np.ndarray      # shape (n, 2, 2), matrices[0] = identity
    winding: float            # continuous argument increase of gamma(theta) e1, radians
    monodromy: np.ndarray     # gamma(2 pi)
    det_drift: float
    sol: object = field(default=None, repr=False)

    def matrix_at(self, theta: float) -> np.ndarray:
        y = self.sol.sol(theta)
        return np.array([[y[0], y[1]], [y[2], y[3]]])


def _linear_rhs(beta, ecc):
    def rhs(theta, y):
        q = 1.0 + 7.0 * beta / (1.0 + ecc * math.cos(theta))
        g11, g12, g21, g22, e1, e2 = y
        n1 = g11 * g11 + g21 * g21
        n2 = g12 * g12 + g22 * g22
        return [
            -q * g21,
            -q * g22,
            g11,
            g12,
            (g11 * g11 + q * g21 * g21) / n1,
            (g12 * g12 + q * g22 * g22) / n2,
        ]

    return rhs


def fundamental_solution(
    beta: float, ecc: float, m_periods: int = 8, tol: float = 1e-12
) -> SymplecticPath2:
    """Integrate the transverse linear system over [0, 2 pi m_periods].

    The continuous rotation angles of both frame columns are integrated
    alongside the matrix entries, so argument tracking never relies on
    sample-based unwrapping.
    """
    if m_periods < 1:
        raise ValueError("m_periods must be >= 1")
    if ecc > ECC_CAP:
        raise ValueError(f"ecc={ecc} beyond supported cap {ECC_CAP}")
    q_max = 1.0 + 7.0 * beta / (1.0 - ecc)
    # >= 32 samples per pi of rotation, with the rotation rate bounded by
    # max(1, sqrt(Q_max)) in the natural frame
    n = int(max(2048, 96 * m_periods * (1 + math.sqrt(q_max))))
    span = 2.0 * math.pi * m_periods
    thetas = np.linspace(0.0, span, n)
    sol = solve_ivp(
        _linear_rhs(beta, ecc),
        (0.0, span),
        [1.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        method="DOP853",
        rtol=tol,
        atol=tol * 1e-2,
        dense_output=True,
        t_eval=thetas,
        max_step=0.05 if ecc > 0.9 else np.inf,
    )
    if not sol.success:
        raise RuntimeError(sol.message)
    mats = sol.y[:4].T.reshape(-1, 2, 2)
    dets = mats[:, 0, 0] * mats[:, 1, 1] - mats[:, 0, 1] * mats[:, 1, 0]
    det_drift = float(np.max(np.abs(dets - 1.0)))
    ym = sol.sol(2.0 * math.pi)
    monodromy = np.array([[ym[0], ym[1]], [ym[2], ym[3]]])
    winding = float(sol.y[4, -1])
    return SymplecticPath2(
        beta=beta,
        ecc=ecc,
        m=m_periods,
        thetas=thetas,
        matrices=mats,
        winding=winding,
        monodromy=monodromy,
        det_drift=det_drift,
        sol=sol,
    )


# ---------------------------------------------------------------------------
# Monodromy conjugacy class and rotation number
# ---------------------------------------------------------------------------

def conjugacy_class(M: np.ndarray, tol: float = 1e-9) -> tuple[str, float]:
    """Symplectic conjugacy class of M and the exact fractional rotation.

    Returns (label, frac) where frac is the fractional part of the rotation
    number contributed by the endpoint: theta/(2 pi) for the elliptic class
    R(theta), 0 for eigenvalues on the positive real axis, 1/2 on the
    negative one.
    """
    tr = M[0, 0] + M[1, 1]
    if tr > 2.0 + tol:
        return f"hyperbolic(lambda={0.5 * (tr + math.sqrt(tr * tr - 4.0)):.6g})", 0.0
    if tr < -2.0 - tol:
        return f"hyperbolic(lambda={0.5 * (tr - math.sqrt(tr * tr - 4.0)):.6g})", 0.5
    if abs(tr - 2.0) <= tol:
        if np.max(np.abs(M - np.eye(2))) <= tol:
            return "identity", 0.0
        return f"parabolic(+1,{_parabolic_sign(M, +1.0):+d})", 0.0
    if abs(tr + 2.0) <= tol:
        if np.max(np.abs(M + np.eye(2))) <= tol:
            return "minus_identity", 0.5
        return f"parabolic(-1,{_parabolic_sign(M, -1.0):+d})", 0.5
    # elliptic: orientation of the rotation is the sign of M[1,0]
    theta = math.acos(max(-1.0, min(1.0, tr / 2.0)))
    if M[1, 0] < 0.0:
        theta = 2.0 * math.pi - theta
    return f"elliptic(theta={theta:.12g})", theta / (2.0 * math.pi)


def _parabolic_sign(M: np.ndarray, eig: float) -> int:
    """Conjugacy-invariant sign of a parabolic matrix with eigenvalue +-1.

    J (M - eig I) is symmetric of rank one; the sign of its nonzero
    eigenvalue is invariant under symplectic conjugation and distinguishes
    N(eig, +1) from N(eig, -1).
    """
    J = np.array([[0.0, -1.0], [1.0, 0.0]])
    S = J @ (M - eig * np.eye(2))
    S = 0.5 * (S + S.T)
    w = np.linalg.eigvalsh(S)
    k = int(np.argmax(np.abs(w)))
    return 1 if w[k] > 0 else -1


def rotation_number(path: SymplecticPath2) -> float:
    """Rotation number of the path (half its mean index).

    The fractional part comes exactly from the monodromy conjugacy class;
    the integer part is pinned by the continuous winding of a frame vector
    over the m covered periods, which approximates the rotation number to
    better than 1/(2m).
    """
    _, frac = conjugacy_class(path.monodromy)
    w_total = path.winding / (2.0 * math.pi)
    r_est = w_total / path.m
    whole = round(r_est - frac)
    if abs(whole + frac - r_est) > 0.45 / path.m:
        raise RuntimeError(
            f"winding estimate {r_est} inconsistent with endpoint fraction {frac}; "
            "increase m_periods"
        )
    return whole + frac


def euler_rotation_number(p: Params, m_periods: int = 8, tol: float = 1e-12) -> float:
    """Transverse rotation number of the collinear orbit: rho(path) + 1."""
    rho = _rho_of_beta(p.beta, p.ecc, m_periods, tol) + 1.0
    if regime(p).tag is RegimeTag.SUBCRITICAL and rho <= 2.0:
        raise RuntimeError(f"rotation number {rho} <= 2 on a compact energy surface")
    return rho


# ---------------------------------------------------------------------------
# omega-index and nullity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IndexData:
    rho: float
    omega: complex
    i_omega: int
    nu_omega: int
    monodromy: np.ndarray
    conjugacy: str


def _nullity(M: np.ndarray, omega: complex, tol: float = 1e-7) -> int:
    s = np.linalg.svd(M.astype(complex) - omega * np.eye(2), compute_uv=False)
    return int(np.sum(s < tol * max(1.0, s[0])))


def _index_one(path: SymplecticPath2) -> int:
    """Index for omega = 1 from the rotation number and endpoint class."""
    rho = rotation_number(path)
    label, _ = conjugacy_class(path.monodromy)
    if label.startswith("elliptic"):
        return 2 * math.floor(rho) + 1
    if label.startswith("parabolic(+1,+1)") or label == "identity":
        return int(round(2 * rho)) - 1
    return int(round(2 * rho))


def _shifted_trace(path: SymplecticPath2, thetas, eps: float):
    y = path.sol.sol(thetas)
    tr = y[0] + y[3]
    skew = y[2] - y[1]  # M21 - M12
    return math.cos(eps) * tr + math.sin(eps) * skew


def _crossing_count(path: SymplecticPath2, nu: float, eps: float = ENDPOINT_SHIFT) -> int:
    """Number of parameters in (0, 2 pi] where e^{-eps J} gamma meets the
    omega-singular set {tr = 2 cos(2 pi nu)}.

    For this system the path is positive (the coefficient matrix is positive
    definite), so every crossing is transverse with intersection sign +1 and
    the index equals the raw count.  Tangential touches of the trace with
    the level (the generic picture at the level -2 for a constant
    coefficient) carry multiplicity two; they are detected by refining
    near-zero local minima that produce no sign change.
    """
    level = 2.0 * math.cos(2.0 * math.pi * nu)
    n = max(4096, 64 * int(path.winding / math.pi + 2))
    thetas = np.linspace(0.0, 2.0 * math.pi, n)
    q = _shifted_trace(path, thetas, eps) - level
    signs = np.sign(q)
    # zero samples are vanishingly rare after the endpoint shift; nudge them
    signs[signs == 0.0] = 1.0
    count = int(np.sum(signs[1:] != signs[:-1]))
    # tangency scan: local minima of |q| close to zero without a sign change
    absq = np.abs(q)
    scale = max(1.0, float(np.max(absq)))
    for k in range(1, n - 1):
        if absq[k] < 1e-4 * scale and absq[k] <= absq[k - 1] and absq[k] <= absq[k + 1]:
            if signs[k - 1] == signs[k] == signs[k + 1]:
                fine = np.linspace(thetas[k - 1], thetas[k + 1], 400)
                qf = _shifted_trace(path, fine, eps) - level
                sf = np.sign(qf)
                sf[sf == 0.0] = 1.0
                local = int(np.sum(sf[1:] != sf[:-1]))
                if local > 0:
                    count += local
                elif np.min(np.abs(qf)) < 1e-9 * scale:
                    count += 2  # genuine quadratic touch
    return count


def omega_index_and_nullity(path: SymplecticPath2, omega: complex) -> IndexData:
    """Maslov-type index and nullity of the path at a unit-circle omega.

    The index counts algebraic crossings of the slightly rotated path with
    the omega-singular set; the nullity is the kernel dimension of
    (monodromy - omega I), computed from singular values.
    """
    if abs(abs(omega) - 1.0) > 1e-9:
        raise ValueError("omega must lie on the unit circle")
    nu = (cmath.phase(omega) / (2.0 * math.pi)) % 1.0
    M = path.monodromy
    label, _ = conjugacy_class(M)
    rho = rotation_number(path)
    if nu == 0.0:
        idx = _index_one(path)
    else:
        idx = _crossing_count(path, nu)
    return IndexData(
        rho=rho,
        omega=omega,
        i_omega=idx,
        nu_omega=_nullity(M, omega),
        monodromy=M,
        conjugacy=label,
    )


def omega_index_from_rotation(rho: float, nu: float) -> int:
    """Closed-form index floor(rho-nu) + floor(rho+nu) + 1 for nu in (0,1).

    Valid at nondegenerate parameters; used as a cross-check of the crossing
    count.
    """
    return math.floor(rho - nu) + math.floor(rho + nu) + 1


# ---------------------------------------------------------------------------
# Fourier compression of the quadratic form (Morse index estimate)
# ---------------------------------------------------------------------------

def _geometric_ratio(ecc: float) -> float:
    """s = (sqrt(1-ecc^2) - 1)/ecc in (-1, 0); the Fourier transform of the
    kernel 1/(1 + ecc cos theta) decays like s^|n|."""
    if ecc == 0.0:
        return 0.0
    return (math.sqrt(1.0 - ecc * ecc) - 1.0) / ecc


def _fourier_matrix(beta: float, ecc: float, nu: float, n_win: int) -> np.ndarray:
    ks = np.arange(-n_win - 1, n_win + 1)
    s = _geometric_ratio(ecc)
    c = 7.0 * beta / math.sqrt(1.0 - ecc * ecc)
    diag = (ks + nu) ** 2 - 1.0
    A = -c * np.power(s, np.abs(ks[:, None] - ks[None, :]))
    A[np.diag_indices_from(A)] += diag
    return A


def morse_index_fourier(beta: float, ecc: float, nu: float, N: int) -> int:
    """Morse index of the Hill quadratic form under omega = e^{2 pi i nu}
    boundary conditions, from its compression onto the Fourier modes
    e^{i (k + nu) theta}, |k| <= N+1.

    The compression counts never exceed the true Morse index and are exact
    once the window covers every mode with (k+nu)^2 < 1 + 7 beta /
    sqrt(1-ecc^2); a changing count between N and N+4 triggers a warning.
    """
    if not 0.0 <= ecc < 1.0:
        raise ValueError("ecc must lie in [0,1)")
    n_need = 2.0 * math.sqrt(1.0 + 7.0 * beta) + 4.0
    if N < n_need:
        raise ValueError(f"truncation N={N} below required {n_need:.1f}")
    count = int(np.sum(np.linalg.eigvalsh(_fourier_matrix(beta, ecc, nu, N)) < 0.0))
    count4 = int(np.sum(np.linalg.eigvalsh(_fourier_matrix(beta, ecc, nu, N + 4)) < 0.0))
    if count4 != count:
        warnings.warn(
            f"Fourier Morse index not converged at N={N} ({count} -> {count4})",
            RuntimeWarning,
        )
        return count4
    return count


# ---------------------------------------------------------------------------
# Degenerate-parameter curves
# ---------------------------------------------------------------------------

@dataclass
class DegenerateCurve:
    j: int
    nu: float
    branch: str | None              # 'minus'/'plus' for nu = 1/2, else None
    samples: list[tuple[float, float]]          # (ecc, beta)
    trace_residuals: list[float]                # |tr M - 2 cos 2 pi nu|
    branch_detected: list[str | None]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["ecc", "beta", "rho", "trace_residual"])
            for (e, b), res in zip(self.samples, self.trace_residuals):
                w.writerow([e, b, self.j + self.nu, res])


def _monodromy_and_winding(beta, ecc, m_periods, tol):
    """Monodromy and m-period winding without dense storage (fast path)."""
    span = 2.0 * math.pi * m_periods
    sol = solve_ivp(
        _linear_rhs(beta, ecc),
        (0.0, span),
        [1.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        method="DOP853",
        rtol=tol,
        atol=tol * 1e-2,
        t_eval=[2.0 * math.pi, span] if m_periods > 1 else [span],
        max_step=0.05 if ecc > 0.9 else np.inf,
    )
    if not sol.success:
        raise RuntimeError(sol.message)
    y1 = sol.y[:, 0]
    M = np.array([[y1[0], y1[1]], [y1[2], y1[3]]])
    return M, float(sol.y[4, -1])


def _rho_of_beta(beta: float, ecc: float, m_periods: int, tol: float) -> float:
    M, winding = _monodromy_and_winding(beta, ecc, m_periods, tol)
    _, frac = conjugacy_class(M)
    r_est = winding / (2.0 * math.pi) / m_periods
    whole = round(r_est - frac)
    if abs(whole + frac - r_est) > 0.45 / m_periods:
        raise RuntimeError("winding/monodromy inconsistency; increase m_periods")
    return whole + frac


def trace_degenerate_curve(
    j: int,
    nu: float,
    branch: str | None = None,
    ecc_grid=(0.0, 0.1, 0.2, 0.3, 0.4),
    tol: float = 1e-10,
    m_periods: int = 6,
    ivp_tol: float = 1e-11,
) -> DegenerateCurve:
    """Trace the curve beta(ecc) on which the monodromy has eigenvalue
    e^{2 pi i nu} at rotation level j + nu.

    At fixed ecc the rotation number is non-decreasing in beta and constant
    exactly on the half-integer plateaus, so the curve is found by bisection:
    for nu != 1/2 the unique beta with rho = j + nu; for nu = 1/2 the left
    (branch='minus') or right (branch='plus') endpoint of the plateau
    {rho = j + 1/2}.  Brackets are continued from the previous ecc sample.
    """
    if j < 1:
        raise ValueError("j must be >= 1")
    if not 0.0 <= nu < 1.0:
        raise ValueError("nu must lie in [0,1)")
    half = abs(nu - 0.5) < 1e-15
    if half and branch not in ("minus", "plus"):
        raise ValueError("branch must be 'minus' or 'plus' for nu = 1/2")
    if not half:
        branch = None
    target = j + nu

    def hit(beta: float, ecc: float) -> bool:
        rho = _rho_of_beta(beta, ecc, m_periods, ivp_tol)
        return rho > target if branch == "plus" else rho >= target

    # sharp degeneracy functional for the endpoint refinement: the off-corner
    # monodromy entries vanish exactly at the nu = 0 curves (monodromy = I)
    # and at the two plateau endpoints for nu = 1/2 (parabolic classes),
    # while for generic nu the trace meets 2 cos(2 pi nu) transversally
    def functional(beta: float, ecc: float) -> float:
        M, _ = _monodromy_and_winding(beta, ecc, 1, ivp_tol)
        if nu == 0.0:
            return M[1, 0]
        if half:
            return M[1, 0] if branch == "minus" else M[0, 1]
        return M[0, 0] + M[1, 1] - 2.0 * math.cos(2.0 * math.pi * nu)

    samples: list[tuple[float, float]] = []
    residuals: list[float] = []
    detected: list[str | None] = []
    beta_prev = None
    for ecc in ecc_grid:
        lo, hi = (1e-4, 0.999) if beta_prev is None else (
            max(1e-4, beta_prev - 0.2), min(0.999, beta_prev + 1e-3))
        if hit(lo, ecc) or not hit(hi, ecc):
            lo, hi = 1e-4, 0.999
            if hit(lo, ecc) or not hit(hi, ecc):
                raise RuntimeError(f"curve j={j}, nu={nu} not bracketed at ecc={ecc}")
        coarse = max(tol, 2e-4)
        while hi - lo > coarse:
            mid = 0.5 * (lo + hi)
            if hit(mid, ecc):
                hi = mid
            else:
                lo = mid
        # widen slightly so the sharp functional brackets its sign change
        a, b = max(1e-4, lo - 2.0 * coarse), min(0.999, hi + 2.0 * coarse)
        fa, fb = functional(a, ecc), functional(b, ecc)
        if fa * fb < 0.0:
            beta = brentq(lambda x: functional(x, ecc), a, b, xtol=max(tol, 1e-13))
        else:
            beta = 0.5 * (lo + hi)  # fall back to the bisection value
        samples.append((ecc, beta))
        beta_prev = beta
        M, _ = _monodromy_and_winding(beta, ecc, 1, ivp_tol)
        residuals.append(abs(M[0, 0] + M[1, 1] - 2.0 * math.cos(2.0 * math.pi * nu)))
        detected.append(_detect_branch(M) if half and ecc > 0 else None)
    return DegenerateCurve(
        j=j, nu=nu, branch=branch, samples=samples,
        trace_residuals=residuals, branch_detected=detected,
    )


def _detect_branch(M: np.ndarray) -> str:
    """Branch label from the parabolic class of the monodromy at omega = -1.

    Along the left branch the kernel eigenfunction is sine-type (monodromy
    eigenvector along e1, class N(-1,-1)); along the right branch it is
    cosine-type (eigenvector along e2, class N(-1,+1)).
    """
    return "plus" if _parabolic_sign(M, -1.0) > 0 else "minus"


def curve_curvature_at_zero(j: int, nu: float) -> float:
    """Closed-form second derivative of beta(ecc) at ecc = 0:
    -3 beta0 (1 + 7 beta0) / (3 + 28 beta0) with beta0 = ((j+nu)^2 - 1)/7."""
    beta0 = ((j + nu) ** 2 - 1.0) / 7.0
    return -3.0 * beta0 * (1.0 + 7.0 * beta0) / (3.0 + 28.0 * beta0)


# ---------------------------------------------------------------------------
# Monotonicity report
# ---------------------------------------------------------------------------

@dataclass
class MonotonicityReport:
    beta: float
    rows: list[tuple[float, float]]      # (ecc, rho_e)
    non_decreasing: bool
    above_circular: bool                 # rho > 1 + sqrt(1+7 beta) for ecc >= 0.1
    min_increase: float
    min_margin: float


def check_monotonicity(
    beta: float, ecc_grid, m_periods: int = 8, tol: float = 1e-12
) -> MonotonicityReport:
    """Evaluate ecc -> rho_e at fixed beta and flag monotonicity violations."""
    rows = []
    for ecc in ecc_grid:
        rows.append((ecc, _rho_of_beta(beta, ecc, m_periods, tol) + 1.0))
    diffs = [b[1] - a[1] for a, b in zip(rows, rows[1:])]
    base = 1.0 + math.sqrt(1.0 + 7.0 * beta)
    margins = [rho - base for ecc, rho in rows if ecc >= 0.1]
    return MonotonicityReport(
        beta=beta,
        rows=rows,
        non_decreasing=all(d >= -1e-8 for d in diffs),
        above_circular=all(mg > 1e-6 for mg in margins),
        min_increase=min(diffs) if diffs else 0.0,
        min_margin=min(margins) if margins else math.inf,
    )
