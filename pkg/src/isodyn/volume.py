"""Contact volume of the compact energy surface and the twist interval.

The contact volume equals twice the Lebesgue volume of the bounded region
{H <= -1}, reduced here to the two-dimensional integral

    vol = 8 pi  int_{r_-}^{r_+} int_0^{z_+(r)}  (-1 - V(r, z))  dz dr.

A comparison Hamiltonian with potential

    V2 = varpi^2/(2 r^2) - 1 / (beta sqrt(r^2 + (1+7 beta) z^2))

bounds the region from inside and has the closed-form volume
2 pi^2 (1 - sqrt(2) varpi beta)^2 / (beta^2 sqrt(1+7 beta)), which equals
T^2 / sqrt(1+7 beta) for the collinear-orbit action T.  Together with the
rotation-number bound this yields the strict chain

    vol > T^2 / sqrt(1+7 beta) > T^2 / (rho_e - 1)

and the nonempty twist interval [1/(rho_e - 1), vol / T^2].
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from . import flow, hill
from .params import Params, RegimeTag, regime

__all__ = [
    "VolumeReport",
    "vol_comparison",
    "vol_quadrature",
    "vol_quadrature_comparison",
    "inequality_report",
    "weyl_lower_bound",
]

NEAR_CRITICAL = 0.98  # beta^2 + ecc^2 above this: warn, the Hill region is extreme


def _require_subcritical(p: Params) -> None:
    reg = regime(p)
    if reg.tag is not RegimeTag.SUBCRITICAL:
        raise ValueError(f"compact energy surface required, got {reg.tag.value}")
    if p.beta**2 + p.ecc**2 > NEAR_CRITICAL:
        warnings.warn(
            "parameters within 0.02 of critical; volume quadrature may lose accuracy",
            RuntimeWarning,
        )


def vol_comparison(p: Params) -> float:
    """Closed-form contact volume of the comparison surface."""
    _require_subcritical(p)
    return (
        2.0
        * math.pi**2
        * (1.0 - math.sqrt(2.0) * p.varpi * p.beta) ** 2
        / (p.beta**2 * math.sqrt(1.0 + 7.0 * p.beta))
    )


def _z2_plus(p: Params, r: float) -> float:
    """Hill-region height of the comparison potential, V2(r, z) = -1."""
    q = 2.0 * r * r / (p.beta * (2.0 * r * r + p.varpi**2))
    return math.sqrt(max(q * q - r * r, 0.0) / (1.0 + 7.0 * p.beta))


def _reduced_volume(p: Params, z_top, integrand, tol: float) -> tuple[float, float]:
    """8 pi * double integral with the radial sqrt endpoints smoothed out."""
    r_minus, r_plus = flow.hill_radii(p)
    r_mid, r_half = 0.5 * (r_plus + r_minus), 0.5 * (r_plus - r_minus)

    def outer(phi: float) -> float:
        r = r_mid + r_half * math.sin(phi)
        top = z_top(r)
        if top <= 0.0:
            return 0.0
        inner, _ = quad(lambda z: integrand(r, z), 0.0, top,
                        epsabs=tol * 1e-2, epsrel=tol * 1e-1, limit=200)
        return inner * r_half * math.cos(phi)

    val, err = quad(outer, -0.5 * math.pi, 0.5 * math.pi,
                    epsabs=tol, epsrel=tol, limit=200)
    return 8.0 * math.pi * val, 8.0 * math.pi * err


def vol_quadrature(p: Params, tol: float = 1e-9) -> tuple[float, float]:
    """Contact volume by adaptive quadrature; returns (value, error estimate)."""
    _require_subcritical(p)
    hr = flow.hill_region(p)
    return _reduced_volume(
        p, hr.z_plus, lambda r, z: -1.0 - flow.potential(p, r, z), tol
    )


def vol_quadrature_comparison(p: Params, tol: float = 1e-9) -> tuple[float, float]:
    """Same quadrature with the comparison potential; must reproduce
    :func:`vol_comparison` and so validates the reduction and the grids."""
    _require_subcritical(p)
    c = 1.0 + 7.0 * p.beta

    def v2(r: float, z: float) -> float:
        return p.varpi**2 / (2.0 * r * r) - 1.0 / (p.beta * math.hypot(r, math.sqrt(c) * z))

    return _reduced_volume(p, lambda r: _z2_plus(p, r), lambda r, z: -1.0 - v2(r, z), tol)


@dataclass
class VolumeReport:
    beta: float
    ecc: float
    T_e: float
    vol_comparison: float
    vol: float
    vol_error: float
    rho_e: float
    chain_margin_left: float      # vol - T^2/sqrt(1+7 beta)
    chain_margin_right: float     # T^2/sqrt(1+7 beta) - T^2/(rho_e - 1)
    twist_interval: tuple[float, float]
    systolic_upper_proxy: float   # T_e^2 / vol, an upper bound for the systolic ratio

    def to_json(self) -> str:
        d = dict(self.__dict__)
        d["twist_interval"] = list(self.twist_interval)
        return json.dumps(d, indent=2)


def inequality_report(p: Params, tol: float = 1e-9, rho_e: float | None = None) -> VolumeReport:
    """Assemble the volume/action/rotation quantities and the chain margins.

    The systolic ratio is reported through the upper proxy T_e^2 / vol (the
    systole action never exceeds T_e); the twist interval is
    [1/(rho_e - 1), vol/T_e^2].
    """
    _require_subcritical(p)
    T = flow.euler_period(p)
    v2 = vol_comparison(p)
    v, verr = vol_quadrature(p, tol=tol)
    if rho_e is None:
        rho_e = hill.euler_rotation_number(p)
    mid = T * T / math.sqrt(1.0 + 7.0 * p.beta)
    lo = T * T / (rho_e - 1.0)
    return VolumeReport(
        beta=p.beta,
        ecc=p.ecc,
        T_e=T,
        vol_comparison=v2,
        vol=v,
        vol_error=verr,
        rho_e=rho_e,
        chain_margin_left=v - mid,
        chain_margin_right=mid - lo,
        twist_interval=(1.0 / (rho_e - 1.0), v / (T * T)),
        systolic_upper_proxy=T * T / v,
    )


def weyl_lower_bound(vol: float, eps: float, ks) -> np.ndarray:
    """Asymptotic spectral lower-bound curve k -> (vol - eps) sqrt(2k)."""
    ks = np.asarray(ks, dtype=float)
    return (vol - eps) * np.sqrt(2.0 * ks)
