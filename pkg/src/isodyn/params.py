"""Parameter space of the reduced isosceles three-body problem.

The model is parametrized by the mass ratio ``alpha`` between the two
symmetric bodies and the axial body, and the angular momentum ``varpi``.
With the energy normalized to -1, the pair ``(beta, ecc)`` with

    beta = 1 / (1 + 4/alpha),        ecc = sqrt(1 - 2 varpi^2 beta^2)

ranges over (0,1) x [0,1) and determines everything else.  The energy
surface is compact (sphere-like) iff beta^2 + ecc^2 < 1.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass

__all__ = ["Params", "Regime", "RegimeTag", "from_beta_ecc", "regime", "CRITICAL_TOL"]

# Tolerance on beta^2 + ecc^2 - 1 below which parameters are classified as
# critical; guards against misclassification from the floating construction
# of varpi.
CRITICAL_TOL = 1e-12


class RegimeTag(enum.Enum):
    SUBCRITICAL = "subcritical"
    CRITICAL = "critical"
    SUPERCRITICAL = "supercritical"


@dataclass(frozen=True)
class Regime:
    tag: RegimeTag
    margin: float  # beta^2 + ecc^2 - 1, signed


@dataclass(frozen=True)
class Params:
    """Immutable parameter point (alpha, beta, varpi, ecc) at energy -1."""

    alpha: float
    beta: float
    varpi: float
    ecc: float
    energy: float = -1.0

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must lie in (0,1), got {self.beta}")
        if not 0.0 <= self.ecc < 1.0:
            raise ValueError(f"ecc must lie in [0,1), got {self.ecc}")
        if self.alpha <= 0.0 or self.varpi <= 0.0:
            raise ValueError("alpha and varpi must be positive")

    def to_json(self) -> str:
        return json.dumps(
            {"alpha": self.alpha, "beta": self.beta, "varpi": self.varpi, "ecc": self.ecc}
        )

    @classmethod
    def from_json(cls, text: str) -> "Params":
        d = json.loads(text)
        return cls(alpha=d["alpha"], beta=d["beta"], varpi=d["varpi"], ecc=d["ecc"])


def from_beta_ecc(beta: float, ecc: float) -> Params:
    """Build Params from (beta, ecc).

    alpha = 4 beta / (1 - beta) and varpi = sqrt((1 - ecc^2)/2) / beta, so
    that beta = 1/(1 + 4/alpha) and ecc^2 = 1 - 2 varpi^2 beta^2 hold to
    machine precision.
    """
    if not 0.0 < beta < 1.0:
        raise ValueError(f"beta must lie in (0,1), got {beta}")
    if not 0.0 <= ecc < 1.0:
        raise ValueError(f"ecc must lie in [0,1), got {ecc}")
    alpha = 4.0 * beta / (1.0 - beta)
    varpi = math.sqrt((1.0 - ecc * ecc) / 2.0) / beta
    return Params(alpha=alpha, beta=beta, varpi=varpi, ecc=ecc)


def regime(p: Params) -> Regime:
    """Classify (beta, ecc) by the sign of beta^2 + ecc^2 - 1."""
    margin = p.beta**2 + p.ecc**2 - 1.0
    if abs(margin) <= CRITICAL_TOL:
        tag = RegimeTag.CRITICAL
    elif margin < 0.0:
        tag = RegimeTag.SUBCRITICAL
    else:
        tag = RegimeTag.SUPERCRITICAL
    return Regime(tag=tag, margin=margin)
