"""Decoherence-time estimates shared by the pole, fit and formula routes."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

from .constants import HBAR
from .errors import ValidationError

METHODS = ("pole", "fit", "formula")

# t_D and hbar/gamma are two roundings of one number; allow a few ulps
_EXACT_RTOL = 4 * 2.220446049250313e-16


@dataclass(frozen=True)
class DecoherenceEstimate:
    """Decoherence time ``t_D`` (s) with its width ``gamma`` (eV).

    For the pole and formula routes ``t_D = hbar / gamma``. A vanishing
    width is the sentinel for "no decoherence": ``t_D = inf``.
    """

    t_D: float
    gamma: float
    method: str
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError(f"unknown estimate method {self.method!r}")
        if self.gamma < 0 or math.isnan(self.gamma) or not self.t_D > 0:
            raise ValidationError(f"invalid estimate t_D={self.t_D}, gamma={self.gamma}")
        if self.method != "fit":
            expected = math.inf if self.gamma == 0 else HBAR / self.gamma
            if math.isinf(expected) != math.isinf(self.t_D) or (
                math.isfinite(expected) and abs(self.t_D - expected) > _EXACT_RTOL * expected
            ):
                raise ValidationError("pole and formula estimates must satisfy t_D = hbar / gamma")

    @classmethod
    def from_gamma(cls, gamma: float, method: str, **diagnostics) -> "DecoherenceEstimate":
        gamma = float(gamma)
        t_D = math.inf if gamma == 0 else HBAR / gamma
        return cls(t_D, gamma, method, dict(diagnostics))

    @classmethod
    def from_time(cls, t_D: float, method: str, **diagnostics) -> "DecoherenceEstimate":
        """Estimate from a time; ``gamma`` is derived as ``hbar / t_D``."""
        t_D = float(t_D)
        gamma = 0.0 if math.isinf(t_D) else HBAR / t_D
        return cls(t_D, gamma, method, dict(diagnostics))

    @property
    def is_sentinel(self) -> bool:
        return math.isinf(self.t_D)


def relative_difference(a: DecoherenceEstimate, b: DecoherenceEstimate) -> float:
    """``|a - b| / b`` on t_D; zero when both are the infinity sentinel."""
    if a.is_sentinel and b.is_sentinel:
        return 0.0
    if a.is_sentinel or b.is_sentinel:
        return math.inf
    return abs(a.t_D - b.t_D) / b.t_D
