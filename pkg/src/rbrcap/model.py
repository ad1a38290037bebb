"""Battery model of the recharging channel plus the per-slot Gaussian rate.

Energies are measured in units of the noise variance (Z ~ N(0, 1)); all
rates are returned in bits per channel use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "DomainError",
    "EnergyViolationError",
    "ChannelParams",
    "BatteryState",
    "validate_params",
    "battery_step",
    "rate",
    "LN2",
]

LN2 = math.log(2.0)


class DomainError(ValueError):
    """An argument lies outside the domain of the requested operation."""


class EnergyViolationError(RuntimeError):
    """A transmitter tried to spend more energy than its battery holds."""


@dataclass(frozen=True)
class ChannelParams:
    """Recharge probability ``p`` and battery capacity ``b_bar``."""

    p: float
    b_bar: float

    def __post_init__(self):
        if not (math.isfinite(self.p) and math.isfinite(self.b_bar)):
            raise DomainError(f"non-finite parameters p={self.p!r}, b_bar={self.b_bar!r}")
        if not 0.0 < self.p <= 1.0:
            raise DomainError(f"recharge probability must lie in (0, 1], got {self.p!r}")
        if self.b_bar < 0.0:
            raise DomainError(f"battery capacity must be >= 0, got {self.b_bar!r}")


@dataclass(frozen=True)
class BatteryState:
    level: float
    age: int = 1

    def __post_init__(self):
        if self.age < 1:
            raise DomainError(f"age must be >= 1, got {self.age!r}")
        if not self.level >= 0.0:
            raise DomainError(f"battery level must be >= 0, got {self.level!r}")


def validate_params(p: float, b_bar: float) -> ChannelParams:
    return ChannelParams(float(p), float(b_bar))


def _slack(b_bar: float) -> float:
    return 1e-12 * max(1.0, b_bar)


def battery_step(state: BatteryState, spent: float, recharge: bool,
                 params: ChannelParams) -> BatteryState:
    """Advance the battery by one channel use.

    ``spent`` is the energy |X_t|^2 drawn in the current slot; ``recharge``
    says whether the battery is refilled before the next slot. A recharge
    delivers a full ``b_bar`` so the ``min`` in the recursion always clamps
    to ``b_bar``.
    """
    if spent < 0.0:
        raise DomainError(f"spent energy must be >= 0, got {spent!r}")
    if spent > state.level + _slack(params.b_bar):
        raise EnergyViolationError(
            f"spent {spent!r} exceeds battery level {state.level!r} at age {state.age}")
    if recharge:
        return BatteryState(params.b_bar, 1)
    return BatteryState(min(max(state.level - spent, 0.0), params.b_bar), state.age + 1)


def rate(power: float) -> float:
    """Gaussian-input rate 0.5*log2(1 + power) in bits."""
    if power < 0.0:
        raise DomainError(f"power must be >= 0, got {power!r}")
    return 0.5 * math.log1p(power) / LN2
