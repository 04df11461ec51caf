"""Two-state (bright/dark) charge-cycle rate laws and their master-equation solution.

Powers are in uW for the non-resonant lasers and nW for the resonant laser.
Rates are in Hz and times in seconds throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError

DEFAULT_LEAK_RATIO = 0.1236


@dataclass(frozen=True)
class RateParams:
    """Photo-physical coefficients of the bright <-> dark cycle.

    ``k_shelve`` is in Hz/uW^m and ``k_repump`` in Hz/uW^n. ``leak_ratio`` is the
    bright -> dark leak under green light expressed as a fraction of the
    instantaneous repump rate; it sets the green-only steady state to
    ``1 / (1 + leak_ratio)``.
    """

    k_repump: float
    k_shelve: float = 32.0
    shelve_exponent: float = 1.0
    repump_exponent: float = 2.0
    leak_ratio: float = DEFAULT_LEAK_RATIO
    resonant_shelve_rate: float = 0.0

    def __post_init__(self):
        for name in ("k_repump", "k_shelve", "leak_ratio", "resonant_shelve_rate"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise DomainError(f"{name} must be finite and >= 0, got {value!r}")
        for name in ("shelve_exponent", "repump_exponent"):
            value = getattr(self, name)
            if not (0 < value <= 4):
                raise DomainError(f"{name} must lie in (0, 4], got {value!r}")


@dataclass(frozen=True)
class Illumination:
    blue_power: float = 0.0       # uW
    green_power: float = 0.0      # uW
    resonant_power: float = 0.0   # nW

    def __post_init__(self):
        for name in ("blue_power", "green_power", "resonant_power"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise DomainError(f"{name} must be finite and >= 0, got {value!r}")


def _power_law(coefficient, power, exponent):
    # 0 ** exponent is 0 for the positive exponents allowed here
    return coefficient * power ** exponent if power > 0 else 0.0


def repump_rate(params: RateParams, illum: Illumination) -> float:
    """Dark -> bright rate driven by the green laser."""
    return _power_law(params.k_repump, illum.green_power, params.repump_exponent)


def shelving_rate(params: RateParams, illum: Illumination) -> float:
    """Total bright -> dark rate: blue photoionization, resonant readout, and green leak."""
    return (_power_law(params.k_shelve, illum.blue_power, params.shelve_exponent)
            + params.resonant_shelve_rate * illum.resonant_power
            + params.leak_ratio * repump_rate(params, illum))


def steady_state_bright(a: float, b: float) -> float:
    """Stationary bright probability for bright->dark rate ``a`` and dark->bright rate ``b``."""
    if a < 0 or b < 0:
        raise DomainError(f"rates must be >= 0, got a={a!r}, b={b!r}")
    if a + b <= 0:
        raise DomainError("stationary distribution undefined when a = b = 0")
    return b / (a + b)


def evolve_population(p0: float, a: float, b: float, t: float) -> float:
    """Bright probability after time ``t`` under constant rates, starting from ``p0``."""
    if not 0.0 <= p0 <= 1.0:
        raise DomainError(f"p0 must lie in [0, 1], got {p0!r}")
    if t < 0:
        raise DomainError(f"t must be >= 0, got {t!r}")
    if a + b <= 0:
        return p0
    p_ss = steady_state_bright(a, b)
    p = p_ss + (p0 - p_ss) * math.exp(-(a + b) * t)
    return min(1.0, max(0.0, p))


def mean_bright_occupancy(p0: float, a: float, b: float, t: float) -> float:
    """Time average of :func:`evolve_population` over ``[0, t]``."""
    if t < 0:
        raise DomainError(f"t must be >= 0, got {t!r}")
    lam = a + b
    if t == 0 or lam <= 0:
        return p0
    p_ss = steady_state_bright(a, b)
    x = lam * t
    # (1 - e^-x) / x without cancellation at small x
    frac = -math.expm1(-x) / x
    return min(1.0, max(0.0, p_ss + (p0 - p_ss) * frac))
