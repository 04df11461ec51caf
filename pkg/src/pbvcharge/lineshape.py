"""Lorentzian line shape of the resonant (C) transition."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class LineShape:
    """Lorentzian PLE line.

    ``center`` is a detuning in GHz and ``fwhm`` a width in MHz. ``amplitude``
    and ``background`` are count rates per ms of dwell, so the expected counts
    at one grid point scale with the dwell time.
    """

    center: float = 0.0
    fwhm: float = 38.0
    amplitude: float = 20.0
    background: float = 0.2

    def __post_init__(self):
        if not (math.isfinite(self.fwhm) and self.fwhm > 0):
            raise DomainError(f"fwhm must be > 0, got {self.fwhm!r}")
        if not (math.isfinite(self.amplitude) and self.amplitude >= 0):
            raise DomainError(f"amplitude must be >= 0, got {self.amplitude!r}")
        if not (math.isfinite(self.background) and self.background >= 0):
            raise DomainError(f"background must be >= 0, got {self.background!r}")
        if not math.isfinite(self.center):
            raise DomainError(f"center must be finite, got {self.center!r}")


def lorentzian_profile(detuning, center, fwhm_mhz):
    """Unit-height Lorentzian; ``detuning``/``center`` in GHz, ``fwhm_mhz`` in MHz."""
    half = 0.5e-3 * fwhm_mhz
    delta = np.asarray(detuning, dtype=float) - center
    return half * half / (delta * delta + half * half)


def lorentzian_value(line: LineShape, detuning):
    """Expected count rate (per ms) at ``detuning`` GHz, background included."""
    value = line.background + line.amplitude * lorentzian_profile(detuning, line.center, line.fwhm)
    return float(value) if np.ndim(value) == 0 else value
