"""Photon-energy budget of the PbV charge cycle.

Converts laser wavelengths to photon energies, counts how many photons each
charge transition needs, and turns the observed photon orders of the
shelving (blue) and repump (green) processes into a hypothesis for the
identity of the dark state.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .errors import DomainError

HC_EV_NM = 1239.84193
DIAMOND_BANDGAP_EV = 5.47
BLUE_NM = 445.0
GREEN_NM = 532.0
DEFAULT_MAX_ORDER = 2


class ChargeState(enum.Enum):
    NEG_ONE = "-1"
    NEUTRAL = "0"
    NEG_TWO = "-2"

    @property
    def bright(self) -> bool:
        """Only the negatively charged state fluoresces under resonant excitation."""
        return self is ChargeState.NEG_ONE


class Infeasible(enum.Enum):
    INFEASIBLE = "infeasible"

    def __str__(self):
        return self.value


INFEASIBLE = Infeasible.INFEASIBLE


class DarkStateHypothesis(enum.Enum):
    NEUTRAL = "neutral"
    NEG_TWO = "neg_two"
    UNDETERMINED = "undetermined"

    @property
    def charge_state(self) -> ChargeState | None:
        return {
            DarkStateHypothesis.NEUTRAL: ChargeState.NEUTRAL,
            DarkStateHypothesis.NEG_TWO: ChargeState.NEG_TWO,
        }.get(self)


@dataclass(frozen=True)
class TransitionThresholds:
    """Optical threshold energies (eV) of the four charge transitions."""

    neg_to_neutral: float = 2.6
    neg_to_negtwo: float = 3.5
    neutral_to_neg: float = 2.9
    negtwo_to_neg: float = 2.0

    def __post_init__(self):
        for name, value in self.items():
            if not (0.0 < value < DIAMOND_BANDGAP_EV):
                raise DomainError(
                    f"threshold {name}={value} eV must lie in (0, {DIAMOND_BANDGAP_EV})"
                )

    def items(self):
        return [
            ("neg_to_neutral", self.neg_to_neutral),
            ("neg_to_negtwo", self.neg_to_negtwo),
            ("neutral_to_neg", self.neutral_to_neg),
            ("negtwo_to_neg", self.negtwo_to_neg),
        ]


# transition label, threshold attribute, (from, to)
TRANSITIONS = (
    ("-1->0", "neg_to_neutral", (ChargeState.NEG_ONE, ChargeState.NEUTRAL)),
    ("-1->-2", "neg_to_negtwo", (ChargeState.NEG_ONE, ChargeState.NEG_TWO)),
    ("0->-1", "neutral_to_neg", (ChargeState.NEUTRAL, ChargeState.NEG_ONE)),
    ("-2->-1", "negtwo_to_neg", (ChargeState.NEG_TWO, ChargeState.NEG_ONE)),
)


def photon_energy(wavelength_nm: float) -> float:
    """Photon energy in eV for a vacuum wavelength in nm."""
    if not wavelength_nm > 0 or not math.isfinite(wavelength_nm):
        raise DomainError(f"wavelength must be positive, got {wavelength_nm!r}")
    return HC_EV_NM / wavelength_nm


def min_photon_order(threshold_eV: float, wavelength_nm: float,
                     max_order: int = DEFAULT_MAX_ORDER) -> int | Infeasible:
    """Smallest number of photons whose summed energy reaches ``threshold_eV``.

    Returns ``INFEASIBLE`` when more than ``max_order`` photons would be needed.
    The result satisfies ``order * E >= threshold > (order - 1) * E`` exactly in
    floating point, so boundary cases are not at the mercy of the division.
    """
    if not threshold_eV > 0 or not math.isfinite(threshold_eV):
        raise DomainError(f"threshold must be positive, got {threshold_eV!r}")
    if int(max_order) != max_order or max_order < 1:
        raise DomainError(f"max_order must be an integer >= 1, got {max_order!r}")
    energy = photon_energy(wavelength_nm)
    order = max(1, math.ceil(threshold_eV / energy))
    while order * energy < threshold_eV:
        order += 1
    while order > 1 and (order - 1) * energy >= threshold_eV:
        order -= 1
    return order if order <= max_order else INFEASIBLE


def classify_dark_state(shelve_order_blue, repump_order_green) -> DarkStateHypothesis:
    """Identify the dark charge state from the measured photon orders.

    A one-photon blue shelving step together with a two-photon green repump
    matches the neutral state (-1 -> 0 needs ~2.6 eV, 0 -> -1 needs ~2.9 eV).
    The reverse pattern is what the -2 state would produce.
    """
    for name, order in (("shelve_order_blue", shelve_order_blue),
                        ("repump_order_green", repump_order_green)):
        if order is INFEASIBLE:
            raise DomainError(f"{name} is infeasible")
        if isinstance(order, bool) or int(order) != order or order < 1:
            raise DomainError(f"{name} must be a positive integer, got {order!r}")
    pair = (int(shelve_order_blue), int(repump_order_green))
    if pair == (1, 2):
        return DarkStateHypothesis.NEUTRAL
    if pair == (2, 1):
        return DarkStateHypothesis.NEG_TWO
    return DarkStateHypothesis.UNDETERMINED


def photon_order_table(thresholds: TransitionThresholds | None = None,
                       wavelengths_nm=(BLUE_NM, GREEN_NM),
                       max_order: int = DEFAULT_MAX_ORDER) -> list[dict]:
    """Rows of ``transition, threshold_eV, wavelength_nm, photon_eV, order``."""
    thresholds = thresholds or TransitionThresholds()
    rows = []
    for label, attr, _ in TRANSITIONS:
        threshold = getattr(thresholds, attr)
        for wl in wavelengths_nm:
            order = min_photon_order(threshold, wl, max_order)
            rows.append({
                "transition": label,
                "threshold_eV": threshold,
                "wavelength_nm": float(wl),
                "photon_eV": photon_energy(wl),
                "order": order if order is INFEASIBLE else int(order),
            })
    return rows


def observed_hypothesis(thresholds: TransitionThresholds | None = None,
                        max_order: int = DEFAULT_MAX_ORDER) -> DarkStateHypothesis:
    """Dark-state hypothesis from the orders predicted for -1 -> 0 (blue) and 0 -> -1 (green)."""
    thresholds = thresholds or TransitionThresholds()
    blue = min_photon_order(thresholds.neg_to_neutral, BLUE_NM, max_order)
    green = min_photon_order(thresholds.neutral_to_neg, GREEN_NM, max_order)
    return classify_dark_state(blue, green)
