"""PLE scans: simulated Lorentzian spectra under charge dynamics, fitting, peak decisions."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, FitError
from .fitting import FitResult, run_least_squares
from .lineshape import LineShape, lorentzian_profile, lorentzian_value
from .mechanism import ChargeState
from .pulses import PulseSequence, Role
from .rates import RateParams, evolve_population, mean_bright_occupancy, repump_rate, shelving_rate
from .simulate import SimSeed, _Prepared

__all__ = ["LineShape", "Spectrum", "PeakDecision", "lorentzian_value", "simulate_ple_scan",
           "fit_lorentzian", "detect_peak", "scan_occupancies", "simulate_three_scan"]

PEAK_SIGMA = 3.0
FIT_TOL = 1e-10
FIT_MAX_NFEV = 5000


@dataclass
class Spectrum:
    detuning: np.ndarray    # GHz
    counts: np.ndarray
    dwell: float            # ms

    def __post_init__(self):
        self.detuning = np.asarray(self.detuning, dtype=float)
        self.counts = np.asarray(self.counts)
        if self.detuning.shape != self.counts.shape or self.detuning.ndim != 1:
            raise DomainError("detuning and counts must be 1-D arrays of equal length")
        d = np.diff(self.detuning)
        if len(d) and not (np.all(d > 0) or np.all(d < 0)):
            raise DomainError("detuning grid must be strictly monotone")


@dataclass
class PeakDecision:
    present: bool
    significance: float
    fit: FitResult | None = None


def _seed(seed) -> SimSeed:
    return seed if isinstance(seed, SimSeed) else SimSeed(int(seed), 0)


def simulate_ple_scan(line: LineShape, grid, dwell: float, seed, occupancy=1.0) -> Spectrum:
    """Poisson counts over a detuning grid.

    ``occupancy`` is the bright-state occupancy during each dwell (scalar or
    per point); only the line, not the background, is scaled by it.
    """
    grid = np.asarray(grid, dtype=float)
    if dwell < 0:
        raise DomainError(f"dwell must be >= 0, got {dwell!r}")
    occ = np.broadcast_to(np.asarray(occupancy, dtype=float), grid.shape)
    if np.any(occ < 0) or np.any(occ > 1):
        raise DomainError("occupancy must lie in [0, 1]")
    mean = dwell * (line.background + line.amplitude * occ * lorentzian_profile(grid, line.center, line.fwhm))
    counts = _seed(seed).photon_rng().poisson(mean).astype(np.int64)
    return Spectrum(grid, counts, dwell)


def _initial_guess(x, y):
    i = int(np.argmax(y))
    base = float(np.median(y))
    amp = float(y[i]) - base
    half = base + amp / 2.0
    lo = hi = i
    while lo > 0 and y[lo - 1] > half:
        lo -= 1
    while hi < len(y) - 1 and y[hi + 1] > half:
        hi += 1
    width = abs(x[hi] - x[lo])
    return float(x[i]), width, max(amp, 0.0), max(base, 0.0)


def fit_lorentzian(spec: Spectrum, reweight: int = 1) -> FitResult:
    """Poisson-weighted Lorentzian fit of a PLE spectrum.

    Returns ``center`` (GHz), ``fwhm`` (MHz), and ``amplitude``/``background``
    as count rates per ms of dwell. The ``peak_present`` flag is set when the
    amplitude exceeds three standard errors.
    """
    x = spec.detuning
    y = np.asarray(spec.counts, dtype=float)
    if len(x) < 5:
        raise DomainError(f"need at least 5 points, got {len(x)}")
    if not spec.dwell > 0:
        raise DomainError("dwell must be > 0 to fit")
    if not np.all(np.isfinite(y)) or np.any(y < 0):
        raise DomainError("counts must be finite and >= 0")
    step = float(np.min(np.abs(np.diff(x))))
    span = float(np.ptp(x))
    if span <= 0:
        raise DomainError("degenerate detuning grid")
    c0, w0, a0, b0 = _initial_guess(x, y)
    hw0 = min(max(w0, 2.0 * step), span) / 2.0
    sigma = np.sqrt(np.maximum(y, 1.0))

    def residuals(p):
        c, hw, a, b = p
        d = x - c
        return (b + a * hw * hw / (d * d + hw * hw) - y) / sigma

    # narrowest resolvable line spans two grid steps
    lo = [float(x.min()), step, 0.0, 0.0]
    hi = [float(x.max()), span / 2.0, np.inf, np.inf]
    names = ["center", "hw", "amplitude", "background"]
    scale = [max(hw0, step), max(hw0, step), max(a0, 1.0), max(b0, 1.0)]
    fit = run_least_squares(residuals, [c0, hw0, a0, b0], names, bounds=(lo, hi), absolute_sigma=True,
                            tol=FIT_TOL, max_nfev=FIT_MAX_NFEV, x_scale=scale)
    for _ in range(reweight):
        # observed-count weights bias low-count regions downwards; re-weight with the model variance
        start = [fit[k] for k in names]
        c, hw, a, b = start
        sigma = np.sqrt(np.maximum(b + a * hw * hw / ((x - c) ** 2 + hw * hw), 1.0))
        try:
            fit = run_least_squares(residuals, start, names, bounds=(lo, hi), absolute_sigma=True,
                                    tol=FIT_TOL, max_nfev=FIT_MAX_NFEV, x_scale=scale)
        except FitError:
            fit.flags.append("reweight_failed")
            break
    c, hw, a, b = (fit[k] for k in ("center", "hw", "amplitude", "background"))
    e = fit.stderr
    fit.params = {"center": c, "fwhm": 2000.0 * hw, "amplitude": a / spec.dwell,
                  "background": b / spec.dwell}
    fit.stderr = {"center": e["center"], "fwhm": 2000.0 * e["hw"],
                  "amplitude": e["amplitude"] / spec.dwell, "background": e["background"] / spec.dwell}
    err = fit.stderr["amplitude"]
    significance = fit.params["amplitude"] / err if err > 0 else (math.inf if a > 0 else 0.0)
    fit.params["significance"] = significance
    if significance > PEAK_SIGMA:
        fit.flags.append("peak_present")
    else:
        fit.flags.append("no_peak")
    return fit


def detect_peak(spec: Spectrum) -> PeakDecision:
    """Present/absent decision from the amplitude significance of a Lorentzian fit."""
    try:
        fit = fit_lorentzian(spec)
    except (FitError, DomainError):
        return PeakDecision(False, 0.0, None)
    return PeakDecision("peak_present" in fit.flags, float(fit.params["significance"]), fit)


def fit_to_json(fit: FitResult) -> dict:
    p, e = fit.params, fit.stderr
    return {"center_GHz": p["center"], "fwhm_MHz": p["fwhm"], "amplitude": p["amplitude"],
            "background": p["background"],
            "stderr": {"center_GHz": e["center"], "fwhm_MHz": e["fwhm"],
                       "amplitude": e["amplitude"], "background": e["background"]},
            "peak_present": "peak_present" in fit.flags}


# -- three-scan protocol ------------------------------------------------------

def _split_scans(seq: PulseSequence):
    """Group consecutive readout segments of the unrolled sequence into scans."""
    scans, current = [], []
    for i, (_, seg) in enumerate(seq.unrolled()):
        if seg.role is Role.READOUT:
            current.append(i)
        elif current:
            scans.append(current)
            current = []
    if current:
        scans.append(current)
    return scans


def scan_occupancies(seq: PulseSequence, rates: RateParams, p0: float = 1.0,
                     seed=None, mode: str = "mean") -> list[np.ndarray]:
    """Bright occupancy during every readout dwell, grouped by scan.

    ``mode="mean"`` propagates the bright probability through the sequence
    with the closed-form master equation; ``mode="trajectory"`` samples one
    jump path (using ``seed``) and uses its bright-time fraction per dwell.
    """
    segs = [seg for _, seg in seq.unrolled()]
    if mode == "mean":
        occ = []
        p = p0
        for seg in segs:
            illum = seg.illumination()
            a, b = shelving_rate(rates, illum), repump_rate(rates, illum)
            if seg.role is Role.READOUT:
                occ.append(mean_bright_occupancy(p, a, b, seg.duration))
            else:
                occ.append(math.nan)
            p = evolve_population(p, a, b, seg.duration)
        occ = np.array(occ)
    elif mode == "trajectory":
        if seed is None:
            raise DomainError("trajectory mode needs a seed")
        prep = _Prepared(seq, rates)
        start = ChargeState.NEG_ONE if p0 >= 0.5 else ChargeState.NEUTRAL
        traj = prep.sample(start, _seed(seed).trajectory_rng())
        t0 = np.array(prep.starts)
        t1 = np.array(prep.ends)
        occ = traj.bright_time(t0, t1) / (t1 - t0)
    else:
        raise DomainError(f"unknown mode {mode!r}")
    return [occ[idx] for idx in _split_scans(seq)]


def simulate_three_scan(seq: PulseSequence, line: LineShape, rates: RateParams, seed: int,
                        mode: str = "mean", p0: float = 1.0) -> list[Spectrum]:
    """Spectra of every scan in a three-scan PLE sequence (scan ``i`` uses ``SimSeed(seed, i)``)."""
    scans = _split_scans(seq)
    segs = [seg for _, seg in seq.unrolled()]
    occs = scan_occupancies(seq, rates, p0, SimSeed(int(seed), len(scans)), mode)
    spectra = []
    for i, (idx, occ) in enumerate(zip(scans, occs)):
        grid = np.array([segs[j].detuning for j in idx])
        dwell = segs[idx[0]].duration * 1e3
        spectra.append(simulate_ple_scan(line, grid, dwell, SimSeed(int(seed), i), np.clip(occ, 0, 1)))
    return spectra
