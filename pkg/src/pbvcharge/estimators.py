"""Rate, exponent and population estimators for photon-count data."""

from __future__ import annotations

import enum
import math
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, FitError
from .fitting import FitResult, run_least_squares

DEFAULT_THRESHOLD = 3
WILSON_Z = 1.959963984540054


class Brightness(enum.Enum):
    BRIGHT = "bright"
    DARK = "dark"


# -- decay curves ---------------------------------------------------------

def _loglinear_start(t, y):
    """Initial (A, rate, C) from a straight-line fit of log|y - baseline|."""
    falling = y[0] >= y[-1]
    baseline = y.min() if falling else y.max()
    z = (y - baseline) if falling else (baseline - y)
    mask = z > 0
    rate = 0.0
    amp = float(z.max()) if falling else -float(z.max())
    if mask.sum() >= 2 and np.ptp(t[mask]) > 0:
        slope, intercept = np.polyfit(t[mask], np.log(z[mask]), 1)
        rate = max(-slope, 0.0)
        amp = math.exp(intercept) * (1 if falling else -1)
    if rate == 0.0:
        rate = 1.0 / max(np.ptp(t), 1e-300)
    return amp, rate, float(baseline)


def fit_monoexponential(t, y, sigma=None, weighting: str = "none", y_cov=None) -> FitResult:
    """Least-squares fit of ``y = amplitude * exp(-rate * t) + offset`` with ``rate >= 0``.

    ``t`` in seconds gives ``rate`` in Hz. ``weighting`` is ``"none"`` (default),
    ``"poisson"`` (variance ``max(y, 1)``), or ``"sigma"`` with explicit ``sigma``.
    A constant signal returns ``rate = 0`` with the ``constant_signal`` flag.

    ``y_cov`` is the covariance matrix of ``y``. When the points are ensemble
    means over the same repetitions their errors are strongly correlated, and
    the default residual-based errors come out several times too small; with
    ``y_cov`` the standard errors use the sandwich form instead.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise DomainError("t and y must be 1-D arrays of equal length")
    if len(t) < 4:
        raise DomainError(f"need at least 4 points, got {len(t)}")
    if np.any(np.diff(t) <= 0):
        raise DomainError("t must be strictly increasing")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
        raise DomainError("t and y must be finite")

    if np.ptp(y) == 0:
        return FitResult({"amplitude": 0.0, "rate": 0.0, "offset": float(y[0])},
                         {"amplitude": 0.0, "rate": 0.0, "offset": 0.0},
                         flags=["constant_signal"])

    if weighting == "none":
        w = np.ones_like(y)
    elif weighting == "poisson":
        w = 1.0 / np.sqrt(np.maximum(y, 1.0))
    elif weighting == "sigma":
        if sigma is None:
            raise DomainError("weighting='sigma' needs sigma")
        sigma = np.asarray(sigma, dtype=float)
        if np.any(sigma <= 0):
            raise DomainError("sigma must be > 0")
        w = 1.0 / sigma
    else:
        raise DomainError(f"unknown weighting {weighting!r}")

    # rescale time so the optimiser works with an O(1) rate
    tscale = float(t[-1] - t[0])
    ts = (t - t[0]) / tscale
    amp0, rate0, off0 = _loglinear_start(ts, y)

    def residuals(p):
        a, k, c = p
        return w * (a * np.exp(-k * ts) + c - y)

    fit = run_least_squares(residuals, [amp0, rate0, off0], ["amplitude", "rate", "offset"],
                            bounds=([-np.inf, 0.0, -np.inf], [np.inf, np.inf, np.inf]),
                            absolute_sigma=weighting != "none")
    a, k, c = fit["amplitude"], fit["rate"], fit["offset"]
    ea, ek, ec = fit.stderr["amplitude"], fit.stderr["rate"], fit.stderr["offset"]
    # undo the time shift and scaling
    shift = math.exp(k * t[0] / tscale)
    fit.params = {"amplitude": a * shift, "rate": k / tscale, "offset": c}
    fit.stderr = {"amplitude": ea * shift, "rate": ek / tscale, "offset": ec}
    if k == 0.0:
        fit.flags.append("rate_at_bound")
    if y_cov is not None:
        fit.stderr = _sandwich_stderr(t, w, fit.params, y_cov)
        fit.flags.append("sandwich_stderr")
    return fit


def _sandwich_stderr(t, w, params, y_cov):
    y_cov = np.asarray(y_cov, dtype=float)
    if y_cov.shape != (len(t), len(t)):
        raise DomainError(f"y_cov must be {len(t)}x{len(t)}, got {y_cov.shape}")
    a, k = params["amplitude"], params["rate"]
    e = np.exp(-k * t)
    jac = w[:, None] * np.column_stack([e, -a * t * e, np.ones_like(t)])
    bread = np.linalg.pinv(jac.T @ jac)
    meat = jac.T @ (w[:, None] * y_cov * w[None, :]) @ jac
    err = np.sqrt(np.clip(np.diag(bread @ meat @ bread), 0.0, np.inf))
    return dict(zip(("amplitude", "rate", "offset"), (float(v) for v in err)))


def ensemble_signal(counts):
    """Mean count per window over repetitions, its standard error, and the covariance of the mean.

    ``counts`` has shape ``(n_reps, n_windows)``.
    """
    counts = np.asarray(counts, dtype=float)
    if counts.ndim != 2 or counts.shape[0] < 2:
        raise DomainError("counts must be (n_reps >= 2, n_windows)")
    n = counts.shape[0]
    cov = np.cov(counts, rowvar=False, ddof=1).reshape(counts.shape[1], counts.shape[1]) / n
    return counts.mean(axis=0), np.sqrt(np.diag(cov)), cov


# -- straight lines and power laws -----------------------------------------

def fit_linear(x, y, y_err=None) -> FitResult:
    """Weighted straight line ``y = slope * x + intercept`` (closed form).

    With ``y_err`` the errors are taken as absolute; without, the standard
    errors are scaled by the residual variance.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or len(x) < 2:
        raise DomainError("need at least 2 paired points")
    if y_err is None:
        w = np.ones_like(y)
    else:
        y_err = np.asarray(y_err, dtype=float)
        if np.any(y_err <= 0) or y_err.shape != y.shape:
            raise DomainError("y_err must be positive and match y")
        w = 1.0 / y_err ** 2
    design = np.column_stack([x, np.ones_like(x)])
    a = design * np.sqrt(w)[:, None]
    b = y * np.sqrt(w)
    coef, *_ = np.linalg.lstsq(a, b, rcond=None)
    resid = b - a @ coef
    cov = np.linalg.inv(a.T @ a)
    if y_err is None:
        dof = len(x) - 2
        cov = cov * (resid @ resid / dof if dof > 0 else np.inf)
    err = np.sqrt(np.diag(cov))
    return FitResult({"slope": float(coef[0]), "intercept": float(coef[1])},
                     {"slope": float(err[0]), "intercept": float(err[1])},
                     residual_norm=float(np.sqrt(resid @ resid)))


def fit_power_law(P, G, G_err=None, fixed_exponent: float | None = None,
                  method: str = "loglog") -> FitResult:
    """Fit ``G = coefficient * P**exponent``.

    The default works in log-log space: a (weighted) straight line through
    ``(ln P, ln G)`` with ``sigma_lnG = G_err / G``. ``fixed_exponent`` refits
    only the coefficient. ``method="nonlinear"`` fits the power law directly to
    ``G`` instead, as a cross-check.
    """
    P = np.asarray(P, dtype=float)
    G = np.asarray(G, dtype=float)
    if P.shape != G.shape or P.ndim != 1:
        raise DomainError("P and G must be 1-D arrays of equal length")
    if len(P) < 3 and fixed_exponent is None:
        raise DomainError(f"need at least 3 points, got {len(P)}")
    if np.any(P <= 0) or np.any(G <= 0) or not np.all(np.isfinite(P * G)):
        raise DomainError("powers and rates must be strictly positive")
    if G_err is not None:
        G_err = np.asarray(G_err, dtype=float)
        if G_err.shape != G.shape or np.any(G_err <= 0):
            raise DomainError("G_err must be positive and match G")

    if method == "nonlinear":
        return _power_law_nonlinear(P, G, G_err, fixed_exponent)
    if method != "loglog":
        raise DomainError(f"unknown method {method!r}")

    lx, ly = np.log(P), np.log(G)
    sig = None if G_err is None else G_err / G
    if fixed_exponent is not None:
        w = np.ones_like(ly) if sig is None else 1.0 / sig ** 2
        r = ly - fixed_exponent * lx
        ln_c = float(np.sum(w * r) / np.sum(w))
        if sig is None:
            dof = len(r) - 1
            var = np.sum((r - ln_c) ** 2) / dof / len(r) if dof > 0 else np.inf
        else:
            var = 1.0 / np.sum(w)
        coef = math.exp(ln_c)
        return FitResult({"coefficient": coef, "exponent": float(fixed_exponent)},
                         {"coefficient": coef * math.sqrt(var), "exponent": 0.0},
                         residual_norm=float(np.sqrt(np.sum(w * (r - ln_c) ** 2))),
                         flags=["exponent_fixed"])
    line = fit_linear(lx, ly, sig)
    coef = math.exp(line["intercept"])
    return FitResult({"coefficient": coef, "exponent": line["slope"]},
                     {"coefficient": coef * line.stderr["intercept"],
                      "exponent": line.stderr["slope"]},
                     residual_norm=line.residual_norm)


def _power_law_nonlinear(P, G, G_err, fixed_exponent):
    start = fit_power_law(P, G, fixed_exponent=fixed_exponent)
    w = np.ones_like(G) if G_err is None else 1.0 / G_err
    pscale = float(np.exp(np.mean(np.log(P))))
    x = P / pscale
    if fixed_exponent is None:
        c0 = start["coefficient"] * pscale ** start["exponent"]

        def residuals(p):
            return w * (p[0] * x ** p[1] - G)

        fit = run_least_squares(residuals, [c0, start["exponent"]], ["c", "exponent"],
                                absolute_sigma=G_err is not None)
        n, en = fit["exponent"], fit.stderr["exponent"]
        c, ec = fit["c"] / pscale ** n, fit.stderr["c"] / pscale ** n
        fit.params = {"coefficient": c, "exponent": n}
        fit.stderr = {"coefficient": ec, "exponent": en}
        return fit
    xn = x ** fixed_exponent
    fit = run_least_squares(lambda p: w * (p[0] * xn - G), [start["coefficient"] * pscale ** fixed_exponent],
                            ["c"], absolute_sigma=G_err is not None)
    scale = pscale ** fixed_exponent
    fit.params = {"coefficient": fit["c"] / scale, "exponent": float(fixed_exponent)}
    fit.stderr = {"coefficient": fit.stderr["c"] / scale, "exponent": 0.0}
    fit.flags.append("exponent_fixed")
    return fit


# -- histograms and threshold discrimination -------------------------------

@dataclass
class Histogram:
    edges: np.ndarray        # integer photon counts, one per bin, strictly increasing
    frequencies: np.ndarray
    total: int

    def mode(self, above: int | None = None) -> int:
        """Most populated count value, optionally restricted to counts > ``above``."""
        mask = np.ones(len(self.edges), bool) if above is None else self.edges > above
        if not mask.any() or self.frequencies[mask].sum() == 0:
            raise DomainError("no counts in the requested range")
        idx = np.flatnonzero(mask)
        return int(self.edges[idx[np.argmax(self.frequencies[idx])]])


def _select_counts(traces, window) -> np.ndarray:
    chunks = []
    for tr in traces:
        counts = np.asarray(tr.counts)
        idx = np.asarray(tr.window_index)
        if window is None:
            sel = np.ones(len(counts), bool)
        elif callable(window):
            sel = np.array([bool(window(int(i))) for i in idx], dtype=bool)
        elif isinstance(window, Iterable):
            sel = np.isin(idx, list(window))
        else:
            sel = idx == int(window)
        chunks.append(counts[sel])
    return np.concatenate(chunks) if chunks else np.array([], dtype=np.int64)


def histogram_counts(traces, window: int | Iterable[int] | Callable | None = None) -> Histogram:
    """Integer-count histogram over the readout windows selected by ``window``.

    ``window`` may be a window index, an iterable of indices, a predicate on the
    index, or ``None`` for every window.
    """
    if len(traces) == 0:
        raise DomainError("no traces given")
    counts = _select_counts(traces, window).astype(np.int64)
    if counts.size == 0:
        return Histogram(np.array([], dtype=np.int64), np.array([], dtype=np.int64), 0)
    if counts.min() < 0:
        raise DomainError("photon counts must be >= 0")
    freq = np.bincount(counts)
    return Histogram(np.arange(len(freq), dtype=np.int64), freq.astype(np.int64), int(counts.size))


def classify_state(count: int, threshold: int = DEFAULT_THRESHOLD) -> Brightness:
    """Dark iff ``count <= threshold``."""
    if count < 0:
        raise DomainError(f"count must be >= 0, got {count!r}")
    return Brightness.DARK if count <= threshold else Brightness.BRIGHT


def wilson_interval(k: int, n: int, z: float = WILSON_Z) -> tuple[float, float]:
    if n <= 0:
        raise DomainError("n must be > 0")
    p = k / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z / denom * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    return max(0.0, center - half), min(1.0, center + half)


@dataclass(frozen=True)
class PopulationEstimate:
    fraction: float
    lo: float
    hi: float
    threshold: int
    n: int

    def to_dict(self):
        return {"fraction": self.fraction, "lo": self.lo, "hi": self.hi,
                "threshold": self.threshold, "n": self.n}


def estimate_population(counts, threshold: int = DEFAULT_THRESHOLD) -> PopulationEstimate:
    """Bright fraction among readout counts with a 95% Wilson score interval."""
    counts = np.asarray(counts)
    if counts.size == 0:
        raise DomainError("no counts given")
    if counts.min() < 0:
        raise DomainError("photon counts must be >= 0")
    k = int(np.count_nonzero(counts > threshold))
    n = int(counts.size)
    lo, hi = wilson_interval(k, n)
    frac = k / n
    return PopulationEstimate(frac, min(lo, frac), max(hi, frac), int(threshold), n)


def _poisson_logpmf(k, mu):
    if mu == 0:
        return 0.0 if k == 0 else -math.inf
    return k * math.log(mu) - mu - math.lgamma(k + 1)


def discrimination_error(bright_mean: float, dark_mean: float,
                         threshold: float = DEFAULT_THRESHOLD) -> tuple[float, float]:
    """``(P(bright read as dark), P(dark read as bright))`` for Poisson count statistics.

    Both tails are summed term by term from the Poisson mass function; terms
    past ``mean + 40*sqrt(mean) + 50`` are below double precision and skipped.
    """
    for name, mu in (("bright_mean", bright_mean), ("dark_mean", dark_mean)):
        if not (mu >= 0 and math.isfinite(mu)):
            raise DomainError(f"{name} must be finite and >= 0, got {mu!r}")
    cut = math.floor(threshold) if math.isfinite(threshold) else math.inf

    def lower(mu):      # P(X <= cut)
        if cut < 0:
            return 0.0
        kmax = int(min(cut, mu + 40 * math.sqrt(mu) + 50))
        return min(1.0, math.fsum(math.exp(_poisson_logpmf(k, mu)) for k in range(kmax + 1)))

    def upper(mu):      # P(X > cut)
        start = 0 if cut < 0 else cut + 1
        kmax = mu + 40 * math.sqrt(mu) + 50
        if start > kmax:
            return 0.0
        return min(1.0, math.fsum(math.exp(_poisson_logpmf(k, mu))
                                  for k in range(int(start), int(kmax) + 1)))

    return lower(bright_mean), upper(dark_mean)


# -- population surface ----------------------------------------------------

MIN_WINDOWS = 30
SATURATION_DEPTH = 3.0


@dataclass
class SaturationFit:
    power: float
    p_inf: float
    p_inf_err: float
    rate_hz: float
    rate_err_hz: float
    flags: list = field(default_factory=list)

    def to_dict(self):
        return {"power_uW": self.power, "p_inf": self.p_inf, "p_inf_err": self.p_inf_err,
                "rate_Hz": self.rate_hz, "rate_err_Hz": self.rate_err_hz, "flags": list(self.flags)}


@dataclass
class PopulationSurface:
    powers: list
    durations: list          # ms
    estimates: list          # estimates[i][j] for powers[i], durations[j]
    fits: list               # SaturationFit or None per power
    row_flags: list
    max_p_inf: float | None

    def fraction_grid(self) -> np.ndarray:
        return np.array([[e.fraction for e in row] for row in self.estimates])


def fit_saturation(durations_ms, estimates, power=float("nan")) -> SaturationFit | None:
    """Fit ``p(t) = p_inf * (1 - exp(-rate t))`` to one power's populations."""
    t = np.asarray(durations_ms, dtype=float)
    if len(np.unique(t)) < 2:
        return None
    k = np.array([e.fraction * e.n for e in estimates])
    n = np.array([e.n for e in estimates], dtype=float)
    p = k / n
    smooth = (k + 1) / (n + 2)
    sigma = np.sqrt(smooth * (1 - smooth) / n)
    tmax = float(t.max())
    tpos = t[t > 0]
    rate0 = 1.0 / (np.median(tpos) if tpos.size else tmax)
    p0 = float(min(max(p.max(), 1e-3), 1.0))

    def residuals(x):
        return (x[0] * -np.expm1(-x[1] * t) - p) / sigma

    fit = run_least_squares(residuals, [p0, rate0], ["p_inf", "rate"],
                            bounds=([0.0, 0.0], [1.0, np.inf]), absolute_sigma=True)
    flags = []
    if fit["rate"] * tmax < SATURATION_DEPTH:
        flags.append("unsaturated")
    return SaturationFit(float(power), fit["p_inf"], fit.stderr["p_inf"],
                         fit["rate"] * 1e3, fit.stderr["rate"] * 1e3, flags)


def population_surface(powers, durations_ms, cell_counts,
                       threshold: int = DEFAULT_THRESHOLD) -> PopulationSurface:
    """Bright fractions on a (power, duration) grid plus per-power saturation fits.

    ``cell_counts[i][j]`` holds the readout counts for ``powers[i]`` and
    ``durations_ms[j]``. ``max_p_inf`` is taken over rows whose fit reached
    saturation (``rate * t_max >= 3``); if none did, over every fitted row.
    """
    powers = [float(p) for p in powers]
    durations = [float(d) for d in durations_ms]
    if len(cell_counts) != len(powers) or any(len(row) != len(durations) for row in cell_counts):
        raise DomainError("cell_counts must be a complete len(powers) x len(durations) grid")
    estimates, fits, row_flags = [], [], []
    for power, row in zip(powers, cell_counts):
        flags = []
        ests = [estimate_population(c, threshold) for c in row]
        if min(e.n for e in ests) < MIN_WINDOWS:
            flags.append("undersampled")
        try:
            fit = fit_saturation(durations, ests, power)
        except FitError:
            fit = None
            flags.append("fit_failed")
        if fit is None and "fit_failed" not in flags:
            flags.append("saturation_fit_skipped")
        estimates.append(ests)
        fits.append(fit)
        row_flags.append(flags)
    fitted = [f for f in fits if f is not None]
    saturated = [f for f in fitted if "unsaturated" not in f.flags]
    pool = saturated or fitted
    max_p = max(f.p_inf for f in pool) if pool else None
    return PopulationSurface(powers, durations, estimates, fits, row_flags, max_p)
