"""Exact jump-process simulation of charge-state trajectories and photon counts.

Rates are piecewise constant over pulse segments, so dwell times inside a
segment are exponential with that segment's exit rate; because the
exponential is memoryless, an unfinished dwell is simply redrawn at the next
segment boundary. Every repetition owns its own Philox stream keyed by
``(master_seed, rep)``, which makes ensembles independent of execution order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .lineshape import LineShape, lorentzian_profile
from .mechanism import ChargeState
from .pulses import PulseSequence, validate
from .rates import RateParams, repump_rate, shelving_rate

_STATES = (ChargeState.NEG_ONE, ChargeState.NEUTRAL, ChargeState.NEG_TWO)
_INDEX = {s: i for i, s in enumerate(_STATES)}
_U64 = 1 << 64
_PHOTON_COUNTER = 1 << 192


@dataclass(frozen=True)
class SimSeed:
    master: int
    rep: int = 0

    def __post_init__(self):
        for name in ("master", "rep"):
            v = getattr(self, name)
            if isinstance(v, bool) or int(v) != v or not 0 <= v < _U64:
                raise DomainError(f"seed {name} must be an integer in [0, 2**64), got {v!r}")

    @property
    def key(self) -> int:
        return int(self.master) + (int(self.rep) << 64)

    def trajectory_rng(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=self.key))

    def photon_rng(self) -> np.random.Generator:
        # same key, counter block far beyond anything the trajectory stream consumes
        return np.random.Generator(np.random.Philox(key=self.key, counter=_PHOTON_COUNTER))


@dataclass(frozen=True)
class EmissionParams:
    bright_rate: float = 15.0       # counts per ms, bright and on resonance
    background_rate: float = 0.5    # counts per ms, any state
    lineshape_coupling: bool = True

    def __post_init__(self):
        for name in ("bright_rate", "background_rate"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise DomainError(f"{name} must be >= 0, got {v!r}")


@dataclass(frozen=True)
class NegTwoRates:
    """Optional -1 <-> -2 channel: blue drives -1 -> -2, green drives -2 -> -1.

    No measured values exist; the default simulation leaves this channel off.
    """

    k_in: float
    k_out: float
    in_exponent: float = 2.0
    out_exponent: float = 1.0


@dataclass(frozen=True)
class ChargeTrajectory:
    initial: ChargeState
    jumps: tuple            # ((time_s, ChargeState), ...)
    duration: float         # s

    def state_at(self, t: float) -> ChargeState:
        state = self.initial
        for tj, s in self.jumps:
            if tj > t:
                break
            state = s
        return state

    @property
    def final_state(self) -> ChargeState:
        return self.jumps[-1][1] if self.jumps else self.initial

    def bright_time(self, t0, t1):
        """Time (s) spent in the bright state within each ``[t0, t1]`` interval."""
        knots = np.array([0.0] + [t for t, _ in self.jumps])
        bright = np.array([self.initial.bright] + [s.bright for _, s in self.jumps], dtype=float)
        cum = np.concatenate(([0.0], np.cumsum(np.diff(knots) * bright[:-1])))

        def cumulative(t):
            t = np.asarray(t, dtype=float)
            k = np.searchsorted(knots, t, side="right") - 1
            return cum[k] + (t - knots[k]) * bright[k]

        return cumulative(t1) - cumulative(t0)


@dataclass
class PhotonTrace:
    counts: np.ndarray      # int64 per readout window
    t_start: np.ndarray     # s
    t_stop: np.ndarray      # s
    window_index: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.window_index is None:
            self.window_index = np.arange(len(self.counts))

    def __len__(self):
        return len(self.counts)


class _Prepared:
    """Per-sequence rate tables and readout windows, shared by all repetitions."""

    def __init__(self, seq: PulseSequence, rates: RateParams, negtwo: NegTwoRates | None = None):
        problems = validate(seq)
        if problems:
            raise DomainError("invalid sequence: " + "; ".join(problems))
        self.seq = seq
        self.starts, self.ends, self.table = [], [], []
        per_segment = [self._rates(seg, rates, negtwo) for seg in seq.segments]
        for t, seg in seq.unrolled():
            self.starts.append(t)
            self.ends.append(t + seg.duration)
        self.table = per_segment * seq.repetitions
        self.duration = self.ends[-1] if self.ends else 0.0
        self.w_start, self.w_stop, self.w_detuning = _windows(seq)

    @staticmethod
    def _rates(seg, rates, negtwo):
        illum = seg.illumination()
        a = shelving_rate(rates, illum)
        b = repump_rate(rates, illum)
        # state index -> (targets, rates)
        out = {0: ([1], [a]), 1: ([0], [b]), 2: ([], [])}
        if negtwo is not None:
            blue = illum.blue_power
            green = illum.green_power
            k_in = negtwo.k_in * blue ** negtwo.in_exponent if blue > 0 else 0.0
            k_out = negtwo.k_out * green ** negtwo.out_exponent if green > 0 else 0.0
            out[0] = ([1, 2], [a, k_in])
            out[2] = ([0], [k_out])
        return {s: (tg, rs, math.fsum(rs)) for s, (tg, rs) in out.items()}

    def sample(self, initial: ChargeState, rng: np.random.Generator) -> ChargeTrajectory:
        state = _INDEX[initial]
        jumps = []
        exp = rng.standard_exponential
        for start, end, rates in zip(self.starts, self.ends, self.table):
            t = start
            while True:
                targets, rs, total = rates[state]
                if total <= 0.0:
                    break
                t += exp() / total
                if t >= end:
                    break
                if len(targets) == 1:
                    state = targets[0]
                else:
                    u = rng.random() * total
                    acc = 0.0
                    for target, r in zip(targets, rs):
                        acc += r
                        if u < acc:
                            state = target
                            break
                jumps.append((t, _STATES[state]))
        return ChargeTrajectory(initial, tuple(jumps), self.duration)

    def emit(self, traj, em, line, rng):
        return _emit(traj, (self.w_start, self.w_stop, self.w_detuning), em, line, rng)


def _windows(seq):
    windows = seq.readout_windows()
    return (np.array([w[0] for w in windows]), np.array([w[1] for w in windows]),
            np.array([w[2].detuning for w in windows]))


def _emit(traj, windows, em, line, rng):
    w_start, w_stop, w_detuning = windows
    tau_bright = traj.bright_time(w_start, w_stop) * 1e3
    tau = (w_stop - w_start) * 1e3
    shape = 1.0
    if em.lineshape_coupling and line is not None:
        shape = lorentzian_profile(w_detuning, line.center, line.fwhm)
    mean = em.bright_rate * shape * tau_bright + em.background_rate * tau
    counts = rng.poisson(np.maximum(mean, 0.0)).astype(np.int64)
    return PhotonTrace(counts, w_start.copy(), w_stop.copy())


def simulate_trajectory(seq: PulseSequence, rates: RateParams, seed: SimSeed,
                        initial: ChargeState = ChargeState.NEG_ONE,
                        negtwo: NegTwoRates | None = None) -> ChargeTrajectory:
    return _Prepared(seq, rates, negtwo).sample(initial, seed.trajectory_rng())


def emit_photons(traj: ChargeTrajectory, seq: PulseSequence, em: EmissionParams,
                 line: LineShape | None, seed: SimSeed) -> PhotonTrace:
    """Poisson counts per readout window given the time spent bright in each window."""
    return _emit(traj, _windows(seq), em, line, seed.photon_rng())


@dataclass
class Ensemble:
    traces: list
    trajectories: list | None = None


def simulate_ensemble(seq: PulseSequence, rates: RateParams, em: EmissionParams,
                      line: LineShape | None, master_seed: int, n_reps: int,
                      initial: ChargeState = ChargeState.NEG_ONE, jobs: int = 1,
                      keep_trajectories: bool = False,
                      negtwo: NegTwoRates | None = None) -> Ensemble:
    """Simulate ``n_reps`` independent repetitions; rep ``r`` always uses ``SimSeed(master_seed, r)``."""
    if int(n_reps) != n_reps or n_reps < 1:
        raise DomainError(f"n_reps must be >= 1, got {n_reps!r}")
    SimSeed(master_seed, 0)
    prep = _Prepared(seq, rates, negtwo)

    def run(r):
        s = SimSeed(master_seed, r)
        traj = prep.sample(initial, s.trajectory_rng())
        return traj, prep.emit(traj, em, line, s.photon_rng())

    def run_chunk(chunk):
        return [run(r) for r in chunk]

    jobs = max(1, int(jobs))
    if jobs == 1:
        results = run_chunk(range(n_reps))
    else:
        chunks = [range(i, min(i + 256, n_reps)) for i in range(0, n_reps, 256)]
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = [item for part in pool.map(run_chunk, chunks) for item in part]
    traces = [tr for _, tr in results]
    trajs = [tj for tj, _ in results] if keep_trajectories else None
    return Ensemble(traces, trajs)


def final_bright_fraction(seq: PulseSequence, rates: RateParams, master_seed: int,
                          n_reps: int, initial: ChargeState = ChargeState.NEG_ONE) -> float:
    """Fraction of repetitions that end the sequence in the bright state."""
    prep = _Prepared(seq, rates)
    bright = sum(prep.sample(initial, SimSeed(master_seed, r).trajectory_rng()).final_state.bright
                 for r in range(n_reps))
    return bright / n_reps

