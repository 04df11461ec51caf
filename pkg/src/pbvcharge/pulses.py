"""Laser pulse sequences: segment types, protocol builders, validation, serialization.

Builder arguments take durations in ms (as in lab notebooks); segments store
seconds. Each sequence built by a protocol builder remembers its builder
arguments so it can be written back to a config document unchanged.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SequenceError
from .rates import Illumination

DEFAULT_GATE_DETUNING_GHZ = 4.0


class Channel(enum.Enum):
    RESONANT = "resonant"
    BLUE445 = "blue445"
    GREEN532 = "green532"
    OFF = "off"


class Role(enum.Enum):
    READOUT = "readout"
    CONTROL = "control"
    WAIT = "wait"


@dataclass(frozen=True)
class PulseSegment:
    """One single-channel laser interval.

    ``power`` is in nW for the resonant channel and uW otherwise; ``duration``
    is in seconds; ``detuning`` (GHz) only means something on the resonant
    channel. Invalid values are reported by :func:`validate` rather than
    rejected here, so malformed sequences can still be inspected.
    """

    channel: Channel
    power: float
    duration: float
    role: Role
    detuning: float = 0.0

    def illumination(self) -> Illumination:
        p = max(self.power, 0.0)
        if self.channel is Channel.BLUE445:
            return Illumination(blue_power=p)
        if self.channel is Channel.GREEN532:
            return Illumination(green_power=p)
        if self.channel is Channel.RESONANT:
            return Illumination(resonant_power=p)
        return Illumination()


@dataclass(frozen=True)
class PulseSequence:
    segments: tuple
    repetitions: int = 1
    spec: dict | None = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))

    @property
    def duration(self) -> float:
        """Total duration in seconds including repetitions."""
        return math.fsum(s.duration for s in self.segments) * self.repetitions

    def unrolled(self):
        """Yield ``(start_s, segment)`` over every repetition."""
        t = 0.0
        for _ in range(self.repetitions):
            for seg in self.segments:
                yield t, seg
                t += seg.duration

    def readout_windows(self) -> list[tuple[float, float, PulseSegment]]:
        return [(t, t + s.duration, s) for t, s in self.unrolled() if s.role is Role.READOUT]


def _pd(pair, name):
    try:
        power, duration_ms = pair
    except (TypeError, ValueError):
        raise SequenceError(f"{name} must be a (power, duration_ms) pair, got {pair!r}") from None
    return float(power), float(duration_ms)


def _check_counts(n_readout, n_control):
    if n_control < 0 or n_readout != n_control + 1:
        raise SequenceError(
            f"n_readout must equal n_control + 1 (got n_readout={n_readout}, n_control={n_control})"
        )


def _readout(power_nw, duration_ms, detuning=0.0):
    return PulseSegment(Channel.RESONANT, power_nw, duration_ms * 1e-3, Role.READOUT, detuning)


def _control(channel, power_uw, duration_ms):
    return PulseSegment(channel, power_uw, duration_ms * 1e-3, Role.CONTROL)


def _alternate(n_readout, readout, control_channel, control):
    segs = []
    for i in range(n_readout):
        segs.append(_readout(*readout))
        if i < n_readout - 1:
            segs.append(_control(control_channel, *control))
    return segs


def build_shelving_sequence(n_readout: int = 16, n_control: int = 15,
                            readout=(2.0, 1.0), blue=(10.0, 0.5),
                            green_init=(100.0, 5.0), repetitions: int = 1) -> PulseSequence:
    """Readout / blue-pulse alternation ending with one green re-initialization pulse."""
    _check_counts(n_readout, n_control)
    readout, blue, green_init = _pd(readout, "readout"), _pd(blue, "blue"), _pd(green_init, "green_init")
    segs = _alternate(n_readout, readout, Channel.BLUE445, blue)
    segs.append(_control(Channel.GREEN532, *green_init))
    spec = {"kind": "shelving", "n_readout": n_readout, "n_control": n_control,
            "readout": readout, "blue": blue, "green": green_init,
            "repetitions": repetitions}
    return PulseSequence(segs, repetitions, spec)


def build_repump_sequence(n_readout: int = 16, n_control: int = 15,
                          readout=(2.0, 1.0), green=(20.0, 5.0),
                          blue_reset=(28.5, 10.0), repetitions: int = 1) -> PulseSequence:
    """Blue reset pulse followed by readout / green-pulse alternation."""
    _check_counts(n_readout, n_control)
    readout, green, blue_reset = _pd(readout, "readout"), _pd(green, "green"), _pd(blue_reset, "blue_reset")
    segs = [_control(Channel.BLUE445, *blue_reset)]
    segs += _alternate(n_readout, readout, Channel.GREEN532, green)
    spec = {"kind": "repump", "n_readout": n_readout, "n_control": n_control,
            "readout": readout, "green": green, "blue": blue_reset,
            "repetitions": repetitions}
    return PulseSequence(segs, repetitions, spec)


def scan_grid(start: float, stop: float, step: float) -> np.ndarray:
    """Detuning grid from ``start`` towards ``stop`` in steps of ``|step|`` (GHz)."""
    if not (math.isfinite(start) and math.isfinite(stop) and math.isfinite(step)):
        raise SequenceError("scan bounds must be finite")
    span = stop - start
    if step == 0 or span == 0:
        raise SequenceError(f"degenerate scan: start={start}, stop={stop}, step={step}")
    n = int(math.floor(abs(span) / abs(step) + 1e-9)) + 1
    return start + math.copysign(abs(step), span) * np.arange(n)


def build_three_scan_ple_sequence(scan=(4.5, -7.2, 0.005, 10.0), blue=(28.5, 20.0),
                                  green=(100.0, 20.0), gate_detuning: float = DEFAULT_GATE_DETUNING_GHZ,
                                  readout_power: float = 2.0) -> PulseSequence:
    """Three PLE scans with a blue pulse after the first and a green pulse after the second.

    ``scan`` is ``(start_GHz, stop_GHz, step_GHz, dwell_ms)``. Every scan runs
    from start to stop; a control pulse is only fired while the tunable laser
    is parked at a detuning of at least ``gate_detuning`` in magnitude, either at
    the end of the previous scan or after retuning to the start of the next.
    """
    start, stop, step, dwell = (float(v) for v in scan)
    if not dwell > 0:
        raise SequenceError(f"dwell must be > 0, got {dwell}")
    grid = scan_grid(start, stop, step)
    blue, green = _pd(blue, "blue"), _pd(green, "green")
    if abs(stop) >= gate_detuning:
        parked = float(stop)
    elif abs(start) >= gate_detuning:
        parked = float(start)
    else:
        raise SequenceError(
            f"no scan endpoint reaches |detuning| >= {gate_detuning} GHz "
            f"(scan {start} -> {stop} GHz); control pulses cannot be gated"
        )

    def one_scan():
        return [_readout(readout_power, dwell, float(d)) for d in grid]

    segs = one_scan()
    segs.append(_control(Channel.BLUE445, *blue))
    segs += one_scan()
    segs.append(_control(Channel.GREEN532, *green))
    segs += one_scan()
    spec = {"kind": "three_scan_ple", "scan": (start, stop, step, dwell),
            "blue": blue, "green": green, "gate_detuning": float(gate_detuning),
            "readout_power": float(readout_power), "control_detuning": parked}
    return PulseSequence(segs, 1, spec)


def validate(seq: PulseSequence) -> list[str]:
    """Return a list of human-readable violations; empty means the sequence is usable."""
    problems = []
    if not isinstance(seq.repetitions, int) or isinstance(seq.repetitions, bool) or seq.repetitions < 1:
        problems.append(f"repetitions: must be a positive integer, got {seq.repetitions!r}")
    if not seq.segments:
        problems.append("segments: sequence is empty")
    for i, seg in enumerate(seq.segments):
        where = f"segments[{i}]"
        if not isinstance(seg.channel, Channel):
            problems.append(f"{where}.channel: simultaneous or unknown channels {seg.channel!r}")
            continue
        if not isinstance(seg.role, Role):
            problems.append(f"{where}.role: unknown role {seg.role!r}")
            continue
        if not (math.isfinite(seg.duration) and seg.duration > 0):
            problems.append(f"{where}.duration: must be > 0, got {seg.duration!r}")
        if not (math.isfinite(seg.power) and seg.power >= 0):
            problems.append(f"{where}.power: must be >= 0, got {seg.power!r}")
        if seg.role is Role.READOUT and seg.channel is not Channel.RESONANT:
            problems.append(f"{where}.role: readout on non-resonant channel {seg.channel.value}")
        if seg.channel is not Channel.RESONANT and seg.detuning != 0:
            problems.append(f"{where}.detuning: only the resonant channel carries a detuning")
    return problems


# -- config serialization ---------------------------------------------------

def _pair_dict(pair):
    return {"power": float(pair[0]), "duration": float(pair[1])}


def sequence_to_dict(seq: PulseSequence) -> dict:
    """Config-document form of a sequence (durations in ms for builder kinds)."""
    spec = seq.spec
    if spec is None:
        return {
            "kind": "explicit",
            "repetitions": seq.repetitions,
            "segments": [
                {"channel": s.channel.value, "power": float(s.power),
                 "duration_s": float(s.duration), "role": s.role.value,
                 "detuning": float(s.detuning)}
                for s in seq.segments
            ],
        }
    kind = spec["kind"]
    if kind in ("shelving", "repump"):
        return {"kind": kind, "n_readout": spec["n_readout"], "n_control": spec["n_control"],
                "repetitions": spec["repetitions"],
                "readout": _pair_dict(spec["readout"]), "blue": _pair_dict(spec["blue"]),
                "green": _pair_dict(spec["green"])}
    if kind == "three_scan_ple":
        start, stop, step, dwell = spec["scan"]
        return {"kind": kind,
                "scan": {"start": start, "stop": stop, "step": step, "dwell": dwell},
                "blue": _pair_dict(spec["blue"]), "green": _pair_dict(spec["green"]),
                "gate_detuning": spec["gate_detuning"], "readout_power": spec["readout_power"]}
    raise SequenceError(f"unknown sequence kind {kind!r}")


def sequence_from_dict(d: dict) -> PulseSequence:
    kind = d["kind"]
    pair = lambda key: (d[key]["power"], d[key]["duration"])  # noqa: E731
    if kind == "shelving":
        return build_shelving_sequence(d["n_readout"], d["n_control"], pair("readout"),
                                       pair("blue"), pair("green"), d.get("repetitions", 1))
    if kind == "repump":
        return build_repump_sequence(d["n_readout"], d["n_control"], pair("readout"),
                                     pair("green"), pair("blue"), d.get("repetitions", 1))
    if kind == "three_scan_ple":
        sc = d["scan"]
        return build_three_scan_ple_sequence((sc["start"], sc["stop"], sc["step"], sc["dwell"]),
                                             pair("blue"), pair("green"), d["gate_detuning"],
                                             d.get("readout_power", 2.0))
    if kind == "explicit":
        segs = [PulseSegment(Channel(s["channel"]), float(s["power"]), float(s["duration_s"]),
                             Role(s["role"]), float(s.get("detuning", 0.0)))
                for s in d["segments"]]
        return PulseSequence(segs, int(d.get("repetitions", 1)))
    raise SequenceError(f"unknown sequence kind {kind!r}")
