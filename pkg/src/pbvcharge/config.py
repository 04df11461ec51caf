"""Experiment configuration: YAML document <-> validated dataclasses.

Every section maps onto a dataclass; unknown keys are rejected and every
error names the dotted path of the offending key. ``rates.k_repump`` has no
default and must always be given.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import typing
from dataclasses import dataclass, field

import yaml

from .errors import ConfigError, PbvError
from .lineshape import LineShape
from .mechanism import TransitionThresholds
from .pulses import sequence_from_dict, validate
from .rates import RateParams
from .simulate import EmissionParams


@dataclass(frozen=True)
class PowerDuration:
    power: float
    duration: float     # ms


@dataclass(frozen=True)
class ScanConfig:
    start: float = 4.5          # GHz
    stop: float = -7.2          # GHz
    step: float = 0.002         # GHz
    dwell: float = 10.0         # ms
    gate_detuning: float = 4.0  # GHz
    readout_power: float = 2.0  # nW
    blue: PowerDuration = PowerDuration(28.5, 20.0)
    green: PowerDuration = PowerDuration(100.0, 20.0)
    mode: str = "mean"


@dataclass(frozen=True)
class ShelvingRunConfig:
    powers: tuple = (5.0, 10.0, 20.0, 28.5)          # uW
    durations: tuple = (2.0, 1.0, 0.5, 0.35)          # ms per blue pulse, one per power
    n_reps: int = 500
    n_readout: int = 16
    readout: PowerDuration = PowerDuration(2.0, 1.0)
    green_init: PowerDuration = PowerDuration(100.0, 5.0)


@dataclass(frozen=True)
class RepumpRunConfig:
    powers: tuple = (10.0, 20.0, 40.0, 80.0)          # uW
    durations: tuple = (60.0, 15.0, 3.5, 0.9)         # ms per green pulse, one per power
    n_reps: int = 500
    n_readout: int = 16
    readout: PowerDuration = PowerDuration(2.0, 1.0)
    blue_reset: PowerDuration = PowerDuration(28.5, 10.0)


@dataclass(frozen=True)
class PopulationRunConfig:
    powers: tuple = (10.0, 20.0, 35.0, 50.0, 100.0)    # uW
    durations: tuple = (0.0, 2.0, 5.0, 10.0, 22.0, 50.0)  # ms of green; 0 = no green pulse
    n_reps: int = 1000
    threshold: int = 3
    readout: PowerDuration = PowerDuration(2.0, 1.0)
    blue_reset: PowerDuration = PowerDuration(28.5, 20.0)
    highlight: PowerDuration = PowerDuration(50.0, 22.0)


@dataclass(frozen=True)
class MechanismConfig:
    thresholds: TransitionThresholds = TransitionThresholds()
    max_order: int = 2


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "out"
    format: str = "csv"


def default_sequence() -> dict:
    return {"kind": "shelving", "n_readout": 16, "n_control": 15, "repetitions": 1,
            "readout": {"power": 2.0, "duration": 1.0},
            "blue": {"power": 10.0, "duration": 0.5},
            "green": {"power": 100.0, "duration": 5.0}}


@dataclass(frozen=True)
class ExperimentConfig:
    rates: RateParams
    emission: EmissionParams = EmissionParams()
    line: LineShape = LineShape()
    sequence: dict = field(default_factory=default_sequence)
    scan: ScanConfig = ScanConfig()
    fig2: ShelvingRunConfig = ShelvingRunConfig()
    fig3: RepumpRunConfig = RepumpRunConfig()
    fig4: PopulationRunConfig = PopulationRunConfig()
    mechanism: MechanismConfig = MechanismConfig()
    seed: int = 0
    n_reps: int = 1000
    output: OutputConfig = OutputConfig()


# -- generic dataclass builder ----------------------------------------------

def _join(path, key):
    return f"{path}.{key}" if path else str(key)


def _number(value, path, kind):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if kind is int:
        if int(value) != value:
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return int(value)
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(path, "must be finite")
    return value


def _convert(tp, value, path):
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, path)
    if tp in (float, int):
        return _number(value, path, tp)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected true/false, got {value!r}")
        return value
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    if tp is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(path, f"expected a list, got {value!r}")
        return tuple(_number(v, f"{path}[{i}]", float) for i, v in enumerate(value))
    if tp is dict:
        if not isinstance(value, dict):
            raise ConfigError(path, f"expected a mapping, got {value!r}")
        return value
    raise ConfigError(path, f"unsupported field type {tp!r}")


def _build(cls, data, path=""):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(path, f"expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    fields = {f.name: f for f in dataclasses.fields(cls)}
    for key in data:
        if key not in fields:
            raise ConfigError(_join(path, key), "unknown key")
    kwargs = {}
    for name, f in fields.items():
        sub = _join(path, name)
        if name in data:
            kwargs[name] = _convert(_resolve(hints[name]), data[name], sub)
        elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            raise ConfigError(sub, "required key missing")
    try:
        return cls(**kwargs)
    except PbvError as exc:
        if isinstance(exc, ConfigError):
            raise
        msg = str(exc)
        culprit = next((n for n in fields if msg.startswith(n + " ") or msg.startswith(n + "=")), None)
        raise ConfigError(_join(path, culprit) if culprit else path, msg) from None


def _resolve(tp):
    origin = typing.get_origin(tp)
    if origin is typing.Union or (origin is not None and str(origin) == "types.UnionType"):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        return args[0]
    return origin or tp


# -- sequence section ---------------------------------------------------------

_SEQUENCE_KEYS = {
    "shelving": {"kind", "n_readout", "n_control", "repetitions", "readout", "blue", "green"},
    "repump": {"kind", "n_readout", "n_control", "repetitions", "readout", "blue", "green"},
    "three_scan_ple": {"kind", "scan", "blue", "green", "gate_detuning", "readout_power"},
    "explicit": {"kind", "repetitions", "segments"},
}


def _check_pair(d, key, path):
    pd = _build(PowerDuration, d.get(key), _join(path, key))
    if pd.power < 0:
        raise ConfigError(_join(path, f"{key}.power"), f"must be >= 0, got {pd.power}")
    if pd.duration <= 0:
        raise ConfigError(_join(path, f"{key}.duration"), f"must be > 0, got {pd.duration}")


def check_sequence(d, path="sequence"):
    """Validate a sequence section and return the built sequence."""
    if not isinstance(d, dict):
        raise ConfigError(path, "expected a mapping")
    kind = d.get("kind")
    if kind not in _SEQUENCE_KEYS:
        raise ConfigError(_join(path, "kind"), f"must be one of {sorted(_SEQUENCE_KEYS)}, got {kind!r}")
    for key in d:
        if key not in _SEQUENCE_KEYS[kind]:
            raise ConfigError(_join(path, key), "unknown key")
    required = _SEQUENCE_KEYS[kind] - {"repetitions", "readout_power"}
    for key in sorted(required):
        if key not in d:
            raise ConfigError(_join(path, key), "required key missing")
    if kind in ("shelving", "repump"):
        for key in ("n_readout", "n_control", "repetitions"):
            if key in d:
                n = _number(d[key], _join(path, key), int)
                if n < (1 if key != "n_control" else 0):
                    raise ConfigError(_join(path, key), f"out of range: {n}")
        if d["n_readout"] != d["n_control"] + 1:
            raise ConfigError(_join(path, "n_readout"), "must equal n_control + 1")
        for key in ("readout", "blue", "green"):
            _check_pair(d, key, path)
    elif kind == "three_scan_ple":
        for key in ("blue", "green"):
            _check_pair(d, key, path)
        scan = d["scan"]
        if not isinstance(scan, dict) or set(scan) != {"start", "stop", "step", "dwell"}:
            raise ConfigError(_join(path, "scan"), "needs exactly start, stop, step, dwell")
        if _number(scan["dwell"], _join(path, "scan.dwell"), float) <= 0:
            raise ConfigError(_join(path, "scan.dwell"), "must be > 0")
    else:
        segs = d["segments"]
        if not isinstance(segs, list) or not segs:
            raise ConfigError(_join(path, "segments"), "expected a non-empty list")
        for i, s in enumerate(segs):
            sp = _join(path, f"segments[{i}]")
            if not isinstance(s, dict):
                raise ConfigError(sp, "expected a mapping")
            for key in s:
                if key not in {"channel", "power", "duration_s", "role", "detuning"}:
                    raise ConfigError(_join(sp, key), "unknown key")
            for key in ("channel", "power", "duration_s", "role"):
                if key not in s:
                    raise ConfigError(_join(sp, key), "required key missing")
            if _number(s["duration_s"], _join(sp, "duration_s"), float) <= 0:
                raise ConfigError(_join(sp, "duration_s"), f"must be > 0, got {s['duration_s']}")
    try:
        seq = sequence_from_dict(d)
    except (KeyError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from None
    problems = validate(seq)
    if problems:
        raise ConfigError(_join(path, problems[0].split(":")[0]), problems[0].split(":", 1)[1].strip())
    return seq


# -- public API -----------------------------------------------------------------

def _check_run_lists(cfg: ExperimentConfig):
    for name in ("fig2", "fig3"):
        run = getattr(cfg, name)
        if len(run.powers) != len(run.durations):
            raise ConfigError(f"{name}.durations", "needs one duration per power")
        for i, (p, d) in enumerate(zip(run.powers, run.durations)):
            if p <= 0:
                raise ConfigError(f"{name}.powers[{i}]", f"must be > 0, got {p}")
            if d <= 0:
                raise ConfigError(f"{name}.durations[{i}]", f"must be > 0, got {d}")
        if run.n_reps < 1:
            raise ConfigError(f"{name}.n_reps", "must be >= 1")
        if run.n_readout < 4:
            raise ConfigError(f"{name}.n_readout", "need at least 4 readouts to fit a decay")
    f4 = cfg.fig4
    for i, p in enumerate(f4.powers):
        if p <= 0:
            raise ConfigError(f"fig4.powers[{i}]", f"must be > 0, got {p}")
    for i, d in enumerate(f4.durations):
        if d < 0:
            raise ConfigError(f"fig4.durations[{i}]", f"must be >= 0, got {d}")
    if f4.n_reps < 1:
        raise ConfigError("fig4.n_reps", "must be >= 1")
    for section, run in (("fig2", cfg.fig2), ("fig3", cfg.fig3), ("fig4", cfg.fig4)):
        for key in ("readout", "green_init", "blue_reset", "highlight"):
            pd = getattr(run, key, None)
            if pd is None:
                continue
            if pd.power < 0:
                raise ConfigError(f"{section}.{key}.power", f"must be >= 0, got {pd.power}")
            if pd.duration <= 0:
                raise ConfigError(f"{section}.{key}.duration", f"must be > 0, got {pd.duration}")
    sc = cfg.scan
    if sc.dwell <= 0:
        raise ConfigError("scan.dwell", f"must be > 0, got {sc.dwell}")
    if sc.step == 0:
        raise ConfigError("scan.step", "must be non-zero")
    if sc.mode not in ("mean", "trajectory"):
        raise ConfigError("scan.mode", f"must be 'mean' or 'trajectory', got {sc.mode!r}")
    for key in ("blue", "green"):
        pd = getattr(sc, key)
        if pd.duration <= 0:
            raise ConfigError(f"scan.{key}.duration", f"must be > 0, got {pd.duration}")
    if cfg.output.format not in ("csv", "json"):
        raise ConfigError("output.format", f"must be csv or json, got {cfg.output.format!r}")
    if not 0 <= cfg.seed < 2 ** 64:
        raise ConfigError("seed", "must be in [0, 2**64)")
    if cfg.n_reps < 1:
        raise ConfigError("n_reps", "must be >= 1")
    if cfg.mechanism.max_order < 1:
        raise ConfigError("mechanism.max_order", "must be >= 1")


def config_from_dict(data) -> ExperimentConfig:
    cfg = _build(ExperimentConfig, data)
    check_sequence(cfg.sequence)
    _check_run_lists(cfg)
    return cfg


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a YAML config document."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("", f"malformed document: {exc}".replace("\n", " ")) from None
    return config_from_dict(data)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("", f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)


def _plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    return obj


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return _plain(cfg)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)


def config_hash(cfg: ExperimentConfig) -> str:
    canon = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()
