import math

import pytest
from hypothesis import given, strategies as st

from pbvcharge.errors import SequenceError
from pbvcharge.pulses import (Channel, PulseSegment, PulseSequence, Role, build_repump_sequence,
                              build_shelving_sequence, build_three_scan_ple_sequence, scan_grid,
                              sequence_from_dict, sequence_to_dict, validate)

pair = st.tuples(st.floats(0.1, 200), st.floats(0.01, 50))


def channels(seq):
    return [s.channel for s in seq.segments]


def test_shelving_shape():
    seq = build_shelving_sequence(16, 15, (2, 1), (10, 0.5), (100, 5))
    assert len(seq.segments) == 32
    assert len(seq.readout_windows()) == 16
    assert len(build_shelving_sequence(1, 0).segments) == 2
    R, B, G = Channel.RESONANT, Channel.BLUE445, Channel.GREEN532
    assert channels(build_shelving_sequence(2, 1)) == [R, B, R, G]


def test_repump_shape():
    seq = build_repump_sequence(16, 15, (2, 1), (20, 5), (28.5, 10))
    assert len(seq.segments) == 32 and seq.segments[0].channel is Channel.BLUE445
    assert channels(build_repump_sequence(1, 0)) == [Channel.BLUE445, Channel.RESONANT]
    a, b = build_repump_sequence(4, 3), build_repump_sequence(5, 4)
    assert channels(b).count(Channel.GREEN532) == channels(a).count(Channel.GREEN532) + 1
    assert channels(b).count(Channel.RESONANT) == channels(a).count(Channel.RESONANT) + 1


def test_mismatched_counts():
    with pytest.raises(SequenceError):
        build_shelving_sequence(4, 1)


def test_three_scan_gating():
    seq = build_three_scan_ple_sequence()
    assert abs(seq.spec["control_detuning"]) >= 4.0
    controls = [s for s in seq.segments if s.role is Role.CONTROL]
    assert [s.channel for s in controls] == [Channel.BLUE445, Channel.GREEN532]
    with pytest.raises(SequenceError):
        build_three_scan_ple_sequence((1.0, -1.0, 0.01, 1.0), gate_detuning=4.0)
    two = build_three_scan_ple_sequence((4.5, -7.2, -11.7, 1.0))
    assert len(two.readout_windows()) == 6


def test_validate():
    assert validate(build_shelving_sequence()) == []
    bad = PulseSequence([PulseSegment(Channel.RESONANT, 2, 0.0, Role.READOUT)])
    assert any("duration" in p for p in validate(bad))
    bad = PulseSequence([PulseSegment(Channel.BLUE445, 2, 1e-3, Role.READOUT)])
    assert any(p.startswith("segments[0].role") for p in validate(bad))


@given(st.integers(1, 20), pair, pair, pair, st.integers(1, 3))
def test_builders_roundtrip_and_duration(n, readout, ctrl, other, reps):
    for seq in (build_shelving_sequence(n, n - 1, readout, ctrl, other, reps),
                build_repump_sequence(n, n - 1, readout, ctrl, other, reps)):
        assert validate(seq) == []
        again = sequence_from_dict(sequence_to_dict(seq))
        assert again.segments == seq.segments and again.repetitions == seq.repetitions
        assert seq.duration == math.fsum(s.duration for s in seq.segments) * reps
        assert sum(1 for _ in seq.unrolled()) == len(seq.segments) * reps


def test_ple_roundtrip():
    seq = build_three_scan_ple_sequence((4.5, -7.2, 0.05, 1.0))
    assert validate(seq) == []
    assert sequence_from_dict(sequence_to_dict(seq)).segments == seq.segments


def test_explicit_roundtrip():
    seq = PulseSequence([PulseSegment(Channel.GREEN532, 50, 0.022, Role.CONTROL),
                         PulseSegment(Channel.RESONANT, 2, 1e-3, Role.READOUT, 0.1)], 2)
    again = sequence_from_dict(sequence_to_dict(seq))
    assert again.segments == seq.segments and again.repetitions == 2


def test_scan_grid():
    g = scan_grid(4.5, -7.2, 0.005)
    assert g[0] == 4.5 and g[-1] == pytest.approx(-7.2) and len(g) == 2341
    with pytest.raises(SequenceError):
        scan_grid(0, 1, 0)
