import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from scipy.integrate import trapezoid

from pbvcharge.errors import DomainError
from pbvcharge.rates import (Illumination, RateParams, evolve_population, mean_bright_occupancy,
                             repump_rate, shelving_rate, steady_state_bright)

from oracles import HALF_LIFE_P, P_SS_DEFAULT

P = RateParams(k_repump=0.05)
rates_ = st.floats(0, 1e4)
prob = st.floats(0, 1)


def test_shelving_examples():
    assert shelving_rate(P, Illumination(blue_power=10)) == pytest.approx(320.0)
    assert shelving_rate(P, Illumination(blue_power=28.5)) == pytest.approx(912.0)
    assert shelving_rate(P, Illumination()) == 0.0
    assert repump_rate(P, Illumination()) == 0.0


def test_repump_examples():
    assert repump_rate(P, Illumination(green_power=20)) == pytest.approx(20.0)
    p = RateParams(k_repump=1.3, repump_exponent=1.81)
    r = repump_rate(p, Illumination(green_power=28)) / repump_rate(p, Illumination(green_power=14))
    assert r == pytest.approx(2 ** 1.81) and round(r, 2) == 3.51


@given(st.floats(1e-3, 1e3))
def test_shelving_linear(power):
    assert shelving_rate(P, Illumination(blue_power=2 * power)) == pytest.approx(
        2 * shelving_rate(P, Illumination(blue_power=power)), rel=1e-13)


@given(st.floats(1e-2, 1e3), st.floats(1e-2, 1e3), st.floats(0.5, 3.0))
def test_repump_loglog_slope(p1, p2, n):
    assume(abs(math.log(p2 / p1)) > 1e-3)
    params = RateParams(k_repump=0.05, repump_exponent=n)
    r1 = repump_rate(params, Illumination(green_power=p1))
    r2 = repump_rate(params, Illumination(green_power=p2))
    assert math.log(r2 / r1) / math.log(p2 / p1) == pytest.approx(n, rel=1e-9)


def test_green_leak_gives_ceiling():
    illum = Illumination(green_power=50)
    a, b = shelving_rate(P, illum), repump_rate(P, illum)
    assert a == pytest.approx(0.1236 * b)
    assert steady_state_bright(a, b) == pytest.approx(P_SS_DEFAULT, abs=1e-12)
    assert abs(steady_state_bright(a, b) - 0.89) < 1e-4


def test_steady_state_examples():
    assert steady_state_bright(100, 300) == 0.75
    assert steady_state_bright(0, 5) == 1.0
    with pytest.raises(DomainError):
        steady_state_bright(0, 0)


def test_evolve_examples():
    assert evolve_population(0.0, 0.0, 1000.0, 693.1e-6) == pytest.approx(HALF_LIFE_P, rel=1e-12)
    assert evolve_population(0.3, 50, 60, 0.0) == 0.3
    pss = steady_state_bright(40, 70)
    assert evolve_population(pss, 40, 70, 0.37) == pytest.approx(pss, rel=1e-14)


@given(prob, rates_, rates_, st.floats(0, 10))
def test_evolve_bounded(p0, a, b, t):
    p = evolve_population(p0, a, b, t)
    assert 0.0 <= p <= 1.0


@given(prob, rates_, rates_, st.floats(0, 1), st.floats(0, 1))
def test_evolve_monotone_toward_steady_state(p0, a, b, t1, t2):
    assume(a + b > 0)
    t1, t2 = sorted((t1, t2))
    pss = steady_state_bright(a, b)
    d1 = abs(evolve_population(p0, a, b, t1) - pss)
    d2 = abs(evolve_population(p0, a, b, t2) - pss)
    assert d2 <= d1 + 1e-12


@given(prob, st.floats(1, 1e4), st.floats(0, 1e4), st.floats(1e-6, 1))
def test_mean_occupancy_matches_quadrature(p0, a, b, t):
    ts = np.linspace(0, t, 4001)
    vals = np.array([evolve_population(p0, a, b, x) for x in ts])
    avg = trapezoid(vals, ts) / t
    assert mean_bright_occupancy(p0, a, b, t) == pytest.approx(avg, abs=2e-4)


@pytest.mark.parametrize("field", ["k_shelve", "k_repump", "leak_ratio"])
def test_params_reject_negative(field):
    kw = {"k_repump": 0.05, field: -1.0}
    with pytest.raises(DomainError):
        RateParams(**kw)
    with pytest.raises(DomainError):
        Illumination(blue_power=-1)
