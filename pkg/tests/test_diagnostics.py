import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import build, linear_model
from reltransport import AnalysisDataset, ModelSpec
from reltransport.diagnostics import StratumMeans, check_restriction, compat_check, positivity_report
from reltransport.errors import DatasetError

LOGIT_X = ModelSpec("bernoulli", "logit", ("x",))


def test_r1_zero_when_arms_coincide():
    ds = build([(1, 1, 0, None, 10, 0.3), (1, 0, 0, None, 10, 0.3),
                (1, 1, 1, None, 10, 0.6), (1, 0, 1, None, 10, 0.6), (0, 0, 0, None, 5, 0.4)])
    res = check_restriction(ds, "R1", LOGIT_X, B=0)
    assert abs(res.statistic) <= 1e-12


def test_r1_worked_case():
    ds = build([(1, 1, 0, None, 2, 0.5), (1, 0, 0, None, 2, 0.5),
                (0, 0, 0, None, 6, 0.5), (0, 0, 1, None, 4, 0.5)])
    first, second = linear_model(0.2, 0.1), linear_model(0.1, 0.1)
    res = check_restriction(ds, "R1", models=(first, second))
    assert res.statistic == pytest.approx(0.1, abs=1e-15)
    assert res.bootstrap_interval is None


def test_r2_constant_shift_is_exact():
    ds = build([(1, 1, 0, None, 2, 0.5), (1, 0, 0, None, 2, 0.5),
                (0, 0, 0, None, 6, 0.5), (0, 0, 1, None, 4, 0.5)])
    g = linear_model(0.25, 0.5)
    shifted = linear_model(0.25 + 0.5, 0.5)
    assert check_restriction(ds, "R2", models=(shifted, g)).statistic == 0.5
    assert check_restriction(ds, "R2", models=(g, g)).statistic == 0.0


def test_r2_zero_for_identical_fits_and_interval():
    # trial controls and target rows share the same (x, y) layout
    cells = [(0, 60, 0.2), (1, 60, 0.5)]
    ds = build([(1, 1, x, None, n, min(1.0, p + 0.1)) for x, n, p in cells]
               + [(1, 0, x, None, n, p) for x, n, p in cells]
               + [(0, 0, x, None, n, p) for x, n, p in cells])
    res = check_restriction(ds, "R2", LOGIT_X, B=50, seed=1)
    assert res.statistic == 0.0
    iv = res.bootstrap_interval
    assert iv.lower <= 0.0 <= iv.upper and "no evidence" in res.interpretation


def coin_flip_data(n=4000, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n)
    s = rng.integers(0, 2, n)
    a = np.where(s == 1, rng.integers(0, 2, n), 0)
    s[:2], a[:2] = 1, [0, 1]
    s[2] = 0
    a[2] = 0
    y = (rng.random(n) < 0.3).astype(float)
    return AnalysisDataset(x[:, None], s, a, y, ("x",))


def test_coin_flip_participation():
    rep = positivity_report(coin_flip_data())
    assert abs(rep.participation.median - 0.5) <= 0.05
    assert abs(rep.trial_treatment.median - 0.5) <= 0.05


def test_all_target_controls_degenerate():
    rep = positivity_report(coin_flip_data())
    tc = rep.target_control
    assert tc.degenerate and "degenerate" in tc.note
    assert tc.minimum == tc.median == 1.0
    assert tc.flagged_rows == ()


def test_engineered_low_probability_region_is_flagged():
    # target rows with x = 1 are almost never in the trial
    rng = np.random.default_rng(3)
    n = 3000
    x = rng.integers(0, 2, n).astype(float)
    p_trial = np.where(x == 1, 0.01, 0.5)
    s = (rng.random(n) < p_trial).astype(int)
    a = np.where(s == 1, rng.integers(0, 2, n), 0)
    y = (rng.random(n) < 0.4).astype(float)
    ds = AnalysisDataset(x[:, None], s, a, y, ("x",))
    rep = positivity_report(ds, threshold=0.05)
    flagged = set(rep.participation.flagged_rows)
    region = set(np.flatnonzero((x == 1) & (s == 0)).tolist())
    assert flagged == region
    assert set(rep.flagged_rows) >= region
    d = rep.to_dict()
    assert set(d) == {"threshold", "A6", "A3", "B2_C2", "flagged_rows"}


def test_probabilities_in_unit_interval():
    rep = positivity_report(coin_flip_data(800, seed=5))
    for summary in (rep.participation, rep.trial_treatment, rep.target_control):
        assert 0.0 <= summary.minimum <= summary.p01 <= summary.median <= 1.0


@pytest.mark.parametrize("means, flags", [
    ((2, 1, 4, 2), (True, False, False, False)),
    ((3, 3, 5, 5), (True, True, True, False)),
    ((2, 1, 2, 1), (True, True, False, True)),
])
def test_compat_examples(means, flags):
    rep = compat_check([StratumMeans(*means)])
    f = rep.strata[0]
    assert (f.holds_A4, f.holds_A4star, f.holds_I1, f.holds_I2) == flags
    assert rep.theorem_satisfied


def test_compat_zero_control_mean():
    with pytest.raises(DatasetError):
        compat_check([StratumMeans(1, 0, 1, 1)])


def test_compat_tolerance():
    rep = compat_check([StratumMeans(2.0, 1.0, 4.0 + 1e-9, 2.0)], tol=1e-6)
    assert rep.strata[0].holds_A4


def _both_conditions(rng):
    """Random rational tuple satisfying ratio and difference transportability."""
    def q():
        return Fraction(rng.randint(1, 500), rng.randint(1, 50))

    e10 = q()
    if rng.random() < 0.5:
        rho, e00 = Fraction(1), q()
    else:
        rho, e00 = q(), e10
    return StratumMeans(rho * e10, e10, rho * e00, e00)


def test_compat_theorem_on_random_rationals():
    rng = random.Random(20240611)
    for _ in range(10_000):
        m = _both_conditions(rng)
        rep = compat_check([m])
        f = rep.strata[0]
        assert f.holds_A4 and f.holds_A4star
        assert f.holds_I1 or f.holds_I2
        assert rep.theorem_satisfied


positive = st.fractions(min_value=Fraction(1, 50), max_value=100, max_denominator=60)


@given(positive, positive, positive, positive)
@settings(max_examples=300, deadline=None)
def test_compat_theorem_never_fails(e11, e10, e01, e00):
    assert compat_check([StratumMeans(e11, e10, e01, e00)]).theorem_satisfied
