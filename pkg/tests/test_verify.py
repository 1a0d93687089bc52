"""Tests for the Monte Carlo verifier and its exact oracles."""

import math
from fractions import Fraction
from itertools import product

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lilbound import (
    CalibrationError,
    DomainError,
    TailEstimate,
    calibrate_constant,
    chaos_model,
    constant_norming,
    doob_moment_check,
    empirical_sup_tail,
    exact_sup_tail,
    hartman_wintner_probe,
    iterated_log_norming,
    lil_trajectory_stats,
    phi2,
    single_time_tail,
    weighted_iid_model,
    wilson_interval,
    worker_count,
)

CHAOS1 = chaos_model(1)
V1 = constant_norming(1.0)
V2 = iterated_log_norming(2.0)


def make_estimate(u_grid, ci_high, censored=None, paths=10000):
    """Hand-built TailEstimate for calibration paths; only the fields
    calibration reads are meaningful."""
    k = len(u_grid)
    censored = censored or (False,) * k
    return TailEstimate(
        u_grid=tuple(u_grid), w_hat=tuple(ci_high),
        w_plus_hat=tuple(ci_high), ci_low=(0.0,) * k,
        ci_high=tuple(ci_high), counts=(50,) * k, counts_plus=(50,) * k,
        censored=tuple(censored), horizon=64, paths=paths, seed=1,
        model_label="synthetic", norming_label="vr:2")


# ---------------------------------------------------------------------------
# exact enumeration
# ---------------------------------------------------------------------------

def test_exact_sup_tail_three_step_walk():
    ex = exact_sup_tail(CHAOS1, V1, 3, [0.9, -1.0, 1.5])
    assert ex.w == (Fraction(1, 2), Fraction(7, 8), Fraction(1, 8))
    assert ex.w_plus == (Fraction(1), Fraction(1), Fraction(1, 4))
    assert ex.horizon == 3


def test_exact_sup_tail_single_step_walk():
    ex = exact_sup_tail(CHAOS1, V1, 1, [-1.5, 0.0, 0.5])
    assert ex.w == (Fraction(1), Fraction(1, 2), Fraction(1, 2))
    assert ex.w_plus == (Fraction(1), Fraction(1), Fraction(1))


def test_exact_sup_tail_degree_two_unit_level():
    # at horizon 2 the only time is n = 2 where S = e1*e2 and sigma = 1,
    # so the two-sided statistic is identically 1/v(2)
    ex = exact_sup_tail(chaos_model(2), V1, 2, [0.5, 1.0])
    assert ex.w_plus == (Fraction(1), Fraction(0))
    assert ex.w == (Fraction(1, 2), Fraction(0))


def test_exact_sup_tail_guards():
    with pytest.raises(DomainError):
        exact_sup_tail(CHAOS1, V1, 21, [1.0])       # enumeration cap
    with pytest.raises(DomainError):
        exact_sup_tail(chaos_model(2), V1, 1, [1.0])  # before n_min
    with pytest.raises(DomainError):
        exact_sup_tail(weighted_iid_model(weibull_r=2.0), V1, 4, [1.0])


def test_exact_tail_serialization_keeps_fractions():
    d = exact_sup_tail(CHAOS1, V1, 3, [0.9]).to_dict()
    assert d["w_fraction"] == ["1/2"]
    assert d["w_hat"] == [0.5]


# ---------------------------------------------------------------------------
# single-time tails
# ---------------------------------------------------------------------------

def test_single_time_tail_matches_enumeration_for_walk():
    x = float(V2.evaluate(10))  # threshold 1 * v_2(10)
    got = single_time_tail(CHAOS1, 10, [x])
    signs = np.array(list(product((-1, 1), repeat=10)), dtype=np.int8)
    values, _ = CHAOS1.prefix_values(signs)
    direct = np.count_nonzero(
        values[:, -1] / math.sqrt(10.0) > x) / 1024.0
    assert got[0] == pytest.approx(direct, abs=1e-12)
    assert got[0] == pytest.approx(176.0 / 1024.0)


def test_single_time_tail_weighted_family():
    model = weighted_iid_model(beta=1.0)
    sigma3 = float(model.sigma_exact(3))
    got = single_time_tail(model, 3, [1.0])
    # S(3) support is +-{1,3,5,7}/8; only 7/8 and 5/8 exceed sigma(3)
    assert got[0] == pytest.approx(2.0 / 8.0)
    assert 5.0 / 8.0 > sigma3 > 3.0 / 8.0


def test_single_time_tail_rejects_unsupported_models():
    with pytest.raises(DomainError):
        single_time_tail(chaos_model(4), 6, [1.0])
    with pytest.raises(DomainError):
        single_time_tail(weighted_iid_model(weibull_r=2.0), 4, [1.0])


# ---------------------------------------------------------------------------
# Monte Carlo estimator
# ---------------------------------------------------------------------------

def test_empirical_sup_tail_agrees_with_exact_law():
    grid = [0.6, 1.0, 1.4, 1.8]
    ex = exact_sup_tail(CHAOS1, V1, 12, grid)
    est = empirical_sup_tail(CHAOS1, V1, 12, 20000, grid, seed=42)
    for w, lo, hi in zip(ex.w, est.ci_low, est.ci_high):
        assert lo <= float(w) <= hi
    assert est.paths == 20000
    assert not any(est.censored)


def test_empirical_sup_tail_deterministic_and_seed_sensitive():
    grid = [0.8, 1.2]
    a = empirical_sup_tail(CHAOS1, V2, 200, 3000, grid, seed=5)
    b = empirical_sup_tail(CHAOS1, V2, 200, 3000, grid, seed=5)
    c = empirical_sup_tail(CHAOS1, V2, 200, 3000, grid, seed=6)
    assert a.counts == b.counts
    assert a.counts_plus == b.counts_plus
    assert a.counts != c.counts


def test_empirical_sup_tail_worker_count_invariance(monkeypatch):
    grid = [0.7, 1.1, 1.6]
    monkeypatch.setenv("LILBOUND_THREADS", "1")
    serial = empirical_sup_tail(CHAOS1, V2, 300, 5000, grid, seed=9)
    monkeypatch.setenv("LILBOUND_THREADS", "4")
    threaded = empirical_sup_tail(CHAOS1, V2, 300, 5000, grid, seed=9)
    assert serial.counts == threaded.counts
    assert serial.counts_plus == threaded.counts_plus


def test_empirical_sup_tail_two_sided_envelope():
    est = empirical_sup_tail(CHAOS1, V1, 64, 8000, [0.8, 1.3, 2.0], seed=3)
    for w, wp, censored in zip(est.w_hat, est.w_plus_hat, est.censored):
        assert wp >= w
        if not censored:
            se = math.sqrt(w * (1.0 - w) / est.paths)
            assert wp <= 2.0 * w + 3.0 * se


def test_empirical_sup_tail_censoring_flags():
    est = empirical_sup_tail(CHAOS1, V1, 32, 2000, [0.5, 30.0], seed=1)
    assert not est.censored[0]
    assert est.censored[1]
    assert est.counts[1] < 10


def test_empirical_sup_tail_guards():
    with pytest.raises(DomainError):
        empirical_sup_tail(CHAOS1, V1, 64, 999, [1.0], seed=1)
    with pytest.raises(DomainError):
        empirical_sup_tail(chaos_model(3), V1, 2, 2000, [1.0], seed=1)
    with pytest.raises(DomainError):
        empirical_sup_tail(CHAOS1, V1, 64, 2000, [], seed=1)


def test_worker_count_env_override(monkeypatch):
    monkeypatch.setenv("LILBOUND_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("LILBOUND_THREADS", "0")
    assert worker_count() >= 1
    monkeypatch.delenv("LILBOUND_THREADS")
    assert worker_count() >= 1


# ---------------------------------------------------------------------------
# Wilson intervals
# ---------------------------------------------------------------------------

def test_wilson_interval_edge_counts():
    lo, hi = wilson_interval(0, 100)
    assert lo == 0.0 and 0.0 < hi < 0.1
    lo, hi = wilson_interval(100, 100)
    assert 0.9 < lo < 1.0 and hi == 1.0


@given(count=st.integers(0, 500), total=st.integers(500, 2000))
def test_wilson_interval_brackets_the_point_estimate(count, total):
    lo, hi = wilson_interval(count, total)
    p = count / total
    assert 0.0 <= lo <= p <= hi <= 1.0


# ---------------------------------------------------------------------------
# calibration
# ---------------------------------------------------------------------------

def test_calibrate_constant_against_real_run():
    model = CHAOS1
    est = empirical_sup_tail(model, V2, 1024, 5000, [2.0, 2.5, 3.0], seed=8)
    assert not any(est.censored)
    sigma = model.sigma_profile()
    cal = calibrate_constant(est, V2, sigma, model.phi)
    assert 0.01 <= cal.c_hat <= 100.0
    assert not cal.capped
    assert cal.margin >= 1.0
    # maximality: nudging the constant up by more than the bisection
    # tolerance must break dominance
    from lilbound import optimized_bound
    pushed = optimized_bound(V2, sigma, model.phi,
                             np.array(est.u_grid), C=1.02 * cal.c_hat)
    assert any(q < hi for q, hi in zip(pushed.q_sums, est.ci_high))
    # dominance on the full grid at the calibrated constant
    assert all(b >= hi for b, hi in zip(cal.bound_values, est.ci_high))


def test_calibrate_constant_error_when_floor_fails():
    sigma = CHAOS1.sigma_profile()
    est = make_estimate([500.0], [0.9])
    with pytest.raises(CalibrationError):
        calibrate_constant(est, V2, sigma, phi2())


def test_calibrate_constant_caps_at_hundred():
    sigma = CHAOS1.sigma_profile()
    est = make_estimate([0.02], [0.5])
    cal = calibrate_constant(est, V2, sigma, phi2())
    assert cal.capped
    assert cal.c_hat == 100.0


def test_calibrate_constant_needs_uncensored_cells():
    sigma = CHAOS1.sigma_profile()
    est = make_estimate([2.0], [0.1], censored=(True,))
    with pytest.raises(CalibrationError):
        calibrate_constant(est, V2, sigma, phi2())


# ---------------------------------------------------------------------------
# proof-step diagnostics
# ---------------------------------------------------------------------------

def test_doob_moment_ratios_frozen():
    r1 = doob_moment_check(CHAOS1, 2)
    assert r1.ratio == pytest.approx(1.25, abs=1e-12)
    r2 = doob_moment_check(chaos_model(2), 6)
    assert r2.ratio == pytest.approx(1.3604166666666666, abs=1e-12)
    r3 = doob_moment_check(weighted_iid_model(beta=1.0), 8)
    assert r3.ratio == pytest.approx(1.4285323443579767, abs=1e-12)
    for rep in (r1, r2, r3):
        assert rep.passed and rep.ratio <= rep.limit == 4.0


def test_doob_moment_check_guards():
    with pytest.raises(DomainError):
        doob_moment_check(CHAOS1, 13)
    with pytest.raises(DomainError):
        doob_moment_check(CHAOS1, 4, p=1.0)
    with pytest.raises(DomainError):
        doob_moment_check(weighted_iid_model(weibull_r=2.0), 4)


def test_trajectory_stats_matched_seed_monotonicity():
    short = lil_trajectory_stats(1, 256, 400, seed=12)
    longer = lil_trajectory_stats(1, 512, 400, seed=12)
    assert longer.median >= short.median
    assert short.q25 <= short.median <= short.q75
    assert short.reference == pytest.approx(math.sqrt(2.0))
    assert lil_trajectory_stats(2, 64, 400, seed=1).reference == 1.0


def test_trajectory_stats_guards():
    with pytest.raises(DomainError):
        lil_trajectory_stats(4, 256, 400, seed=1)
    with pytest.raises(DomainError):
        lil_trajectory_stats(1, 2, 400, seed=1)


def test_hartman_wintner_probe_structure():
    probe = hartman_wintner_probe(128, 400, seed=7)
    assert probe.squares_exact
    assert 0.0 < probe.theta1_q25 <= probe.theta1_median <= probe.theta1_q75
    assert isinstance(probe.in_band, bool)
    with pytest.raises(DomainError):
        hartman_wintner_probe(4, 400, seed=7)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def test_tail_estimate_serialization_contract():
    est = empirical_sup_tail(CHAOS1, V1, 16, 1500, [1.0], seed=2)
    d = est.to_dict()
    assert set(d) == {"u", "w_hat", "w_plus_hat", "ci_low", "ci_high",
                      "counts", "counts_plus", "censored", "horizon",
                      "paths", "seed", "model", "norming"}
    assert d["model"] == "chaos:d=1"
