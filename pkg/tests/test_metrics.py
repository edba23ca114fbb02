import math
import warnings
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shared_cacc import metrics
from shared_cacc.metrics import (SweepRow, acceleration_range, evaluate_authority,
                                 influence_duration, min_gap_and_distribution, moe_report,
                                 odd_sweep, propagation_rate)
from shared_cacc.simulator import TrajectoryLog, run


def synthetic(gap=None, accel=None, speed=None, dt=0.1, onset=None, period=None, collision=False):
    """Log with one leader column plus the given follower columns."""
    cols = [np.asarray(c, float) for c in (gap, accel, speed) if c is not None]
    n_rows, n_f = cols[0].shape
    blank = lambda: np.full((n_rows, n_f + 1), np.nan)

    def full(a, fill=0.0):
        out = np.full((n_rows, n_f + 1), fill)
        if a is not None:
            out[:, 1:] = a
        return out

    return TrajectoryLog(
        t=np.arange(n_rows) * dt, position=blank(), speed=full(speed, 10.0), accel=full(accel),
        gap=full(gap, 7.0), dv=blank(), u_h=blank(), u_m=blank(), u_fused=blank(), alpha_h=blank(),
        violation=np.zeros((n_rows, n_f + 1), bool), human_violation=np.zeros((n_rows, n_f + 1), bool),
        collision=collision, dt=dt, disturbance_onset=onset, leader_period=period)


def test_propagation_rate_examples():
    # rows: equilibrium at onset, then the window
    gap = np.array([[5.0, 5.0], [7.0, 6.0], [7.0, 6.0]])
    log = synthetic(gap=gap, onset=0.0)
    assert propagation_rate(log, 2, (0.1, 0.2)) == pytest.approx(0.5)
    same = synthetic(gap=np.array([[5.0, 5.0], [6.0, 6.0], [4.0, 4.0]]), onset=0.0)
    assert propagation_rate(same, 2, (0.1, 0.2)) == 1.0


def test_propagation_rate_without_upstream_oscillation():
    log = synthetic(gap=np.array([[5.0, 5.0], [5.0, 6.0]]), onset=0.0)
    assert propagation_rate(log, 2, (0.1, 0.1)) == math.inf


def test_propagation_rate_errors():
    log = synthetic(gap=np.ones((5, 2)), onset=0.0)
    with pytest.raises(ValueError):
        propagation_rate(log, 1, (0.0, 0.2))
    with pytest.raises(ValueError):
        propagation_rate(log, 3, (0.0, 0.2))
    with pytest.raises(ValueError):
        propagation_rate(log, 2, (0.0, 5.0))
    with pytest.raises(ValueError, match="no periodic disturbance"):
        propagation_rate(log, 2)


@given(st.integers(0, 2**32 - 1), st.floats(-50, 50))
def test_theta_offset_invariance(seed, c):
    rng = np.random.default_rng(seed)
    gap = rng.normal(10, 1, (30, 2))
    a = synthetic(gap=gap, onset=0.0)
    b = synthetic(gap=gap + c, onset=0.0)
    assert propagation_rate(a, 2, (0.5, 2.5)) == pytest.approx(propagation_rate(b, 2, (0.5, 2.5)), rel=1e-9)


@given(st.integers(0, 2**32 - 1))
def test_theta_of_a_series_against_itself(seed):
    g = np.random.default_rng(seed).normal(10, 1, 30)
    log = synthetic(gap=np.column_stack([g, g]), onset=0.0)
    assert propagation_rate(log, 2, (0.5, 2.5)) == pytest.approx(1.0, rel=1e-15)


def test_acceleration_range():
    log = synthetic(accel=np.array([[0.0], [-1.0], [2.0], [0.5]]))
    assert acceleration_range(log, 1, (0.1, 0.2)) == 3.0
    assert acceleration_range(synthetic(accel=np.zeros((10, 2))), 2) == 0.0
    with pytest.raises(ValueError):
        acceleration_range(log, 1, (0.25, 0.28))


def test_gap_statistics():
    st_ = min_gap_and_distribution(synthetic(gap=np.full((10, 1), 7.0)), 1)
    assert st_ == (7.0, 0.0, False)
    hit = synthetic(gap=np.array([[7.0], [3.0], [-0.2]]), collision=True)
    st_ = min_gap_and_distribution(hit, 1)
    assert st_.min_gap <= 0 and st_.collision
    assert st_.gap_range == pytest.approx(7.2)


def test_influence_duration_synthetic_pulse():
    dt = 0.1
    v = np.full(400, 10.0)
    v[100:150] = 11.0              # 5 s pulse starting at the onset
    log = synthetic(speed=v[:, None], dt=dt, onset=10.0, period=5.0)
    d = influence_duration(log)
    assert not d.censored
    assert d.seconds == pytest.approx(5.0, abs=dt)


def test_influence_duration_no_disturbance_and_censored():
    assert influence_duration(synthetic(speed=np.full((20, 1), 10.0))).seconds == 0.0
    v = np.full(200, 10.0)
    v[50:] = 12.0
    d = influence_duration(synthetic(speed=v[:, None], onset=5.0, period=2.0))
    assert d.censored and d.seconds == pytest.approx(14.9)
    with pytest.raises(ValueError):
        influence_duration(synthetic(speed=v[:, None], onset=5.0, period=2.0), threshold=0.0)


def test_moe_report_equilibrium(case1_equilibrium):
    rep = moe_report(run(replace(case1_equilibrium, duration=10.0)))
    assert rep.accel_range == [0.0] * 6
    assert rep.gap_range == [0.0] * 6
    assert rep.min_gap == [7.0] * 6
    assert rep.influence_duration == 0.0
    d = rep.to_dict()
    assert d["max_theta"] is None and d["string_stable"] is None


def test_moe_report_serialises_infinities():
    gap = np.array([[5.0, 5.0]] + [[5.0, 6.0]] * 9)
    rep = moe_report(synthetic(gap=gap, onset=0.0, period=0.1))
    assert rep.theta[1] == math.inf and rep.to_dict()["theta"][1] is None


def test_machine_only_case2_attenuates(case2):
    row = evaluate_authority(case2, 0.0)
    assert row.stable and all(th < 1.0 for th in row.theta)


def test_sweep_brackets_the_threshold(case2):
    res = odd_sweep(case2, [0.2, 0.4], tol=0.05)
    assert [r.stable for r in res.rows] == [True, False]
    assert 0.2 < res.threshold < 0.4
    assert res.bracket[1] - res.bracket[0] <= 0.05


def test_sweep_grid_validation(case2):
    with pytest.raises(ValueError):
        odd_sweep(case2, [0.5])
    with pytest.raises(ValueError):
        odd_sweep(case2, [0.0, 1.5])


def _fake_rows(monkeypatch, pattern):
    def fake(base, a, window=None):
        stable = pattern(a)
        return SweepRow(a, 0.5 if stable else 1.5, stable, False, (0.5,))
    monkeypatch.setattr(metrics, "evaluate_authority", fake)


def test_sweep_bisection_and_flip_warning(monkeypatch, case2):
    _fake_rows(monkeypatch, lambda a: a < 0.37)
    res = odd_sweep(case2, [0.0, 0.5, 1.0], tol=0.005)
    assert res.bracket[0] < 0.37 <= res.bracket[1] and res.bracket[1] - res.bracket[0] <= 0.005
    assert not res.warnings

    _fake_rows(monkeypatch, lambda a: a < 0.3 or a > 0.7)
    with pytest.warns(RuntimeWarning, match="flips 2 times"):
        res = odd_sweep(case2, [0.0, 0.5, 1.0])
    assert res.warnings

    _fake_rows(monkeypatch, lambda a: True)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        res = odd_sweep(case2, [0.0, 1.0])
    assert res.threshold is None and res.message == "no threshold in range"
