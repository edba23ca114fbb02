import pytest
from hypothesis import given
from hypothesis import strategies as st

from shared_cacc.dynamics import AuthorityPair
from shared_cacc.fusion import (Constant, DirectTakeover, LinearGradient, authority_at,
                                authority_sequence, fuse, fused_sequence, schedule_from_dict,
                                schedule_to_dict)

cmd = st.floats(-10, 10, allow_nan=False)
times = st.floats(0, 100, allow_nan=False)


def test_linear_gradient_midpoint():
    assert authority_at(LinearGradient(0.0, 10.0), 5.0) == AuthorityPair(0.5, 0.5)


def test_constant_allocation():
    for t in (0.0, 3.3, 1e4):
        assert authority_at(Constant(0.3), t) == AuthorityPair(0.3, 0.7)


def test_direct_takeover_step():
    s = DirectTakeover(2.0)
    assert authority_at(s, 1.9) == AuthorityPair(0.0, 1.0)
    assert authority_at(s, 2.1) == AuthorityPair(1.0, 0.0)


def test_negative_time_rejected():
    with pytest.raises(ValueError):
        authority_at(Constant(0.5), -0.1)


def test_schedule_validation():
    with pytest.raises(ValueError):
        Constant(1.5)
    with pytest.raises(ValueError):
        LinearGradient(0.0, 0.0)


def test_fuse_examples():
    assert fuse(-2.0, 1.0, AuthorityPair(0.3, 0.7)) == pytest.approx(0.1, abs=1e-15)
    assert fuse(-2.5, 1.0, AuthorityPair(1.0, 0.0)) == -2.5
    assert fuse(0.7, 0.7, AuthorityPair.human(0.123)) == 0.7


def test_schedule_round_trip():
    for s in (Constant(0.3), LinearGradient(1.0, 4.0), DirectTakeover(7.0)):
        assert schedule_from_dict(schedule_to_dict(s)) == s
    with pytest.raises(ValueError, match="unknown authority schedule kind"):
        schedule_from_dict({"kind": "ramp"})
    with pytest.raises(ValueError, match="unknown field"):
        schedule_from_dict({"kind": "constant", "alpha_h": 0.2, "beta": 1})


def test_authority_sequence_and_fused_sequence():
    seq = authority_sequence(LinearGradient(0.0, 1.0), 0.0, 0.25, 5)
    assert [a.alpha_h for a in seq] == [0.0, 0.25, 0.5, 0.75, 1.0]
    out = fused_sequence([1.0, 1.0], [0.0, 2.0], [0.25, 0.5])
    assert list(out) == [0.25, 1.5]


@given(st.one_of(st.builds(Constant, st.floats(0, 1)),
                 st.builds(LinearGradient, times, st.floats(0.1, 50)),
                 st.builds(DirectTakeover, times)), times)
def test_authorities_partition_unity(schedule, t):
    a = authority_at(schedule, t)
    assert 0.0 <= a.alpha_h <= 1.0
    assert a.alpha_h + a.alpha_m == 1.0


@given(cmd, cmd, st.floats(0, 1))
def test_fuse_bounded_by_arguments(u_h, u_m, a_h):
    u = fuse(u_h, u_m, AuthorityPair.human(a_h))
    assert min(u_h, u_m) - 1e-12 <= u <= max(u_h, u_m) + 1e-12


@given(cmd, cmd, st.floats(0, 10), st.floats(0, 1))
def test_fuse_monotone(u_h, u_m, du, a_h):
    auth = AuthorityPair.human(a_h)
    assert fuse(u_h + du, u_m, auth) >= fuse(u_h, u_m, auth) - 1e-12
    assert fuse(u_h, u_m + du, auth) >= fuse(u_h, u_m, auth) - 1e-12


@given(times, st.floats(0.1, 50), times, st.floats(0, 20))
def test_linear_gradient_monotone(t0, dur, t, dt):
    s = LinearGradient(t0, dur)
    assert s.alpha_h_at(t + dt) >= s.alpha_h_at(t)
