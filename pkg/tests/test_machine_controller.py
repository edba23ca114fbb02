import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shared_cacc import oracle
from shared_cacc.dynamics import FULL_MACHINE, AuthorityPair, discretize
from shared_cacc.errors import IllPosedProblemError
from shared_cacc.human_model import (CostWeights, ReferenceTrajectory, compute_feedforward,
                                     compute_gains, human_reaction)
from shared_cacc.machine_controller import (GmpcPlanner, PlannerConfig, QpProblem, assemble_qp,
                                            forecast_predecessor, plan, solve_kkt)
from shared_cacc.stacked_ops import assemble_stacked_human_law

from strategies import horizon_problems


def build(dyn, auth, w_h, refs_h, w_m, refs_m, x_1, a_p):
    K = len(refs_h)
    g = compute_gains(dyn, auth, w_h, K, refs_h)
    law = assemble_stacked_human_law(g, w_h, refs_h)
    q_m = np.column_stack([w_m.q_v, w_m.q_g])[:K] * refs_m.active
    qp = assemble_qp(x_1, a_p, law, g, dyn.C, q_m, w_m.r[:K - 1], refs_m.values)
    return g, law, qp


def roll(dyn, g, w_h, refs_h, x_1, U_m, a_p):
    ff = compute_feedforward(g, w_h, refs_h, U_m)
    X = [np.asarray(x_1, float)]
    for j in range(len(U_m)):
        u_h = human_reaction(g, ff, j + 1, X[-1], U_m[j])
        X.append(dyn.A @ X[-1] + g.B_h[j] * u_h + g.B_m[j] * U_m[j] + dyn.C[:, 0] * a_p[j])
    return np.array(X)


@st.composite
def game_problems(draw, K_max=6):
    dyn, auth, w_h, refs_h, x_1, _ = draw(horizon_problems(K_max=K_max, alpha_max=0.95, open_low=False))
    K = len(refs_h)
    rng = np.random.default_rng(draw(st.integers(0, 2**32 - 1)))
    q = rng.uniform(0.0, 5.0, (K, 2))
    q[:, 0] = np.maximum(q[:, 0], 0.1)
    w_m = CostWeights(q[:, 0], q[:, 1], np.exp(rng.uniform(np.log(0.1), np.log(10.0), K)))
    active = rng.random((K, 2)) < 0.7
    active[:, 0] = True
    refs_m = ReferenceTrajectory(np.column_stack([rng.normal(0, 1, K), rng.uniform(2, 20, K)]), active)
    a_p = rng.normal(0, 1, K - 1)
    return dyn, auth, w_h, refs_h, w_m, refs_m, x_1, a_p


# -- solve_kkt -------------------------------------------------------------

def test_kkt_min_norm_point():
    sol = solve_kkt(QpProblem(np.eye(2), np.zeros(2), np.array([[1.0, 1.0]]), np.array([2.0]), K=1))
    np.testing.assert_allclose(sol.z, [1.0, 1.0], atol=1e-14)
    np.testing.assert_allclose(sol.lam, [-1.0], atol=1e-14)
    np.testing.assert_allclose(sol.z + np.array([[1.0, 1.0]]).T @ sol.lam, 0.0, atol=1e-14)


def test_kkt_feasible_optimum():
    Dm = np.diag([1.0, 2.0, 3.0])
    z_star = np.array([1.0, 2.0, -1.0])
    Wm = np.array([[1.0, -1.0, 0.0]])
    sol = solve_kkt(QpProblem(Dm, -Dm @ z_star, Wm, Wm @ z_star, K=1))
    np.testing.assert_allclose(sol.z, z_star, atol=1e-13)
    np.testing.assert_allclose(sol.lam, 0.0, atol=1e-13)


def test_all_zero_machine_weights_are_ill_posed():
    K = 4
    dyn = discretize(0.1)
    w_h = CostWeights.constant(0.0, 1.0, 1.0, K)
    refs = ReferenceTrajectory.constant(K, None, 7.0)
    g, law, qp = build(dyn, [AuthorityPair.human(0.3)] * (K - 1), w_h, refs,
                       CostWeights.constant(0.0, 0.0, 0.0, K), ReferenceTrajectory.constant(K, 0.0, 7.0),
                       np.array([0.0, 7.0]), np.zeros(K - 1))
    with pytest.raises(IllPosedProblemError, match="all-zero Q_m"):
        solve_kkt(qp)


# -- assemble_qp -----------------------------------------------------------

def test_initial_condition_injection():
    K = 2
    w = CostWeights.constant(0.0, 0.0, 1.0, K)
    refs = ReferenceTrajectory.inactive(K)
    _, _, qp = build(discretize(0.1), [AuthorityPair.human(0.5)], w, refs,
                     CostWeights.constant(1.0, 0.0, 1.0, K), ReferenceTrajectory.constant(K, 0.0),
                     np.array([0.0, 10.0]), np.zeros(1))
    sol = solve_kkt(qp)
    np.testing.assert_allclose(sol.X[0], [0.0, 10.0], atol=1e-14)
    np.testing.assert_array_equal(qp.Zm[:2], [0.0, 10.0])


def test_no_human_authority_is_plain_machine_dynamics():
    K = 5
    dyn = discretize(0.1)
    w_h = CostWeights.constant(0.0, 1.0, 1.0, K)
    refs_h = ReferenceTrajectory.constant(K, None, 9.0)
    _, _, qp = build(dyn, [FULL_MACHINE] * (K - 1), w_h, refs_h,
                     CostWeights.constant(1.0, 0.1, 1.0, K), ReferenceTrajectory.constant(K, 0.0),
                     np.array([1.0, 10.0]), np.zeros(K - 1))
    Wx, Wu = qp.Wm[:, :2 * K], qp.Wm[:, 2 * K:]
    for k in range(1, K):
        np.testing.assert_array_equal(Wx[2 * k:2 * k + 2, 2 * (k - 1):2 * k], -dyn.A)
        np.testing.assert_array_equal(Wu[2 * k:2 * k + 2, k - 1], -dyn.B[:, 0])
    np.testing.assert_array_equal(qp.Zm[2:], 0.0)


def test_dimension_checks():
    K = 3
    dyn = discretize(0.1)
    w = CostWeights.constant(0, 1, 1, K)
    refs = ReferenceTrajectory.constant(K, None, 5.0)
    g = compute_gains(dyn, [AuthorityPair.human(0.5)] * 2, w, K, refs)
    law = assemble_stacked_human_law(g, w, refs)
    with pytest.raises(ValueError):
        assemble_qp(np.zeros(2), np.zeros(K), law, g, dyn.C, np.ones((K, 2)), np.ones(K - 1), np.zeros((K, 2)))
    with pytest.raises(ValueError):
        assemble_qp(np.zeros(2), np.zeros(K - 1), law, g, dyn.C, np.ones((K, 2)), np.ones(K), np.zeros((K, 2)))


@given(game_problems(), st.integers(0, 2**32 - 1))
def test_feasible_points_are_consistent_trajectories(p, seed):
    dyn, auth, w_h, refs_h, w_m, refs_m, x_1, a_p = p
    g, law, qp = build(*p)
    K = len(refs_h)
    # random point of the affine feasible set
    z0 = np.linalg.lstsq(qp.Wm, qp.Zm, rcond=None)[0]
    _, s, Vt = np.linalg.svd(qp.Wm)
    N = Vt[len(s):].T
    z = z0 + N @ np.random.default_rng(seed).normal(size=N.shape[1])
    X, U_m = qp.split(z)
    Xr = roll(dyn, g, w_h, refs_h, x_1, U_m, a_p)
    np.testing.assert_allclose(Xr, X, rtol=0, atol=1e-9 * max(1.0, np.abs(X).max()))


@given(game_problems())
def test_kkt_solution_properties(p):
    dyn, auth, w_h, refs_h, w_m, refs_m, x_1, a_p = p
    g, law, qp = build(*p)
    sol = solve_kkt(qp)
    assert sol.stationarity <= 1e-8 and sol.feasibility <= 1e-8
    # Stackelberg consistency
    Xr = roll(dyn, g, w_h, refs_h, x_1, sol.U_m, a_p)
    assert np.max(np.abs(Xr - sol.X)) <= 1e-8 * max(1.0, np.abs(Xr).max())
    # same optimum as the follower-re-solving oracle
    _, _, _, J = oracle.solve_game(dyn, auth, w_h, refs_h, w_m, refs_m, x_1, a_p)
    assert sol.objective == pytest.approx(J, rel=1e-6, abs=1e-9)


@given(game_problems(), st.integers(0, 2**32 - 1))
def test_leader_local_optimality(p, seed):
    dyn, auth, w_h, refs_h, w_m, refs_m, x_1, a_p = p
    g, law, qp = build(*p)
    sol = solve_kkt(qp)
    base = oracle.machine_objective(w_m, refs_m, sol.X, sol.U_m)
    rng = np.random.default_rng(seed)
    for _ in range(4):
        d = rng.normal(size=len(sol.U_m))
        U = sol.U_m + 1e-2 * d / np.linalg.norm(d)
        X = roll(dyn, g, w_h, refs_h, x_1, U, a_p)
        assert oracle.machine_objective(w_m, refs_m, X, U) >= base - 1e-9


# -- planner ---------------------------------------------------------------

def planner(K=30, **kw):
    cfg = PlannerConfig(K=K, **kw)
    return GmpcPlanner(cfg, CostWeights.constant(0.0, 1.0, 5.0, K)), cfg


def test_planner_at_equilibrium_commands_nothing():
    pl, cfg = planner(gap_ref=7.0)
    refs_h = ReferenceTrajectory.constant(cfg.K, None, 7.0)
    p = pl.plan([0.0, 7.0], np.zeros(cfg.K - 1), [AuthorityPair.human(0.3)] * (cfg.K - 1), refs_h)
    assert p.u_m == pytest.approx(0.0, abs=1e-12)
    assert not p.violation
    np.testing.assert_allclose(p.X, np.tile([0.0, 7.0], (cfg.K, 1)), atol=1e-10)


def test_pure_speed_regulation_without_human():
    K = 30
    pl, cfg = planner(K, gap_ref=None)
    refs_h = ReferenceTrajectory.constant(K, None, 7.0)
    x_1 = np.array([1.0, 7.0])
    p = pl.plan(x_1, np.zeros(K - 1), [FULL_MACHINE] * (K - 1), refs_h)
    dv = p.X[:, 0]
    assert np.all(np.diff(dv) <= 1e-12) and np.all(dv >= -1e-12)
    U_ref, X_ref, _ = oracle.solve_machine_only(pl.dyn, cfg.weights(), cfg.references(x_1), x_1,
                                                np.zeros(K - 1))
    np.testing.assert_allclose(p.U_m, U_ref, rtol=1e-8, atol=1e-8)


def test_saturation_sets_violation_flag():
    K = 30
    pl, cfg = planner(K, gap_ref=None, u_max=1.0)
    refs_h = ReferenceTrajectory.constant(K, None, 7.0)
    p = pl.plan([8.0, 7.0], np.zeros(K - 1), [FULL_MACHINE] * (K - 1), refs_h)
    assert p.U_m[0] > 1.0
    assert p.u_m == 1.0 and p.violation


def test_cached_planner_matches_one_shot_plan():
    K = 20
    pl, cfg = planner(K)
    w_h = CostWeights.constant(0.0, 1.0, 5.0, K)
    refs_h = ReferenceTrajectory.constant(K, None, 8.0)
    auth = [AuthorityPair.human(0.4)] * (K - 1)
    rng = np.random.default_rng(0)
    for _ in range(3):
        x, a_p = np.array([rng.normal(), rng.uniform(5, 12)]), rng.normal(size=K - 1)
        p1 = pl.plan(x, a_p, auth, refs_h, speed=10.0)
        p2 = plan(x, a_p, cfg, None, w_h, refs_h, auth, speed=10.0)
        np.testing.assert_allclose(p1.U_m, p2.U_m, rtol=1e-12, atol=1e-12)


def test_full_human_authority_bypasses_the_qp():
    K = 10
    pl, _ = planner(K)
    refs_h = ReferenceTrajectory.constant(K, None, 8.0)
    p = pl.plan([0.5, 6.0], np.zeros(K - 1), [AuthorityPair(1.0, 0.0)] * (K - 1), refs_h, speed=10.0)
    assert p.solution is None and not np.any(p.U_m)


def test_planner_config_validation():
    with pytest.raises(ValueError):
        PlannerConfig(K=1)
    with pytest.raises(ValueError):
        PlannerConfig(q_v=0.0)
    with pytest.raises(ValueError):
        PlannerConfig(u_min=1.0, u_max=0.0)
    with pytest.raises(ValueError):
        PlannerConfig(K=5, replan_period=5)
    with pytest.raises(ValueError):
        PlannerConfig(gap_ref="fixed")
    with pytest.raises(ValueError):
        PlannerConfig().references([0.0, 7.0])
    refs = PlannerConfig(K=3).references([0.0, 7.0], speed=10.0)
    np.testing.assert_array_equal(refs.values[:, 1], 7.0)
    assert PlannerConfig(K=3, gap_ref="hold").references([0.0, 9.5]).values[0, 1] == 9.5


def test_forecast_from_shared_plan():
    f = forecast_predecessor("cav", 0.0, [1.0, 1.0] + [0.0] * 8, K=11)
    np.testing.assert_array_equal(f, [1.0] + [0.0] * 9)
    assert not np.any(forecast_predecessor("cav", 3.0, None, K=11))


def test_forecast_behind_human_driver():
    assert not np.any(forecast_predecessor("hv", 0.0, K=11))
    f = forecast_predecessor("hv", -4.0, K=11, dt=0.1, hold_time=0.5)
    np.testing.assert_array_equal(f[:5], -4.0)
    np.testing.assert_allclose(f[5:], -4.0 * np.array([0.8, 0.6, 0.4, 0.2, 0.0]), atol=1e-15)
    with pytest.raises(ValueError):
        forecast_predecessor("bus", 0.0)
