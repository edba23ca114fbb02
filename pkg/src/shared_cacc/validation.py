"""Randomized cross-checks of the reaction law and the game planner against
the brute-force solvers in ``oracle``.

Every suite draws its instances from a seeded generator, so a failing
instance can be reproduced from ``(seed, index)``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import oracle
from .dynamics import AuthorityPair, discretize
from .human_model import (CostWeights, ReferenceTrajectory, compute_feedforward, compute_gains,
                          human_reaction, simulate_human_closed_loop, reaction_sequence)
from .machine_controller import assemble_qp, solve_kkt
from .stacked_ops import assemble_stacked_human_law

DEFAULT_SEED = 20240611
DT_CHOICES = (0.05, 0.1, 0.2)

TOLERANCES = {
    "reaction": 1e-8,       # relative error of the human command sequence
    "stacked": 1e-9,        # absolute error of the stacked law
    "game_kkt": 1e-8,   # scaled KKT residuals
    "game_objective": 1e-6,
    "game_forward": 1e-8,
    "leader": 1e-9,         # allowed decrease of J_m under perturbation
}


@dataclass(frozen=True)
class Instance:
    """One randomized horizon problem; ``index`` and ``seed`` reproduce it."""

    seed: int
    index: int
    K: int
    dt: float
    auth: tuple
    weights_h: CostWeights = field(repr=False)
    refs_h: ReferenceTrajectory = field(repr=False)
    weights_m: CostWeights = field(repr=False)
    refs_m: ReferenceTrajectory = field(repr=False)
    x_1: np.ndarray = field(repr=False)
    U_m: np.ndarray = field(repr=False)
    a_p: np.ndarray = field(repr=False)

    def describe(self) -> str:
        a = ", ".join(f"{p.alpha_h:.3f}" for p in self.auth)
        return (f"seed={self.seed} index={self.index} K={self.K} dt={self.dt} "
                f"alpha_h=[{a}] x_1={np.array2string(self.x_1, precision=4)}")


def _random_refs(rng, K, force_dv=False) -> ReferenceTrajectory:
    active = rng.random((K, 2)) < 0.7
    if force_dv:
        active[:, 0] = True
    values = np.column_stack([rng.normal(0.0, 1.0, K), rng.uniform(2.0, 20.0, K)])
    return ReferenceTrajectory(values, active)


def _random_weights(rng, K, q_v_floor=0.0) -> CostWeights:
    q = rng.uniform(0.0, 5.0, (K, 2))
    # some exact zeros to exercise the PSD boundary
    q[rng.random((K, 2)) < 0.15] = 0.0
    q[:, 0] = np.maximum(q[:, 0], q_v_floor)
    r = np.exp(rng.uniform(np.log(0.1), np.log(10.0), K))
    return CostWeights(q[:, 0], q[:, 1], r)


def random_instance(seed: int, index: int, alpha_h_range=(0.0, 1.0),
                    alpha_h_open_low=True, machine=False) -> Instance:
    """Draw instance ``index`` of the family seeded by ``seed``.

    Authorities are drawn from ``alpha_h_range``; with ``alpha_h_open_low``
    the lower end is excluded (human must hold some authority).
    """
    rng = np.random.default_rng([seed, index])
    K = int(rng.integers(2, 9))
    dt = float(rng.choice(DT_CHOICES))
    lo, hi = alpha_h_range
    a = rng.uniform(lo, hi, K - 1)
    if alpha_h_open_low:
        a = np.where(a <= lo, hi, a)
    auth = tuple(AuthorityPair.human(float(x)) for x in a)
    return Instance(
        seed=seed, index=index, K=K, dt=dt, auth=auth,
        weights_h=_random_weights(rng, K),
        refs_h=_random_refs(rng, K),
        weights_m=_random_weights(rng, K, q_v_floor=0.1 if machine else 0.0),
        refs_m=_random_refs(rng, K, force_dv=machine),
        x_1=np.array([rng.normal(0.0, 2.0), rng.uniform(1.0, 30.0)]),
        U_m=rng.normal(0.0, 1.5, K - 1),
        a_p=rng.normal(0.0, 1.0, K - 1))


@dataclass
class SuiteResult:
    name: str
    n: int
    worst: float
    tolerance: float
    worst_instance: str
    seconds: float

    @property
    def passed(self) -> bool:
        return bool(self.worst <= self.tolerance)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name}: n={self.n} max={self.worst:.3e} tol={self.tolerance:.0e} "
                f"({self.seconds:.2f}s)")


class _Tracker:
    def __init__(self, name, tol):
        self.name, self.tol = name, tol
        self.worst, self.where, self.n = 0.0, "", 0
        self.t0 = time.perf_counter()

    def add(self, err, inst: Instance):
        self.n += 1
        err = float(err) if np.isfinite(err) else np.inf
        if err > self.worst or (self.n == 1 and not self.where):
            self.worst, self.where = err, inst.describe()

    def result(self) -> SuiteResult:
        return SuiteResult(self.name, self.n, self.worst, self.tol, self.where,
                           time.perf_counter() - self.t0)


def _gains(inst: Instance, dyn, perturb: float):
    g = compute_gains(dyn, inst.auth, inst.weights_h, inst.K, inst.refs_h)
    if perturb:
        Kx = np.array(g.Kx) + perturb
        Kx.setflags(write=False)
        g = replace(g, Kx=Kx)
    return g


def _rel(a, b) -> float:
    a, b = np.ravel(a), np.ravel(b)
    scale = max(float(np.max(np.abs(b), initial=0.0)), 1e-12)
    return float(np.max(np.abs(a - b), initial=0.0) / scale)


def reaction_suite(n=200, seed=DEFAULT_SEED, perturb=0.0) -> SuiteResult:
    """Closed-loop human commands from the backward pass vs the dense QP in ``U_h``."""
    tr = _Tracker("reaction law vs dense QP", TOLERANCES["reaction"])
    for i in range(n):
        inst = random_instance(seed, i)
        dyn = discretize(inst.dt)
        g = _gains(inst, dyn, perturb)
        ff = compute_feedforward(g, inst.weights_h, inst.refs_h, inst.U_m)
        X = simulate_human_closed_loop(dyn, g, ff, inst.x_1, inst.U_m)
        U_h = reaction_sequence(g, ff, X, inst.U_m)
        ref = oracle.solve_human_problem(dyn, inst.auth, inst.weights_h, inst.refs_h,
                                         inst.x_1, inst.U_m)
        tr.add(_rel(U_h, ref), inst)
    return tr.result()


def stacked_suite(n=200, seed=DEFAULT_SEED, perturb=0.0) -> SuiteResult:
    """Stacked horizon law vs per-step reaction law on the same trajectories."""
    tr = _Tracker("stacked law vs per-step law", TOLERANCES["stacked"])
    for i in range(n):
        inst = random_instance(seed, i)
        dyn = discretize(inst.dt)
        g = compute_gains(dyn, inst.auth, inst.weights_h, inst.K, inst.refs_h)
        ff = compute_feedforward(g, inst.weights_h, inst.refs_h, inst.U_m)
        # arbitrary states: the law must agree off the optimal trajectory too
        rng = np.random.default_rng([seed, i, 1])
        X = rng.normal(0.0, 3.0, (inst.K, 2))
        per_step = [human_reaction(g, ff, k, X[k - 1], inst.U_m[k - 1]) for k in range(1, inst.K)]
        law = assemble_stacked_human_law(_gains(inst, dyn, perturb), inst.weights_h, inst.refs_h)
        stacked = law.human_controls(X.ravel(), inst.U_m)
        tr.add(np.max(np.abs(stacked - np.array(per_step))), inst)
    return tr.result()


def solve_instance(inst: Instance, perturb: float = 0.0):
    """Main-path game solution: gains, stacked law, QP assembly and KKT solve."""
    dyn = discretize(inst.dt)
    g = _gains(inst, dyn, perturb)
    law = assemble_stacked_human_law(g, inst.weights_h, inst.refs_h)
    q_m = np.column_stack([inst.weights_m.q_v, inst.weights_m.q_g]) * inst.refs_m.active
    qp = assemble_qp(inst.x_1, inst.a_p, law, g, dyn.C, q_m, inst.weights_m.r[:inst.K - 1],
                     inst.refs_m.values)
    return dyn, g, qp, solve_kkt(qp)


def forward_simulate(dyn, gains, inst: Instance, U_m) -> tuple[np.ndarray, np.ndarray]:
    """Roll the plant with the human reacting per step to ``U_m``; returns ``(X, U_h)``."""
    ff = compute_feedforward(gains, inst.weights_h, inst.refs_h, U_m)
    X = np.empty((inst.K, 2))
    U_h = np.empty(inst.K - 1)
    X[0] = inst.x_1
    for j in range(inst.K - 1):
        U_h[j] = human_reaction(gains, ff, j + 1, X[j], U_m[j])
        X[j + 1] = (dyn.A @ X[j] + gains.B_h[j] * U_h[j] + gains.B_m[j] * U_m[j]
                    + dyn.C[:, 0] * inst.a_p[j])
    return X, U_h


def _machine_instance(seed, i):
    return random_instance(seed, i, alpha_h_range=(0.0, 0.95), alpha_h_open_low=False,
                           machine=True)


def game_suites(n=200, seed=DEFAULT_SEED, perturb=0.0) -> list[SuiteResult]:
    """KKT residuals, objective vs the game oracle, and forward-simulation consistency."""
    kkt = _Tracker("game QP KKT residuals", TOLERANCES["game_kkt"])
    obj = _Tracker("game objective vs oracle", TOLERANCES["game_objective"])
    fwd = _Tracker("game forward simulation", TOLERANCES["game_forward"])
    for i in range(n):
        inst = _machine_instance(seed, i)
        dyn, g, qp, sol = solve_instance(inst, perturb)
        kkt.add(max(sol.stationarity, sol.feasibility), inst)
        _, _, _, J = oracle.solve_game(dyn, inst.auth, inst.weights_h, inst.refs_h,
                                       inst.weights_m, inst.refs_m, inst.x_1, inst.a_p)
        obj.add(abs(sol.objective - J) / max(abs(J), 1e-12), inst)
        # fresh gains, so a corrupted main path cannot agree with itself
        g_ref = compute_gains(dyn, inst.auth, inst.weights_h, inst.K, inst.refs_h)
        X, _ = forward_simulate(dyn, g_ref, inst, sol.U_m)
        fwd.add(np.max(np.abs(X - sol.X)) / max(1.0, float(np.max(np.abs(X)))), inst)
    return [kkt.result(), obj.result(), fwd.result()]


def leader_optimality_suite(n=50, seed=DEFAULT_SEED, scale=1e-2, directions=8) -> SuiteResult:
    """Perturbed leader plans, with the follower response re-derived, never do better."""
    tr = _Tracker("leader local optimality", TOLERANCES["leader"])
    for i in range(n):
        inst = _machine_instance(seed, i)
        dyn, g, qp, sol = solve_instance(inst)
        base = oracle.machine_objective(inst.weights_m, inst.refs_m, sol.X, sol.U_m)
        rng = np.random.default_rng([seed, i, 2])
        worst = 0.0
        for _ in range(directions):
            d = rng.normal(size=inst.K - 1)
            U = sol.U_m + scale * d / np.linalg.norm(d)
            X, _ = forward_simulate(dyn, g, inst, U)
            worst = max(worst, base - oracle.machine_objective(inst.weights_m, inst.refs_m, X, U))
        tr.add(worst, inst)
    return tr.result()


SUITES = ("reaction", "stacked", "game", "leader")


def run_suites(selected=SUITES, seed=DEFAULT_SEED, n=200, n_leader=50,
               perturb=0.0) -> list[SuiteResult]:
    out = []
    for name in selected:
        if name == "reaction":
            out.append(reaction_suite(n, seed, perturb))
        elif name == "stacked":
            out.append(stacked_suite(n, seed, perturb))
        elif name == "game":
            out.extend(game_suites(n, seed, perturb))
        elif name == "leader":
            out.append(leader_optimality_suite(n_leader, seed))
        else:
            raise ValueError(f"unknown suite {name!r}; expected one of {', '.join(SUITES)}")
    return out
