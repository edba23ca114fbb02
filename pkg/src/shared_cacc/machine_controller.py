"""Stackelberg-leader MPC for the machine.

The machine plans its command sequence knowing that the human follows the
affine reaction law, so the human law is substituted into the dynamics and
the horizon problem becomes an equality-constrained QP in ``z = (X, U_m)``:

    min 1/2 z'Dm z + z'Fm   s.t.   Wm z = Zm

solved through its saddle-point (KKT) system. Only the equality-constrained
problem is solved; command and gap bounds are enforced by saturating the
applied command and reported through violation flags.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
from scipy.linalg import lapack

from .dynamics import AuthorityPair, DiscreteDynamics, discretize
from .errors import IllPosedProblemError
from .human_model import (CostWeights, GainSequence, ReferenceTrajectory,
                          compute_gains, weighted_references)
from .stacked_ops import StackedHumanLaw, stacked_structure

COND_LIMIT = 1e12


@dataclass(frozen=True)
class PlannerConfig:
    K: int = 30
    dt: float = 0.1
    q_v: float = 1.0
    q_g: float = 1.0
    r: float = 2.0
    u_min: float = -6.0
    u_max: float = 3.0
    g_min: float = 2.0
    replan_period: int = 1
    # "time_gap": time_gap * ego speed + standstill at planning time; "hold":
    # the gap measured at planning time; a number fixes it; None makes the gap
    # component inactive (zero weight)
    gap_ref: str | float | None = "time_gap"
    time_gap: float = 0.5
    standstill: float = 2.0

    def __post_init__(self):
        if self.K < 2:
            raise ValueError(f"horizon K must be >= 2, got {self.K}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.q_v > 0:
            raise ValueError("machine speed-error weight q_v must be positive")
        if self.q_g < 0 or not self.r > 0:
            raise ValueError("machine weights need q_g >= 0 and r > 0")
        if not self.u_min < self.u_max:
            raise ValueError("control bounds must satisfy u_min < u_max")
        if not 1 <= self.replan_period <= self.K - 1:
            raise ValueError(f"replan_period must lie in 1..K-1, got {self.replan_period}")
        if isinstance(self.gap_ref, str) and self.gap_ref not in ("hold", "time_gap"):
            raise ValueError(f"unknown gap_ref mode {self.gap_ref!r}")

    def weights(self) -> CostWeights:
        return CostWeights.constant(self.q_v, self.q_g, self.r, self.K)

    def references(self, x_1, speed: float | None = None) -> ReferenceTrajectory:
        """Machine references: zero speed difference, gap per ``gap_ref``.

        ``speed`` (the ego speed) is needed by the time-gap policy only.
        """
        if self.gap_ref is None:
            g = None
        elif self.gap_ref == "time_gap":
            if speed is None:
                raise ValueError("the time-gap reference needs the ego speed")
            g = self.time_gap * float(speed) + self.standstill
        elif self.gap_ref == "hold":
            g = float(np.asarray(x_1)[1])
        else:
            g = float(self.gap_ref)
        return ReferenceTrajectory.constant(self.K, dv_ref=0.0, g_ref=g)


@dataclass(frozen=True, eq=False)
class QpProblem:
    Dm: np.ndarray
    Fm: np.ndarray
    Wm: np.ndarray
    Zm: np.ndarray
    K: int
    constant: float = 0.0   # 1/2 Xref'Q Xref, so objective() is the full tracking cost

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.Dm @ z + z @ self.Fm + self.constant)

    def split(self, z):
        """``z -> (X as (K, 2), U_m)``."""
        z = np.asarray(z, dtype=float)
        return z[:2 * self.K].reshape(self.K, 2), z[2 * self.K:]


@dataclass(frozen=True, eq=False)
class KktSolution:
    X: np.ndarray
    U_m: np.ndarray
    lam: np.ndarray
    objective: float
    stationarity: float
    feasibility: float
    cond: float

    @property
    def z(self) -> np.ndarray:
        return np.concatenate([self.X.ravel(), self.U_m])


def _block_inputs(gains: GainSequence):
    """Stacked ``A_m`` (2K x 2K), ``B_h``, ``B_m`` (2K x K-1) with the zero first block row."""
    K = gains.K
    Am = np.zeros((2 * K, 2 * K))
    Bh = np.zeros((2 * K, K - 1))
    Bm = np.zeros((2 * K, K - 1))
    for k in range(K - 1):
        Am[2 * (k + 1):2 * (k + 2), 2 * k:2 * (k + 1)] = gains.A
        Bh[2 * (k + 1):2 * (k + 2), k] = gains.B_h[k]
        Bm[2 * (k + 1):2 * (k + 2), k] = gains.B_m[k]
    return Am, Bh, Bm


def constraint_matrix(stacked: StackedHumanLaw, gains: GainSequence) -> np.ndarray:
    """``Wm = (I - A_m - B_h Kh | -B_h Ph - B_h Jh Sh1 - B_m)``."""
    K = gains.K
    Am, Bh, Bm = _block_inputs(gains)
    WX = np.eye(2 * K) - Am - Bh @ stacked.Kh
    WU = -Bh @ stacked.Ph - Bh @ stacked.Jh @ stacked.Sh1 - Bm
    return np.hstack([WX, WU])


def constraint_rhs(x_1, a_p, stacked: StackedHumanLaw, gains: GainSequence,
                   C: np.ndarray) -> np.ndarray:
    """``Zm = B_h Jh Sh2 + C_m`` with ``C_m = (x_1, C a_1, ..., C a_{K-1})``."""
    K = gains.K
    a_p = np.asarray(a_p, dtype=float).ravel()
    _, Bh, _ = _block_inputs(gains)
    Cm = np.zeros(2 * K)
    Cm[:2] = np.asarray(x_1, dtype=float)
    Cm[2:] = (a_p[:, None] * C[:, 0][None, :]).ravel()
    return Bh @ stacked.Jh @ stacked.Sh2 + Cm


def cost_matrices(q_m: np.ndarray, r_m: np.ndarray, xref_m: np.ndarray):
    """``Dm = diag(Q_m, R_m)``, ``Fm = (-Q_m Xref_m, 0)`` and the constant term."""
    q_m = np.asarray(q_m, dtype=float).reshape(-1)
    r_m = np.asarray(r_m, dtype=float).ravel()
    xr = np.asarray(xref_m, dtype=float).reshape(-1)
    Dm = np.diag(np.concatenate([q_m, r_m]))
    Fm = np.concatenate([-q_m * xr, np.zeros(len(r_m))])
    return Dm, Fm, float(0.5 * np.sum(q_m * xr * xr))


def assemble_qp(x_1, a_p_forecast, stacked: StackedHumanLaw, gains: GainSequence,
                C: np.ndarray, q_m, r_m, xref_m) -> QpProblem:
    """Build the game QP.

    ``q_m`` is a (K, 2) array of machine state-weight diagonals (already
    masked for inactive references), ``r_m`` has K-1 entries and ``xref_m`` is
    (K, 2).
    """
    K = gains.K
    a_p = np.asarray(a_p_forecast, dtype=float).ravel()
    if stacked.K != K:
        raise ValueError(f"stacked law horizon {stacked.K} != gains horizon {K}")
    if len(a_p) != K - 1:
        raise ValueError(f"predecessor forecast must have {K - 1} entries, got {len(a_p)}")
    if np.shape(q_m) != (K, 2) or np.shape(xref_m) != (K, 2) or len(np.ravel(r_m)) != K - 1:
        raise ValueError("machine weight/reference arrays do not match the horizon")
    Dm, Fm, const = cost_matrices(q_m, r_m, xref_m)
    Wm = constraint_matrix(stacked, gains)
    Zm = constraint_rhs(x_1, a_p, stacked, gains, C)
    return QpProblem(Dm=Dm, Fm=Fm, Wm=Wm, Zm=Zm, K=K, constant=const)


class SaddleFactor:
    """LU factorisation of ``[[Dm, Wm'], [Wm, 0]]`` with a condition estimate."""

    def __init__(self, Dm: np.ndarray, Wm: np.ndarray, what: str = ""):
        n = Dm.shape[0]
        m = Wm.shape[0]
        self.n, self.m = n, m
        self.Dm, self.Wm = Dm, Wm
        S = np.zeros((n + m, n + m))
        S[:n, :n] = Dm
        S[:n, n:] = Wm.T
        S[n:, :n] = Wm
        anorm = np.abs(S).sum(axis=0).max()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            self.lu, self.piv = scipy.linalg.lu_factor(S, check_finite=False)
        rcond, info = lapack.dgecon(self.lu, anorm, norm="1")
        self.cond = np.inf if rcond == 0.0 else 1.0 / rcond
        if info != 0 or not self.cond <= COND_LIMIT:
            hint = f" ({what})" if what else ""
            raise IllPosedProblemError(
                f"saddle-point matrix is singular or ill-conditioned, cond ~ {self.cond:.3g}{hint}; "
                "check that the machine has authority and its weights are not all zero")

    def solve(self, Fm: np.ndarray, Zm: np.ndarray):
        sol = scipy.linalg.lu_solve((self.lu, self.piv), np.concatenate([-Fm, Zm]),
                                    check_finite=False)
        return sol[:self.n], sol[self.n:]


def _describe(Dm: np.ndarray, Wm: np.ndarray, K: int) -> str:
    d = np.diag(Dm)
    parts = []
    if not np.any(d[:2 * K]):
        parts.append("all-zero Q_m")
    if not np.any(d[2 * K:]):
        parts.append("all-zero R_m")
    if not np.any(Wm[:, 2 * K:]):
        parts.append("machine commands do not enter the dynamics (alpha_m = 0)")
    return ", ".join(parts)


def solve_kkt(qp: QpProblem, factor: SaddleFactor | None = None) -> KktSolution:
    """Solve the saddle-point system; raises ``IllPosedProblemError`` if it is singular."""
    if factor is None:
        factor = SaddleFactor(qp.Dm, qp.Wm, _describe(qp.Dm, qp.Wm, qp.K))
    z, lam = factor.solve(qp.Fm, qp.Zm)
    stat = qp.Dm @ z + qp.Fm + qp.Wm.T @ lam
    feas = qp.Wm @ z - qp.Zm
    X, U_m = qp.split(z)
    return KktSolution(
        X=X, U_m=U_m, lam=lam, objective=qp.objective(z),
        stationarity=float(np.linalg.norm(stat) / (1.0 + np.linalg.norm(qp.Fm))),
        feasibility=float(np.linalg.norm(feas) / (1.0 + np.linalg.norm(qp.Zm))),
        cond=float(factor.cond))


# ---------------------------------------------------------------------------
# receding-horizon planner

@dataclass(frozen=True, eq=False)
class Plan:
    u_m: float                 # saturated first command
    U_m: np.ndarray            # planned (unsaturated) machine sequence
    U_h: np.ndarray            # predicted human response
    X: np.ndarray              # planned states (K, 2)
    solution: KktSolution | None
    violation: bool
    human_violation: bool
    stacked: StackedHumanLaw = field(repr=False)
    gains: GainSequence = field(repr=False)

    def fused(self, auth_seq: Sequence[AuthorityPair]) -> np.ndarray:
        a_h = np.array([a.alpha_h for a in auth_seq[:len(self.U_m)]])
        return a_h * self.U_h + (1.0 - a_h) * self.U_m


class _Structure:
    """Everything in the planner that depends on authorities and reference masks only."""

    def __init__(self, dyn, auth_seq, human_weights, refs_h, q_m, r_m, K):
        self.gains = compute_gains(dyn, auth_seq, human_weights, K, refs_h)
        self.stacked = stacked_structure(self.gains)
        self.machine_active = any(a.alpha_m > 0.0 for a in auth_seq[:K - 1])
        _, Bh, _ = _block_inputs(self.gains)
        self.rhs_map = Bh @ self.stacked.Jh @ self.stacked.ref_map
        self.factor = None
        if self.machine_active:
            self.Dm, _, _ = cost_matrices(q_m, r_m, np.zeros((K, 2)))
            self.Wm = constraint_matrix(self.stacked, self.gains)
            self.factor = SaddleFactor(self.Dm, self.Wm, _describe(self.Dm, self.Wm, K))


class GmpcPlanner:
    """Receding-horizon game planner for one vehicle.

    Gains, stacked operators and the saddle-point factorisation only depend on
    the authority sequence over the horizon and on which references are
    active, so they are cached under that key.
    """

    def __init__(self, cfg: PlannerConfig, human_weights: CostWeights, cache_size: int = 256,
                 machine_weights: CostWeights | None = None):
        """``machine_weights`` overrides the config's constant weights (length K)."""
        self.cfg = cfg
        self.dyn: DiscreteDynamics = discretize(cfg.dt)
        self.human_weights = human_weights
        self.machine_weights = cfg.weights() if machine_weights is None else machine_weights
        if len(self.machine_weights) < cfg.K or len(human_weights) < cfg.K:
            raise ValueError(f"weights must cover the horizon of {cfg.K} steps")
        self._cache: dict = {}
        self._cache_size = cache_size

    def _structure(self, auth_seq, refs_h: ReferenceTrajectory, refs_m: ReferenceTrajectory):
        K = self.cfg.K
        key = (tuple(a.alpha_h for a in auth_seq[:K - 1]),
               refs_h.active[:K].tobytes(), refs_m.active[:K].tobytes())
        st = self._cache.get(key)
        if st is None:
            q_m = np.column_stack([self.machine_weights.q_v, self.machine_weights.q_g])[:K] * refs_m.active[:K]
            st = _Structure(self.dyn, auth_seq, self.human_weights, refs_h,
                            q_m, self.machine_weights.r[:K - 1], K)
            if len(self._cache) >= self._cache_size:
                self._cache.pop(next(iter(self._cache)))
            self._cache[key] = st
        return st

    def plan(self, x_1, a_p_forecast, auth_seq: Sequence[AuthorityPair],
             refs_h: ReferenceTrajectory, refs_m: ReferenceTrajectory | None = None,
             speed: float | None = None) -> Plan:
        """``refs_m`` defaults to the config's references at ``x_1`` and ego ``speed``."""
        cfg = self.cfg
        K = cfg.K
        x_1 = np.asarray(x_1, dtype=float).ravel()
        a_p = np.asarray(a_p_forecast, dtype=float).ravel()
        if len(a_p) != K - 1:
            raise ValueError(f"predecessor forecast must have {K - 1} entries, got {len(a_p)}")
        auth_seq = list(auth_seq)
        if len(auth_seq) < K - 1:
            raise ValueError(f"need authority for {K - 1} steps, got {len(auth_seq)}")
        if refs_m is None:
            refs_m = cfg.references(x_1, speed)
        st = self._structure(auth_seq, refs_h, refs_m)
        qx_h = weighted_references(self.human_weights, refs_h, K).ravel()
        stacked = st.stacked.with_weighted_refs(qx_h)

        if st.machine_active:
            q_m = st.Dm.diagonal()[:2 * K]
            xref_m = refs_m.values[:K].ravel()
            Fm = np.concatenate([-q_m * xref_m, np.zeros(K - 1)])
            Cm = np.zeros(2 * K)
            Cm[:2] = x_1
            Cm[2:] = (a_p[:, None] * self.dyn.C[:, 0][None, :]).ravel()
            Zm = st.rhs_map @ qx_h + Cm
            qp = QpProblem(Dm=st.Dm, Fm=Fm, Wm=st.Wm, Zm=Zm, K=K,
                           constant=float(0.5 * np.sum(q_m * xref_m * xref_m)))
            sol = solve_kkt(qp, st.factor)
            X, U_m = sol.X, sol.U_m
        else:
            # no machine authority anywhere in the horizon: its commands are inert
            sol = None
            U_m = np.zeros(K - 1)
            X = _rollout_without_machine(self.dyn, st.gains, stacked, x_1, a_p)
        U_h = stacked.human_controls(X, U_m)

        u_first = float(np.clip(U_m[0], cfg.u_min, cfg.u_max))
        violation = bool(U_m[0] < cfg.u_min or U_m[0] > cfg.u_max
                         or np.any(X[1:, 1] < cfg.g_min))
        human_violation = bool(np.any(U_h < cfg.u_min) or np.any(U_h > cfg.u_max))
        return Plan(u_m=u_first, U_m=U_m, U_h=U_h, X=X, solution=sol,
                    violation=violation, human_violation=human_violation,
                    stacked=stacked, gains=st.gains)


def _rollout_without_machine(dyn, gains, stacked, x_1, a_p):
    K = gains.K
    S = stacked.offset
    X = np.empty((K, 2))
    X[0] = x_1
    for j in range(K - 1):
        u_h = gains.Kx[j] @ X[j] + S[j]
        X[j + 1] = dyn.A @ X[j] + gains.B_h[j] * u_h + dyn.C[:, 0] * a_p[j]
    return X


def plan(x_1, predecessor_forecast, cfg: PlannerConfig, refs_m: ReferenceTrajectory | None,
         human_weights: CostWeights, refs_h: ReferenceTrajectory,
         auth_seq: Sequence[AuthorityPair], speed: float | None = None) -> Plan:
    """One-shot planning call (no caching across calls)."""
    return GmpcPlanner(cfg, human_weights).plan(x_1, predecessor_forecast, auth_seq, refs_h,
                                                refs_m, speed)


def forecast_predecessor(kind: str, a_observed: float, shared_plan=None, K: int = 30,
                         dt: float = 0.1, hold_time: float = 0.5) -> np.ndarray:
    """Predecessor acceleration forecast over K-1 steps.

    ``kind="cav"``: the predecessor's plan published one step earlier, shifted
    by one step and zero padded. ``kind="hv"``: the observed acceleration held
    for ``hold_time`` and then ramped linearly to zero by the end of the horizon.
    """
    n = K - 1
    out = np.zeros(n)
    if kind == "cav":
        if shared_plan is None:
            return out
        p = np.asarray(shared_plan, dtype=float).ravel()[1:n + 1]
        out[:len(p)] = p
        return out
    if kind != "hv":
        raise ValueError(f"unknown predecessor kind {kind!r}")
    n_hold = min(n, int(round(hold_time / dt)))
    out[:n_hold] = a_observed
    m = n - n_hold
    if m:
        out[n_hold:] = a_observed * (1.0 - np.arange(1, m + 1) / m)
    return out
