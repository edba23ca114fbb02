"""Finite-horizon LQR model of the human driver and its closed-form reaction law.

Given the machine's command sequence, the human minimises

    sum_{k<K} 1/2 |x_k - x_ref_k|_Q_k^2 + 1/2 r_k u_h,k^2  +  1/2 |x_K - x_ref_K|_Q_K^2

subject to ``x_{k+1} = A x_k + B_h,k u_h,k + B_m,k u_m,k`` (the predecessor's
acceleration is unknown to the human and left out). The minimiser is the
affine law ``u_h,k = K_k x_k + P_k u_m,k + S_k``; ``K, P`` come from a backward
Riccati-type pass over ``D_k`` and ``S`` from a backward pass over ``F_k``.

Steps are numbered 1..K in the public API, array index ``k - 1`` internally.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dynamics import AuthorityPair, DiscreteDynamics, VehicleState


@dataclass(frozen=True, eq=False)
class CostWeights:
    """Per-step diagonal state weights and control weight, arrays of length K.

    ``r[K-1]`` is never used (no control at the terminal step).
    """

    q_v: np.ndarray
    q_g: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        for name in ("q_v", "q_g", "r"):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (len(self.q_v) == len(self.q_g) == len(self.r)):
            raise ValueError("weight arrays must share one length")
        if np.any(self.q_v < 0) or np.any(self.q_g < 0):
            raise ValueError("state weights must be non-negative")
        if np.any(~(self.r >= 0)):
            raise ValueError("control weight r must be non-negative")

    @classmethod
    def constant(cls, q_v: float, q_g: float, r: float, K: int) -> "CostWeights":
        return cls(np.full(K, float(q_v)), np.full(K, float(q_g)), np.full(K, float(r)))

    def __len__(self):
        return len(self.r)


@dataclass(frozen=True, eq=False)
class ReferenceTrajectory:
    """Desired states ``(dv_ref, g_ref)`` per step plus per-component active flags.

    Inactive components are the "don't care" entries: their weight is zeroed
    and their stored value is forced to 0.
    """

    values: np.ndarray
    active: np.ndarray

    def __post_init__(self):
        active = np.array(self.active, dtype=bool).reshape(-1, 2)
        values = np.array(self.values, dtype=float).reshape(-1, 2)
        if values.shape != active.shape:
            raise ValueError("values and active flags must have matching shapes")
        values = np.where(active, values, 0.0)
        values.setflags(write=False)
        active.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "active", active)

    def __len__(self):
        return len(self.values)

    @classmethod
    def constant(cls, K: int, dv_ref: float | None = None,
                 g_ref: float | None = None) -> "ReferenceTrajectory":
        """``None`` marks a component as inactive."""
        values = np.zeros((K, 2))
        active = np.zeros((K, 2), dtype=bool)
        if dv_ref is not None:
            values[:, 0], active[:, 0] = dv_ref, True
        if g_ref is not None:
            values[:, 1], active[:, 1] = g_ref, True
        return cls(values, active)

    @classmethod
    def inactive(cls, K: int) -> "ReferenceTrajectory":
        return cls.constant(K)


def state_weight_diagonals(weights: CostWeights, K: int,
                           refs: ReferenceTrajectory | None = None) -> np.ndarray:
    """(K, 2) array of Q diagonals, with inactive reference components zeroed."""
    if len(weights) < K:
        raise ValueError(f"need weights for {K} steps, got {len(weights)}")
    q = np.column_stack([weights.q_v[:K], weights.q_g[:K]])
    if refs is not None:
        if len(refs) < K:
            raise ValueError(f"need references for {K} steps, got {len(refs)}")
        q = q * refs.active[:K]
    return q


def weighted_references(weights: CostWeights, refs: ReferenceTrajectory, K: int) -> np.ndarray:
    """(K, 2) array of ``Q_k x_ref_k``."""
    return state_weight_diagonals(weights, K, refs) * refs.values[:K]


@dataclass(frozen=True, eq=False)
class GainSequence:
    """Backward-pass coefficients for a horizon of K steps.

    Arrays over k = 1..K-1 (index k-1): ``H`` (scalar), ``Kx`` (1x2 rows),
    ``P`` (scalar), ``N`` (2x2), ``M`` (2x1 stored flat), plus the
    effective input columns ``B_h``/``B_m`` and control weights ``r``.
    ``D`` runs over k = 1..K with ``D[K-1] = Q_K``.
    """

    K: int
    A: np.ndarray
    H: np.ndarray
    Kx: np.ndarray
    P: np.ndarray
    N: np.ndarray
    M: np.ndarray
    D: np.ndarray
    B_h: np.ndarray
    B_m: np.ndarray
    r: np.ndarray
    q: np.ndarray

    @property
    def T(self) -> np.ndarray:
        """``M_k + N_k^T`` for k = 1..K-1, the transfer of ``F`` between steps."""
        return self.M + np.transpose(self.N, (0, 2, 1))


def _authority_columns(dyn: DiscreteDynamics, auth_per_step, n: int):
    auth_per_step = list(auth_per_step)
    if len(auth_per_step) < n:
        raise ValueError(f"need authority for {n} steps, got {len(auth_per_step)}")
    a_h = np.array([a.alpha_h for a in auth_per_step[:n]])
    a_m = np.array([a.alpha_m for a in auth_per_step[:n]])
    b = dyn.B[:, 0]
    return a_h[:, None] * b[None, :], a_m[:, None] * b[None, :]


def compute_gains(dyn: DiscreteDynamics, auth_per_step: Sequence[AuthorityPair],
                  weights: CostWeights, K: int,
                  refs: ReferenceTrajectory | None = None) -> GainSequence:
    """Backward pass for the feedback part of the reaction law.

    ``refs`` only contributes its active flags, which mask the weights.
    """
    K = int(K)
    if K < 2:
        raise ValueError(f"horizon must be at least 2 steps, got {K}")
    q = state_weight_diagonals(weights, K, refs)
    r = np.array(weights.r[:K - 1], dtype=float)
    if np.any(~(r > 0)):
        raise ValueError("the human's control weight r must be positive at every step")
    B_h, B_m = _authority_columns(dyn, auth_per_step, K - 1)
    A = dyn.A

    H = np.empty(K - 1)
    Kx = np.empty((K - 1, 2))
    P = np.empty(K - 1)
    N = np.empty((K - 1, 2, 2))
    M = np.empty((K - 1, 2, 2))
    D = np.empty((K, 2, 2))
    D[K - 1] = np.diag(q[K - 1])

    for j in range(K - 2, -1, -1):
        Dn = D[j + 1]
        bh = B_h[j][:, None]
        bm = B_m[j][:, None]
        denom = r[j] + (bh.T @ Dn @ bh).item()
        assert denom > 0.0, "R + B_h' D B_h must be positive for r > 0"
        H[j] = 1.0 / denom
        Kj = -H[j] * (bh.T @ Dn @ A)                     # 1x2
        P[j] = -H[j] * (bh.T @ Dn @ bm).item()
        Nj = A + bh @ Kj
        M[j] = -(Kj.T * r[j] + Nj.T @ Dn @ bh) * H[j] @ bh.T
        Dj = np.diag(q[j]) + r[j] * (Kj.T @ Kj) + Nj.T @ Dn @ Nj
        D[j] = 0.5 * (Dj + Dj.T)
        Kx[j] = Kj[0]
        N[j] = Nj

    for arr in (H, Kx, P, N, M, D, B_h, B_m, r, q):
        arr.setflags(write=False)
    return GainSequence(K=K, A=A, H=H, Kx=Kx, P=P, N=N, M=M, D=D,
                        B_h=B_h, B_m=B_m, r=r, q=q)


@dataclass(frozen=True, eq=False)
class FeedforwardSequence:
    """``F`` over k = 1..K (2-vectors) and ``S`` over k = 1..K-1."""

    F: np.ndarray
    S: np.ndarray


def compute_feedforward(gains: GainSequence, weights: CostWeights,
                        refs: ReferenceTrajectory, U_m) -> FeedforwardSequence:
    K = gains.K
    U_m = np.asarray(U_m, dtype=float).ravel()
    if len(U_m) != K - 1:
        raise ValueError(f"machine command sequence must have {K - 1} entries, got {len(U_m)}")
    qx = weighted_references(weights, refs, K)
    T = gains.T
    F = np.empty((K, 2))
    S = np.empty(K - 1)
    F[K - 1] = -qx[K - 1]
    for j in range(K - 2, -1, -1):
        Fn = F[j + 1]
        S[j] = -gains.H[j] * (gains.B_h[j] @ Fn)
        F[j] = -qx[j] + T[j] @ (gains.D[j + 1] @ gains.B_m[j] * U_m[j] + Fn)
    F.setflags(write=False)
    S.setflags(write=False)
    return FeedforwardSequence(F=F, S=S)


def human_reaction(gains: GainSequence, ff: FeedforwardSequence, k: int,
                   x: VehicleState | np.ndarray, u_m: float) -> float:
    """Human command at step ``k`` (1-based)."""
    if not 1 <= k <= gains.K - 1:
        raise ValueError(f"step {k} outside 1..{gains.K - 1}")
    xa = x.as_array() if isinstance(x, VehicleState) else np.asarray(x, dtype=float)
    j = k - 1
    return float(gains.Kx[j] @ xa + gains.P[j] * u_m + ff.S[j])


def simulate_human_closed_loop(dyn: DiscreteDynamics, gains: GainSequence,
                               ff: FeedforwardSequence, x_1, U_m) -> np.ndarray:
    """Roll the closed loop ``x_{k+1} = N_k x_k + O_k`` forward; returns (K, 2) states."""
    K = gains.K
    U_m = np.asarray(U_m, dtype=float).ravel()
    if len(U_m) != K - 1:
        raise ValueError(f"machine command sequence must have {K - 1} entries, got {len(U_m)}")
    X = np.empty((K, 2))
    X[0] = x_1.as_array() if isinstance(x_1, VehicleState) else np.asarray(x_1, dtype=float)
    for j in range(K - 1):
        O = gains.B_h[j] * (gains.P[j] * U_m[j] + ff.S[j]) + gains.B_m[j] * U_m[j]
        X[j + 1] = gains.N[j] @ X[j] + O
    return X


def reaction_sequence(gains: GainSequence, ff: FeedforwardSequence, X, U_m) -> np.ndarray:
    """Human commands along a state trajectory ``X`` (K or K-1 rows)."""
    X = np.asarray(X, dtype=float)
    U_m = np.asarray(U_m, dtype=float).ravel()
    n = gains.K - 1
    return np.einsum("ij,ij->i", gains.Kx, X[:n]) + gains.P * U_m + ff.S


def cost_to_go_quadratic(gains: GainSequence, ff: FeedforwardSequence, x_1) -> float:
    """``1/2 x'D_1 x + x'F_1``: the optimal cost from step 1 minus its state-independent constant."""
    x = np.asarray(x_1.as_array() if isinstance(x_1, VehicleState) else x_1, dtype=float)
    return float(0.5 * x @ gains.D[0] @ x + x @ ff.F[0])
