"""Brute-force reference solvers used to cross-check the reaction law and the game QP.

Nothing here reuses the backward recursions or the stacked operators: the
human problem is posed directly in its control sequence with states
eliminated by explicit rollout, the machine problem is posed in its own
command sequence with the follower's response recovered by re-solving the
follower's tail problems, and equality-constrained QPs are solved by a
null-space method rather than by factorising the saddle-point matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .dynamics import AuthorityPair, DiscreteDynamics
from .human_model import CostWeights, ReferenceTrajectory


@dataclass(frozen=True, eq=False)
class DenseQp:
    """``min 1/2 z'Hz + f'z  s.t.  Aeq z = beq``."""

    H: np.ndarray
    f: np.ndarray
    Aeq: np.ndarray | None = None
    beq: np.ndarray | None = None

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        n = H.shape[0]
        if H.shape != (n, n):
            raise ValueError("H must be square")
        f = np.asarray(self.f, dtype=float).reshape(n)
        Aeq = np.zeros((0, n)) if self.Aeq is None else np.asarray(self.Aeq, dtype=float).reshape(-1, n)
        beq = np.zeros(0) if self.beq is None else np.asarray(self.beq, dtype=float).ravel()
        if len(beq) != Aeq.shape[0]:
            raise ValueError("Aeq and beq disagree on the number of constraints")
        if Aeq.shape[0] > n:
            raise ValueError("more equality constraints than variables")
        object.__setattr__(self, "H", 0.5 * (H + H.T))
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "Aeq", Aeq)
        object.__setattr__(self, "beq", beq)

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.H @ z + self.f @ z)


def solve_dense_qp(p: DenseQp, rcond: float = 1e-12):
    """Null-space solution of an equality-constrained QP.

    Returns ``(z, multipliers)`` with the convention ``Hz + f + Aeq' lam = 0``.
    Raises ``np.linalg.LinAlgError`` if the constraints are rank deficient or
    the reduced Hessian is singular.
    """
    n = p.H.shape[0]
    m = p.Aeq.shape[0]
    if m:
        U, s, Vt = np.linalg.svd(p.Aeq)
        if s[-1] <= rcond * max(s[0], 1.0):
            raise np.linalg.LinAlgError("equality constraints are rank deficient")
        Y = Vt[:m].T                               # range of Aeq'
        Z = Vt[m:].T                               # null space of Aeq
        z_p = Y @ ((U.T @ p.beq) / s)
    else:
        Z = np.eye(n)
        z_p = np.zeros(n)
    if Z.shape[1]:
        Hr = Z.T @ p.H @ Z
        gr = Z.T @ (p.H @ z_p + p.f)
        w = np.linalg.eigvalsh(Hr)
        if w[0] <= rcond * max(abs(w[-1]), 1.0):
            raise np.linalg.LinAlgError("reduced Hessian is not positive definite")
        y = scipy.linalg.solve(Hr, -gr, assume_a="pos")
        z = z_p + Z @ y
    else:
        z = z_p
    if m:
        g = p.H @ z + p.f
        lam = -np.linalg.lstsq(p.Aeq.T, g, rcond=None)[0]
    else:
        lam = np.zeros(0)
    return z, lam


def kkt_residuals(p: DenseQp, z, lam):
    """Scaled stationarity and feasibility residual norms."""
    stat = p.H @ z + p.f + p.Aeq.T @ lam
    feas = p.Aeq @ z - p.beq
    return (float(np.linalg.norm(stat) / (1.0 + np.linalg.norm(p.f))),
            float(np.linalg.norm(feas) / (1.0 + np.linalg.norm(p.beq))))


def finite_difference_gradient(objective: Callable[[np.ndarray], float], point,
                               step: float = 1e-5) -> np.ndarray:
    point = np.asarray(point, dtype=float).ravel()
    grad = np.empty_like(point)
    for i in range(len(point)):
        e = np.zeros_like(point)
        e[i] = step
        hi = objective(point + e)
        lo = objective(point - e)
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise FloatingPointError(f"objective not finite around coordinate {i}")
        grad[i] = (hi - lo) / (2.0 * step)
    return grad


# ---------------------------------------------------------------------------
# problem-specific oracles

def _inputs(dyn, auth: Sequence[AuthorityPair], n):
    b = dyn.B[:, 0]
    bh = np.array([a.alpha_h * b for a in list(auth)[:n]])
    bm = np.array([a.alpha_m * b for a in list(auth)[:n]])
    return bh, bm


def _q_diag(weights: CostWeights, refs: ReferenceTrajectory, K):
    q = np.column_stack([weights.q_v[:K], weights.q_g[:K]])
    return q * refs.active[:K], refs.values[:K]


def rollout(dyn: DiscreteDynamics, auth: Sequence[AuthorityPair], x_1, U_h, U_m,
            a_p=None) -> np.ndarray:
    """Open-loop state sequence under given human and machine command sequences."""
    U_h = np.asarray(U_h, dtype=float).ravel()
    U_m = np.asarray(U_m, dtype=float).ravel()
    n = len(U_h)
    a_p = np.zeros(n) if a_p is None else np.asarray(a_p, dtype=float).ravel()
    bh, bm = _inputs(dyn, auth, n)
    X = np.empty((n + 1, 2))
    X[0] = x_1
    for k in range(n):
        X[k + 1] = dyn.A @ X[k] + bh[k] * U_h[k] + bm[k] * U_m[k] + dyn.C[:, 0] * a_p[k]
    return X


def tracking_cost(X, U, r, q, xref) -> float:
    """``sum 1/2 |x_k - ref_k|_Q^2 + sum 1/2 r_k u_k^2`` over a state sequence."""
    e = np.asarray(X) - xref[:len(X)]
    return float(0.5 * np.sum(q[:len(X)] * e * e) + 0.5 * np.sum(r[:len(U)] * np.asarray(U) ** 2))


def human_objective(dyn, auth, weights: CostWeights, refs: ReferenceTrajectory,
                    x_1, U_h, U_m) -> float:
    """Human cost of a command sequence, evaluated by forward rollout."""
    X = rollout(dyn, auth, x_1, U_h, U_m)
    q, xref = _q_diag(weights, refs, len(X))
    return tracking_cost(X, U_h, weights.r, q, xref)


def _prediction_matrices(dyn, cols: np.ndarray):
    """``X = Phi x_1 + Gam u`` for a single input whose per-step column is ``cols[k]``."""
    n = len(cols)
    Phi = np.empty((n + 1, 2, 2))
    Gam = np.zeros((n + 1, 2, n))
    Phi[0] = np.eye(2)
    for k in range(n):
        Phi[k + 1] = dyn.A @ Phi[k]
        Gam[k + 1] = dyn.A @ Gam[k]
        Gam[k + 1][:, k] += cols[k]
    return Phi.reshape(-1, 2), Gam.reshape(-1, n)


def solve_human_problem(dyn, auth, weights: CostWeights, refs: ReferenceTrajectory,
                        x_1, U_m, start: int = 1) -> np.ndarray:
    """Optimal human command sequence for steps ``start..K-1`` from state ``x_1`` at ``start``.

    States are eliminated: ``X = Phi x + Gam_h U_h + Gam_m U_m`` and the
    objective becomes an unconstrained QP in ``U_h``.
    """
    K = len(refs)
    s = start - 1
    n = K - 1 - s
    U_m = np.asarray(U_m, dtype=float).ravel()[s:]
    auth = list(auth)[s:]
    bh, bm = _inputs(dyn, auth, n)
    Phi, Gh = _prediction_matrices(dyn, bh)
    _, Gm = _prediction_matrices(dyn, bm)
    q, xref = _q_diag(weights, refs, K)
    Qd = q[s:].ravel()
    xr = xref[s:].ravel()
    c = Phi @ np.asarray(x_1, dtype=float) + Gm @ U_m - xr
    H = Gh.T @ (Qd[:, None] * Gh) + np.diag(weights.r[s:s + n])
    f = Gh.T @ (Qd * c)
    z, _ = solve_dense_qp(DenseQp(H, f))
    return z


def human_feedback(dyn, auth, weights, refs, k: int, x_k, U_m) -> float:
    """Optimal human command at step ``k`` from state ``x_k``, by re-solving the tail problem."""
    return float(solve_human_problem(dyn, auth, weights, refs, x_k, U_m, start=k)[0])


def game_response(dyn, auth, weights_h, refs_h, x_1, U_m, a_p):
    """True trajectory and human commands when the human re-plans at every step.

    The human's model ignores ``a_p``; the returned trajectory includes it.
    """
    U_m = np.asarray(U_m, dtype=float).ravel()
    a_p = np.asarray(a_p, dtype=float).ravel()
    n = len(U_m)
    auth = list(auth)
    bh, bm = _inputs(dyn, auth, n)
    X = np.empty((n + 1, 2))
    U_h = np.empty(n)
    X[0] = x_1
    for k in range(n):
        U_h[k] = human_feedback(dyn, auth, weights_h, refs_h, k + 1, X[k], U_m)
        X[k + 1] = dyn.A @ X[k] + bh[k] * U_h[k] + bm[k] * U_m[k] + dyn.C[:, 0] * a_p[k]
    return X, U_h


def machine_objective(weights_m: CostWeights, refs_m: ReferenceTrajectory, X, U_m) -> float:
    q, xref = _q_diag(weights_m, refs_m, len(X))
    return tracking_cost(X, U_m, weights_m.r, q, xref)


def solve_game(dyn, auth, weights_h, refs_h, weights_m, refs_m, x_1, a_p):
    """Leader-optimal machine sequence given the follower's re-planning response.

    The map ``U_m -> X`` is affine; it is recovered column by column from
    ``game_response`` and the leader's cost is then minimised as a dense QP.
    Returns ``(U_m, X, U_h, J_m)``.
    """
    a_p = np.asarray(a_p, dtype=float).ravel()
    n = len(a_p)
    K = n + 1
    X0, _ = game_response(dyn, auth, weights_h, refs_h, x_1, np.zeros(n), a_p)
    G = np.empty((2 * K, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        Xi, _ = game_response(dyn, auth, weights_h, refs_h, x_1, e, a_p)
        G[:, i] = (Xi - X0).ravel()
    q, xref = _q_diag(weights_m, refs_m, K)
    Qd = q.ravel()
    c = X0.ravel() - xref.ravel()
    H = G.T @ (Qd[:, None] * G) + np.diag(weights_m.r[:n])
    f = G.T @ (Qd * c)
    U_m, _ = solve_dense_qp(DenseQp(H, f))
    X, U_h = game_response(dyn, auth, weights_h, refs_h, x_1, U_m, a_p)
    return U_m, X, U_h, machine_objective(weights_m, refs_m, X, U_m)


def solve_machine_only(dyn, weights_m, refs_m, x_1, a_p):
    """Plain MPC with the machine holding full authority, posed in ``U_m`` alone."""
    a_p = np.asarray(a_p, dtype=float).ravel()
    n = len(a_p)
    K = n + 1
    cols = np.tile(dyn.B[:, 0], (n, 1))
    Phi, Gm = _prediction_matrices(dyn, cols)
    _, Gc = _prediction_matrices(dyn, np.tile(dyn.C[:, 0], (n, 1)))
    q, xref = _q_diag(weights_m, refs_m, K)
    Qd = q.ravel()
    c = Phi @ np.asarray(x_1, dtype=float) + Gc @ a_p - xref.ravel()
    H = Gm.T @ (Qd[:, None] * Gm) + np.diag(weights_m.r[:n])
    f = Gm.T @ (Qd * c)
    U_m, _ = solve_dense_qp(DenseQp(H, f))
    X = (Phi @ np.asarray(x_1, dtype=float) + Gc @ a_p + Gm @ U_m).reshape(K, 2)
    return U_m, X, machine_objective(weights_m, refs_m, X, U_m)
