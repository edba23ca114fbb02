"""Horizon-wide form of the human reaction law.

Stacking states ``X = (x_1..x_K)`` and commands ``U_h, U_m`` (K-1 entries
each), the per-step law becomes

    U_h = Kh X + (Ph + Jh Sh1) U_m + Jh Sh2

where row ``r`` of ``Sh1 U_m + Sh2`` is the feedforward ``F_{r+1}`` consumed
at step ``r``. Both pieces are written out as explicit products of the
transfer matrices ``T_w = M_w + N_w'`` instead of the backward ``F`` pass,
so comparing the two paths is a genuine check.

The refs-independent operators depend on the gains only and can be cached
across planning calls; ``Sh2 = ref_map @ vec(Q x_ref)`` is linear in the
weighted references.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .human_model import CostWeights, GainSequence, ReferenceTrajectory, weighted_references


@dataclass(frozen=True, eq=False)
class StackedHumanLaw:
    K: int
    Kh: np.ndarray    # (K-1, 2K)
    Ph: np.ndarray    # (K-1, K-1)
    Jh: np.ndarray    # (K-1, 2(K-1))
    Sh1: np.ndarray   # (2(K-1), K-1)
    Sh2: np.ndarray   # (2(K-1),)
    ref_map: np.ndarray  # (2(K-1), 2K), Sh2 = ref_map @ vec(Q x_ref)

    @property
    def U_m_gain(self) -> np.ndarray:
        """``Ph + Jh Sh1``."""
        return self.Ph + self.Jh @ self.Sh1

    @property
    def offset(self) -> np.ndarray:
        """``Jh Sh2``."""
        return self.Jh @ self.Sh2

    def human_controls(self, X, U_m) -> np.ndarray:
        X = np.asarray(X, dtype=float).ravel()
        U_m = np.asarray(U_m, dtype=float).ravel()
        if len(X) != 2 * self.K or len(U_m) != self.K - 1:
            raise ValueError("stacked vectors do not match the horizon")
        return self.Kh @ X + self.U_m_gain @ U_m + self.offset

    def with_weighted_refs(self, qxref) -> "StackedHumanLaw":
        """Same operators with ``Sh2`` rebuilt from a (K, 2) array of ``Q_k x_ref_k``."""
        qxref = np.asarray(qxref, dtype=float).reshape(-1)
        if len(qxref) != 2 * self.K:
            raise ValueError(f"expected {self.K} weighted references")
        return StackedHumanLaw(self.K, self.Kh, self.Ph, self.Jh, self.Sh1,
                               self.ref_map @ qxref, self.ref_map)


@dataclass(frozen=True, eq=False)
class StackedVectors:
    X: np.ndarray
    U_h: np.ndarray
    U_m: np.ndarray

    def __post_init__(self):
        K = len(np.ravel(self.X)) // 2
        if len(np.ravel(self.U_h)) != K - 1 or len(np.ravel(self.U_m)) != K - 1:
            raise ValueError("stacked vectors have inconsistent horizons")

    @property
    def K(self) -> int:
        return len(np.ravel(self.X)) // 2


def stacked_structure(gains: GainSequence) -> StackedHumanLaw:
    """Refs-independent operators; ``Sh2`` is left at zero."""
    K = gains.K
    n = K - 1
    Kh = np.zeros((n, 2 * K))
    Jh = np.zeros((n, 2 * n))
    for j in range(n):
        Kh[j, 2 * j:2 * j + 2] = gains.Kx[j]
        Jh[j, 2 * j:2 * j + 2] = -gains.H[j] * gains.B_h[j]
    Ph = np.diag(gains.P)

    T = gains.T
    Sh1 = np.zeros((2 * n, n))
    ref_map = np.zeros((2 * n, 2 * K))
    # block row r (1-based) holds F_{r+1}; the running product
    # prod_{w=r+1}^{c} T_w is accumulated left to right as c grows
    for r in range(1, K):
        rows = slice(2 * (r - 1), 2 * r)
        prod = np.eye(2)
        # j = r term: empty product times -Q_{r+1} x_ref_{r+1}
        ref_map[rows, 2 * r:2 * r + 2] = -prod
        for c in range(r + 1, K):
            prod = prod @ T[c - 1]
            Sh1[rows, c - 1] = prod @ gains.D[c] @ gains.B_m[c - 1]
            ref_map[rows, 2 * c:2 * c + 2] = -prod
    for arr in (Kh, Jh, Ph, Sh1, ref_map):
        arr.setflags(write=False)
    return StackedHumanLaw(K, Kh, Ph, Jh, Sh1, np.zeros(2 * n), ref_map)


def assemble_stacked_human_law(gains: GainSequence, weights: CostWeights,
                               refs: ReferenceTrajectory) -> StackedHumanLaw:
    if len(refs) < gains.K:
        raise ValueError(f"need references for {gains.K} steps, got {len(refs)}")
    law = stacked_structure(gains)
    return law.with_weighted_refs(weighted_references(weights, refs, gains.K))
