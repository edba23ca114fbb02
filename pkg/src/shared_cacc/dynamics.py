"""Relative longitudinal model of one follower with respect to its predecessor.

The state is ``x = [dv, g]`` where ``dv`` is predecessor speed minus ego speed
and ``g`` the following gap, so that ``dg/dt = dv`` and
``d(dv)/dt = a_pred - a_ego``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericOverflowError

DEFAULT_DT = 0.1

# continuous-time matrices
A_CONT = np.array([[0.0, 0.0], [1.0, 0.0]])
B_CONT = np.array([[-1.0], [0.0]])
C_CONT = np.array([[1.0], [0.0]])


@dataclass(frozen=True)
class VehicleState:
    dv: float
    g: float

    def __post_init__(self):
        if not (math.isfinite(self.dv) and math.isfinite(self.g)):
            raise ValueError(f"non-finite vehicle state ({self.dv}, {self.g})")

    @property
    def collided(self) -> bool:
        return self.g <= 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.dv, self.g], dtype=float)

    @classmethod
    def from_array(cls, x) -> "VehicleState":
        x = np.asarray(x, dtype=float).ravel()
        return cls(float(x[0]), float(x[1]))


@dataclass(frozen=True)
class AuthorityPair:
    """Human/machine control authority, ``alpha_h + alpha_m == 1`` exactly."""

    alpha_h: float
    alpha_m: float

    def __post_init__(self):
        for a in (self.alpha_h, self.alpha_m):
            if not (0.0 <= a <= 1.0):
                raise ValueError(f"authority {a} outside [0, 1]")
        if self.alpha_h + self.alpha_m != 1.0:
            raise ValueError(
                f"authorities must sum to 1, got {self.alpha_h} + {self.alpha_m}")

    @classmethod
    def human(cls, alpha_h: float) -> "AuthorityPair":
        alpha_h = float(alpha_h)
        return cls(alpha_h, 1.0 - alpha_h)


FULL_HUMAN = AuthorityPair(1.0, 0.0)
FULL_MACHINE = AuthorityPair(0.0, 1.0)


@dataclass(frozen=True, eq=False)
class DiscreteDynamics:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    dt: float


def discretize(dt: float = DEFAULT_DT) -> DiscreteDynamics:
    """Forward-Euler discretization of the relative kinematic model."""
    dt = float(dt)
    if not math.isfinite(dt) or dt <= 0.0:
        raise ValueError(f"dt must be positive and finite, got {dt}")
    A = np.eye(2) + A_CONT * dt
    B = B_CONT * dt
    C = C_CONT * dt
    for m in (A, B, C):
        m.setflags(write=False)
    return DiscreteDynamics(A=A, B=B, C=C, dt=dt)


def effective_input_matrices(dyn: DiscreteDynamics, auth: AuthorityPair):
    """Return ``(B_h, B_m)``, the input matrix scaled by each party's authority."""
    return dyn.B * auth.alpha_h, dyn.B * auth.alpha_m


def step(dyn: DiscreteDynamics, x: VehicleState, u_h: float, u_m: float,
         auth: AuthorityPair, a_p: float = 0.0) -> VehicleState:
    B_h, B_m = effective_input_matrices(dyn, auth)
    nxt = (dyn.A @ x.as_array() + B_h[:, 0] * u_h + B_m[:, 0] * u_m
           + dyn.C[:, 0] * a_p)
    if not np.all(np.isfinite(nxt)):
        raise NumericOverflowError(f"state update overflowed: {nxt}")
    return VehicleState(float(nxt[0]), float(nxt[1]))
