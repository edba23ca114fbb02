"""Authority schedules and the command fusion law."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .dynamics import AuthorityPair


@dataclass(frozen=True)
class Constant:
    alpha_h: float

    def __post_init__(self):
        if not 0.0 <= self.alpha_h <= 1.0:
            raise ValueError(f"alpha_h must lie in [0, 1], got {self.alpha_h}")

    def alpha_h_at(self, t: float) -> float:
        return float(self.alpha_h)


@dataclass(frozen=True)
class LinearGradient:
    """Human authority ramps from 0 to 1 over ``duration`` seconds starting at ``t_start``."""

    t_start: float = 0.0
    duration: float = 10.0

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError(f"gradient duration must be positive, got {self.duration}")

    def alpha_h_at(self, t: float) -> float:
        return float(min(1.0, max(0.0, (t - self.t_start) / self.duration)))


@dataclass(frozen=True)
class DirectTakeover:
    """Human authority jumps from 0 to 1 at ``t_start``."""

    t_start: float = 0.0

    def alpha_h_at(self, t: float) -> float:
        return 1.0 if t >= self.t_start else 0.0


AuthoritySchedule = Constant | LinearGradient | DirectTakeover

_KINDS = {"constant": Constant, "linear_gradient": LinearGradient, "direct_takeover": DirectTakeover}


def authority_at(schedule: AuthoritySchedule, t: float) -> AuthorityPair:
    if t < 0:
        raise ValueError(f"time must be non-negative, got {t}")
    return AuthorityPair.human(schedule.alpha_h_at(t))


def authority_sequence(schedule: AuthoritySchedule, t0: float, dt: float, n: int) -> list[AuthorityPair]:
    return [authority_at(schedule, t0 + j * dt) for j in range(n)]


def fuse(u_h: float, u_m: float, auth: AuthorityPair) -> float:
    if u_h == u_m:
        return float(u_h)
    return float(auth.alpha_h * u_h + auth.alpha_m * u_m)


def schedule_from_dict(d: dict) -> AuthoritySchedule:
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in _KINDS:
        raise ValueError(f"unknown authority schedule kind {kind!r}; expected one of {sorted(_KINDS)}")
    unknown = set(d) - {f.name for f in fields(_KINDS[kind])}
    if unknown:
        raise ValueError(f"authority: unknown field(s) {', '.join(sorted(unknown))} for {kind!r}")
    return _KINDS[kind](**d)


def schedule_to_dict(s: AuthoritySchedule) -> dict:
    kind = next(k for k, cls in _KINDS.items() if isinstance(s, cls))
    return {"kind": kind, **asdict(s)}


def fused_sequence(U_h, U_m, alpha_h) -> np.ndarray:
    alpha_h = np.asarray(alpha_h, dtype=float)
    return alpha_h * np.asarray(U_h) + (1.0 - alpha_h) * np.asarray(U_m)
