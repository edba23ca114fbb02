"""Platoon simulation: a human-driven leader followed by shared-control CAVs.

Each follower only looks at its immediate predecessor. Per control step and
in upstream order, every follower

1. observes its relative state to the predecessor,
2. forecasts the predecessor's accelerations (the plan the predecessor
   published on the previous step, or a hold-and-decay guess behind the
   human-driven leader),
3. plans the machine command with the game MPC,
4. lets the human model react to the applied machine command,
5. fuses both commands under its current authority and publishes the
   fused plan for its own follower.

Absolute kinematics are integrated with forward Euler, speeds floored at 0.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Sequence

import numpy as np

from .dynamics import AuthorityPair
from .fusion import (AuthoritySchedule, Constant, authority_sequence, fuse,
                     schedule_from_dict, schedule_to_dict)
from .human_model import CostWeights, ReferenceTrajectory
from .machine_controller import GmpcPlanner, PlannerConfig, forecast_predecessor


# ---------------------------------------------------------------------------
# leader profiles

@dataclass(frozen=True)
class ConstantSpeed:
    v: float = 10.0

    def __post_init__(self):
        if self.v < 0:
            raise ValueError("leader speed must be non-negative")

    @property
    def onset(self) -> float | None:
        return None

    @property
    def period(self) -> float | None:
        return None

    def speed(self, t: float) -> float:
        return self.v


@dataclass(frozen=True)
class Sinusoid:
    """``v0 + amplitude * sin(2 pi (t - t_start) / period)`` for ``cycles`` periods after ``t_start``."""

    v0: float = 10.0
    amplitude: float = 2.0
    period: float = 20.0
    t_start: float = 10.0
    cycles: float | None = 5

    def __post_init__(self):
        if self.period <= 0:
            raise ValueError("sinusoid period must be positive")
        if self.v0 - abs(self.amplitude) < 0:
            raise ValueError("sinusoid would drive the leader speed below zero")

    @property
    def onset(self) -> float:
        return self.t_start

    def speed(self, t: float) -> float:
        tau = t - self.t_start
        if tau <= 0 or (self.cycles is not None and tau >= self.cycles * self.period):
            return self.v0
        return self.v0 + self.amplitude * math.sin(2.0 * math.pi * tau / self.period)


@dataclass(frozen=True)
class HardBrake:
    v0: float = 10.0
    decel: float = -4.0
    t_start: float = 10.0
    v_final: float = 2.0

    def __post_init__(self):
        if not self.decel < 0:
            raise ValueError("hard-brake deceleration must be negative")
        if not 0 <= self.v_final <= self.v0:
            raise ValueError("need 0 <= v_final <= v0")

    @property
    def onset(self) -> float:
        return self.t_start

    @property
    def period(self) -> float | None:
        return None

    def speed(self, t: float) -> float:
        if t <= self.t_start:
            return self.v0
        return max(self.v_final, self.v0 + self.decel * (t - self.t_start))


LeaderProfile = ConstantSpeed | Sinusoid | HardBrake
_LEADERS = {"constant": ConstantSpeed, "sinusoid": Sinusoid, "hard_brake": HardBrake}


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class HumanConfig:
    """Human driver weights and desired-gap policy ``g_ref = time_gap * v + standstill``."""

    q_v: float = 0.0
    q_g: float = 1.0
    r: float = 5.0
    time_gap: float = 0.6
    standstill: float = 1.5
    # "speed": desired gap from the ego speed at each planning step;
    # "initial": from the speed at the start of the run (constant spacing)
    gap_policy: str = "speed"

    def __post_init__(self):
        if self.gap_policy not in ("speed", "initial"):
            raise ValueError(f"gap_policy must be 'speed' or 'initial', got {self.gap_policy!r}")

    def weights(self, K: int) -> CostWeights:
        return CostWeights.constant(self.q_v, self.q_g, self.r, K)

    def references(self, K: int, speed: float) -> ReferenceTrajectory:
        # speed-error component is a "don't care" unless it carries weight
        dv = 0.0 if self.q_v > 0 else None
        return ReferenceTrajectory.constant(K, dv_ref=dv, g_ref=self.desired_gap(speed))

    def desired_gap(self, speed: float) -> float:
        return self.time_gap * speed + self.standstill


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "scenario"
    n_followers: int = 6
    initial_speed: float = 10.0
    # explicit per-follower gaps; None derives them from ``start_gap``
    initial_gaps: tuple | None = None
    # "cacc": cacc_time_gap * v + standstill_gap; "human": the human's desired gap
    start_gap: str = "cacc"
    cacc_time_gap: float = 0.5
    standstill_gap: float = 2.0
    leader: LeaderProfile = field(default_factory=ConstantSpeed)
    # one schedule for every follower, or one per follower
    authority: AuthoritySchedule | tuple = field(default_factory=lambda: Constant(0.0))
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    human: HumanConfig = field(default_factory=HumanConfig)
    duration: float = 100.0
    dt: float = 0.1
    human_mode: str = "modeled"          # or "baseline"
    baseline_delay: float = 0.5
    hv_hold_time: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n_followers < 1:
            raise ValueError("need at least one follower")
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if abs(self.dt - self.planner.dt) > 1e-12:
            raise ValueError(f"scenario dt {self.dt} != planner dt {self.planner.dt}")
        if self.human_mode not in ("modeled", "baseline"):
            raise ValueError(f"human_mode must be 'modeled' or 'baseline', got {self.human_mode!r}")
        if self.start_gap not in ("cacc", "human"):
            raise ValueError(f"start_gap must be 'cacc' or 'human', got {self.start_gap!r}")
        if self.baseline_delay < 0:
            raise ValueError("baseline delay must be non-negative")
        if isinstance(self.authority, (list, tuple)) and len(self.authority) != self.n_followers:
            raise ValueError("per-follower authority list must have n_followers entries")
        if self.initial_gaps is not None:
            gaps = tuple(float(g) for g in self.initial_gaps)
            if len(gaps) != self.n_followers or min(gaps) <= 0:
                raise ValueError("initial_gaps needs one positive gap per follower")
            object.__setattr__(self, "initial_gaps", gaps)
        if isinstance(self.authority, list):
            object.__setattr__(self, "authority", tuple(self.authority))

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    def schedule(self, i: int) -> AuthoritySchedule:
        """Schedule of follower ``i`` (1-based)."""
        if isinstance(self.authority, tuple):
            return self.authority[i - 1]
        return self.authority

    def gaps(self) -> tuple:
        if self.initial_gaps is not None:
            return self.initial_gaps
        if self.start_gap == "human":
            g = self.human.desired_gap(self.initial_speed)
        else:
            g = self.cacc_time_gap * self.initial_speed + self.standstill_gap
        return (g,) * self.n_followers

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        kind = next(k for k, cls in _LEADERS.items() if isinstance(self.leader, cls))
        d["leader"] = {"kind": kind, **asdict(self.leader)}
        if isinstance(self.authority, tuple):
            d["authority"] = [schedule_to_dict(s) for s in self.authority]
        else:
            d["authority"] = schedule_to_dict(self.authority)
        d["planner"] = asdict(self.planner)
        d["human"] = asdict(self.human)
        d["initial_gaps"] = None if self.initial_gaps is None else list(self.initial_gaps)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        _check_fields(cls, d, "scenario")
        if "leader" in d:
            ld = dict(d["leader"])
            kind = ld.pop("kind", None)
            if kind not in _LEADERS:
                raise ValueError(f"leader.kind must be one of {sorted(_LEADERS)}, got {kind!r}")
            _check_fields(_LEADERS[kind], ld, "leader")
            d["leader"] = _LEADERS[kind](**ld)
        if "authority" in d:
            a = d["authority"]
            d["authority"] = (tuple(schedule_from_dict(s) for s in a) if isinstance(a, list)
                              else schedule_from_dict(a))
        if "planner" in d:
            pd = dict(d["planner"])
            _check_fields(PlannerConfig, pd, "planner")
            pd.setdefault("dt", d.get("dt", 0.1))
            d["planner"] = PlannerConfig(**pd)
        if "human" in d:
            _check_fields(HumanConfig, d["human"], "human")
            d["human"] = HumanConfig(**d["human"])
        if d.get("initial_gaps") is not None:
            d["initial_gaps"] = tuple(d["initial_gaps"])
        return cls(**d)

    def with_authority(self, schedule: AuthoritySchedule) -> "ScenarioConfig":
        return replace(self, authority=schedule)


def _check_fields(cls, d: dict, where: str) -> None:
    if not isinstance(d, dict):
        raise ValueError(f"{where}: expected an object, got {type(d).__name__}")
    unknown = set(d) - {f.name for f in fields(cls)} - {"kind"}
    if unknown:
        raise ValueError(f"{where}: unknown field(s) {', '.join(sorted(unknown))}")


# ---------------------------------------------------------------------------
# log

@dataclass(eq=False)
class TrajectoryLog:
    """Per-step, per-vehicle series. Column 0 is the leader, columns 1..n the followers.

    Row ``k`` holds the state at ``t[k]`` and the commands applied over
    ``[t[k], t[k+1])``. Leader entries of follower-only quantities are NaN.
    A run that ends in a collision carries one last row with the kinematic
    state at the collision time and NaN commands.
    """

    t: np.ndarray
    position: np.ndarray
    speed: np.ndarray
    accel: np.ndarray
    gap: np.ndarray
    dv: np.ndarray
    u_h: np.ndarray
    u_m: np.ndarray
    u_fused: np.ndarray
    alpha_h: np.ndarray
    violation: np.ndarray
    human_violation: np.ndarray
    collision: bool = False
    collision_time: float | None = None
    collision_vehicle: int | None = None
    dt: float = 0.1
    disturbance_onset: float | None = None
    leader_period: float | None = None

    @property
    def n_vehicles(self) -> int:
        return self.position.shape[1]

    @property
    def n_followers(self) -> int:
        return self.n_vehicles - 1

    def __len__(self):
        return len(self.t)

    def window_index(self, window=None) -> slice:
        if window is None:
            return slice(0, len(self.t))
        t0, t1 = window
        if t0 > t1 or t0 < self.t[0] - 1e-9 or t1 > self.t[-1] + self.dt + 1e-9:
            raise ValueError(f"window {window} outside the log [{self.t[0]}, {self.t[-1]}]")
        i0 = int(np.searchsorted(self.t, t0 - 1e-9))
        i1 = int(np.searchsorted(self.t, t1 + 1e-9))
        return slice(i0, i1)

    def equal(self, other: "TrajectoryLog") -> bool:
        """Bit-for-bit equality of every series and flag."""
        names = ("t", "position", "speed", "accel", "gap", "dv", "u_h", "u_m",
                 "u_fused", "alpha_h", "violation", "human_violation")
        same = all(np.array_equal(getattr(self, a), getattr(other, a), equal_nan=True)
                   for a in names if getattr(self, a).dtype.kind == "f")
        same = same and all(np.array_equal(getattr(self, a), getattr(other, a))
                            for a in names if getattr(self, a).dtype.kind != "f")
        return same and (self.collision, self.collision_time, self.collision_vehicle) == (
            other.collision, other.collision_time, other.collision_vehicle)


def _allocate(n_rows: int, n_veh: int):
    f = lambda: np.full((n_rows, n_veh), np.nan)
    return dict(position=f(), speed=f(), accel=f(), gap=f(), dv=f(), u_h=f(), u_m=f(),
                u_fused=f(), alpha_h=f(),
                violation=np.zeros((n_rows, n_veh), dtype=bool),
                human_violation=np.zeros((n_rows, n_veh), dtype=bool))


# ---------------------------------------------------------------------------
# simulation

def run(scenario: ScenarioConfig) -> TrajectoryLog:
    return _simulate(scenario, baseline=scenario.human_mode == "baseline")


def run_baseline_human(scenario: ScenarioConfig) -> TrajectoryLog:
    """Direct human takeover: full human authority, delayed commands, no forecast."""
    return _simulate(scenario, baseline=True)


def _simulate(sc: ScenarioConfig, baseline: bool) -> TrajectoryLog:
    dt = sc.dt
    K = sc.planner.K
    n = sc.n_followers
    n_steps = sc.n_steps
    planner = GmpcPlanner(sc.planner, sc.human.weights(K))
    delay_steps = int(round(sc.baseline_delay / dt)) if baseline else 0
    human_buffers = [[0.0] * delay_steps for _ in range(n)]

    pos = np.empty(n + 1)
    vel = np.empty(n + 1)
    vel[0] = sc.leader.speed(0.0)
    vel[1:] = sc.initial_speed
    pos[0] = 0.0
    pos[1:] = -np.cumsum(sc.gaps())

    # one spare row records the state at the moment of a collision
    cols = _allocate(n_steps + 1, n + 1)
    t = np.arange(n_steps + 1) * dt
    published: list[np.ndarray | None] = [None] * (n + 1)
    plans: list = [None] * (n + 1)
    p_auth: list = [None] * (n + 1)
    collision = None
    rows = n_steps

    for k in range(n_steps):
        tk = t[k]
        a_leader = (sc.leader.speed(tk + dt) - sc.leader.speed(tk)) / dt
        u = np.empty(n + 1)
        u[0] = a_leader
        new_plans: list[np.ndarray | None] = [None] * (n + 1)
        for i in range(1, n + 1):
            x = np.array([vel[i - 1] - vel[i], pos[i - 1] - pos[i]])
            v_ref = vel[i] if sc.human.gap_policy == "speed" else sc.initial_speed
            refs_h = sc.human.references(K, v_ref)
            if baseline:
                auth_seq = [AuthorityPair(1.0, 0.0)] * (K - 1)
                forecast = np.zeros(K - 1)
            else:
                auth_seq = authority_sequence(sc.schedule(i), tk, dt, K - 1)
                if i == 1:
                    forecast = forecast_predecessor("hv", a_leader, None, K, dt, sc.hv_hold_time)
                else:
                    forecast = forecast_predecessor("cav", 0.0, published[i - 1], K, dt)
            j = k % sc.planner.replan_period
            if j == 0 or plans[i] is None:
                plans[i] = planner.plan(x, forecast, auth_seq, refs_h, speed=vel[i])
                j = 0
                p_auth[i] = auth_seq
            p = plans[i]
            auth = auth_seq[0]
            u_m = float(np.clip(p.U_m[j], sc.planner.u_min, sc.planner.u_max))
            # the human reacts to the command actually applied, not the unsaturated plan
            u_h = float(p.U_h[j] + p.gains.P[j] * (u_m - p.U_m[j]))
            if j:
                # between replans the stored plan is followed; the human's
                # feedback still sees the measured state
                u_h += float(p.gains.Kx[j] @ (x - p.X[j]))
            if baseline:
                human_buffers[i - 1].append(u_h)
                u_h = human_buffers[i - 1].pop(0)
            u_i = fuse(u_h, u_m, auth)
            u[i] = u_i
            plan_fused = np.zeros(K - 1)
            plan_fused[:K - 1 - j] = p.fused(p_auth[i])[j:]
            plan_fused[0] = u_i
            new_plans[i] = plan_fused

            cols["gap"][k, i] = x[1]
            cols["dv"][k, i] = x[0]
            cols["u_h"][k, i] = u_h
            cols["u_m"][k, i] = u_m
            cols["u_fused"][k, i] = u_i
            cols["alpha_h"][k, i] = auth.alpha_h
            cols["violation"][k, i] = p.violation if j == 0 else bool(u_m != p.U_m[j])
            cols["human_violation"][k, i] = p.human_violation

        published = new_plans
        cols["position"][k] = pos
        cols["speed"][k] = vel
        cols["u_fused"][k, 0] = a_leader

        new_vel = np.maximum(0.0, vel + dt * u)
        new_vel[0] = sc.leader.speed(tk + dt)
        cols["accel"][k] = (new_vel - vel) / dt
        pos = pos + dt * vel
        vel = new_vel

        gaps = pos[:-1] - pos[1:]
        if np.any(gaps <= 0.0):
            i_hit = int(np.argmax(gaps <= 0.0)) + 1
            collision = (tk + dt, i_hit)
            rows = k + 2
            cols["position"][k + 1] = pos
            cols["speed"][k + 1] = vel
            cols["gap"][k + 1, 1:] = gaps
            cols["dv"][k + 1, 1:] = vel[:-1] - vel[1:]
            break

    for key in cols:
        cols[key] = cols[key][:rows]
    return TrajectoryLog(
        t=t[:rows], **cols,
        collision=collision is not None,
        collision_time=None if collision is None else float(collision[0]),
        collision_vehicle=None if collision is None else collision[1],
        dt=dt, disturbance_onset=sc.leader.onset,
        leader_period=getattr(sc.leader, "period", None))
