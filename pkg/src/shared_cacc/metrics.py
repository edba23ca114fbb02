"""Measures of effectiveness over trajectory logs and the authority sweep.

Oscillations are measured against the pre-disturbance equilibrium (the
state at the disturbance onset), not against series means, so that slow
transients do not leak into the ratios.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .fusion import Constant
from .simulator import ScenarioConfig, TrajectoryLog, run

DIVERGENT = math.inf    # Θ when the upstream vehicle shows no oscillation
MIN_NORM = 1e-9


def default_window(log: TrajectoryLog, skip: int = 2, span: int = 3) -> tuple[float, float]:
    """Skip ``skip`` forcing periods after the onset, then evaluate ``span`` periods."""
    if log.disturbance_onset is None or log.leader_period is None:
        raise ValueError("the log has no periodic disturbance; pass an explicit window")
    T = log.leader_period
    return (log.disturbance_onset + skip * T, log.disturbance_onset + (skip + span) * T)


def _equilibrium_row(log: TrajectoryLog) -> int:
    if log.disturbance_onset is None:
        return 0
    return min(int(np.searchsorted(log.t, log.disturbance_onset - 1e-9)), len(log.t) - 1)


def _follower(log: TrajectoryLog, i: int) -> int:
    if not 1 <= i <= log.n_followers:
        raise ValueError(f"follower index {i} outside 1..{log.n_followers}")
    return i


def _rows(log: TrajectoryLog, window) -> slice:
    sl = log.window_index(window)
    if sl.stop <= sl.start:
        raise ValueError(f"window {window} selects no samples")
    return sl


def propagation_rate(log: TrajectoryLog, i: int, window=None) -> float:
    """Ratio of L2 norms of the gap deviations of follower ``i`` and ``i - 1``."""
    if i < 2:
        raise ValueError("propagation rate needs a preceding follower, i >= 2")
    _follower(log, i)
    if window is None:
        window = default_window(log)
    sl = _rows(log, window)
    eq = log.gap[_equilibrium_row(log)]
    num = np.linalg.norm(log.gap[sl, i] - eq[i])
    den = np.linalg.norm(log.gap[sl, i - 1] - eq[i - 1])
    if not den >= MIN_NORM:
        return DIVERGENT
    return float(num / den)


def acceleration_range(log: TrajectoryLog, i: int, window=None) -> float:
    sl = _rows(log, window)
    a = log.accel[sl, _follower(log, i)]
    a = a[np.isfinite(a)]
    if a.size == 0:
        raise ValueError("window holds no acceleration samples")
    return float(a.max() - a.min())


class GapStats(NamedTuple):
    min_gap: float
    gap_range: float
    collision: bool


def min_gap_and_distribution(log: TrajectoryLog, i: int, window=None) -> GapStats:
    """Minimum gap and gap range of follower ``i``, plus the run's collision flag.

    The minimum is floored at 0: once two vehicles touch, how far the
    discrete positions overlap within the last step carries no meaning.
    """
    g = log.gap[_rows(log, window), _follower(log, i)]
    g = g[np.isfinite(g)]
    return GapStats(max(float(g.min()), 0.0), float(g.max() - g.min()), bool(log.collision))


@dataclass(frozen=True)
class InfluenceDuration:
    seconds: float
    censored: bool


def influence_duration(log: TrajectoryLog, threshold: float = 0.1,
                       settle_time: float | None = None) -> InfluenceDuration:
    """Time from the disturbance onset until the last follower's speed stays
    within ``threshold`` of its pre-disturbance mean for ``settle_time``
    seconds (default one leader period).
    """
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    if log.disturbance_onset is None:
        return InfluenceDuration(0.0, False)
    if settle_time is None:
        settle_time = log.leader_period
    if settle_time is None or not settle_time > 0:
        raise ValueError("need a positive settle time for a non-periodic disturbance")

    i0 = _equilibrium_row(log)
    v = log.speed[:, -1]
    base = v[:i0].mean() if i0 > 0 else v[0]
    quiet = np.abs(v[i0:] - base) < threshold
    m = int(round(settle_time / log.dt))
    # count of quiet samples in every length-m window starting at j
    c = np.concatenate(([0], np.cumsum(quiet)))
    starts = np.flatnonzero(c[m:] - c[:-m] == m) if len(quiet) >= m else np.array([], int)
    if starts.size == 0:
        return InfluenceDuration(float(log.t[-1] - log.t[i0]), True)
    return InfluenceDuration(float(log.t[i0 + starts[0]] - log.t[i0]), False)


@dataclass
class MoeReport:
    theta: list            # per follower; None for the first follower
    accel_range: list
    gap_range: list
    min_gap: list
    influence_duration: float | None
    influence_censored: bool
    string_stable: bool | None
    collision: bool

    @property
    def max_theta(self) -> float | None:
        th = [x for x in self.theta if x is not None]
        return max(th) if th else None

    def to_dict(self) -> dict:
        def clean(x):
            if isinstance(x, float) and not math.isfinite(x):
                return None
            return x
        return {
            "theta": [clean(x) for x in self.theta],
            "accel_range": self.accel_range,
            "gap_range": self.gap_range,
            "min_gap": self.min_gap,
            "influence_duration": clean(self.influence_duration),
            "influence_censored": self.influence_censored,
            "string_stable": self.string_stable,
            "collision": self.collision,
            "max_theta": clean(self.max_theta),
        }


def moe_report(log: TrajectoryLog, window=None, threshold: float = 0.1) -> MoeReport:
    """All measures for one run. Θ needs a periodic disturbance whose window
    fits in the log; otherwise it is left empty and stability is unknown.
    """
    n = log.n_followers
    theta: list = [None] * n
    stable = None
    if window is None and log.leader_period is not None:
        window = default_window(log)
    if window is not None and n >= 2:
        try:
            theta = [None] + [propagation_rate(log, i, window) for i in range(2, n + 1)]
            stable = bool(max(theta[1:]) < 1.0) and not log.collision
        except ValueError:
            stable = False if log.collision else None
    elif log.collision:
        stable = False

    acc, grange, gmin = [], [], []
    for i in range(1, n + 1):
        acc.append(acceleration_range(log, i))
        st = min_gap_and_distribution(log, i)
        gmin.append(st.min_gap)
        grange.append(st.gap_range)

    dur, censored = None, False
    if log.disturbance_onset is None:
        dur = 0.0
    elif log.leader_period is not None:
        d = influence_duration(log, threshold)
        dur, censored = d.seconds, d.censored
    return MoeReport(theta, acc, grange, gmin, dur, censored, stable, log.collision)


# ---------------------------------------------------------------------------
# authority sweep

@dataclass(frozen=True)
class SweepRow:
    alpha_h: float
    max_theta: float
    stable: bool
    collision: bool
    theta: tuple = ()      # followers 2..n


@dataclass
class SweepResult:
    rows: list
    threshold: float | None
    bracket: tuple | None
    message: str
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"threshold": self.threshold,
                "bracket": None if self.bracket is None else list(self.bracket),
                "message": self.message, "warnings": list(self.warnings)}


def sweep_window(base: ScenarioConfig, window=None) -> tuple[float, float]:
    if window is not None:
        return tuple(window)
    lead = base.leader
    if lead.onset is None or getattr(lead, "period", None) is None:
        raise ValueError("the sweep needs a periodic leader disturbance or an explicit window")
    return (lead.onset + 2 * lead.period, lead.onset + 5 * lead.period)


def evaluate_authority(base: ScenarioConfig, alpha_h: float, window=None) -> SweepRow:
    """Stability of ``base`` at constant human authority ``alpha_h``.

    The run stops at the end of the window; later samples cannot affect Θ.
    """
    w = sweep_window(base, window)
    stop = min(base.duration, w[1] + base.dt)
    log = run(replace(base, authority=Constant(float(alpha_h)), duration=stop))
    if log.collision:
        return SweepRow(float(alpha_h), math.inf, False, True, ())
    th = tuple(propagation_rate(log, i, w) for i in range(2, log.n_followers + 1))
    return SweepRow(float(alpha_h), float(max(th)), bool(max(th) < 1.0), False, th)


def _evaluate_star(args):
    return evaluate_authority(*args)


def odd_sweep(base: ScenarioConfig, grid, tol: float = 0.005, window=None,
              workers: int = 1) -> SweepResult:
    """Run ``base`` at constant human authority for every grid point and locate
    the stable -> unstable transition by bisection down to ``tol``.
    """
    grid = sorted(float(a) for a in grid)
    if len(grid) < 2:
        raise ValueError("sweep grid needs at least two points")
    if grid[0] < 0 or grid[-1] > 1:
        raise ValueError("sweep grid must lie within [0, 1]")
    if base.n_followers < 2:
        raise ValueError("string stability needs at least two followers")

    jobs = [(base, a, window) for a in grid]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_evaluate_star, jobs))
    else:
        rows = [_evaluate_star(j) for j in jobs]

    notes = []
    flips = sum(a.stable != b.stable for a, b in zip(rows, rows[1:]))
    if flips > 1:
        msg = f"stability flips {flips} times across the grid; the transition is not monotone"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)

    first = next((j for j in range(1, len(rows)) if rows[j - 1].stable and not rows[j].stable), None)
    if first is None:
        return SweepResult(rows, None, None, "no threshold in range", notes)

    lo, hi = rows[first - 1].alpha_h, rows[first].alpha_h
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if evaluate_authority(base, mid, window).stable:
            lo = mid
        else:
            hi = mid
    return SweepResult(rows, 0.5 * (lo + hi), (lo, hi),
                       f"string stable below alpha_h = {0.5 * (lo + hi):.4f}", notes)
