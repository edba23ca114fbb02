"""Human-machine shared control for CACC platoon takeovers.

The human driver is modelled as an LQR follower with a closed-form reaction
law; the machine plans as the Stackelberg leader through an
equality-constrained QP. Commands are fused under an authority schedule and
evaluated in a predecessor-following platoon simulator.
"""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .dynamics import AuthorityPair, DiscreteDynamics, VehicleState, discretize, step
from .errors import IllPosedProblemError, NumericOverflowError
from .fusion import Constant, DirectTakeover, LinearGradient, authority_at, fuse
from .human_model import (CostWeights, ReferenceTrajectory, compute_feedforward, compute_gains,
                          human_reaction)
from .machine_controller import GmpcPlanner, PlannerConfig, assemble_qp, solve_kkt
from .metrics import (acceleration_range, influence_duration, min_gap_and_distribution,
                      moe_report, odd_sweep, propagation_rate)
from .simulator import (ConstantSpeed, HardBrake, HumanConfig, ScenarioConfig, Sinusoid,
                        TrajectoryLog, run, run_baseline_human)
from .stacked_ops import assemble_stacked_human_law
