"""One planning step of the game MPC, unpacked.

The machine chooses its command sequence knowing how the driver will react.
Its plan, the predicted human response and the fused command are printed
for a follower that is closing in on its predecessor.
"""

import numpy as np

from shared_cacc.dynamics import AuthorityPair
from shared_cacc.human_model import CostWeights, ReferenceTrajectory
from shared_cacc.machine_controller import GmpcPlanner, PlannerConfig, forecast_predecessor

cfg = PlannerConfig()                       # K = 30 steps of 0.1 s
human = CostWeights.constant(0.0, 1.0, 5.0, cfg.K)
planner = GmpcPlanner(cfg, human)

speed = 10.0
x_1 = np.array([-1.0, 6.5])                 # 1 m/s faster than the predecessor
refs_h = ReferenceTrajectory.constant(cfg.K, g_ref=0.6 * speed + 1.5)
forecast = forecast_predecessor("hv", -1.0, K=cfg.K, dt=cfg.dt)
auth = [AuthorityPair.human(0.3)] * (cfg.K - 1)

p = planner.plan(x_1, forecast, auth, refs_h, speed=speed)
fused = p.fused(auth)
print("step   u_m      u_h      fused    dv      gap")
for j in range(0, cfg.K - 1, 4):
    print(f"{j:4d}  {p.U_m[j]:+.3f}  {p.U_h[j]:+.3f}  {fused[j]:+.3f}  {p.X[j, 0]:+.3f}  {p.X[j, 1]:.3f}")
s = p.solution
print(f"\nKKT residuals {s.stationarity:.1e} / {s.feasibility:.1e}, condition ~ {s.cond:.1e}")
