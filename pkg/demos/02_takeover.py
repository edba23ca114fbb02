"""Handing control to the driver on a steady road.

The platoon cruises at 10 m/s at the machine's short gap. The driver prefers a
longer gap, so any takeover opens the gaps; ramping authority over 10 s does
it with much gentler accelerations than an instant switch.
"""

import numpy as np

from shared_cacc import configs
from shared_cacc.simulator import run

runs = {name: run(configs.load(name)) for name in ("case1_direct", "case1_gradient", "case1_constant")}

print("peak |acceleration| per follower, m/s^2")
for name, log in runs.items():
    peak = np.nanmax(np.abs(log.accel[:, 1:]), axis=0)
    print(f"  {name:15s}", "  ".join(f"{p:.3f}" for p in peak))

print("\nfinal gaps, m")
for name, log in runs.items():
    print(f"  {name:15s}", "  ".join(f"{g:.2f}" for g in log.gap[-1, 1:]))
