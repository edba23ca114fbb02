"""Safety margins when the leader brakes hard.

The leader brakes at 4 m/s^2 from 10 to 2 m/s. The machine anticipates via
the shared plans; the driver reacts to gaps alone. More human authority
means smaller minimum gaps, and beyond some point, collisions.
"""

from dataclasses import replace

from shared_cacc import configs
from shared_cacc.fusion import Constant
from shared_cacc.metrics import min_gap_and_distribution
from shared_cacc.simulator import run

base = configs.load("case3_machine")
print("alpha_h  min gap (m)  collision")
for a in (0.0, 0.2, 0.4, 0.5, 0.6, 1.0):
    log = run(replace(base, authority=Constant(a)))
    gmin = min(min_gap_and_distribution(log, i).min_gap for i in range(1, log.n_followers + 1))
    hit = f"follower {log.collision_vehicle} at {log.collision_time:.1f} s" if log.collision else "-"
    print(f"  {a:4.1f}    {gmin:6.3f}      {hit}")
