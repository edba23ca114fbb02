"""How much authority can the driver hold before oscillations grow?

The leader's speed oscillates sinusoidally. For each constant human
authority the propagation rate (gap-oscillation norm of each follower over
that of its predecessor) is measured; the platoon is string stable while the
largest rate stays below 1. Bisection then pins the threshold down.
This takes about half a minute.
"""

from shared_cacc import configs
from shared_cacc.metrics import odd_sweep

base = configs.load("case2_machine")
res = odd_sweep(base, [round(0.1 * j, 1) for j in range(11)])

print("alpha_h  max theta  stable")
for r in res.rows:
    print(f"  {r.alpha_h:4.1f}    {r.max_theta:.3f}    {'yes' if r.stable else 'no'}")
print(f"\n{res.message}; bracket {res.bracket}")
