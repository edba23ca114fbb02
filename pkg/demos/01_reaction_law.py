"""The human driver as an LQR follower.

Builds the reaction law for a short horizon, checks it against a brute-force
solve of the same problem, and shows how the human's feedback shrinks as the
machine takes authority away.
"""

import numpy as np

from shared_cacc import oracle
from shared_cacc.dynamics import AuthorityPair, discretize
from shared_cacc.human_model import (CostWeights, ReferenceTrajectory, compute_feedforward,
                                     compute_gains, reaction_sequence, simulate_human_closed_loop)

K = 20
dyn = discretize(0.1)
weights = CostWeights.constant(q_v=0.0, q_g=1.0, r=5.0, K=K)
refs = ReferenceTrajectory.constant(K, g_ref=8.0)   # speed error is a don't-care
x_1 = np.array([0.5, 6.0])                           # closing in, 2 m short of the desired gap
U_m = np.zeros(K - 1)

print("alpha_h   K_1 (dv, g)          u_h,1    |u_h - brute force|")
for a in (1.0, 0.7, 0.3, 0.0):
    auth = [AuthorityPair.human(a)] * (K - 1)
    g = compute_gains(dyn, auth, weights, K, refs)
    ff = compute_feedforward(g, weights, refs, U_m)
    X = simulate_human_closed_loop(dyn, g, ff, x_1, U_m)
    U_h = reaction_sequence(g, ff, X, U_m)
    if a > 0:
        err = np.abs(U_h - oracle.solve_human_problem(dyn, auth, weights, refs, x_1, U_m)).max()
        err = f"{err:.1e}"
    else:
        err = "n/a (no authority)"
    print(f"{a:5.1f}   [{g.Kx[0][0] + 0.0:+.4f}, {g.Kx[0][1] + 0.0:+.4f}]   {U_h[0] + 0.0:+.4f}   {err}")

# with no authority the human still "wants" to act (through the references),
# but the command has no effect on the plant
