"""
Gridded optimal control as a linear program
===========================================

The two-state polynomial plant on a 41x41 state grid and 21 inputs, horizon 2.
The occupation LP and backward induction should agree to rounding.
"""
# %%
import numpy as np

from behavmeas.experiments import jensen_summary, ocp_study

res = ocp_study(x0=(0.9, 0.4))
d = res["duality"]
print("LP %.6f  Bellman %.6f  gap %.1e" % (d.primal, d.dual, d.gap))
print("simplex iterations", res["solution"].iterations)

# %% the start point snaps to the grid
print("grid start", res["start_point"])

# %% play the tabulated policy on the true dynamics
tr = res["rollout"]
print("inputs", tr.inputs.ravel())
print("rollout cost %.6f vs grid value %.6f" % (res["rollout_cost"], d.dual))

# %% the discretization bias comes from snapping the terminal state
print("terminal state", tr.states[-1], "->", res["grid"].points()[res["grid"].nearest(tr.states[-1])])

# %% uniform initial law on [0.7, 1.1] x [0.2, 0.6] (takes a few seconds)
box = ocp_study(rho0_box=([0.7, 0.2], [1.1, 0.6]))
s = jensen_summary(box)
print("E[V0] %.4f   V0(E x0) %.4f   gap %.4f" % (s["expected_v0"], s["v0_at_mean"], s["gap"]))
print("mean start", np.round(s["mean_state"], 4))
