"""
Where weaker consistency notions break
======================================

A permuted measure passes every weak monomial test yet sits far from the
graph; a fair-coin chain satisfies the one-step kernel test but not the
history test.
"""
# %%
from behavmeas.experiments import counterexample_study, riemann_limit

for N in (10, 100, 1000):
    r = counterexample_study(N)
    print(N, "weak %.1e  metric %.5f  limit %.5f"
          % (r["weak_residual"], r["metric_residual"], riemann_limit(N)))

# %% kernel residuals
r = counterexample_study()
for k in ("onestep_residual", "marginal_residual", "history_residual"):
    print(k, r[k])

# %% a deterministic chain passes both
print(r["deterministic"])
