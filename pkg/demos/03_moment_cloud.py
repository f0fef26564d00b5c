"""
Moments of behavioral measures for x+ = x^2 + u
===============================================
"""
# %%
import numpy as np

from behavmeas.experiments import moment_study

r = moment_study(n_samples=300, r=3, seed=11)
print("worst degree-one identity residual %.1e" % r["degree_one"].max())
print("worst order-3 graph-ideal residual %.1e" % r["graph_ideal"].max())

# %% the degree-one projections (E[x u], E[x+]) form a two-dimensional cloud
cloud = r["cloud"]
print(cloud.shape)
print("bounding box lo", cloud.min(axis=0).round(3), "hi", cloud.max(axis=0).round(3))
print("corr = %.3f" % np.corrcoef(cloud[:, 0], cloud[:, 1])[0, 1])
