# # Free field, Wick cube and the diagrammatic oracle
#
# The stationary free field has independent modes with variance 1/<m>^2.
# Monte Carlo second moments of renormalised products are compared with exact
# Wick sums over perfect matchings.

# %%
import numpy as np

from tensorfield import renorm
from tensorfield.diagrams import wick_covariance
from tensorfield.lattice_field import ModeLattice
from tensorfield.stochastic_objects import NoiseSource, build_wick_cube, sample_ou_stationary

d, N = 3, 2
lat = ModeLattice(d, N)
table = renorm.renorm_table(d, N)
X = sample_ou_stationary(lat, NoiseSource(lat, seed=0, purpose="test", replicas=5000))
print("E|X_0|^2 MC", np.mean(np.abs(X[:, N, N, N]) ** 2), "exact", 1.0)

# %%
X3 = build_wick_cube(X, table, d)
mc = np.mean(np.abs(X3) ** 2, axis=0)
exact = wick_covariance("X3", d, N, table=table).table
se = np.std(np.abs(X3) ** 2, axis=0) / np.sqrt(X.shape[0])
print("max |z| over modes:", np.max(np.abs(mc - exact) / se))
print("E|X3_0|^2 MC", mc[N, N, N], "oracle", exact[N, N, N])
