# # Coloured graphs, degree and power counting
#
# Wick contractions of a stochastic object are coloured graphs.  Melonic graphs
# have degree 0; every other contraction has degree at least d - 2.

# %%
from tensorfield.diagrams import (
    SkeletonSpec, analyze, enumerate_contractions, melonic_snowball, melonic_tadpole, truncated_amplitude)

for d in (3, 4, 5):
    degs = sorted(analyze(G).degree for G in enumerate_contractions(SkeletonSpec("X2m", d)))
    print("d", d, "X2m contraction degrees", degs)

# %%
for d in (3, 4):
    print("d", d, "tadpole omega", analyze(melonic_tadpole(d)).omega,
          "snowball omega", analyze(melonic_snowball(d)).omega)

# %% [markdown]
# The truncated tadpole amplitude at zero external momentum is the first
# counterterm, growing like log N in d = 3.

# %%
for N in (4, 8, 16):
    print(N, truncated_amplitude(melonic_tadpole(3), N))
print(melonic_tadpole(3).dumps()[:200], "...")
