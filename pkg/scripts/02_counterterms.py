# # Counterterms and their divergence rates
#
# The first counterterm cancels the melonic tadpole; it grows like log N in
# d = 3 and linearly in d = 4.  The second counterterm cancels the melonic
# snowball and depends on the colour structure.

# %%
import math

from tensorfield import renorm

for d in (2, 3, 4):
    print(d, "c1(d, 1) =", renorm.c1(d, 1))
print("c2(3, 1) =", renorm.c2(3, 1), " nested-sum oracle:", renorm.c2_reference(3, 1))

# %% [markdown]
# Successive slopes approach the continuum constants: 2 pi in d = 3 and
# kappa_4 = int_{[-1,1]^3} |x|^-2 dx in d = 4.

# %%
for N in (64, 256, 1024):
    print("d=3 N", N, (renorm.c1(3, 2 * N) - renorm.c1(3, N)) / math.log(2))
print("2 pi =", 2 * math.pi)
for N in (32, 128):
    print("d=4 N", N, (renorm.c1(4, 2 * N) - renorm.c1(4, N)) / N)
print("kappa_4 =", renorm.continuum_c1_slope(4))

# %%
fit = renorm.divergence_rate([(N, renorm.c1(3, N)) for N in (8, 16, 32, 64)])
print(fit.model, fit.slope)
print(renorm.renorm_table(4, 2).to_dict())
