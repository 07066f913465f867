# # Fourier fields and the non-local product
#
# Fields on the torus are stored as full arrays of Fourier coefficients on the
# box {-N..N}^d, with array index i holding mode i - N.  Real fields satisfy
# u[-m] = conj(u[m]).

# %%
import numpy as np

from tensorfield.lattice_field import ModeLattice, hermitian_defect, l2_norm, m_norm, random_field, sobolev_norm
from tensorfield.nonlocal_product import (
    interaction, naive_nonlocal_product_c, nonlocal_product, nonlocal_product_c, quadrature_nonlocal_product_c)

lat = ModeLattice(3, 2)
rng = np.random.default_rng(0)
phi = random_field(lat, rng, decay=1.0)
print("shape", phi.shape, "Hermitian defect", hermitian_defect(phi))
print("L2", l2_norm(phi), "H1", sobolev_norm(phi, 1.0))

# %% [markdown]
# The colour-c product pairs all coordinates but the c-th of f with those of
# g, and the c-th coordinate of h with that of g.  The fast kernel is checked
# against the literal Fourier triple sum and a real-space quadrature.

# %%
f, g, h = (random_field(lat, rng) for _ in range(3))
fast = nonlocal_product_c(f, g, h, 2)
print("vs naive sum  ", np.max(np.abs(fast - naive_nonlocal_product_c(f, g, h, 2))))
print("vs quadrature ", np.max(np.abs(fast - quadrature_nonlocal_product_c(f, g, h, 2))))

# %% [markdown]
# The interaction I(phi) = sum_c (N^c(phi, phi, phi), phi) is the square of the
# colour Gram matrices' Frobenius norms, so it equals the sum of M^4 norms to
# the fourth power.

# %%
I = interaction(phi).real
print("I(phi)", I, "sum_c ||phi||_{M^4_c}^4", sum(m_norm(phi, c, 4) ** 4 for c in (1, 2, 3)))
print("(N(phi,phi,phi), phi) =", np.vdot(nonlocal_product(phi, phi, phi), phi).real)
