# # Sampling the truncated measure
#
# pCN is reversible for the Gaussian free field and only sees the quartic
# potential in its acceptance ratio; MALA adds the potential gradient.

# %%
from tensorfield.sampler import McmcConfig, lyapunov_check, run_chain

import numpy as np

from tensorfield import renorm

for alg, step in (("pCN", 0.3), ("MALA", 0.05)):
    cfg = McmcConfig(2, 2, algorithm=alg, step=step, n_samples=5000, burn_in=500, seed=0,
                     tracked_modes=((0, 0), (1, 0)), keep_samples=True)
    st = run_chain(cfg)
    print(alg, "acceptance", round(st.acceptance, 3),
          "E||phi||^2 = %.3f +- %.3f" % (st.means["L2sq"], st.ses["L2sq"]))

# %%
rep = lyapunov_check(np.stack(st.samples), renorm.renorm_table(2, 2))
print("Lyapunov constant C in L V <= C N^4 V:", rep.C)
