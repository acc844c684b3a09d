"""Level-1 hierarchy: closed form against the assembled functional.

At r = 1 the binary side reduces to E|h| = sqrt(2/pi) and the spherical side
to alpha / (4 gamma_sq).  Stationarity in gamma_sq gives gamma_sq = sqrt(alpha)/2,
so the positive bound is sqrt(2/pi) + sqrt(alpha) and the negative one
sqrt(alpha) - sqrt(2/pi).
"""

import numpy as np

from sflrdt import LiftParams, ModelSpec, psi_rd_bar, solve_stationary

for alpha in (1.0, 2.0, 3.5):
    pos = solve_stationary(ModelSpec(1, alpha, 1))
    neg = solve_stationary(ModelSpec(-1, alpha, 1))
    print(f"alpha={alpha:4.1f}  gamma_sq={pos.params.gamma_sq:.6f}  "
          f"max-norm bound {pos.free_energy:.6f} (closed form {np.sqrt(2 / np.pi) + np.sqrt(alpha):.6f})  "
          f"min-norm bound {neg.free_energy:.6f} (closed form {np.sqrt(alpha) - np.sqrt(2 / np.pi):.6f})")

# the functional away from the stationary gamma_sq is larger for the positive model
spec = ModelSpec(1, 1.0, 1)
for g in (0.3, 0.5, 0.8):
    params = LiftParams(1, [1, 0], [1, 0], [1, 0], g)
    print(f"gamma_sq={g:.1f}: f = {psi_rd_bar(params, spec).free_energy:.6f}")
