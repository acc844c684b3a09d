"""Exhaustive finite-size estimates of E max_x ||G x|| / sqrt(n).

x runs over all corners {-1/sqrt(n), 1/sqrt(n)}^n.  The estimates approach
the level-3 bound 1.7788 slowly from below; the asymptotic value itself is
out of reach at these sizes.
"""

import time

from sflrdt import OracleConfig, estimate_ground_state

for n in (4, 8, 12, 16, 20):
    t = time.perf_counter()
    est = estimate_ground_state(OracleConfig(n=n, m=n, trials=200, seed=0))
    print(f"n=m={n:2d}  mean {est.mean:.4f} +- {est.std_error:.4f}  ({time.perf_counter() - t:.1f} s)")

neg = estimate_ground_state(OracleConfig(n=16, m=16, s=-1, trials=200, seed=0))
print(f"min-norm at n=m=16: {neg.mean:.4f} +- {neg.std_error:.4f}")
