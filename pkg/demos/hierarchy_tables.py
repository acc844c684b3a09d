"""Solve the stored scenarios level by level and compare with reference values.

Each row is a stationary point of the lifted functional; full rows free the
last overlap pair, partial rows pin it to zero.  Running all three scenarios
takes several minutes on one core.
"""

import sys
import time

from sflrdt import ModelSpec, solve_stationary
from sflrdt.reference import SCENARIOS

SIGN = {"positive": 1, "negative": -1}
wanted = sys.argv[1:] or ["positive"]

for (model, alpha), rows in SCENARIOS.items():
    if model not in wanted:
        continue
    print(f"\n{model} model, alpha = {alpha}")
    print(f"{'r':>2} {'mode':>8} {'energy':>9} {'reference':>9} {'delta':>9} {'collapsed':>9} {'time':>6}")
    for row in rows:
        t = time.perf_counter()
        rep = solve_stationary(ModelSpec(SIGN[model], alpha, row["r"], row["mode"]))
        dt = time.perf_counter() - t
        print(f"{row['r']:>2} {row['mode']:>8} {rep.free_energy:9.6f} {row['energy']:9.4f} "
              f"{rep.free_energy - row['energy']:+9.1e} {str(rep.collapsed_to_partial):>9} {dt:5.1f}s")
