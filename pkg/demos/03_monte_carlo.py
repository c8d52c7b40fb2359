"""
A small Monte Carlo study
=========================

Run the four shipped scenarios with a handful of runs and print median
GWD over interior steps, per tracker and estimation mode.  The command
line tool does the same at scale:

    giwsmooth simulate --config ct_lowpd --out results/ --runs 200
"""

import numpy as np

from giwsmooth.cli import PRESETS, load_config
from giwsmooth.simulation import MODES, run_monte_carlo

for preset in PRESETS:
    config = load_config(preset).with_overrides(num_runs=20)
    table = run_monte_carlo(config)
    med = table.median()
    print(f"\n{preset} (p_D={config.p_D}, truth {config.truth_model})")
    for t, name in enumerate(table.trackers):
        cols = "  ".join(f"{m:>7} {med[t, 4:-5, j].mean():7.2f}" for j, m in enumerate(MODES))
        print(f"  {name}  {cols}")
    diverged = {k: v for k, v in table.divergence_counts().items() if v}
    if diverged:
        print("  divergences:", diverged)
