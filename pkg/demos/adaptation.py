"""Adaptation in a constant signal.

Cells start excited (y1 in [0.5, 1]) in a spatially constant signal.  The
response y1 relaxes to zero and y2 settles at g(S) whatever the initial
state; the slower of the two rates 1/t_e, 1/t_a sets the decay.

    python demos/adaptation.py [out_dir]
"""
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

import kinchemo
from kinchemo import load_config, run_scenario

cfg = load_config(Path(kinchemo.__file__).parent / "scenarios" / "adaptation.cfg")
cfg = replace(cfg, mode="compare")  # kinetic solve plus 1000 agents
out = sys.argv[1] if len(sys.argv) > 1 else None
summary, res = run_scenario(cfg, out)

rate = min(1 / cfg.model.t_e, 1 / cfg.model.t_a)
print(f"{'t':>5s} {'mean y1 (kinetic)':>18s} {'mean y1 (agents)':>17s} {'exp(-t/t_slow)':>15s}")
for row, arow in zip(res["moments"], res["agent_rows"]):
    t = row[0]
    print(f"{t:5.1f} {row[-1]:18.3e} {arow[6]:17.3e} {np.exp(-rate * t):15.3e}")
y = res["ensemble"].y
print(f"\nagents at t={summary.t_final:g}: max |y1| = {np.abs(y[0]).max():.2e}, "
      f"y2 in [{y[1].min():.6f}, {y[1].max():.6f}], g(S) = {cfg.model.g(np.array([[0.5]]))[0]:g}")
