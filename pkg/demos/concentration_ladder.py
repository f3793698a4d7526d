"""Responsiveness ladder.

Cells climb a fixed signal bump.  Runs in the wrong direction end sooner the
more strongly the turning rate reacts to a falling signal.  Scaling that
sensitivity by 1, 4 and 16 should tighten the population around the peak:
the variance of n drops and its maximum rises.

    python demos/concentration_ladder.py [out_dir]
"""
import sys
from pathlib import Path

import kinchemo
from kinchemo import load_config, run_scenario

cfg = load_config(Path(kinchemo.__file__).parent / "scenarios" / "concentration.cfg")
out = sys.argv[1] if len(sys.argv) > 1 else None
summary, _ = run_scenario(cfg, out)

print(f"t = {summary.t_final:g}")
print(f"{'factor':>7s} {'variance':>10s} {'peak n':>9s} {'violations':>10s}")
for r in summary.ladder:
    print(f"{r['factor']:7g} {r['variance']:10.4f} {r['peak']:9.5f} {r['violations']:10d}")
print("variance strictly decreasing:", summary.extra["variance_strictly_decreasing"])
print("peak strictly increasing:    ", summary.extra["peak_strictly_increasing"])
