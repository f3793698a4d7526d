"""The a priori bound ledger on a short standard run.

Every monitored inequality (signal sup and gradient bounds, the Gronwall
envelope for ||f||_2, the Jacobian bounds, mass drift) is logged with its
margin.  The negative control repeats the check with all envelope
constants halved and should fail somewhere.

    python demos/bound_ledger.py [T]
"""
import sys
from pathlib import Path

import kinchemo
from kinchemo import parse_config, run_scenario

T = float(sys.argv[1]) if len(sys.argv) > 1 else 2.5
text = (Path(kinchemo.__file__).parent / "scenarios" / "standard.cfg").read_text()
text = text.replace("T = 10.0", f"T = {T}").replace("times = [1.0, 2.0, 5.0]", "times = []")
cfg = parse_config(text)
print(cfg.validation.summary(), "\n")

summary, res = run_scenario(cfg)
for name, ledger in (("ledger", res["ledger"]), ("negative control", res["negative"])):
    print(f"{name}: {ledger.violation_count} violations")
    for q in ledger.quantities():
        rows = [r for r in ledger.rows if r.quantity == q]
        worst = min(rows, key=lambda r: r.margin)
        print(f"  {q:>20s}  min margin {worst.margin:11.4g} at t={worst.t:g}")
