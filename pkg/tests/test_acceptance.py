"""Acceptance criteria AC1-AC11, each at its stated tolerance.

Every test prints one ``ACn PASS|FAIL`` line; the lines are also collected
into the terminal summary.  The long scenario runs (AC7, AC8, AC9) take a
few minutes together on one core.
"""

import filecmp
import math
import time
from dataclasses import replace

import numpy as np
import pytest

from kinchemo import load_config, parse_config, run_scenario
from kinchemo.characteristics import FunctionSignal, trace_characteristic
from kinchemo.grid import PeriodicGrid
from kinchemo.kinetic import step_kinetic
from kinchemo.model import GSpec, LambdaSpec, SignalParams
from kinchemo.monitor import gronwall_envelope, log_gronwall_envelope
from kinchemo.runner import read_table
from kinchemo.signal import signal_bound_report, solve_elliptic

from conftest import make_model, report, scenario_path, scenario_text
from test_characteristics import fd_jacobian_det
from test_kinetic import blank_field
from test_monitor import _ode_log
from test_signal import dense_second_derivative, random_density

pytestmark = pytest.mark.acceptance


def test_ac1_jacobian_identity():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        te, ta = np.exp(rng.uniform(math.log(0.25), math.log(4.0), 2))
        L = rng.uniform(5.0, 40.0)
        amp, om, ph = rng.uniform(0.1, 1.0), rng.uniform(0.2, 3.0), rng.uniform(0, 2 * np.pi)
        sig = FunctionSignal(lambda x, t: 1.0 + amp * np.sin(2 * np.pi * x / L + ph) * np.cos(om * t), 1)
        cfg = make_model(t_e=te, t_a=ta, g=rng.uniform(0.1, 5.0), L=L)
        v = rng.choice([-1.0, 1.0]) * rng.uniform(0.1, 2.0)
        s = rng.uniform(0.0, 2.0)
        t = s + rng.uniform(0.0, 5.0)
        y = rng.uniform(-1.0, 1.0, 2)
        fd = fd_jacobian_det(cfg, sig, rng.uniform(0, L), v, y, t, s)
        exact = math.exp((1.0 / te + 1.0 / ta) * (t - s))
        worst = max(worst, abs(fd - exact) / exact)
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-6 and elapsed < 10.0
    assert report("AC1", ok, f"max relative error {worst:.2e} over 50 configs, {elapsed:.1f} s")


def test_ac2_adaptation():
    cfg = load_config(scenario_path("adaptation"))
    cfg = replace(cfg, mode="compare")
    t0 = time.perf_counter()
    summary, res = run_scenario(cfg)
    elapsed = time.perf_counter() - t0
    horizon = 10.0 * max(cfg.model.t_e, cfg.model.t_a)
    scale = np.abs(cfg.initial.y_box[0]).max()
    row = next(r for r in res["moments"] if abs(r[0] - horizon) < 1e-9)
    kin = abs(row[-1])
    ens = res["ensemble"]
    agents = np.abs(ens.y[0]).max()
    ok = (ens.size == 1000 and kin < 1e-3 * scale and agents < 1e-3 * scale and elapsed < 60.0
          and cfg.T >= horizon)
    assert report("AC2", ok, f"t={horizon:g}: |mean y1| {kin:.2e}, max agent |y1| {agents:.2e} "
                             f"(scale {scale:g}), {elapsed:.1f} s")


def _long_standard(mode, workers=1):
    text = scenario_text("standard")
    subs = [("nx = 320", "nx = 160"), ("ny = [33, 32]", "ny = [17, 16]"), ("T = 10.0", "T = 50.0"),
            ("output_every = 0.5", "output_every = 5.0"), ("snapshot_every = 2.5", "snapshot_every = 50.0"),
            ("times = [1.0, 2.0, 5.0]", "times = []"), ('mode = "kinetic"', f'mode = "{mode}"'),
            ("n_agents = 100000", "n_agents = 2000")]
    for old, new in subs:
        text = text.replace(old, new, 1)
    return parse_config(text, workers_default=workers)


def test_ac3_mass_conservation():
    cfg = _long_standard("kinetic")
    assert cfg.n_steps == 1000
    s_kin, res = run_scenario(cfg)
    mass = np.array([r[1] for r in res["moments"]])
    drift = np.abs(mass - mass[0]).max() / mass[0]
    s_ag, res_ag = run_scenario(replace(cfg, mode="agent"))
    counts = [r[2] for r in res_ag["agent_rows"]]
    ok = drift < 1e-8 and all(c == 2000 for c in counts) and s_ag.steps == 1000
    assert report("AC3", ok, f"kinetic mass drift {drift:.2e} over 1000 steps; agent counts {set(counts)}")


def test_ac4_elliptic_oracle():
    grid = PeriodicGrid(20.0, 96)
    worst = 0.0
    for d, k, k0 in [(1.0, 1.0, 1.0), (0.3, 2.0, 0.7), (25.0, 1.0, 0.01)]:
        n = np.zeros(grid.nx)
        n[17] = 1.0 / grid.h
        ref = np.linalg.solve(-d * dense_second_derivative(grid) + k0 * np.eye(grid.nx), k * n)
        worst = max(worst, np.abs(solve_elliptic(n, SignalParams([d], [k], [k0]), grid).S[0] - ref).max())
    big = PeriodicGrid(40.0, 320)
    mode_err = 0.0
    for m in (1, 5, 40):
        xi = 2 * np.pi * m / big.L
        S = solve_elliptic(np.cos(xi * big.x), SignalParams([2.0], [1.5], [0.5]), big)
        mode_err = max(mode_err, np.abs(S.S[0] - 1.5 * np.cos(xi * big.x) / (2.0 * xi**2 + 0.5)).max())
    ok = worst < 1e-10 and mode_err < 1e-10
    assert report("AC4", ok, f"spike vs dense {worst:.1e}, single mode {mode_err:.1e}")


def test_ac5_signal_bounds():
    rng = np.random.default_rng(55)
    grid = PeriodicGrid(40.0, 320)
    params = [SignalParams([1.0], [1.0], [1.0]), SignalParams([0.2], [1.5], [0.3]),
              SignalParams([5.0], [0.5], [2.0]), SignalParams([100.0], [1.0], [0.001])]
    viol = 0
    for i in range(100):
        n = random_density(rng, grid, n_bumps=int(rng.integers(1, 6)))
        if i % 4 == 0:
            n += rng.uniform(0, 0.5, grid.nx)
        p = params[i % len(params)]
        S = solve_elliptic(n, p, grid)
        rep = signal_bound_report(math.fsum(n * grid.h), math.sqrt(math.fsum(n * n * grid.h)), p, grid=grid)
        sup, grad = np.abs(S.S[0]).max(), np.abs(S.dx_S[0]).max()
        viol += int(sup > rep.sup[0]) + int(grad > rep.grad[0])
        viol += int(sup > rep.sup_grid[0]) + int(grad > rep.grad_grid[0])
    assert report("AC5", viol == 0, f"{viol} bound violations on 100 densities")


def test_ac6_gronwall():
    rng = np.random.default_rng(66)
    worst = -np.inf
    for _ in range(20):
        t = np.sort(np.concatenate([[0.0], rng.uniform(0, 3, 30), [3.0]]))
        a_tab, b_tab = rng.uniform(0, 1.5, t.size), rng.uniform(0, 2.0, t.size)
        w0 = rng.uniform(1.0, 10.0)
        logw = _ode_log(w0, lambda s: np.interp(s, t, a_tab), lambda s: np.interp(s, t, b_tab), t)
        logenv = log_gronwall_envelope(w0, a_tab, b_tab, t)
        worst = max(worst, np.max((logw - logenv) / np.maximum(1.0, np.abs(logenv))))
    tg = np.linspace(0.0, 2.0, 81)
    eq = np.max(np.abs(gronwall_envelope(math.e, 1.0, 0.0, tg) / np.exp(np.exp(tg)) - 1.0))
    ok = worst <= 1e-11 and eq < 1e-8
    assert report("AC6", ok, f"max excess of solution over envelope {worst:.1e}; e^(e^t) relative error {eq:.1e}")


def test_ac7_kinetic_agent_agreement():
    cfg = replace(load_config(scenario_path("standard")), mode="compare", T=5.0)
    assert cfg.n_agents == 100_000
    t0 = time.perf_counter()
    summary, _ = run_scenario(cfg)
    elapsed = time.perf_counter() - t0
    d = {t: summary.l1_distances[f"{t:.6g}"] for t in (1.0, 2.0, 5.0)}
    ok = all(v < 0.05 for v in d.values()) and elapsed < 300.0
    detail = ", ".join(f"t={t:g}: {v:.4f}" for t, v in d.items())
    assert report("AC7", ok, f"L1 distances {detail}; {elapsed:.0f} s")


def test_ac8_envelope_ledger():
    cfg = load_config(scenario_path("standard"))
    assert cfg.T == 10.0 and "corollary2" in cfg.validation.satisfied_regimes
    summary, res = run_scenario(cfg)
    qs = set(res["ledger"].quantities())
    ok = ({"f_L2_log_envelope", "jacobian_forward", "jacobian_inverse"} <= qs
          and summary.violation_count == 0 and summary.negative_control_violations >= 1)
    assert report("AC8", ok, f"T={summary.t_final:g}: {summary.violation_count} violations; negative control "
                             f"{summary.negative_control_violations} ({', '.join(summary.extra['negative_control_quantities'])})")


def test_ac9_concentration_ladder():
    cfg = load_config(scenario_path("concentration"))
    assert cfg.ladder == (1.0, 4.0, 16.0) and cfg.T == 5.0
    summary, _ = run_scenario(cfg)
    var = [r["variance"] for r in summary.ladder]
    peak = [r["peak"] for r in summary.ladder]
    ok = all(b < a for a, b in zip(var, var[1:])) and all(b > a for a, b in zip(peak, peak[1:]))
    assert report("AC9", ok, "variance " + " > ".join(f"{v:.4f}" for v in var)
                  + "; peak " + " < ".join(f"{p:.5f}" for p in peak))


def test_ac10_turning_relaxation():
    worst = 0.0
    for lam, dt in ((1.0, 0.05), (3.7, 0.05), (0.25, 0.01)):
        cfg = make_model(lam=LambdaSpec("constant", lam), transduction="frozen")
        f = blank_field(nx=8, ny=(1, 1))
        f.values[:, 0] = 0.2
        f.values[:, 1] = 0.9
        for k in range(1, 21):
            f = step_kinetic(f, FunctionSignal(lambda x, t: 0.0 * x, 1), dt, cfg, check_dt=False)
            diff = f.values[:, 1] - f.values[:, 0]
            worst = max(worst, np.abs(diff / (0.7 * math.exp(-lam * dt * k)) - 1.0).max())
    assert report("AC10", worst < 1e-10, f"max relative error of f+ - f- against e^(-lambda t): {worst:.1e}")


def _small_compare(workers):
    text = scenario_text("standard")
    for old, new in [("nx = 320", "nx = 160"), ("ny = [33, 32]", "ny = [17, 16]"), ("T = 10.0", "T = 1.0"),
                     ("snapshot_every = 2.5", "snapshot_every = 0.5"), ("times = [1.0, 2.0, 5.0]", "times = [1.0]"),
                     ('mode = "kinetic"', 'mode = "compare"'), ("n_agents = 100000", "n_agents = 5000"),
                     ("trajectory_cap = 0", "trajectory_cap = 20")]:
        text = text.replace(old, new, 1)
    return parse_config(text, workers_default=workers)


def test_ac11_reproducibility(tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    run_scenario(_small_compare(1), a)
    run_scenario(_small_compare(1), b)
    names = sorted(p.name for p in a.iterdir())
    match, mismatch, errors = filecmp.cmpfiles(a, b, names, shallow=False)
    run_scenario(_small_compare(3), c)
    worst = 0.0
    for name in ("moments.csv", "agents.csv", "series.csv"):
        ta, tc = read_table(a / name), read_table(c / name)
        for col in ta:
            scale = np.maximum(np.abs(ta[col]), 1e-300)
            worst = max(worst, np.nanmax(np.abs(ta[col] - tc[col]) / scale))
    ok = not mismatch and not errors and len(match) == len(names) and worst <= 1e-13
    assert report("AC11", ok, f"{len(match)}/{len(names)} files byte-identical; "
                              f"max relative difference across worker counts {worst:.1e}")
