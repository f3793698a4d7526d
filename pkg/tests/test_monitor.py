import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad, solve_ivp

from kinchemo.grid import PeriodicGrid
from kinchemo.model import GrowthSpec, SignalParams
from kinchemo.monitor import (
    EnvelopeConstants,
    MonitorSample,
    check_theorem2_bounds,
    concentration_metrics,
    gronwall_envelope,
    log_gronwall_envelope,
    support_extent,
)
from kinchemo.signal import signal_bound_report, solve_elliptic

T_GRID = np.linspace(0.0, 2.0, 41)


def test_classical_gronwall_when_a_vanishes():
    env = gronwall_envelope(3.0, 0.0, lambda t: 0.3 + 0.1 * t, T_GRID)
    assert np.allclose(env, 3.0 * np.exp(0.3 * T_GRID + 0.05 * T_GRID**2), rtol=1e-13)


def test_equality_case_double_exponential():
    env = gronwall_envelope(math.e, 1.0, 0.0, T_GRID)
    assert np.allclose(env, np.exp(np.exp(T_GRID)), rtol=1e-8, atol=0)
    sol = solve_ivp(lambda t, w: w * np.log(w), (0, 2), [math.e], t_eval=T_GRID, rtol=1e-12, atol=1e-12)
    assert np.allclose(sol.y[0], np.exp(np.exp(T_GRID)), rtol=1e-8)


def _ode_log(w0, a_fn, b_fn, t_grid):
    """ln w for w' = a w ln w + b w, integrated as u' = a u + b with u = ln w.

    The integration restarts at every grid point so that the kinks of
    tabulated coefficients never fall inside a step.
    """
    out = [math.log(w0)]
    for lo, hi in zip(t_grid[:-1], t_grid[1:]):
        u = out[-1]
        if hi > lo:
            sol = solve_ivp(lambda t, v: a_fn(t) * v + b_fn(t), (lo, hi), [u],
                            method="DOP853", rtol=1e-13, atol=1e-14)
            u = sol.y[0, -1]
        out.append(u)
    return np.array(out)


def test_numeric_solution_below_envelope():
    t = np.linspace(0, 5, 101)
    sol = solve_ivp(lambda s, w: 0.5 * w * np.log(w) + 0.3 * w, (0, 5), [2.0], t_eval=t,
                    method="DOP853", rtol=1e-12, atol=1e-12)
    env = gronwall_envelope(2.0, 0.5, 0.3, t)
    assert np.all(sol.y[0] <= env * (1 + 1e-9))


def test_random_tabulated_coefficients(rng):
    for _ in range(20):
        t = np.sort(np.concatenate([[0.0], rng.uniform(0, 3, 30), [3.0]]))
        a_tab = rng.uniform(0, 1.5, t.size)
        b_tab = rng.uniform(0, 2.0, t.size)
        w0 = rng.uniform(1.0, 10.0)
        a_fn = lambda s: np.interp(s, t, a_tab)
        b_fn = lambda s: np.interp(s, t, b_tab)
        logw = _ode_log(w0, a_fn, b_fn, t)
        logenv = log_gronwall_envelope(w0, a_tab, b_tab, t)
        assert np.all(logw <= logenv + 1e-11 * np.maximum(1.0, np.abs(logenv)))


def test_callable_and_tabulated_agree():
    t = np.linspace(0, 2, 21)
    a = lambda s: 0.2 + 0.1 * np.sin(s)
    b = lambda s: 0.5 * np.exp(-s)
    fine = np.linspace(0, 2, 4001)
    env_callable = log_gronwall_envelope(1.5, a, b, t)
    env_tab = log_gronwall_envelope(1.5, a(fine), b(fine), fine)[::200]
    assert np.allclose(env_callable, env_tab, rtol=1e-7)


@settings(max_examples=40, deadline=None)
@given(w0=st.floats(1.0, 20.0), a=st.floats(0.0, 2.0), b=st.floats(0.0, 2.0),
       dw=st.floats(0.0, 5.0), da=st.floats(0.0, 1.0), db=st.floats(0.0, 1.0))
def test_envelope_monotone(w0, a, b, dw, da, db):
    t = np.linspace(0, 2, 9)
    base = log_gronwall_envelope(w0, a, b, t)
    for args in ((w0 + dw, a, b), (w0, a + da, b), (w0, a, b + db)):
        assert np.all(log_gronwall_envelope(*args, t) >= base * (1 - 1e-14) - 1e-300)


def test_envelope_rejects_bad_input():
    with pytest.raises(ValueError):
        gronwall_envelope(0.0, 1.0, 1.0, T_GRID)
    with pytest.raises(ValueError):
        gronwall_envelope(1.0, 1.0, 1.0, T_GRID[::-1])


# -- ledger ----------------------------------------------------------------------------

PARAMS = SignalParams([1.0], [1.0], [1.0])
GRID = PeriodicGrid(40.0, 64)
CONSTS = EnvelopeConstants(0.5, 1.5, 2.5, 2.0, 1.0, 3.0)


def _samples(values):
    return [MonitorSample(t, m, m, n2, f2, np.array([s]), np.array([g]), np.array([d]), j)
            for t, m, n2, f2, s, g, d, j in values]


def test_zero_data_no_violations():
    samples = _samples([(t, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0) for t in (0.0, 0.5, 1.0)])
    reports = [signal_bound_report(0.0, 0.0, PARAMS, grid=GRID) for _ in samples]
    ledger = check_theorem2_bounds(samples, reports, GrowthSpec(), CONSTS, PARAMS, GRID)
    assert ledger.rows and ledger.violation_count == 0
    assert all(r.measured == 0.0 or r.quantity.startswith("jacobian") for r in ledger.rows)
    assert all(r.bound >= 0.0 for r in ledger.rows)


def _realistic_ledger(consts=CONSTS, jac_rate=2.5):
    # a unit-mass bump drifting and widening, with its elliptic signal
    rows, reports = [], []
    for t in np.linspace(0, 2, 9):
        w = 1.5 + 0.2 * t
        n = np.exp(-((GRID.x - 20.0 - 0.5 * t) ** 2) / (2 * w * w))
        n /= math.fsum(n) * GRID.h
        S = solve_elliptic(n, PARAMS, GRID, j=0.5 * n)
        nL1 = math.fsum(n * GRID.h)
        nL2 = math.sqrt(math.fsum(n * n * GRID.h))
        rows.append((t, nL1, nL2, 0.8 * nL2, np.abs(S.S).max(), np.abs(S.dx_S).max(), np.abs(S.dt_S).max(),
                     math.exp(jac_rate * t)))
        reports.append(signal_bound_report(nL1, nL2, PARAMS, grid=GRID))
    return check_theorem2_bounds(_samples(rows), reports, GrowthSpec(), consts, PARAMS, GRID)


def test_ledger_rows_recompute_exactly():
    ledger = _realistic_ledger()
    assert ledger.violation_count == 0
    for row in ledger.rows:
        assert abs(ledger.recompute(row) - row.bound) <= 1e-12 * max(1.0, abs(row.bound))
    assert {"signal_sup_proof", "signal_grad_grid", "f_L2_log_envelope", "jacobian_forward",
            "jacobian_inverse", "mass_drift"} <= set(ledger.quantities())


def test_halved_constants_flag_jacobian():
    ledger = _realistic_ledger(CONSTS.scaled(0.5))
    assert "jacobian_forward" in {r.quantity for r in ledger.violations}


def test_ledger_csv(tmp_path):
    ledger = _realistic_ledger()
    path = tmp_path / "ledger.csv"
    ledger.write_csv(path, header=["kinchemo ledger", "config_hash=abc"])
    lines = path.read_text().splitlines()
    assert lines[0] == "# kinchemo ledger"
    assert any(line.startswith("t,inequality,measured,bound,margin,violated") for line in lines)


def test_ledger_rejects_understated_mass():
    samples = _samples([(0.0, 1.0, 0.3, 0.5, 0.4, 0.2, 0.1, 1.0)])
    reports = [signal_bound_report(0.5, 0.3, PARAMS, grid=GRID)]
    with pytest.raises(ValueError):
        check_theorem2_bounds(samples, reports, GrowthSpec(), CONSTS, PARAMS, GRID)


# -- concentration -------------------------------------------------------------------------

def test_symmetric_bump_metrics():
    grid = PeriodicGrid(20.0, 200)
    xm = grid.x[83]
    n = np.exp(-((grid.x - xm) ** 2) / 2.0)
    peak, loc, var, mass = concentration_metrics(n, grid)
    assert loc == xm and peak == pytest.approx(1.0)
    # exact integral of the piecewise-constant density around its mean
    num = sum(n[i] * quad(lambda x: (x - xm) ** 2, grid.edges[i], grid.edges[i + 1])[0] for i in range(grid.nx))
    assert var == pytest.approx(num / (n.sum() * grid.h), rel=1e-10)


def test_uniform_variance():
    grid = PeriodicGrid(40.0, 320)
    _, _, var, mass = concentration_metrics(np.full(grid.nx, 1.0 / 40.0), grid)
    assert var == pytest.approx(40.0**2 / 12.0, abs=1e-6)
    assert mass == pytest.approx(1.0)


def test_peak_tie_breaks_left():
    grid = PeriodicGrid(10.0, 10)
    n = np.zeros(10)
    n[[3, 7]] = 1.0
    assert concentration_metrics(n, grid)[1] == grid.x[3]


def test_support_across_the_seam():
    grid = PeriodicGrid(10.0, 100)
    n = np.zeros(100)
    n[[98, 99, 0, 1]] = 1.0  # centred on x = 0 across the periodic seam
    _, _, var, _ = concentration_metrics(n, grid)
    shifted = np.roll(n, 50)
    assert var == pytest.approx(concentration_metrics(shifted, grid)[2], rel=1e-12)


def test_support_extent_across_the_seam():
    grid = PeriodicGrid(10.0, 100)
    n = np.zeros(100)
    n[[97, 98, 99, 0, 1]] = 1.0
    assert support_extent(n, grid) == (pytest.approx(0.5), 97)
    n[50] = 1e-10  # a faint far cell only counts without a floor
    assert support_extent(n, grid)[0] > 5.0
    assert support_extent(n, grid, 1e-8)[0] == pytest.approx(0.5)
