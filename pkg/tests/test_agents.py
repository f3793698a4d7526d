import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats
from scipy.optimize import brentq

from kinchemo import rng
from kinchemo.agents import (
    empirical_density,
    ensemble_at,
    ensemble_from_field,
    step_agents,
    thinning_event_times,
)
from kinchemo.characteristics import ConstantSignal, FunctionSignal
from kinchemo.errors import ThinningBoundError
from kinchemo.grid import PeriodicGrid
from kinchemo.kinetic import PhaseSpaceField, YGrid
from kinchemo.model import LambdaSpec

from conftest import make_model

ZERO = ConstantSignal([0.0])


def frozen(lam=1.0, **kw):
    return make_model(lam=LambdaSpec("constant", lam), transduction="frozen", L=10.0, **kw)


# -- counter-based streams ---------------------------------------------------------------

def test_streams_are_pure_functions():
    a = rng.uniform(7, np.arange(1000), 3)
    b = rng.uniform(7, np.arange(1000)[::-1], 3)[::-1]
    assert np.array_equal(a, b)
    assert not np.array_equal(a, rng.uniform(8, np.arange(1000), 3))
    assert not np.array_equal(a, rng.uniform(7, np.arange(1000), 4))


def test_uniform_range_and_moments():
    u = rng.uniform(1, np.arange(200_000), 0)
    assert u.min() > 0.0 and u.max() < 1.0
    assert stats.kstest(u, "uniform").pvalue > 0.01


def test_exponential_distribution():
    e = rng.exponential(3, 5, np.arange(20_000), 2.5)
    assert stats.kstest(e, "expon", args=(0, 1 / 2.5)).pvalue > 0.01


# -- motion ----------------------------------------------------------------------------

def test_no_turning_straight_lines():
    cfg = frozen(lam=0.0)
    x0 = np.linspace(0, 9.9, 50)
    ens = ensemble_at(x0, np.arange(50) % 2, np.zeros(2), seed=1)
    out = step_agents(ens, ZERO, 0.37, cfg, lam_max=0.0)
    v = cfg.velocities.speeds[ens.v_idx]
    assert np.array_equal(out.x, np.mod(x0 + v * 0.37, 10.0))
    assert np.array_equal(out.v_idx, ens.v_idx)


def test_run_durations_exponential():
    lam0 = 1.5
    times = thinning_event_times(lambda t: lam0, 2.0 * lam0, 10_000 / lam0 * 1.05, seed=11)
    gaps = np.diff(np.concatenate([[0.0], times]))[:10_000]
    assert gaps.size == 10_000
    assert stats.kstest(gaps, "expon", args=(0, 1 / lam0)).pvalue > 0.01


def test_agent_first_turn_times_exponential():
    lam0 = 1.0
    cfg = frozen(lam=lam0)
    n = 10_000
    ens = ensemble_at(np.zeros(n), np.zeros(n, dtype=int), np.zeros(2), seed=5)
    out = step_agents(ens, ZERO, 20.0, cfg, lam_max=1.6, record_events=True)
    ev = np.concatenate(out.stats["events"], axis=1)
    first = np.full(n, np.inf)
    np.minimum.at(first, ev[0].astype(int), ev[1])
    assert np.all(np.isfinite(first))
    assert stats.kstest(first, "expon", args=(0, 1 / lam0)).pvalue > 0.01


def test_inhomogeneous_rate_matches_inversion_oracle():
    rate = lambda t: 1.0 + math.sin(t)
    Lam = lambda t: t + 1.0 - math.cos(t)
    T = 12.0
    thin = np.concatenate([thinning_event_times(rate, 2.0, T, seed=3, stream=s) for s in range(400)])
    # inverse transform: cumulative hazards of unit-rate Poisson points mapped through Lam^-1
    gen = np.random.default_rng(99)
    inv = []
    for _ in range(400):
        s = 0.0
        while True:
            s += gen.exponential()
            if s > Lam(T):
                break
            inv.append(brentq(lambda t: Lam(t) - s, 0.0, T))
    assert stats.ks_2samp(thin, np.array(inv)).pvalue > 0.01


def test_thinning_bound_violation_raises():
    with pytest.raises(ThinningBoundError):
        thinning_event_times(lambda t: 3.0, 2.0, 50.0, seed=0)
    cfg = make_model(lam=LambdaSpec("clipped_linear", base=1.0, slope=5.0), L=10.0)
    ens = ensemble_at(np.zeros(100), 0, np.array([1.0, 0.0]), seed=0)
    with pytest.raises(ThinningBoundError):
        step_agents(ens, ConstantSignal([0.0]), 1.0, cfg, lam_max=2.0)


def test_acceptance_ratio_never_exceeds_one():
    cfg = make_model(t_e=0.5, t_a=2.0, g=1.0, lam=LambdaSpec("saturating", 1.0, amplitude=0.5, half_sat=0.25), L=10.0)
    sig = FunctionSignal(lambda x, t: 1.0 + 0.5 * np.sin(2 * np.pi * x / 10.0), 1)
    ens = ensemble_at(np.linspace(0, 10, 2000, endpoint=False), np.arange(2000) % 2, np.array([0.0, 1.0]), seed=2)
    for _ in range(10):
        ens = step_agents(ens, sig, 0.2, cfg, lam_max=1.5)
    assert 0.0 < ens.stats["max_ratio"] <= 1.0
    assert ens.stats["max_dCdt"] > 0.0


def test_mean_velocity_in_clt_band():
    cfg = frozen(lam=2.0)
    n = 20_000
    ens = ensemble_at(np.zeros(n), np.arange(n) % 2, np.zeros(2), seed=17)
    for _ in range(20):
        ens = step_agents(ens, ZERO, 0.1, cfg, lam_max=2.0)
        mean_v = cfg.velocities.speeds[ens.v_idx].mean()
        assert abs(mean_v) <= 4.0 / math.sqrt(n)


def test_count_and_mass_conserved():
    cfg = frozen(lam=3.0)
    grid = PeriodicGrid(10.0, 40)
    ens = ensemble_at(np.random.default_rng(0).uniform(0, 10, 5000), 0, np.zeros(2), seed=4, mass=2.5)
    for _ in range(10):
        ens = step_agents(ens, ZERO, 0.3, cfg, lam_max=3.0)
        assert ens.size == 5000
        assert math.fsum(empirical_density(ens, grid) * grid.h) == pytest.approx(2.5, rel=1e-14)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**63 - 1), workers=st.integers(2, 5))
def test_workers_do_not_change_trajectories(seed, workers):
    cfg = make_model(t_e=0.5, t_a=2.0, lam=LambdaSpec("saturating", 1.0, amplitude=0.5, half_sat=0.25), L=10.0)
    sig = FunctionSignal(lambda x, t: 1.0 + 0.5 * np.cos(2 * np.pi * x / 10.0), 1)
    ens = ensemble_at(np.linspace(0, 10, 300, endpoint=False), np.arange(300) % 2, np.array([0.0, 2.0]), seed=seed)
    a = step_agents(ens, sig, 0.5, cfg, lam_max=1.5, workers=1)
    b = step_agents(ens, sig, 0.5, cfg, lam_max=1.5, workers=workers)
    c = step_agents(ens, sig, 0.5, cfg, lam_max=1.5, workers=1)
    for u, w in ((a, b), (a, c)):
        assert np.array_equal(u.x, w.x) and np.array_equal(u.y, w.y)
        assert np.array_equal(u.v_idx, w.v_idx) and np.array_equal(u.counter, w.counter)


# -- histograms ------------------------------------------------------------------------

def test_single_point_histogram():
    grid = PeriodicGrid(10.0, 20)
    ens = ensemble_at(np.full(100, 3.3), 0, np.zeros(2), seed=0)
    n = empirical_density(ens, grid)
    assert np.count_nonzero(n) == 1
    assert n[6] * grid.h == pytest.approx(1.0)


def test_uniform_histogram_within_binomial_band():
    grid = PeriodicGrid(10.0, 50)
    N = 100_000
    ens = ensemble_at(rng.uniform(21, np.arange(N), 0) * 10.0, 0, np.zeros(2), seed=0)
    counts = empirical_density(ens, grid) * grid.h * N
    p = 1.0 / grid.nx
    assert np.all(np.abs(counts - N * p) <= 4.0 * math.sqrt(N * p * (1 - p)))


def test_sampling_from_field_reproduces_cells():
    yg = YGrid.from_box(np.array([[-1.0, 1.0], [0.0, 1.0]]), (3, 2))
    cfg = frozen()
    f = PhaseSpaceField(np.zeros((10, 2) + yg.n), PeriodicGrid(10.0, 10), cfg.velocities, yg)
    f.values[2, 1, 1, 0] = 1.0
    f.values[7, 0, 2, 1] = 3.0
    ens = ensemble_from_field(f, 4000, seed=9)
    in_first = (ens.x >= 2.0) & (ens.x < 3.0)
    assert np.all(in_first | ((ens.x >= 7.0) & (ens.x < 8.0)))
    assert np.all(ens.v_idx[in_first] == 1) and np.all(ens.v_idx[~in_first] == 0)
    assert abs(in_first.mean() - 0.25) < 4 * math.sqrt(0.25 * 0.75 / 4000)
