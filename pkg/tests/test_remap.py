import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kinchemo.errors import SupportOverflowError
from kinchemo.remap import cumulative_mass, edge_slopes, remap

N, H = 64, 0.25
EDGES = np.arange(N + 1) * H


def shifted(a, s, periodic=True):
    return remap(a, H, 0.0, EDGES - s, periodic)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), s=st.floats(-20.0, 20.0), sparse=st.booleans())
def test_periodic_shift_conserves_and_stays_nonnegative(seed, s, sparse):
    rng = np.random.default_rng(seed)
    a = rng.uniform(0, 1, N)
    if sparse:
        a[rng.uniform(size=N) < 0.7] = 0.0
    new, clipped = shifted(a, s)
    assert math.isclose(math.fsum(new) * H, math.fsum(a) * H, rel_tol=1e-13, abs_tol=1e-15)
    assert new.min() >= 0.0
    assert clipped <= 1e-14 * max(a.sum() * H, 1e-300)


@pytest.mark.parametrize("cells", [1, 3, -5, N + 2])
def test_integer_shift_is_a_roll(cells):
    a = np.random.default_rng(0).uniform(0, 1, N)
    new, _ = shifted(a, cells * H)
    assert np.allclose(new, np.roll(a, cells), rtol=1e-13, atol=1e-14)


def test_constant_is_preserved():
    new, _ = shifted(np.full(N, 0.4), 0.37 * H)
    assert np.allclose(new, 0.4, rtol=1e-14)


def test_smooth_profile_translation_accuracy():
    x = (np.arange(N) + 0.5) * H
    L = N * H

    def cell_avg(shift):
        # exact averages of a periodic Gaussian bump
        from scipy.special import erf
        w = 1.2
        lo = EDGES[:-1] - 8.0 - shift
        hi = EDGES[1:] - 8.0 - shift
        out = np.zeros(N)
        for k in (-1, 0, 1):
            out += 0.5 * (erf((hi + k * L) / (w * math.sqrt(2))) - erf((lo + k * L) / (w * math.sqrt(2))))
        return out * w * math.sqrt(2 * math.pi) / H

    a = cell_avg(0.0)
    new = a
    for _ in range(10):
        new, _ = shifted(new, 0.3 * H)
    assert np.max(np.abs(new - cell_avg(3 * H))) < 2e-3 * a.max()


def test_compression_keeps_mass():
    a = np.random.default_rng(5).uniform(0, 1, N)
    a[:8] = a[-8:] = 0.0
    centre = 0.5 * N * H
    pre = centre + (EDGES - centre) / 0.8  # contraction by 0.8 about the centre
    new, _ = remap(a, H, 0.0, pre, periodic=False)
    assert math.isclose(new.sum(), a.sum(), rel_tol=1e-13)
    assert new.min() >= 0


def test_escape_raises():
    a = np.zeros(N)
    a[-2:] = 1.0
    with pytest.raises(SupportOverflowError) as exc:
        remap(a, H, 0.0, EDGES - 3 * H, periodic=False)
    assert exc.value.side == "upper"


def test_isolated_cell_keeps_moving():
    # an occupied cell surrounded by empty ones must not stall under repeated small shifts
    a = np.zeros(N)
    a[20] = 1.0
    x = np.arange(N) + 0.5
    for _ in range(8):
        a, _ = shifted(a, 0.25 * H)
    drift = (a * x).sum() / a.sum() - 20.5
    assert drift == pytest.approx(2.0, rel=0.1)


def test_edge_values_limited():
    a = np.random.default_rng(2).uniform(0, 1, (3, N))
    left, right = edge_slopes(a, True)
    assert np.all(left >= 0) and np.all(right >= 0)
    assert np.all(left <= 3 * a + 1e-15) and np.all(right <= 3 * a + 1e-15)


def test_cumulative_mass_monotone():
    rng = np.random.default_rng(9)
    a = rng.uniform(0, 1, N)
    a[rng.uniform(size=N) < 0.5] = 0.0
    p = np.linspace(-1.0, N * H + 1.0, 2001)
    C, total = cumulative_mass(a, H, 0.0, p, periodic=False)
    assert np.all(np.diff(C) >= -1e-14)
    assert C[0] == 0.0 and C[-1] == pytest.approx(total)
