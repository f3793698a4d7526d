"""Periodic 1D grid and cubic Lagrange interpolation on it."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform cell-centred grid on the periodic interval ``[0, L)``.

    Cell ``i`` covers ``[i h, (i + 1) h)`` and has its centre at ``(i + 1/2) h``.
    """

    L: float
    nx: int

    def __post_init__(self):
        if int(self.nx) <= 0:
            raise ValueError("grid needs at least one cell")
        if not (self.L > 0 and np.isfinite(self.L)):
            raise ValueError("domain length must be positive")
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "L", float(self.L))

    @property
    def h(self):
        return self.L / self.nx

    @property
    def x(self):
        return (np.arange(self.nx) + 0.5) * self.h

    @property
    def edges(self):
        return np.arange(self.nx + 1) * self.h

    @property
    def wavenumbers(self):
        """Angular wavenumbers ``2 pi j / L`` of the real FFT modes."""
        return 2.0 * np.pi * np.fft.rfftfreq(self.nx, self.h)

    def wrap(self, x):
        return np.mod(x, self.L)


def cubic_weights(frac):
    """Lagrange weights for nodes ``-1, 0, 1, 2`` at offset ``frac`` in ``[0, 1)``."""
    f = np.asarray(frac, dtype=float)
    w0 = -f * (f - 1.0) * (f - 2.0) / 6.0
    w1 = (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0
    w2 = -(f + 1.0) * f * (f - 2.0) / 2.0
    w3 = (f + 1.0) * f * (f - 1.0) / 6.0
    return np.stack([w0, w1, w2, w3])


def cubic_weights_deriv(frac):
    """Derivative (w.r.t. ``frac``) of :func:`cubic_weights`."""
    f = np.asarray(frac, dtype=float)
    w0 = -(3 * f**2 - 6 * f + 2) / 6.0
    w1 = (3 * f**2 - 4 * f - 1) / 2.0
    w2 = -(3 * f**2 - 2 * f - 2) / 2.0
    w3 = (3 * f**2 - 1) / 6.0
    return np.stack([w0, w1, w2, w3])


def periodic_cubic(values, x, grid, deriv=False):
    """Interpolate cell-centred periodic data at arbitrary positions.

    Parameters
    ----------
    values : ndarray, shape (..., nx)
    x : array_like
        Query positions (any shape, wrapped into the domain).
    grid : PeriodicGrid
    deriv : bool
        Return the derivative of the interpolant instead of its value.

    Returns
    -------
    ndarray, shape ``values.shape[:-1] + x.shape``
    """
    values = np.asarray(values, dtype=float)
    x = np.asarray(x, dtype=float)
    u = np.mod(x, grid.L) / grid.h - 0.5
    i0 = np.floor(u)
    frac = u - i0
    i0 = i0.astype(np.int64)
    w = cubic_weights_deriv(frac) / grid.h if deriv else cubic_weights(frac)
    out = 0.0
    for k in range(4):
        idx = np.mod(i0 + (k - 1), grid.nx)
        out = out + values[..., idx] * w[k]
    return out
