"""Deterministic phase-space solver for the kinetic chemotaxis equation.

One step is a Strang splitting

    A(dt/2) B(dt/2) C(dt) B(dt/2) A(dt/2)

with A the x-advection (exact shift per velocity), B the internal-state
advection along the exact cartoon flow and C the turning operator, solved
exactly by a matrix exponential in velocity space.  A and B are conservative
remaps of cell averages; B uses the analytic flow so the determinant of the
y-map enters through the preimage cell widths.  The signal is frozen at the
half-step time.
"""

import json
import logging
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .characteristics import cartoon_propagator
from .grid import PeriodicGrid
from .remap import remap

log = logging.getLogger(__name__)

SNAPSHOT_MAGIC = b"KCPSF001"


@dataclass(frozen=True)
class YGrid:
    """Uniform tensor grid for the internal state.

    The grid axes are ``z1 = y1 + shear * y2`` and ``z2 = y2``.  With
    ``shear = 0`` they are the state variables themselves; with
    ``shear = t_a / (t_a - t_e)`` they are eigen-coordinates of the linear
    transduction flow, which then moves each axis independently.
    """

    lo: tuple
    h: tuple
    n: tuple
    shear: float = 0.0

    @classmethod
    def from_box(cls, box, n, symmetric_y1=True, shear=0.0, anchor=None):
        """Grid covering the state box ``box`` (given in ``y``).

        Without shear or anchor, ``y1`` is symmetric about 0 with an odd cell
        count.  ``anchor`` is a state placed at a cell centre; the grid is
        extended downwards (and by a cell if needed) to achieve it.
        """
        box = np.asarray(box, dtype=float)
        n1, n2 = int(n[0]), int(n[1])
        c = float(shear)
        lo1 = box[0, 0] + min(c * box[1, 0], c * box[1, 1])
        hi1 = box[0, 1] + max(c * box[1, 0], c * box[1, 1])
        lo2, hi2 = box[1]
        if symmetric_y1 and c == 0.0 and anchor is None:
            half = max(abs(lo1), abs(hi1))
            lo1, hi1 = -half, half
            n1 += 1 - n1 % 2
        if hi1 <= lo1:
            lo1, hi1 = lo1 - 0.5, hi1 + 0.5
        if hi2 <= lo2:
            lo2, hi2 = lo2 - 0.5, hi2 + 0.5
        lo, hi, nn = [lo1, lo2], [hi1, hi2], [n1, n2]
        h = [(hi1 - lo1) / n1, (hi2 - lo2) / n2]
        if anchor is not None:
            za = (anchor[0] + c * anchor[1], anchor[1])
            for i in range(2):
                k = math.ceil((za[i] - lo[i]) / h[i] - 0.5)
                lo[i] = za[i] - (k + 0.5) * h[i]
                nn[i] = max(nn[i], math.ceil((hi[i] - lo[i]) / h[i] - 1e-12))
        return cls((float(lo[0]), float(lo[1])), (float(h[0]), float(h[1])), (int(nn[0]), int(nn[1])), c)

    @property
    def centres(self):
        """Cell centres along the two grid axes."""
        return [self.lo[i] + (np.arange(self.n[i]) + 0.5) * self.h[i] for i in range(2)]

    @property
    def y1_centres(self):
        """``y1`` at every cell centre, shape (ny1, ny2)."""
        z1, z2 = self.centres
        return z1[:, None] - self.shear * z2[None, :]

    def to_state(self, z1, z2):
        return np.stack([np.asarray(z1) - self.shear * np.asarray(z2), np.asarray(z2, dtype=float)])

    def grid_map(self, P, u):
        """Affine step ``y -> P y + u g`` written in grid coordinates."""
        T = np.array([[1.0, self.shear], [0.0, 1.0]])
        Ti = np.array([[1.0, -self.shear], [0.0, 1.0]])
        Pz = T @ P @ Ti
        if self.shear != 0.0 and abs(Pz[0, 1]) < 1e-12 * np.abs(Pz).max():
            Pz[0, 1] = 0.0  # eigen-coordinates: the coupling vanishes exactly
        return Pz, T @ u

    @property
    def box(self):
        """Box in grid coordinates."""
        return np.array([[self.lo[i], self.lo[i] + self.n[i] * self.h[i]] for i in range(2)])

    @property
    def y_box(self):
        """Bounding box of the covered states."""
        b = self.box
        c = self.shear
        return np.array([[b[0, 0] - max(c * b[1, 0], c * b[1, 1]), b[0, 1] - min(c * b[1, 0], c * b[1, 1])], b[1]])

    @property
    def cell_volume(self):
        return self.h[0] * self.h[1]


@dataclass
class PhaseSpaceField:
    """Cell averages of ``f(x, v, y)``, shape ``(nx, nv, ny1, ny2)``."""

    values: np.ndarray
    xgrid: PeriodicGrid
    velocities: object
    ygrid: YGrid
    t: float = 0.0
    clipped_mass: float = 0.0

    def copy(self):
        return PhaseSpaceField(self.values.copy(), self.xgrid, self.velocities, self.ygrid, self.t, self.clipped_mass)

    @property
    def cell_measure(self):
        """Phase-space measure of one cell for each velocity, shape (nv,)."""
        return self.xgrid.h * self.velocities.weights * self.ygrid.cell_volume


@dataclass
class Moments:
    n: np.ndarray
    j: np.ndarray
    mass: float
    lp_norms: dict = field(default_factory=dict)


def density_and_flux(f):
    """Macroscopic density, flux, mass and Lp norms of a phase-space field."""
    w = f.velocities.weights
    hy = f.ygrid.cell_volume
    per_v = f.values.sum(axis=(2, 3)) * hy  # (nx, nv)
    n = per_v @ w
    j = per_v @ (w * f.velocities.speeds)
    mass = math.fsum(n * f.xgrid.h)
    norms = {p: lp_norm(f, p) for p in (1, 2, np.inf)}
    return Moments(n, j, mass, norms)


def lp_norm(f, p):
    """Grid quadrature of ``||f||_p`` for ``p`` in {1, 2, inf}."""
    vals = f.values
    if p == np.inf or p == "inf":
        return float(np.abs(vals).max()) if vals.size else 0.0
    meas = f.cell_measure  # per velocity
    if p == 1:
        s = np.abs(vals).sum(axis=(0, 2, 3))
        return math.fsum(s * meas)
    if p == 2:
        s = (vals * vals).sum(axis=(0, 2, 3))
        return math.sqrt(math.fsum(s * meas))
    raise ValueError("p must be 1, 2 or inf")


# -- sub-steps -------------------------------------------------------------------------

def _slabs(n, workers):
    workers = max(1, min(int(workers), n))
    bounds = np.linspace(0, n, workers + 1).round().astype(int)
    return [slice(bounds[i], bounds[i + 1]) for i in range(workers)]


def _run(fn, slices, workers):
    if workers <= 1 or len(slices) == 1:
        return [fn(s) for s in slices]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, slices))


def advect_x(vals, xgrid, speeds, tau, workers=1):
    """Exact shift of every velocity slab by ``v tau`` (conservative remap)."""
    out = np.empty_like(vals)
    edges = xgrid.edges
    clipped = []

    def work(sl):
        c = 0.0
        for iv in range(sl.start, sl.stop):
            a = np.moveaxis(vals[:, iv], 0, -1)  # (ny1, ny2, nx)
            new, cm = remap(a, xgrid.h, 0.0, edges - speeds[iv] * tau, True, "x")
            out[:, iv] = np.moveaxis(new, -1, 0)
            c += cm
        return c

    clipped = _run(work, _slabs(vals.shape[1], workers), workers)
    return out, math.fsum(clipped)


def advect_y(vals, ygrid, P, u, gvals, workers=1):
    """Push cell averages through ``z -> P z + u g(x)`` along the grid axes.

    ``P`` and ``u`` are in grid coordinates (see :meth:`YGrid.grid_map`).
    The affine map is upper triangular, so it factors into a shear along
    the first axis (using the old second-axis centres) followed by a
    scaling along the second; each
    factor is a 1D conservative remap with analytic preimages.
    """
    out = np.empty_like(vals)
    y1c, y2c = ygrid.centres
    e1 = ygrid.lo[0] + np.arange(ygrid.n[0] + 1) * ygrid.h[0]
    e2 = ygrid.lo[1] + np.arange(ygrid.n[1] + 1) * ygrid.h[1]
    q1 = u[0] * gvals  # (nx,)
    q2 = u[1] * gvals

    def work(sl):
        blk = vals[sl]  # (bx, nv, ny1, ny2)
        # shear: y1' = P11 y1 + P12 y2 + q1
        a = np.moveaxis(blk, 2, -1)  # (bx, nv, ny2, ny1)
        pre = (e1[None, None, None, :] - P[0, 1] * y2c[None, None, :, None]
               - q1[sl][:, None, None, None]) / P[0, 0]
        new, c1 = remap(a, ygrid.h[0], ygrid.lo[0], pre, False, "y1")
        new = np.moveaxis(new, -1, 2)
        # scale: y2' = P22 y2 + q2
        pre2 = (e2[None, None, None, :] - q2[sl][:, None, None, None]) / P[1, 1]
        # preimage widths are h/P11 and h/P22; remap returns averages over the
        # new cells, which already carries the determinant factor
        new2, c2 = remap(new, ygrid.h[1], ygrid.lo[1], pre2, False, "y2")
        out[sl] = new2
        return c1 + c2

    clipped = _run(work, _slabs(vals.shape[0], workers), workers)
    return out, math.fsum(clipped)


def turning_propagators(lam, Kmat, weights, tau):
    """``exp(tau lam (K W - I))`` for every rate in ``lam``; shape ``lam.shape + (nv, nv)``."""
    A = Kmat * weights[None, :] - np.eye(weights.size)
    lam = np.asarray(lam, dtype=float)
    if lam.ndim > 1:
        return turning_propagators(lam.ravel(), Kmat, weights, tau).reshape(lam.shape + A.shape)
    if weights.size == 2:
        mu = np.trace(A)
        coef = np.expm1(mu * lam * tau) / mu if mu != 0 else lam * tau
        return np.eye(2)[None] + coef[:, None, None] * A[None]
    return np.stack([expm(tau * li * A) for li in lam])


def turn(vals, E, workers=1):
    """Apply velocity propagators to every cell.

    ``E`` has shape (ny1, nv, nv) when the rate depends on the first grid
    axis only, or (ny1, ny2, nv, nv).
    """
    out = np.empty_like(vals)
    spec = "iab,xbij->xaij" if E.ndim == 3 else "ijab,xbij->xaij"

    def work(sl):
        out[sl] = np.einsum(spec, E, vals[sl], optimize=False)
        return 0.0

    _run(work, _slabs(vals.shape[0], workers), workers)
    return out


def step_kinetic(f, signal_history, dt, cfg, workers=1, check_dt=True):
    """Advance the phase-space density by one Strang-split step.

    Parameters
    ----------
    f : PhaseSpaceField
    signal_history : signal object
        Evaluated at the cell centres at time ``f.t + dt/2``.
    dt : float
    cfg : ModelConfig
    workers : int
        Threads for the slab-parallel sub-steps; results do not depend on it.

    Returns
    -------
    PhaseSpaceField
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if check_dt and dt > min(cfg.t_e, cfg.t_a) / 4.0 * (1 + 1e-12):
        raise ValueError(f"dt={dt} exceeds min(t_e, t_a)/4 = {min(cfg.t_e, cfg.t_a) / 4.0}")
    if cfg.transduction == "custom":
        raise ValueError("the grid solver supports the cartoon and frozen transduction models only")
    speeds = f.velocities.speeds
    vals = f.values
    clipped = 0.0

    vals, c = advect_x(vals, f.xgrid, speeds, 0.5 * dt, workers)
    clipped += c
    if cfg.transduction == "cartoon":
        S_half = np.asarray(signal_history(f.xgrid.x, f.t + 0.5 * dt)).reshape(cfg.M, -1)
        gvals = cfg.g(S_half)
        P, u = f.ygrid.grid_map(*cartoon_propagator(cfg, 0.5 * dt))
        vals, c = advect_y(vals, f.ygrid, P, u, gvals, workers)
        clipped += c
    lam = cfg.turning_rate(f.ygrid.centres[0] if f.ygrid.shear == 0.0 else f.ygrid.y1_centres)
    E = turning_propagators(lam, cfg.kernel_matrix, f.velocities.weights, dt)
    vals = turn(vals, E, workers)
    neg = vals < 0
    if np.any(neg):
        clipped += float(-vals[neg].sum())
        vals[neg] = 0.0
    if cfg.transduction == "cartoon":
        vals, c = advect_y(vals, f.ygrid, P, u, gvals, workers)
        clipped += c
    vals, c = advect_x(vals, f.xgrid, speeds, 0.5 * dt, workers)
    clipped += c
    if clipped:
        log.debug("clipped mass %.3e at t=%g", clipped, f.t + dt)
    return PhaseSpaceField(vals, f.xgrid, f.velocities, f.ygrid, f.t + dt, f.clipped_mass + clipped)


# -- construction and snapshots ---------------------------------------------------------

def separable_field(xgrid, velocities, ygrid, x_profile, v_weights, y_profile, mass=1.0, t=0.0):
    """Product initial datum ``f0 = X(x) V(v) Y(y)`` normalised to ``mass``.

    ``x_profile`` and ``y_profile`` are cell-average arrays of shapes (nx,) and
    (ny1, ny2); ``v_weights`` gives the relative share of each velocity.
    """
    X = np.asarray(x_profile, dtype=float)
    V = np.asarray(v_weights, dtype=float)
    Yp = np.asarray(y_profile, dtype=float)
    vals = X[:, None, None, None] * V[None, :, None, None] * Yp[None, None]
    f = PhaseSpaceField(vals, xgrid, velocities, ygrid, t)
    total = density_and_flux(f).mass
    if total > 0:
        f.values *= mass / total
    return f


def write_snapshot(path, f, extra=None):
    """Binary snapshot: magic, header length, JSON header, float64 values."""
    header = {
        "shape": list(f.values.shape),
        "t": f.t,
        "L": f.xgrid.L,
        "hx": f.xgrid.h,
        "speeds": f.velocities.speeds.tolist(),
        "weights": f.velocities.weights.tolist(),
        "y_lo": list(f.ygrid.lo),
        "y_h": list(f.ygrid.h),
        "y_shear": f.ygrid.shear,
        "dtype": "<f8",
        "order": "C",
    }
    if extra:
        header.update(extra)
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def read_snapshot(path):
    """Inverse of :func:`write_snapshot`; returns ``(header, values)``."""
    with open(path, "rb") as fh:
        if fh.read(8) != SNAPSHOT_MAGIC:
            raise ValueError(f"{path} is not a phase-space snapshot")
        (nbytes,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(nbytes).decode())
        values = np.frombuffer(fh.read(), dtype="<f8").reshape(header["shape"])
    return header, values
