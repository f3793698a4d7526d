"""Building grids, initial data, signals and monitor constants from a scenario."""

import math

import numpy as np

from .characteristics import ConstantSignal, FunctionSignal, internal_state_box
from .grid import PeriodicGrid
from .kinetic import YGrid, density_and_flux, separable_field
from .monitor import EnvelopeConstants
from .signal import initial_parabolic_field, signal_bound_report, solve_elliptic

BOX_INFLATION = 0.2


def x_grid(cfg):
    return PeriodicGrid(cfg.model.L, cfg.model.nx)


def _initial_density(cfg, grid):
    prof = cfg.initial.x_profile(grid)
    total = math.fsum(prof * grid.h)
    return prof * (cfg.initial.mass / total) if total > 0 else prof


def initial_signal_values(cfg, grid, n0=None):
    """``S0`` on the grid for the parabolic mode."""
    params = cfg.model.signal
    spec = cfg.S0 or {"kind": "elliptic"}
    if spec.get("kind", "elliptic") == "elliptic":
        n0 = _initial_density(cfg, grid) if n0 is None else n0
        if params.reaction != "produce_degrade":
            raise ValueError("elliptic initial signal needs the produce_degrade reaction")
        return solve_elliptic(n0, params, grid).S
    vals = np.broadcast_to(np.atleast_1d(np.asarray(spec.get("values", 0.0), dtype=float)), (params.M,))
    return np.repeat(vals[:, None], grid.nx, axis=1)


def signal_sup_bound(cfg):
    """Per-component bound on the signal over the whole run."""
    params = cfg.model.signal
    grid = x_grid(cfg)
    mass = cfg.initial.mass
    if cfg.signal_mode == "prescribed":
        p = cfg.prescribed
        return np.asarray(p.baseline) + np.asarray(p.amplitude)
    if cfg.signal_mode == "elliptic":
        return signal_bound_report(mass, 0.0, params, cfg.model.velocities.vmax, grid).sup_grid
    S0 = initial_signal_values(cfg, grid)
    if params.reaction == "consume":
        return np.abs(np.fft.rfft(S0, axis=-1)).sum(axis=-1) * 2.0 / grid.nx
    hat_sum, grad_sum = parabolic_initial_sums(S0, grid)
    return signal_bound_report(mass, 0.0, params, cfg.model.velocities.vmax, grid, "parabolic",
                               S0_hat_sum=hat_sum, S0_grad_hat_sum=grad_sum).sup_grid


def parabolic_initial_sums(S0, grid):
    """``(1/L) sum |S0^|`` and ``(1/L) sum |xi S0^|`` over the full DFT mode set."""
    hat = np.fft.fft(S0, axis=-1) * grid.h
    xi = 2.0 * np.pi * np.fft.fftfreq(grid.nx, grid.h)
    if grid.nx % 2 == 0:
        xi[grid.nx // 2] = 0.0
    return np.abs(hat).sum(axis=-1) / grid.L, np.abs(xi * hat).sum(axis=-1) / grid.L


def state_box(cfg):
    """Internal-state grid box: the a priori box inflated by 20 percent, or the configured one."""
    if cfg.y_box is not None:
        return np.asarray(cfg.y_box, dtype=float)
    sb = internal_state_box(signal_sup_bound(cfg), cfg.model, cfg.growth, cfg.initial.y_box)
    return sb.inflated(BOX_INFLATION)


def state_box_report(cfg):
    return internal_state_box(signal_sup_bound(cfg), cfg.model, cfg.growth, cfg.initial.y_box)


def grid_shear(cfg):
    """Shear of the eigen-coordinates ``z1 = y1 + c y2`` of the cartoon flow (0 for plain coordinates)."""
    if cfg.y_coords != "eigen":
        return 0.0
    m = cfg.model
    return m.t_a / (m.t_a - m.t_e)


def y_grid(cfg):
    return YGrid.from_box(state_box(cfg), cfg.model.ny, shear=grid_shear(cfg), anchor=cfg.y_anchor)


def initial_field(cfg, xgrid=None, ygrid=None):
    """Separable initial phase-space density."""
    xgrid = xgrid or x_grid(cfg)
    ygrid = ygrid or y_grid(cfg)
    return separable_field(xgrid, cfg.model.velocities, ygrid, cfg.initial.x_profile(xgrid),
                           cfg.initial.v_weights, cfg.initial.y_profile(ygrid), cfg.initial.mass)


def prescribed_signal(cfg):
    """Static signal profile: constant or a periodic Gaussian bump over a baseline."""
    p = cfg.prescribed
    base = np.asarray(p.baseline, dtype=float)
    amp = np.asarray(p.amplitude, dtype=float)
    if p.kind == "constant":
        return ConstantSignal(base)
    L = cfg.model.L
    M = base.size

    def dist(x):
        return np.mod(np.asarray(x, dtype=float) - p.center + 0.5 * L, L) - 0.5 * L

    def shape(x):
        return base.reshape((M,) + (1,) * np.ndim(x)) + amp.reshape((M,) + (1,) * np.ndim(x)) * \
            np.exp(-dist(x) ** 2 / (2.0 * p.width**2))[None]

    def grad(x, t):
        r = dist(x)
        return amp.reshape((M,) + (1,) * np.ndim(x)) * (-r / p.width**2 * np.exp(-r**2 / (2.0 * p.width**2)))[None]

    def dt_(x, t):
        return np.zeros((M,) + np.shape(x))

    return FunctionSignal(lambda x, t: shape(x), M, grad, dt_)


def lambda_max(cfg, box=None):
    """Dominating turning rate over the internal-state box."""
    box = state_box(cfg) if box is None else box
    return cfg.model.turning_rate.upper_bound(box[0, 0], box[0, 1])


def envelope_constants(cfg, ygrid, factor=1.0):
    """Explicit constants for the ledger, from the configuration alone.

    Constants given in the growth section are used as they are; missing ones
    are the smallest values that satisfy the corresponding hypothesis over
    the state box.
    """
    model = cfg.model
    gs = cfg.growth
    box = ygrid.box  # grid coordinates; the map to y has unit determinant
    sup_S = float(np.max(signal_sup_bound(cfg))) if cfg.signal_mode != "prescribed" else \
        float(np.max(np.asarray(cfg.prescribed.baseline) + np.asarray(cfg.prescribed.amplitude)))
    Lam = float(gs.Lambda_fn(sup_S))
    Pi = float(gs.Pi(sup_S))
    C_K = gs.C.get("C_K", model.kernel_max)
    C_lam = gs.C.get("C_lambda", lambda_max(cfg, ygrid.y_box) / (1.0 + float(gs.Lambda_fn(0.0))))
    div = model.divergence_rate if model.transduction == "cartoon" else 0.0
    C_div = gs.C.get("C_divF", div / (1.0 + float(gs.Pi(0.0))))
    vol = (box[0, 1] - box[0, 0]) * (box[1, 1] - box[1, 0])
    consts = EnvelopeConstants(C_K, C_lam, C_div, model.velocities.measure, model.velocities.vmax,
                               math.sqrt(model.velocities.measure * vol), Lam, Pi)
    return consts.scaled(factor) if factor != 1.0 else consts
