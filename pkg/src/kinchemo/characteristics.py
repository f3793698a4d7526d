"""Back-time characteristics of the kinetic equation and their Jacobians.

Along a characteristic the position moves with constant speed,
``X(tau) = x - v (t - tau)``, and the internal state solves
``dY/dtau = F(S(X(tau), tau), Y)`` with ``Y(t) = y``.  For the cartoon model
``F = A y + c g(S)`` with the constant upper-triangular matrix

    A = [[-1/t_e, -1/t_e],
         [ 0,     -1/t_a]],     c = (1/t_e, 1/t_a),

so the flow map is affine in ``y`` and its matrix part is ``exp(A h)``,
available in closed form.  The Jacobian determinant of the back-time map
``y -> Y(s)`` is ``exp((1/t_e + 1/t_a)(t - s))``.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp

from .errors import HistoryError, ModelEvaluationError, QuadratureError
from .grid import PeriodicGrid, cubic_weights, periodic_cubic
from .model import divergence_y, transduction_rhs

GL_NODES, GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


# -- signal histories ----------------------------------------------------------

class ConstantSignal:
    """Signal that is constant in space and time."""

    def __init__(self, values):
        self.values = np.atleast_1d(np.asarray(values, dtype=float))

    @property
    def M(self):
        return self.values.size

    def covers(self, s, t):
        return True

    def __call__(self, x, t):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.values.reshape((-1,) + (1,) * x.ndim), (self.M,) + x.shape).copy()

    def gradient(self, x, t):
        return np.zeros_like(self(x, t))

    def time_derivative(self, x, t):
        return np.zeros_like(self(x, t))


class FunctionSignal:
    """Signal given by a callable ``fn(x, t) -> array (M, ...)``.

    Optional ``grad`` and ``dt`` callables supply exact derivatives; without
    them centred differences with step ``eps`` are used.
    """

    def __init__(self, fn, M=1, grad=None, dt=None, eps=1e-5):
        self.fn = fn
        self._M = M
        self._grad = grad
        self._dt = dt
        self.eps = eps

    @property
    def M(self):
        return self._M

    def covers(self, s, t):
        return True

    def __call__(self, x, t):
        x = np.asarray(x, dtype=float)
        out = np.asarray(self.fn(x, t), dtype=float)
        return out.reshape((self.M,) + x.shape)

    def gradient(self, x, t):
        if self._grad is not None:
            return np.asarray(self._grad(np.asarray(x, dtype=float), t), dtype=float).reshape((self.M,) + np.shape(x))
        x = np.asarray(x, dtype=float)
        return (self(x + self.eps, t) - self(x - self.eps, t)) / (2 * self.eps)

    def time_derivative(self, x, t):
        if self._dt is not None:
            return np.asarray(self._dt(np.asarray(x, dtype=float), t), dtype=float).reshape((self.M,) + np.shape(x))
        return (self(x, t + self.eps) - self(x, t - self.eps)) / (2 * self.eps)


class SignalHistory:
    """Signal snapshots on a periodic grid, stored at solver times.

    Interpolation is linear in time and cubic (4-point Lagrange) in space.
    Snapshots may carry their spatial and temporal derivatives; otherwise
    derivatives come from the interpolant.

    Parameters
    ----------
    grid : PeriodicGrid
    extrapolate : float
        Queries up to this far beyond the last snapshot are answered by
        linear extrapolation from the last two snapshots.
    """

    def __init__(self, grid, extrapolate=0.0):
        self.grid = grid
        self.extrapolate = float(extrapolate)
        self.times = []
        self.values = []
        self.dx = []
        self.dt = []

    @classmethod
    def from_field(cls, field, t=0.0, extrapolate=0.0):
        hist = cls(field.grid, extrapolate)
        hist.append(t, field.S, field.dx_S, field.dt_S)
        return hist

    @property
    def M(self):
        return self.values[0].shape[0]

    @property
    def t_start(self):
        return self.times[0]

    @property
    def t_end(self):
        return self.times[-1]

    def append(self, t, S, dx_S=None, dt_S=None):
        if self.times and t <= self.times[-1]:
            raise HistoryError(f"snapshot time {t} does not advance past {self.times[-1]}")
        self.times.append(float(t))
        self.values.append(np.array(S, dtype=float, ndmin=2))
        self.dx.append(None if dx_S is None else np.array(dx_S, dtype=float, ndmin=2))
        self.dt.append(None if dt_S is None else np.array(dt_S, dtype=float, ndmin=2))

    def trim(self, keep=2):
        """Drop all but the last ``keep`` snapshots."""
        for lst in (self.times, self.values, self.dx, self.dt):
            del lst[:-keep]

    def covers(self, s, t):
        if not self.times:
            return False
        tol = 1e-12 * max(1.0, abs(self.t_end))
        return s >= self.t_start - tol and t <= self.t_end + self.extrapolate + tol

    def _bracket(self, t):
        """Two snapshot indices and the weight of the second one."""
        if not self.covers(t, t):
            raise HistoryError(
                f"signal history covers [{self.t_start if self.times else None}, "
                f"{self.t_end if self.times else None}] but t={t} was requested"
            )
        if len(self.times) == 1:
            return 0, 0, 0.0
        times = self.times
        i = int(np.searchsorted(times, t, side="right")) - 1
        i = min(max(i, 0), len(times) - 2)
        theta = (t - times[i]) / (times[i + 1] - times[i])
        return i, i + 1, theta

    def snapshot(self, t):
        """Grid values at time ``t`` (interpolated or extrapolated in time)."""
        i, j, th = self._bracket(t)
        return (1.0 - th) * self.values[i] + th * self.values[j]

    def __call__(self, x, t):
        if np.ndim(t) == 0:
            return periodic_cubic(self.snapshot(t), x, self.grid)
        return self._pointwise(self.values, x, t)

    def _pointwise(self, store, x, t):
        """Interpolate with a separate time for every query point."""
        x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
        tmin, tmax = float(t.min()), float(t.max())
        if not self.covers(tmin, tmax):
            raise HistoryError(f"signal history covers [{self.t_start}, {self.t_end}] but [{tmin}, {tmax}] was requested")
        times = np.asarray(self.times)
        V = np.stack(store, axis=1)  # (M, nt, nx)
        if times.size == 1:
            i = np.zeros(t.shape, dtype=np.int64)
            j = i
            th = np.zeros(t.shape)
        else:
            i = np.clip(np.searchsorted(times, t, side="right") - 1, 0, times.size - 2)
            j = i + 1
            th = (t - times[i]) / (times[j] - times[i])
        u = np.mod(x, self.grid.L) / self.grid.h - 0.5
        i0 = np.floor(u)
        w = cubic_weights(u - i0)
        i0 = i0.astype(np.int64)
        out = 0.0
        for k in range(4):
            node = np.mod(i0 + (k - 1), self.grid.nx)
            out = out + w[k] * ((1.0 - th) * V[:, i, node] + th * V[:, j, node])
        return out

    def gradient(self, x, t):
        i, j, th = self._bracket(t)
        if self.dx[i] is not None and self.dx[j] is not None:
            return periodic_cubic((1.0 - th) * self.dx[i] + th * self.dx[j], x, self.grid)
        return periodic_cubic(self.snapshot(t), x, self.grid, deriv=True)

    def time_derivative(self, x, t):
        i, j, th = self._bracket(t)
        if self.dt[i] is not None and self.dt[j] is not None:
            return periodic_cubic((1.0 - th) * self.dt[i] + th * self.dt[j], x, self.grid)
        if i == j:
            return np.zeros_like(self(x, t))
        slope = (self.values[j] - self.values[i]) / (self.times[j] - self.times[i])
        return periodic_cubic(slope, x, self.grid)


# -- cartoon propagator ---------------------------------------------------------

def _phi_diff(a, d, h):
    """``(exp(a h) - exp(d h)) / (a - d)`` without cancellation."""
    if a == d:
        return h * np.exp(a * h)
    # factor out the larger exponential so that expm1 sees a nonpositive argument
    hi = np.where(a * h >= d * h, a, d)
    lo = np.where(a * h >= d * h, d, a)
    return np.exp(hi * h) * np.expm1((lo - hi) * h) / (lo - hi)


def cartoon_propagator(cfg, h):
    """Flow of the cartoon model over a time span ``h`` (any sign).

    Returns ``P, u`` such that for a constant stimulus ``g`` the state moves
    from ``y`` to ``P @ y + u * g``.

    Parameters
    ----------
    cfg : ModelConfig
    h : float or ndarray
        Time span; arrays give stacked results with trailing shape ``h.shape``.
    """
    h = np.asarray(h, dtype=float)
    a = -1.0 / cfg.t_e
    d = -1.0 / cfg.t_a
    p11 = np.exp(a * h)
    p22 = np.exp(d * h)
    p12 = a * _phi_diff(a, d, h)  # upper-right entry carries the factor b = a
    P = np.array([[p11, p12], [np.zeros_like(h), p22]])
    # the fixed point for stimulus g is (0, g), so u g = (I - P)(0, g)
    u = np.array([-p12, 1.0 - p22])
    return P, u


def jacobian_det_cartoon(cfg, elapsed):
    """Determinant of the back-time map ``y -> Y(s)`` over ``elapsed = t - s``."""
    elapsed = np.asarray(elapsed, dtype=float)
    if np.any(elapsed < 0):
        raise ValueError("elapsed time must be nonnegative")
    out = np.exp(cfg.divergence_rate * elapsed)
    return float(out) if out.ndim == 0 else out


def forcing_integral(cfg, signal, x0, v, t0, h, nodes=None):
    """``int_0^h P(h - r) c g(S(x0 + v r, t0 + r)) dr`` for a batch of paths.

    Gauss-Legendre quadrature with 8 nodes.  ``x0`` and ``v`` broadcast;
    the result has shape ``(2,) + broadcast shape``.
    """
    x0 = np.asarray(x0, dtype=float)
    v = np.asarray(v, dtype=float)
    shape = np.broadcast(x0, v).shape
    r = 0.5 * h * (GL_NODES + 1.0)
    wts = 0.5 * h * GL_WEIGHTS
    c = np.array([1.0 / cfg.t_e, 1.0 / cfg.t_a])
    out = np.zeros((2,) + shape)
    for rk, wk in zip(r, wts):
        xs = x0 + v * rk
        gval = cfg.g(signal(xs, t0 + rk))
        if not np.all(np.isfinite(gval)):
            raise ModelEvaluationError("non-finite forcing along characteristic")
        P, _ = cartoon_propagator(cfg, h - rk)
        out += wk * (P @ c).reshape((2,) + (1,) * len(shape)) * gval
    return out


# -- traces ---------------------------------------------------------------------

@dataclass
class CharacteristicTrace:
    """Back-time characteristic sampled on an increasing time grid.

    ``Y_path`` has shape ``(m, n)`` and ``S_path`` shape ``(M, n)`` where
    ``n = len(s_grid)``; the last sample is the starting point at time ``t``.
    """

    s_grid: np.ndarray
    X_path: np.ndarray
    Y_path: np.ndarray
    S_path: np.ndarray
    jac_det: np.ndarray
    v: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def Y_start(self):
        """State at the earliest time ``s``."""
        return self.Y_path[:, 0]


def _n_intervals(t, s, h_t):
    span = t - s
    n = 8 if (h_t is None or h_t <= 0) else max(8, math.ceil(span / h_t - 1e-12))
    return 4 * math.ceil(n / 4)


def trace_characteristic(x, v, y, t, s, signal_history, cfg, h_t=None, rtol=1e-9, atol=1e-12):
    """Trace the characteristic through ``(x, v, y)`` at time ``t`` back to time ``s``.

    Parameters
    ----------
    x, v : float
    y : array_like, shape (m,)
    t, s : float
        End and start times, ``0 <= s <= t``.
    signal_history : signal object
        Anything with ``__call__(x, t)`` and ``covers(s, t)``.
    cfg : ModelConfig
    h_t : float, optional
        Solver step; sets the sampling density of ``s_grid``.

    Returns
    -------
    CharacteristicTrace
    """
    if not (0.0 <= s <= t):
        raise ValueError("need 0 <= s <= t")
    if not signal_history.covers(s, t):
        raise HistoryError(f"signal history does not cover [{s}, {t}]")
    y = np.asarray(y, dtype=float)
    n = _n_intervals(t, s, h_t)
    s_grid = np.linspace(s, t, n + 1)
    X = x - v * (t - s_grid)
    S_path = np.stack([np.ravel(signal_history(X[k], s_grid[k])) for k in range(n + 1)], axis=1)
    if not np.all(np.isfinite(S_path)):
        raise ModelEvaluationError("non-finite signal along characteristic")

    if cfg.transduction in ("cartoon", "frozen"):
        Y = np.empty((y.size, n + 1))
        Y[:, -1] = y
        if cfg.transduction == "frozen":
            Y[:] = y[:, None]
        else:
            for k in range(n - 1, -1, -1):
                hk = s_grid[k + 1] - s_grid[k]
                q = forcing_integral(cfg, signal_history, X[k], v, s_grid[k], hk)
                Pinv, _ = cartoon_propagator(cfg, -hk)
                Y[:, k] = Pinv @ (Y[:, k + 1] - q)
        jac = jacobian_det_cartoon(cfg, t - s_grid) if cfg.transduction == "cartoon" else np.ones(n + 1)
        meta = {"method": "affine"}
    else:
        def rhs(tau, yy):
            Sv = signal_history(np.array(x - v * (t - tau)), tau)
            return transduction_rhs(Sv, yy, cfg)

        if t > s:
            sol = solve_ivp(rhs, (t, s), y, method="DOP853", t_eval=s_grid[::-1], rtol=rtol, atol=atol)
            if not sol.success:
                raise ModelEvaluationError(f"characteristic integration failed: {sol.message}")
            Y = sol.y[:, ::-1]
        else:
            Y = y[:, None].copy()
        trace = CharacteristicTrace(s_grid, X, Y, S_path, np.ones(n + 1), v, {"method": "DOP853"})
        div = lambda tau, S, YY: divergence_y(S, YY, cfg)
        jac = np.array([jacobian_det_general(_subtrace(trace, k), div) for k in range(n + 1)])
        trace.jac_det = jac
        return trace
    return CharacteristicTrace(s_grid, X, Y, S_path, jac, v, meta)


def _subtrace(trace, k):
    """Portion of ``trace`` from sample ``k`` to the end."""
    sl = slice(k, None)
    return CharacteristicTrace(trace.s_grid[sl], trace.X_path[sl], trace.Y_path[:, sl],
                               trace.S_path[:, sl], trace.jac_det[sl], trace.v)


def _simpson(f, x):
    n = x.size - 1
    h = (x[-1] - x[0]) / n
    return h / 3.0 * (f[0] + f[-1] + 4.0 * f[1:-1:2].sum() + 2.0 * f[2:-1:2].sum())


def jacobian_det_general(trace, divF, tol=1e-8):
    """``exp(-int_s^t div_y F dtau)`` along a trace by composite Simpson.

    The error estimate is the Richardson difference between the full grid
    and every-other-node Simpson sums; ``QuadratureError`` is raised when it
    exceeds ``tol`` (absolute, on the exponent).

    Parameters
    ----------
    trace : CharacteristicTrace
    divF : callable
        ``divF(tau, S, Y)`` with ``tau`` shape (n,), ``S`` shape (M, n) and
        ``Y`` shape (m, n); returns the divergence at each sample.
    """
    tau = trace.s_grid
    if tau.size < 2 or tau[-1] == tau[0]:
        return 1.0
    vals = np.broadcast_to(np.asarray(divF(tau, trace.S_path, trace.Y_path), dtype=float), tau.shape)
    if not np.all(np.isfinite(vals)):
        raise ModelEvaluationError("non-finite divergence along trace")
    n = tau.size - 1
    if n % 2:
        # odd interval count: trapezoid on the first interval, Simpson on the rest
        head = 0.5 * (tau[1] - tau[0]) * (vals[0] + vals[1])
        return math.exp(-(head + jacobian_exponent(tau[1:], vals[1:], tol)))
    return math.exp(-jacobian_exponent(tau, vals, tol))


def jacobian_exponent(tau, vals, tol=1e-8):
    n = tau.size - 1
    fine = _simpson(vals, tau)
    if n % 4 == 0:
        coarse = _simpson(vals[::2], tau[::2])
        err = abs(fine - coarse) / 15.0
        if err > tol * max(1.0, abs(fine)):
            raise QuadratureError(f"divergence quadrature error estimate {err:.3e} exceeds {tol:.1e}")
        return fine + (fine - coarse) / 15.0
    return fine


# -- a priori internal-state box ------------------------------------------------

@dataclass
class StateBox:
    """Internal-state bounds.

    ``lemma`` follows the explicit constants of the a priori estimate,
    ``hull`` is the sharper invariant region of the linear dynamics, and
    ``box`` their intersection.  Rows are ``[lo, hi]`` for ``y1`` and ``y2``.
    """

    lemma: np.ndarray
    hull: np.ndarray
    box: np.ndarray
    constants: dict

    def inflated(self, frac=0.2, min_half_width=0.0):
        centre = self.box.mean(axis=1)
        half = 0.5 * (self.box[:, 1] - self.box[:, 0]) * (1.0 + frac)
        half = np.maximum(half, min_half_width)
        return np.stack([centre - half, centre + half], axis=1)

    def contains(self, y, which="box", tol=1e-12):
        y = np.asarray(y, dtype=float)
        b = getattr(self, which)
        lo = b[:, 0].reshape((-1,) + (1,) * (y.ndim - 1))
        hi = b[:, 1].reshape(lo.shape)
        return np.all((y >= lo - tol) & (y <= hi + tol), axis=0)


def g_range(cfg, sup_S):
    """Range of ``g`` over signals with components in ``[0, sup_S]``.

    Both shipped ``g`` families are nondecreasing in each component.
    """
    M = cfg.M
    sup = np.broadcast_to(np.asarray(sup_S, dtype=float), (M,))
    lo = float(cfg.g(np.zeros((M, 1)))[0])
    hi = float(cfg.g(sup.reshape(M, 1))[0])
    return lo, hi


def internal_state_box(sup_S, cfg, gs=None, y0_box=None):
    """Box containing every internal state reachable from ``y0_box``.

    Parameters
    ----------
    sup_S : float
        Bound on the signal components (signals are nonnegative).
    cfg : ModelConfig
    gs : GrowthSpec, optional
        Supplies ``Phi``; without it ``Phi(sup_S)`` is replaced by ``max g``.
    y0_box : array_like, shape (2, 2)
        ``[[y1_lo, y1_hi], [y2_lo, y2_hi]]`` of the initial data.

    Returns
    -------
    StateBox
    """
    y0 = np.zeros((2, 2)) if y0_box is None else np.asarray(y0_box, dtype=float)
    g_lo, g_hi = g_range(cfg, sup_S)
    if gs is not None and gs.Phi is not None:
        phi = float(gs.Phi(float(np.max(sup_S))))
    else:
        phi = max(abs(g_lo), abs(g_hi))
    if cfg.transduction == "frozen":
        return StateBox(y0.copy(), y0.copy(), y0.copy(), {"Phi": phi})
    # explicit estimate; the time-constant factors are at least one
    fa = max(1.0, 1.0 / cfg.t_a**2)
    fe = max(1.0, 1.0 / cfg.t_e**2)
    y2_abs = np.abs(y0[1]).max() + phi * fa
    y1_abs = np.abs(y0[0]).max() + y2_abs * fe + phi * fe
    lemma = np.array([[-y1_abs, y1_abs], [-y2_abs, y2_abs]])
    # invariant region: y2 relaxes towards g, y1 towards g - y2
    y2_lo = min(y0[1, 0], g_lo)
    y2_hi = max(y0[1, 1], g_hi)
    y1_lo = min(y0[0, 0], g_lo - y2_hi)
    y1_hi = max(y0[0, 1], g_hi - y2_lo)
    hull = np.array([[y1_lo, y1_hi], [y2_lo, y2_hi]])
    box = np.stack([np.maximum(lemma[:, 0], hull[:, 0]), np.minimum(lemma[:, 1], hull[:, 1])], axis=1)
    consts = {"Phi": phi, "g_min": g_lo, "g_max": g_hi, "factor_a": fa, "factor_e": fe,
              "Y1_bound": y1_abs, "Y2_bound": y2_abs}
    return StateBox(lemma, hull, box, consts)
