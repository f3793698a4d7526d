"""Runtime checks of the a priori estimates, the Gronwall envelope and concentration metrics."""

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .signal import BoundReport, signal_bound_report

GL_NODES, GL_WEIGHTS = np.polynomial.legendre.leggauss(8)
VIOLATION_RTOL = 1e-9


# -- Gronwall envelope -------------------------------------------------------------------

def _tabulate(fn, t_grid):
    if callable(fn):
        return None
    arr = np.broadcast_to(np.asarray(fn, dtype=float), t_grid.shape)
    return arr


def log_gronwall_envelope(w0, a, b, t_grid):
    """Logarithm of :func:`gronwall_envelope`; stays finite where the envelope overflows.

    ``log env(t) = exp(A(t)) (ln w0 + B(t))`` with ``A = int_0^t a`` and
    ``B = int_0^t b exp(-A)``.
    """
    if not w0 > 0:
        raise ValueError("w0 must be positive (the envelope involves ln w0)")
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0 or np.any(np.diff(t) < 0):
        raise ValueError("t_grid must be a nondecreasing 1D array")
    ta = _tabulate(a, t)
    tb = _tabulate(b, t)
    A = np.zeros(t.size)
    B = np.zeros(t.size)
    # integrals start at 0; prepend it if the grid does not
    t0 = 0.0
    A_prev, B_prev = 0.0, 0.0
    a_prev = float(a(t0)) if ta is None else float(ta[0])
    b_prev = float(b(t0)) if tb is None else float(tb[0])
    for k in range(t.size):
        lo, hi = (t0, t[k]) if k == 0 else (t[k - 1], t[k])
        dt = hi - lo
        if ta is None:
            a_lo, a_hi = float(a(lo)), float(a(hi))
        else:
            a_lo = a_prev if k > 0 else float(ta[0])
            a_hi = float(ta[k])
        if dt > 0:
            s = 0.5 * dt * (GL_NODES + 1.0)
            wts = 0.5 * dt * GL_WEIGHTS
            if ta is None:
                # A at each node by a nested rule
                A_nodes = np.array([A_prev + 0.5 * sk * np.dot(GL_WEIGHTS, np.asarray(
                    [a(lo + 0.5 * sk * (z + 1.0)) for z in GL_NODES], dtype=float)) for sk in s])
                a_int = 0.5 * dt * np.dot(GL_WEIGHTS, np.asarray([a(lo + sk) for sk in s], dtype=float))
            else:
                # a linear on the interval: A is quadratic
                A_nodes = A_prev + a_lo * s + (a_hi - a_lo) * s**2 / (2.0 * dt)
                a_int = 0.5 * dt * (a_lo + a_hi)
            if tb is None:
                b_nodes = np.asarray([b(lo + sk) for sk in s], dtype=float)
            else:
                b_lo = b_prev if k > 0 else float(tb[0])
                b_nodes = b_lo + (float(tb[k]) - b_lo) * s / dt
            B_prev = B_prev + float(np.dot(wts, b_nodes * np.exp(-A_nodes)))
            A_prev = A_prev + a_int
        A[k] = A_prev
        B[k] = B_prev
        a_prev = a_hi
        b_prev = float(b(hi)) if tb is None else float(tb[k])
    with np.errstate(over="ignore"):  # an infinite envelope is still a valid bound
        return np.exp(A) * (math.log(w0) + B)


def gronwall_envelope(w0, a, b, t_grid):
    """Super-solution of ``w' <= a w ln w + b w`` with ``w(0) = w0``.

    Parameters
    ----------
    w0 : float
        Initial value, must be positive.
    a, b : callable or array_like
        Nonnegative coefficients, either functions of time or tabulated on
        ``t_grid`` (treated as piecewise linear).
    t_grid : array_like
        Nondecreasing output times, starting at or after 0.

    Returns
    -------
    ndarray
        ``[w0 exp(int_0^t b(s) exp(-int_0^s a) ds)]^(exp(int_0^t a))``.
    """
    return np.exp(log_gronwall_envelope(w0, a, b, t_grid))


# -- ledger ----------------------------------------------------------------------------------

@dataclass
class LedgerRow:
    t: float
    quantity: str
    measured: float
    bound: float
    inputs: dict

    @property
    def margin(self):
        return self.bound - self.measured

    @property
    def violated(self):
        return self.measured > self.bound + VIOLATION_RTOL * max(1.0, abs(self.bound))


def _bound_signal(kind, which):
    def fn(inp):
        rep = _report_from_inputs(inp)
        val = getattr(rep, kind if which == "proof" else kind + "_grid")
        return float(np.asarray(val)[inp["component"]])
    return fn


def _report_from_inputs(inp):
    from .model import SignalParams
    from .grid import PeriodicGrid
    params = SignalParams(inp["d"], inp["k"], inp["k0"])
    grid = PeriodicGrid(inp["L"], inp["nx"]) if inp.get("nx") else None
    return signal_bound_report(inp["n_L1"], inp["n_L2"], params, inp["vmax"], grid, inp.get("mode", "elliptic"),
                               inp.get("S0_sup"), inp.get("S0_grad"), inp.get("S0_hat_sum"),
                               inp.get("S0_grad_hat_sum"))


def _bound_envelope(inp):
    t = np.asarray(inp["t_grid"], dtype=float)
    return float(log_gronwall_envelope(inp["w0"], inp["a"], inp["b"], t)[-1])


def _bound_jacobian(inp):
    return math.exp(inp["C_divF"] * inp["t"] * (1.0 + inp["Pi"]))


def _bound_mass(inp):
    return inp["mass0"] * inp["rtol"]


BOUND_REGISTRY = {
    "signal_sup_proof": _bound_signal("sup", "proof"),
    "signal_sup_grid": _bound_signal("sup", "grid"),
    "signal_grad_proof": _bound_signal("grad", "proof"),
    "signal_grad_grid": _bound_signal("grad", "grid"),
    "signal_dt_proof": _bound_signal("dt", "proof"),
    "signal_dt_grid": _bound_signal("dt", "grid"),
    "f_L2_log_envelope": _bound_envelope,
    "jacobian_inverse": _bound_jacobian,
    "jacobian_forward": _bound_jacobian,
    "mass_drift": _bound_mass,
}


@dataclass
class BoundLedger:
    """Time series of monitored inequalities ``measured <= bound``.

    Every bound is a pure function of the stored ``inputs`` through
    :data:`BOUND_REGISTRY`, so :meth:`recompute` can re-derive it.
    """

    rows: list = field(default_factory=list)
    constants: dict = field(default_factory=dict)

    def add(self, t, quantity, measured, inputs):
        bound = BOUND_REGISTRY[quantity.split("#")[0]](inputs)
        row = LedgerRow(float(t), quantity, float(measured), float(bound), inputs)
        self.rows.append(row)
        return row

    def recompute(self, row):
        return BOUND_REGISTRY[row.quantity.split("#")[0]](row.inputs)

    @property
    def violations(self):
        return [r for r in self.rows if r.violated]

    @property
    def violation_count(self):
        return len(self.violations)

    def quantities(self):
        return sorted({r.quantity for r in self.rows})

    def write_csv(self, path, header=()):
        with open(path, "w", newline="") as fh:
            for line in header:
                fh.write(f"# {line}\n")
            for k in sorted(self.constants):
                fh.write(f"# {k} = {_fmt_const(self.constants[k])}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "inequality", "measured", "bound", "margin", "violated"])
            for r in self.rows:
                w.writerow([f"{r.t:.17g}", r.quantity, f"{r.measured:.17g}", f"{r.bound:.17g}",
                            f"{r.margin:.17g}", int(r.violated)])


def _fmt_const(v):
    if isinstance(v, float):
        return f"{v:.17g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt_const(x) for x in v) + "]"
    return str(v)


# -- Theorem-2 style monitor ----------------------------------------------------------------

@dataclass
class MonitorSample:
    """Measured quantities at one output time.

    ``S_sup``, ``S_grad`` and ``S_dt`` are per-component sup norms
    (``S_dt`` may be ``None``); ``jac_det`` is the measured Jacobian
    determinant of the internal-state flow over ``[0, t]``.
    """

    t: float
    mass: float
    n_L1: float
    n_L2: float
    f_L2: float
    S_sup: np.ndarray
    S_grad: np.ndarray
    S_dt: Optional[np.ndarray] = None
    jac_det: Optional[float] = None


@dataclass
class EnvelopeConstants:
    """Explicit constants of the L2 envelope and the Jacobian bound.

    ``C_K`` bounds the kernel, ``C_lambda`` the turning rate through
    ``lambda <= C_lambda (1 + Lambda(|S|) + |dS/dt along paths|)``,
    ``C_divF`` the divergence through ``|div_y F| <= C_divF (1 + Pi(|S|))``.
    ``kappa`` converts ``||f||_2`` into a bound on ``||n||_2``.
    """

    C_K: float
    C_lambda: float
    C_divF: float
    V_measure: float
    vmax: float
    kappa: float
    Lambda_Sb: float = 0.0
    Pi_Sb: float = 0.0

    def scaled(self, factor):
        return EnvelopeConstants(self.C_K * factor, self.C_lambda * factor, self.C_divF * factor,
                                 self.V_measure, self.vmax, self.kappa, self.Lambda_Sb, self.Pi_Sb)

    def coefficients(self, n_L1, params):
        """Constant coefficients ``(a, b)`` of ``w' <= a w ln w + b w`` for ``w = 1 + ||f||_2``.

        The signal-change bound ``|dS_i/dt| <= 2 vmax (k_i/d_i)[n_L1 ln(1 + ||n||_2^4 d_i/k0_i) + sqrt 2]``
        is combined with ``||n||_2 <= kappa ||f||_2`` and
        ``ln(1 + c z^4) <= ln(1 + c) + 4 ln(1 + z)``.
        """
        pref = self.C_K * self.V_measure * self.C_lambda
        kd = params.k / params.d
        a = pref * float(np.sum(2.0 * self.vmax * kd * n_L1 * 4.0))
        logs = np.log1p(self.kappa**4 * params.d / params.k0)
        brk = np.where(n_L1 > 0, n_L1 * logs + math.sqrt(2.0), 0.0)
        b = 0.5 * self.C_divF * (1.0 + self.Pi_Sb) + pref * (
            1.0 + self.Lambda_Sb + float(np.sum(2.0 * self.vmax * kd * brk)))
        return a, b


def check_theorem2_bounds(samples, reports, gs, consts, params, grid=None, mass_rtol=1e-8):
    """Assemble the ledger of a priori estimates for a run.

    Parameters
    ----------
    samples : list of MonitorSample
        Measured series; the first entry is the initial state.
    reports : list of BoundReport or None
        Signal bound reports aligned with ``samples``; ``None`` entries (a
        prescribed signal) skip the signal rows.
    gs : GrowthSpec
        Used for the record only; the numeric constants come from ``consts``.
    consts : EnvelopeConstants
    params : SignalParams
    grid : PeriodicGrid, optional

    Returns
    -------
    BoundLedger
    """
    if len(samples) != len(reports):
        raise ValueError(f"{len(samples)} samples but {len(reports)} bound reports")
    for s, r in zip(samples, reports):
        if r is not None and abs(r.n_L1 - s.n_L1) > 1e-12 * max(1.0, s.n_L1) and r.n_L1 < s.n_L1:
            raise ValueError(f"bound report at t={s.t} uses ||n||_1={r.n_L1} below measured {s.n_L1}")
    times = [s.t for s in samples]
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValueError("samples are not in time order")
    ledger = BoundLedger()
    if not samples:
        return ledger
    n_L1 = samples[0].n_L1
    a, b = consts.coefficients(n_L1, params)
    w0 = 1.0 + samples[0].f_L2
    ledger.constants.update({
        "C_K": consts.C_K, "C_lambda": consts.C_lambda, "C_divF": consts.C_divF, "V_measure": consts.V_measure,
        "vmax": consts.vmax, "kappa": consts.kappa, "Lambda(S_bound)": consts.Lambda_Sb, "Pi(S_bound)": consts.Pi_Sb,
        "envelope_a": a, "envelope_b": b, "w0 = 1 + ||f0||_2": w0, "n_L1": n_L1,
        "omega*sigma": gs.omega * gs.sigma if gs is not None else None,
    })
    base = {"d": params.d.tolist(), "k": params.k.tolist(), "k0": params.k0.tolist()}
    mass0 = samples[0].mass
    for s, rep in zip(samples, reports):
        if rep is None:
            sig = None
        else:
            sig = dict(base, n_L1=rep.n_L1, n_L2=rep.n_L2, vmax=consts.vmax, mode=rep.mode,
                       L=grid.L if grid else None, nx=grid.nx if grid else None)
            if rep.mode == "parabolic":
                for key in ("S0_sup", "S0_grad", "S0_hat_sum", "S0_grad_hat_sum"):
                    sig[key] = rep.constants.get(key)
        for i in range(params.M if sig is not None else 0):
            inp = dict(sig, component=i)
            ledger.add(s.t, "signal_sup_proof", s.S_sup[i], inp)
            ledger.add(s.t, "signal_grad_proof", s.S_grad[i], inp)
            if rep.sup_grid is not None:
                ledger.add(s.t, "signal_sup_grid", s.S_sup[i], inp)
                ledger.add(s.t, "signal_grad_grid", s.S_grad[i], inp)
            if s.S_dt is not None and rep.dt is not None:
                ledger.add(s.t, "signal_dt_proof", s.S_dt[i], inp)
                if rep.dt_grid is not None:
                    ledger.add(s.t, "signal_dt_grid", s.S_dt[i], inp)
        ledger.add(s.t, "f_L2_log_envelope", math.log(1.0 + s.f_L2),
                   {"w0": w0, "a": a, "b": b, "t_grid": [0.0, s.t]})
        if s.jac_det is not None:
            jin = {"C_divF": consts.C_divF, "t": s.t, "Pi": consts.Pi_Sb}
            ledger.add(s.t, "jacobian_inverse", 1.0 / s.jac_det, jin)
            ledger.add(s.t, "jacobian_forward", s.jac_det, jin)
        ledger.add(s.t, "mass_drift", abs(s.mass - mass0), {"mass0": mass0, "rtol": mass_rtol})
    return ledger


# -- concentration ------------------------------------------------------------------------------

def support_extent(n, grid, rel_floor=0.0):
    """Length of the cyclic support of ``n`` and the index of its first cell.

    The support is the set of cells with ``n > rel_floor * max(n)``; its
    length is the domain minus the largest empty gap.  A value of at least
    ``L/2`` means the density touches its own periodic image.
    """
    n = np.asarray(n, dtype=float)
    occupied = np.flatnonzero(n > rel_floor * n.max())
    if occupied.size == 0:
        return 0.0, 0
    gaps = np.diff(np.concatenate([occupied, [occupied[0] + grid.nx]])) - 1
    g = int(np.argmax(gaps))
    return grid.L - gaps[g] * grid.h, int(occupied[(g + 1) % occupied.size])


def concentration_metrics(n, grid):
    """Peak value, peak location, variance and mass of a density on a periodic grid.

    The peak location is the centre of the leftmost maximal cell.  The
    variance integrates the piecewise-constant density exactly.  When the
    support (the domain minus its largest empty gap) is shorter than ``L/2``
    the mean is the linear mean of the unwrapped support; otherwise the
    circular mean is used and distances are taken periodically.
    """
    n = np.asarray(n, dtype=float)
    h = grid.h
    L = grid.L
    mass = math.fsum(n * h)
    if not mass > 0:
        raise ValueError("density has no mass")
    k = int(np.argmax(n))
    peak, loc = float(n[k]), float(grid.x[k])
    x = grid.x
    width, start = support_extent(n, grid)
    if width < 0.5 * L:
        xs = np.mod(x - start * h, L)
        mean = math.fsum(xs * n * h) / mass
        d = xs - mean
    else:
        ang = 2.0 * np.pi * x / L
        c = math.fsum(np.cos(ang) * n * h)
        s = math.fsum(np.sin(ang) * n * h)
        mean = (math.atan2(s, c) * L / (2.0 * np.pi)) % L
        d = np.mod(x - mean + 0.5 * L, L) - 0.5 * L
    # exact integral of d^2 over each cell; a cell cut by d = +-L/2 is split
    lo = d - 0.5 * h
    hi = d + 0.5 * h
    half = 0.5 * L
    cube = lambda u: u * u * u / 3.0
    moment = cube(hi) - cube(lo)
    up = hi > half
    moment[up] = cube(half) - cube(lo[up]) + cube(hi[up] - L) - cube(-half)
    down = lo < -half
    moment[down] = cube(hi[down]) - cube(-half) + cube(half) - cube(lo[down] + L)
    var = math.fsum(n * moment) / mass
    return peak, loc, var, mass
