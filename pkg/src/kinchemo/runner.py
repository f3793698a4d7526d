"""Scenario orchestration: step loops, output files and run summaries."""

import csv
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agents import ensemble_from_field, empirical_density, step_agents, trajectory_rows, write_trajectories
from .characteristics import SignalHistory, jacobian_det_general, trace_characteristic
from .errors import KinchemoError
from .kinetic import density_and_flux, step_kinetic, write_snapshot
from .model import divergence_y
from .monitor import MonitorSample, check_theorem2_bounds, concentration_metrics, support_extent
from .scenario import (envelope_constants, initial_field, initial_signal_values, lambda_max,
                       parabolic_initial_sums, prescribed_signal, x_grid, y_grid)
from .signal import (SignalField, initial_parabolic_field, signal_bound_report, solve_elliptic,
                     step_parabolic, write_signal_csv)

log = logging.getLogger(__name__)

MOMENT_COLUMNS = ["t", "mass", "f_L1", "f_L2", "f_Linf", "n_L2", "peak_n", "peak_x", "variance_n", "mean_y1"]
# cells below this fraction of the peak do not count as support for the wrap-around flag
SUPPORT_FLOOR = 1e-8
AGENT_COLUMNS = ["t", "mass", "count", "peak_n", "peak_x", "variance_n", "mean_y1", "mean_v"]


@dataclass
class RunSummary:
    scenario: str
    mode: str
    config_hash: str
    steps: int
    t_final: float
    final: dict = field(default_factory=dict)
    violation_count: int = 0
    negative_control_violations: int = 0
    wall_time: float = 0.0
    l1_distances: dict = field(default_factory=dict)
    regimes: list = field(default_factory=list)
    ladder: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_json(self):
        # wall time is left out so that repeated runs write identical files
        data = {k: v for k, v in self.__dict__.items() if k != "wall_time"}
        return json.dumps(data, indent=2, sort_keys=True, default=_jsonable)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return str(obj)


class ScenarioError(KinchemoError):
    """Runtime failure with the scenario context attached."""


def write_table(path, columns, rows, header=()):
    """CSV with a commented header and 17-significant-digit numbers."""
    with open(path, "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return "nan"
    return f"{float(v):.17g}"


def read_table(path):
    """Read a table written by :func:`write_table` into a dict of float arrays."""
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    cols = next(reader)
    data = [[float(x) for x in row] for row in reader]
    arr = np.array(data, dtype=float).reshape(-1, len(cols))
    return {c: arr[:, i] for i, c in enumerate(cols)}


def _header(cfg, kind):
    return [f"kinchemo {kind}", f"scenario={cfg.name} config_hash={cfg.config_hash} seed={cfg.seed}"]


def _on_cadence(step, every, dt, n_steps):
    k = int(round(every / dt))
    return step % k == 0 or step == n_steps


def _mean_y1(f):
    w = np.einsum("xvij,v->ij", f.values, f.velocities.weights)
    tot = w.sum()
    return float(np.sum(w * f.ygrid.y1_centres) / tot) if tot > 0 else float("nan")


def _moment_row(t, f, mom, grid):
    n_L2 = math.sqrt(math.fsum(mom.n**2 * grid.h))
    if mom.mass > 0:
        peak, loc, var, _ = concentration_metrics(mom.n, grid)
    else:
        peak, loc, var = 0.0, float("nan"), float("nan")
    return [t, mom.mass, mom.lp_norms[1], mom.lp_norms[2], mom.lp_norms[np.inf], n_L2, peak, loc, var, _mean_y1(f)]


class _SignalDriver:
    """Keeps the signal in step with the density for the configured signal mode."""

    def __init__(self, cfg, grid, n0, j0, dt):
        self.cfg = cfg
        self.grid = grid
        self.params = cfg.model.signal
        self.mode = cfg.signal_mode
        self.dt = dt
        self.field = None
        self.n_L2_max = 0.0
        if self.mode == "prescribed":
            self.signal = prescribed_signal(cfg)
            x = grid.x
            S = np.asarray(self.signal(x, 0.0)).reshape(self.params.M, -1)
            self.field = SignalField(grid, S, np.asarray(self.signal.gradient(x, 0.0)).reshape(self.params.M, -1),
                                     np.zeros_like(S), 0.0, "prescribed")
            return
        self.signal = SignalHistory(grid, extrapolate=dt)
        if self.mode == "elliptic":
            self.field = solve_elliptic(n0, self.params, grid, j=j0)
        else:
            S0 = initial_signal_values(cfg, grid, n0)
            self.field = initial_parabolic_field(S0, self.params, grid, n0)
            self.S0_sums = parabolic_initial_sums(S0, grid)
            self.S0_sup = np.abs(S0).max(axis=1)
            self.S0_grad = np.abs(self.field.dx_S).max(axis=1)
        self.signal.append(0.0, self.field.S, self.field.dx_S, self.field.dt_S)

    def advance(self, t_new, n_old, n_new, j_new):
        if self.mode == "prescribed":
            return
        if self.mode == "elliptic":
            self.field = solve_elliptic(n_new, self.params, self.grid, j=j_new, t=t_new)
        else:
            self.field = step_parabolic(self.field, n_old, self.dt, self.params, n_new=n_new)
        self.signal.append(t_new, self.field.S, self.field.dx_S, self.field.dt_S)

    def report(self, n_L1, n_L2):
        if self.mode == "prescribed":
            return None
        vmax = self.cfg.model.velocities.vmax
        if self.mode == "elliptic":
            return signal_bound_report(n_L1, n_L2, self.params, vmax, self.grid)
        if self.params.reaction == "consume":
            return None
        # the parabolic estimates need the largest ||n||_2 seen so far
        self.n_L2_max = max(self.n_L2_max, n_L2)
        return signal_bound_report(n_L1, self.n_L2_max, self.params, vmax, self.grid, "parabolic", self.S0_sup, self.S0_grad,
                                   self.S0_sums[0], self.S0_sums[1])

    def measured(self):
        fld = self.field
        dt = None if fld.dt_S is None else np.abs(fld.dt_S).max(axis=1)
        return np.abs(fld.S).max(axis=1), np.abs(fld.dx_S).max(axis=1), dt


def _jacobian_probe(cfg, signal, t, ygrid):
    """Measured Jacobian determinant along one back-time characteristic from ``t`` to 0."""
    if t <= 0:
        return 1.0
    y = np.asarray(cfg.initial.y_box, dtype=float).mean(axis=1)
    trace = trace_characteristic(cfg.initial.center, cfg.model.velocities.speeds[-1], y, t, 0.0,
                                 signal, cfg.model, h_t=cfg.dt)
    return jacobian_det_general(trace, lambda tau, S, Y: divergence_y(S, Y, cfg.model))


def _sample(t, mom, grid, driver, jac):
    n_L2 = math.sqrt(math.fsum(mom.n**2 * grid.h))
    n_L1 = math.fsum(np.abs(mom.n) * grid.h)
    S_sup, S_grad, S_dt = driver.measured()
    return MonitorSample(t, mom.mass, n_L1, n_L2, mom.lp_norms[2], S_sup, S_grad, S_dt, jac)


def _snapshot(out, cfg, f, driver, t):
    tag = f"{t:011.5f}"
    hdr = _header(cfg, "signal snapshot") + [f"t={t:.17g}"]
    if driver.field is not None:
        write_signal_csv(out / f"signal_t{tag}.csv", driver.field, hdr)
    if f is not None:
        write_snapshot(out / f"field_t{tag}.bin", f, {"config_hash": cfg.config_hash, "scenario": cfg.name})


def _ledgers(cfg, samples, reports, ygrid, out, grid):
    consts = envelope_constants(cfg, ygrid)
    ledger = check_theorem2_bounds(samples, reports, cfg.growth, consts, cfg.model.signal, grid)
    neg = check_theorem2_bounds(samples, reports, cfg.growth, consts.scaled(cfg.negative_control),
                                cfg.model.signal, grid)
    if out is not None:
        ledger.write_csv(out / "ledger.csv", _header(cfg, "bound ledger"))
        neg.write_csv(out / "ledger_negative_control.csv",
                      _header(cfg, "bound ledger") + [f"negative control: constants scaled by {cfg.negative_control}"])
    return ledger, neg


SERIES_BASE = ["t", "mass", "n_L1", "n_L2", "f_L2", "jac_det"]


def _series_columns(M):
    return SERIES_BASE + [f"S_sup{i + 1}" for i in range(M)] + [f"S_grad{i + 1}" for i in range(M)] + \
        [f"S_dt{i + 1}" for i in range(M)]


def _series_row(s, M):
    dt = s.S_dt if s.S_dt is not None else [None] * M
    return [s.t, s.mass, s.n_L1, s.n_L2, s.f_L2, s.jac_det] + list(s.S_sup) + list(s.S_grad) + list(dt)


def samples_from_series(path, M):
    tab = read_table(path)
    out = []
    for i in range(tab["t"].size):
        dt = np.array([tab[f"S_dt{m + 1}"][i] for m in range(M)])
        out.append(MonitorSample(
            float(tab["t"][i]), float(tab["mass"][i]), float(tab["n_L1"][i]), float(tab["n_L2"][i]),
            float(tab["f_L2"][i]), np.array([tab[f"S_sup{m + 1}"][i] for m in range(M)]),
            np.array([tab[f"S_grad{m + 1}"][i] for m in range(M)]), None if np.any(np.isnan(dt)) else dt,
            float(tab["jac_det"][i])))
    return out


# -- modes ------------------------------------------------------------------------------------

def _run_kinetic(cfg, out, summary, with_agents=False, snapshots=True):
    grid = x_grid(cfg)
    ygrid = y_grid(cfg)
    f = initial_field(cfg, grid, ygrid)
    mom = density_and_flux(f)
    driver = _SignalDriver(cfg, grid, mom.n, mom.j, cfg.dt)
    n_steps = cfg.n_steps if cfg.T > 0 else 0
    rows, samples, reports, series, fields = [], [], [], [], []
    agent_rows, cmp_rows, traj = [], [], []
    ens = None
    lam_max = lambda_max(cfg, ygrid.y_box)
    if with_agents:
        ens = ensemble_from_field(f, cfg.n_agents, cfg.seed)

    def record(step, t):
        rows.append(_moment_row(t, f, mom, grid))
        s = _sample(t, mom, grid, driver, _jacobian_probe(cfg, driver.signal, t, ygrid))
        samples.append(s)
        reports.append(driver.report(s.n_L1, s.n_L2))
        series.append(_series_row(s, cfg.model.M))
        fields.append((t, mom.n.copy(), driver.field.S.copy()))
        if ens is not None:
            na = empirical_density(ens, grid)
            agent_rows.append(_agent_row(t, ens, na, grid, cfg))
            cmp_rows.append([t, math.fsum(np.abs(na - mom.n) * grid.h)])

    record(0, 0.0)
    if snapshots and out is not None:
        _snapshot(out, cfg, f, driver, 0.0)
    if ens is not None and cfg.trajectory_cap:
        traj.extend(trajectory_rows(ens, cfg.model, cfg.trajectory_cap))
    for step in range(1, n_steps + 1):
        n_old = mom.n
        try:
            f = step_kinetic(f, driver.signal, cfg.dt, cfg.model, cfg.workers)
        except KinchemoError as exc:
            raise ScenarioError(f"scenario {cfg.name!r}, step {step} (t={f.t:.6g}): {exc}") from exc
        t = step * cfg.dt
        f.t = t
        mom = density_and_flux(f)
        driver.advance(t, n_old, mom.n, mom.j)
        if ens is not None:
            ens = step_agents(ens, driver.signal, cfg.dt, cfg.model, lam_max, grid.L, cfg.workers)
            if cfg.trajectory_cap:
                traj.extend(trajectory_rows(ens, cfg.model, cfg.trajectory_cap))
        if _on_cadence(step, cfg.output_every, cfg.dt, n_steps) or _is_compare_time(cfg, t):
            record(step, t)
        if snapshots and out is not None and _on_cadence(step, cfg.snapshot_every, cfg.dt, n_steps):
            _snapshot(out, cfg, f, driver, t)

    summary.steps = n_steps
    summary.t_final = n_steps * cfg.dt
    last = rows[-1]
    summary.final = dict(zip(MOMENT_COLUMNS, last))
    summary.extra["clipped_mass"] = f.clipped_mass
    extent = max(support_extent(n, grid, SUPPORT_FLOOR)[0] for _, n, _ in fields)
    summary.extra["support_extent_max"] = extent
    summary.extra["wrap_contact"] = bool(extent >= 0.5 * grid.L)
    summary.extra["y_grid_box"] = ygrid.box.tolist()
    summary.extra["y_grid_shear"] = ygrid.shear
    if out is not None:
        write_table(out / "moments.csv", MOMENT_COLUMNS, rows, _header(cfg, "kinetic moments"))
        write_table(out / "series.csv", _series_columns(cfg.model.M), series, _header(cfg, "monitor series"))
    ledger, neg = _ledgers(cfg, samples, reports, ygrid, out, grid)
    summary.violation_count = ledger.violation_count
    summary.negative_control_violations = neg.violation_count
    summary.extra["violated_quantities"] = sorted({r.quantity for r in ledger.violations})
    summary.extra["negative_control_quantities"] = sorted({r.quantity for r in neg.violations})
    if ens is not None:
        summary.l1_distances = {f"{r[0]:.6g}": r[1] for r in cmp_rows}
        summary.extra["agent_max_ratio"] = ens.stats.get("max_ratio", 0.0)
        if out is not None:
            write_table(out / "agents.csv", AGENT_COLUMNS, agent_rows, _header(cfg, "agent moments"))
            write_table(out / "compare.csv", ["t", "L1_distance"], cmp_rows, _header(cfg, "kinetic vs agents"))
            if cfg.trajectory_cap:
                write_trajectories(out / "trajectories.csv", traj, _header(cfg, "agent trajectories"))
    return {"f": f, "moments": rows, "samples": samples, "ledger": ledger, "negative": neg, "ensemble": ens,
            "agent_rows": agent_rows, "compare": cmp_rows, "signal": driver.signal, "fields": fields}


def _is_compare_time(cfg, t):
    return any(abs(t - tc) < 0.5 * cfg.dt for tc in cfg.compare_times)


def _agent_row(t, ens, na, grid, cfg):
    if ens.mass > 0:
        peak, loc, var, _ = concentration_metrics(na, grid)
    else:
        peak, loc, var = 0.0, float("nan"), float("nan")
    mean_v = float(np.mean(cfg.model.velocities.speeds[ens.v_idx])) if ens.size else float("nan")
    return [t, math.fsum(na * grid.h), ens.size, peak, loc, var, float(np.mean(ens.y[0])), mean_v]


def _run_agents(cfg, out, summary):
    """Agents alone; elliptic or parabolic signals are fed by the agents' own density."""
    grid = x_grid(cfg)
    ygrid = y_grid(cfg)
    f0 = initial_field(cfg, grid, ygrid)
    ens = ensemble_from_field(f0, cfg.n_agents, cfg.seed)
    lam_max = lambda_max(cfg, ygrid.y_box)
    na = empirical_density(ens, grid)
    ja = _agent_flux(ens, grid, cfg)
    driver = _SignalDriver(cfg, grid, na, ja, cfg.dt)
    n_steps = cfg.n_steps if cfg.T > 0 else 0
    rows = [_agent_row(0.0, ens, na, grid, cfg)]
    traj = trajectory_rows(ens, cfg.model, cfg.trajectory_cap) if cfg.trajectory_cap else []
    count0 = ens.size
    for step in range(1, n_steps + 1):
        try:
            ens = step_agents(ens, driver.signal, cfg.dt, cfg.model, lam_max, grid.L, cfg.workers)
        except KinchemoError as exc:
            raise ScenarioError(f"scenario {cfg.name!r}, step {step}: {exc}") from exc
        t = step * cfg.dt
        n_old = na
        na = empirical_density(ens, grid)
        driver.advance(t, n_old, na, _agent_flux(ens, grid, cfg))
        if cfg.trajectory_cap:
            traj.extend(trajectory_rows(ens, cfg.model, cfg.trajectory_cap))
        if _on_cadence(step, cfg.output_every, cfg.dt, n_steps):
            rows.append(_agent_row(t, ens, na, grid, cfg))
        if out is not None and _on_cadence(step, cfg.snapshot_every, cfg.dt, n_steps):
            _snapshot(out, cfg, None, driver, t)
    summary.steps = n_steps
    summary.t_final = n_steps * cfg.dt
    summary.final = dict(zip(AGENT_COLUMNS, rows[-1]))
    summary.extra["agent_count_conserved"] = ens.size == count0
    summary.extra["agent_max_ratio"] = ens.stats.get("max_ratio", 0.0)
    if out is not None:
        write_table(out / "agents.csv", AGENT_COLUMNS, rows, _header(cfg, "agent moments"))
        write_table(out / "ledger.csv", ["t", "inequality", "measured", "bound", "margin", "violated"], [],
                    _header(cfg, "bound ledger") + ["agent mode: the phase-space estimates need the kinetic solver"])
        if cfg.trajectory_cap:
            write_trajectories(out / "trajectories.csv", traj, _header(cfg, "agent trajectories"))
    return {"ensemble": ens, "agent_rows": rows}


def _agent_flux(ens, grid, cfg):
    idx = np.minimum((np.mod(ens.x, grid.L) / grid.h).astype(np.int64), grid.nx - 1)
    v = cfg.model.velocities.speeds[ens.v_idx]
    flux = np.bincount(idx, weights=v, minlength=grid.nx)
    return flux * (ens.mass / max(ens.size, 1)) / grid.h


def _run_monitor(cfg, out, summary):
    """Ledger only: from a recorded series when configured, else from a fresh kinetic run."""
    if cfg.series_path:
        grid = x_grid(cfg)
        ygrid = y_grid(cfg)
        samples = samples_from_series(cfg.series_path, cfg.model.M)
        mom0 = density_and_flux(initial_field(cfg, grid, ygrid))
        driver = _SignalDriver(cfg, grid, mom0.n, mom0.j, cfg.dt)
        reports = [driver.report(s.n_L1, s.n_L2) for s in samples]
        ledger, neg = _ledgers(cfg, samples, reports, ygrid, out, grid)
        summary.steps = 0
        summary.t_final = samples[-1].t if samples else 0.0
        summary.violation_count = ledger.violation_count
        summary.negative_control_violations = neg.violation_count
        return {"ledger": ledger, "negative": neg, "samples": samples}
    return _run_kinetic(cfg, out, summary, snapshots=False)


def run_scenario(cfg, out_dir=None):
    """Execute a scenario and write its outputs.

    Parameters
    ----------
    cfg : ScenarioConfig
    out_dir : path-like, optional
        Output directory (created if needed).  ``None`` skips file output.

    Returns
    -------
    (RunSummary, dict)
        The summary and the in-memory results (fields, series, ledgers).
    """
    t0 = time.perf_counter()
    out = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
    summary = RunSummary(cfg.name, cfg.mode, cfg.config_hash, 0, 0.0)
    summary.regimes = cfg.validation.satisfied_regimes if cfg.validation is not None else []
    if cfg.ladder:
        results = _run_ladder(cfg, out, summary)
    elif cfg.mode == "kinetic":
        results = _run_kinetic(cfg, out, summary)
    elif cfg.mode == "compare":
        results = _run_kinetic(cfg, out, summary, with_agents=True)
    elif cfg.mode == "agent":
        results = _run_agents(cfg, out, summary)
    else:
        results = _run_monitor(cfg, out, summary)
    summary.wall_time = time.perf_counter() - t0
    if out is not None:
        (out / "summary.json").write_text(summary.to_json() + "\n")
    return summary, results


def _run_ladder(cfg, out, summary):
    """Repeat the scenario with the turning-rate sensitivity scaled by each ladder factor."""
    from dataclasses import replace
    results = []
    for factor in cfg.ladder:
        sub = replace(cfg.with_lambda_scale(factor), ladder=())
        sub_out = None if out is None else out / f"ladder_x{factor:g}"
        if sub_out is not None:
            sub_out.mkdir(parents=True, exist_ok=True)
        sub_summary = RunSummary(cfg.name, cfg.mode, cfg.config_hash, 0, 0.0)
        res = _run_kinetic(sub, sub_out, sub_summary, snapshots=False)
        final = sub_summary.final
        summary.ladder.append({"factor": factor, "variance": final["variance_n"], "peak": final["peak_n"],
                               "violations": sub_summary.violation_count})
        summary.violation_count += sub_summary.violation_count
        summary.steps = sub_summary.steps
        summary.t_final = sub_summary.t_final
        results.append(res)
    var = [r["variance"] for r in summary.ladder]
    peak = [r["peak"] for r in summary.ladder]
    summary.extra["variance_strictly_decreasing"] = all(b < a for a, b in zip(var, var[1:]))
    summary.extra["peak_strictly_increasing"] = all(b > a for a, b in zip(peak, peak[1:]))
    return {"ladder": results}
