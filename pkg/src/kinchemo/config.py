"""Scenario configuration files.

Scenarios are TOML documents: ``key = value`` lines grouped into
``[section]`` and ``[section.subsection]`` tables, with inline arrays such
as ``speeds = [-1.0, 1.0]`` and inline tables such as
``x = {kind = "gaussian", center = 20.0, width = 1.5}``.  The recognised
sections and keys are listed in ``docs/config.md``.

Loading validates every field, collects all problems it finds and raises a
single :class:`ConfigurationError` whose ``errors`` attribute lists them
with their error codes.
"""

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigurationError
from .model import (GrowthFunction, GrowthSpec, GSpec, KernelSpec, LambdaSpec, ModelConfig,
                    SampleBox, SignalParams, VelocitySet, validate_growth_conditions)

MODES = ("kinetic", "agent", "compare", "monitor")
SIGNAL_MODES = ("elliptic", "parabolic", "prescribed")


@dataclass
class InitialData:
    """Separable initial density ``f0 = X(x) V(v) U(y)`` with ``U`` uniform on ``y_box``."""

    x_kind: str
    center: float
    width: float
    cutoff: float
    v_weights: np.ndarray
    y_box: np.ndarray
    mass: float = 1.0

    def x_support(self):
        """Half-width of the x-support."""
        if self.x_kind == "gaussian":
            return self.cutoff * self.width
        return 0.5 * self.width

    def x_profile(self, grid):
        """Exact cell averages of the (unnormalised) x-profile."""
        from scipy.special import erf
        e = grid.edges
        if self.x_kind == "gaussian":
            half = self.cutoff * self.width
            out = np.zeros(grid.nx)
            for shift in (-grid.L, 0.0, grid.L):
                lo = np.clip(e[:-1] - self.center - shift, -half, half)
                hi = np.clip(e[1:] - self.center - shift, -half, half)
                s = math.sqrt(2.0) * self.width
                out += 0.5 * (erf(hi / s) - erf(lo / s))
            return out / grid.h
        if self.x_kind == "box":
            out = np.zeros(grid.nx)
            for shift in (-grid.L, 0.0, grid.L):
                lo = np.maximum(e[:-1], self.center - 0.5 * self.width + shift)
                hi = np.minimum(e[1:], self.center + 0.5 * self.width + shift)
                out += np.maximum(hi - lo, 0.0)
            return out / grid.h
        raise ConfigurationError("UNKNOWN_VARIANT", "initial.x.kind", f"unknown profile {self.x_kind!r}")

    def y_profile(self, ygrid):
        """Cell averages of the indicator of ``y_box`` on the internal-state grid."""
        if ygrid.shear != 0.0:
            return self._y_profile_sheared(ygrid)
        parts = []
        for i in range(2):
            e = ygrid.lo[i] + np.arange(ygrid.n[i] + 1) * ygrid.h[i]
            lo, hi = self.y_box[i]
            if hi <= lo:
                # degenerate box: all mass in the cell containing the point
                w = np.zeros(ygrid.n[i])
                k = min(max(int(math.floor((lo - ygrid.lo[i]) / ygrid.h[i])), 0), ygrid.n[i] - 1)
                w[k] = 1.0
            else:
                w = np.maximum(np.minimum(e[1:], hi) - np.maximum(e[:-1], lo), 0.0) / ygrid.h[i]
            parts.append(w)
        return parts[0][:, None] * parts[1][None, :]

    def _y_profile_sheared(self, ygrid, n_sub=64):
        # The box is a parallelogram in grid coordinates; the z1-overlap length
        # is piecewise linear in z2 and is integrated by a fine midpoint rule.
        c = ygrid.shear
        (a1, b1), (a2, b2) = self.y_box
        if b1 <= a1 or b2 <= a2:
            z = np.array([0.5 * (a1 + b1) + c * 0.5 * (a2 + b2), 0.5 * (a2 + b2)])
            k = [min(max(int(math.floor((z[i] - ygrid.lo[i]) / ygrid.h[i])), 0), ygrid.n[i] - 1) for i in range(2)]
            out = np.zeros(ygrid.n)
            out[k[0], k[1]] = 1.0
            return out
        e1 = ygrid.lo[0] + np.arange(ygrid.n[0] + 1) * ygrid.h[0]
        e2 = ygrid.lo[1] + np.arange(ygrid.n[1] + 1) * ygrid.h[1]
        sub = (np.arange(n_sub) + 0.5) / n_sub
        z2 = e2[:-1, None] + sub[None, :] * ygrid.h[1]  # (ny2, n_sub)
        inside = (z2 >= a2) & (z2 <= b2)
        lo = a1 + c * z2
        hi = b1 + c * z2
        ov = np.maximum(np.minimum(e1[1:, None, None], hi[None]) - np.maximum(e1[:-1, None, None], lo[None]), 0.0)
        return (ov * inside[None]).mean(axis=-1) / ygrid.h[0]


@dataclass
class PrescribedSignal:
    kind: str = "constant"
    baseline: tuple = (0.0,)
    amplitude: tuple = (0.0,)
    center: float = 0.0
    width: float = 1.0


@dataclass
class ScenarioConfig:
    """Everything needed to run one scenario."""

    name: str
    model: ModelConfig
    growth: GrowthSpec
    mode: str
    signal_mode: str
    initial: InitialData
    T: float
    dt: float
    output_every: float
    snapshot_every: float
    seed: int
    workers: int
    n_agents: int = 0
    trajectory_cap: int = 0
    y_box: Optional[np.ndarray] = None
    y_coords: str = "plain"
    y_anchor: Optional[tuple] = None
    S0: Optional[dict] = None
    prescribed: Optional[PrescribedSignal] = None
    sample: dict = field(default_factory=dict)
    compare_times: tuple = ()
    ladder: tuple = ()
    negative_control: float = 0.5
    series_path: Optional[str] = None
    config_hash: str = ""
    raw: dict = field(default_factory=dict, repr=False)
    validation: object = None

    @property
    def n_steps(self):
        return int(round(self.T / self.dt))

    def with_lambda_scale(self, factor):
        model = replace(self.model, turning_rate=self.model.turning_rate.scaled(factor))
        return replace(self, model=model)


class _Collector:
    """Accumulates configuration errors instead of stopping at the first."""

    def __init__(self):
        self.errors = []

    def add(self, exc):
        self.errors.append(exc)

    def raise_if_any(self):
        if self.errors:
            first = self.errors[0]
            exc = ConfigurationError(first.code, first.field, first.reason if len(self.errors) == 1 else
                                     first.reason + f" (+{len(self.errors) - 1} more)")
            exc.errors = list(self.errors)
            raise exc


def _get(tbl, key, path, errs, default=..., kind=None):
    if key not in tbl:
        if default is ...:
            errs.add(ConfigurationError("MISSING_FIELD", f"{path}.{key}", "required field is missing"))
            return None
        return default
    val = tbl[key]
    if kind is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            errs.add(ConfigurationError("TYPE", f"{path}.{key}", f"expected a number, got {val!r}"))
            return None
        return float(val)
    if kind is int:
        if isinstance(val, bool) or not isinstance(val, int):
            errs.add(ConfigurationError("TYPE", f"{path}.{key}", f"expected an integer, got {val!r}"))
            return None
        return val
    if kind == "floats":
        try:
            return np.asarray(val, dtype=float)
        except (TypeError, ValueError):
            errs.add(ConfigurationError("TYPE", f"{path}.{key}", f"expected numeric array, got {val!r}"))
            return None
    return val


def _positive(val, path, errs, strict=True):
    if val is None:
        return
    arr = np.atleast_1d(np.asarray(val, dtype=float))
    bad = (arr <= 0) if strict else (arr < 0)
    if np.any(bad) or not np.all(np.isfinite(arr)):
        errs.add(ConfigurationError("POSITIVITY", path, f"must be {'positive' if strict else 'nonnegative'}, got {val!r}"))


def _growth_fn(spec, path, errs):
    if spec is None:
        return None
    if not isinstance(spec, dict):
        errs.add(ConfigurationError("TYPE", path, "growth function must be a table"))
        return None
    kind = spec.get("kind", "poly")
    if kind == "poly":
        gf = GrowthFunction("poly", float(spec.get("c0", 0.0)), float(spec.get("c1", 0.0)), float(spec.get("power", 1.0)))
    elif kind == "table":
        gf = GrowthFunction("table", xs=tuple(spec.get("xs", ())), ys=tuple(spec.get("ys", ())))
        if len(gf.xs) < 2 or len(gf.xs) != len(gf.ys):
            errs.add(ConfigurationError("SHAPE", path, "table needs matching xs and ys with at least two points"))
            return None
    else:
        errs.add(ConfigurationError("UNKNOWN_VARIANT", f"{path}.kind", f"unknown growth function kind {kind!r}"))
        return None
    if not gf.check(float(spec.get("check_range", 100.0))):
        errs.add(ConfigurationError("MONOTONICITY", path, "growth function must be nonnegative and nondecreasing"))
    return gf


def config_hash(raw):
    """SHA-256 of the canonical JSON form of the parsed file, ignoring the worker count."""
    clean = json.loads(json.dumps(raw, sort_keys=True, default=str))
    clean.get("scenario", {}).pop("workers", None)
    return hashlib.sha256(json.dumps(clean, sort_keys=True).encode()).hexdigest()[:16]


def parse_config(text, source="<string>", workers_default=None):
    """Parse and validate a scenario from TOML text."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError("PARSE", source, str(exc)) from None
    return build_config(raw, workers_default)


def load_config(path, workers_default=None):
    """Load and validate a scenario file.

    The growth hypotheses are checked on load and the report is attached as
    ``validation``.
    """
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError("NOT_FOUND", str(path), "config file does not exist")
    return parse_config(p.read_text(), str(path), workers_default)


def build_config(raw, workers_default=None):
    errs = _Collector()
    sc = raw.get("scenario", {})
    dom = raw.get("domain", {})
    mod = raw.get("model", {})
    sig = raw.get("signal", {})
    ini = raw.get("initial", {})
    gro = raw.get("growth", {})
    for sec in ("scenario", "domain", "model", "signal", "initial"):
        if sec not in raw:
            errs.add(ConfigurationError("MISSING_FIELD", sec, "required section is missing"))
    errs.raise_if_any()

    name = sc.get("name", "scenario")
    mode = _get(sc, "mode", "scenario", errs, "kinetic")
    if mode not in MODES:
        errs.add(ConfigurationError("UNKNOWN_VARIANT", "scenario.mode", f"mode must be one of {MODES}"))
    smode = _get(sc, "signal_mode", "scenario", errs, "elliptic")
    if smode not in SIGNAL_MODES:
        errs.add(ConfigurationError("UNKNOWN_VARIANT", "scenario.signal_mode", f"signal mode must be one of {SIGNAL_MODES}"))
    T = _get(sc, "T", "scenario", errs, kind=float)
    dt = _get(sc, "dt", "scenario", errs, kind=float)
    _positive(dt, "scenario.dt", errs)
    _positive(T, "scenario.T", errs, strict=False)
    out_every = _get(sc, "output_every", "scenario", errs, 1.0, float)
    snap_every = _get(sc, "snapshot_every", "scenario", errs, out_every, float)
    _positive(out_every, "scenario.output_every", errs)
    _positive(snap_every, "scenario.snapshot_every", errs)
    seed = _get(sc, "seed", "scenario", errs, 0, int)
    workers = _get(sc, "workers", "scenario", errs, workers_default or 1, int)
    if workers_default is not None and "workers" not in sc:
        workers = workers_default
    _positive(workers, "scenario.workers", errs)
    n_agents = _get(sc, "n_agents", "scenario", errs, 0, int)
    traj_cap = _get(sc, "trajectory_cap", "scenario", errs, 0, int)

    L = _get(dom, "L", "domain", errs, kind=float)
    _positive(L, "domain.L", errs)
    nx = _get(dom, "nx", "domain", errs, kind=int)
    _positive(nx, "domain.nx", errs)
    ny = tuple(_get(dom, "ny", "domain", errs, [33, 32]))
    y_box = dom.get("y_box")
    if y_box is not None:
        y_box = np.asarray(y_box, dtype=float)
        if y_box.shape != (2, 2) or np.any(y_box[:, 1] <= y_box[:, 0]):
            errs.add(ConfigurationError("SHAPE", "domain.y_box", "expected [[y1_lo, y1_hi], [y2_lo, y2_hi]]"))

    y_coords = dom.get("y_coords", "plain")
    if y_coords not in ("plain", "eigen"):
        errs.add(ConfigurationError("UNKNOWN_VARIANT", "domain.y_coords", "y_coords must be plain or eigen"))
    y_anchor = dom.get("y_anchor")
    if y_anchor is not None:
        y_anchor = tuple(float(v) for v in np.asarray(y_anchor, dtype=float).ravel())
        if len(y_anchor) != 2:
            errs.add(ConfigurationError("SHAPE", "domain.y_anchor", "expected [y1, y2]"))

    t_e = _get(mod, "t_e", "model", errs, kind=float)
    t_a = _get(mod, "t_a", "model", errs, kind=float)
    _positive(t_e, "model.t_e", errs)
    _positive(t_a, "model.t_a", errs)
    gtab = mod.get("g", {"kind": "linear", "a": [1.0]})
    gspec = GSpec(gtab.get("kind", "linear"), tuple(np.atleast_1d(gtab.get("a", [1.0])).tolist()),
                  tuple(np.atleast_1d(gtab.get("b", [0.0] * len(np.atleast_1d(gtab.get("a", [1.0]))))).tolist()))
    _positive(gspec.a, "model.g.a", errs, strict=False)
    _positive(gspec.b, "model.g.b", errs, strict=False)
    lt = dict(mod.get("turning_rate", {"kind": "constant", "base": 1.0}))
    lam_kind = lt.pop("kind", "constant")
    try:
        lam = LambdaSpec(lam_kind, **{k: float(v) for k, v in lt.items()})
        lam(np.zeros(1))
    except TypeError as exc:
        errs.add(ConfigurationError("UNKNOWN_FIELD", "model.turning_rate", str(exc)))
        lam = LambdaSpec()
    except ConfigurationError as exc:
        errs.add(exc)
        lam = LambdaSpec()
    if lam.kind == "saturating" and not 0.0 <= lam.amplitude <= 1.0:
        errs.add(ConfigurationError("RANGE", "model.turning_rate.amplitude", "amplitude must lie in [0, 1]"))
    kt = mod.get("kernel", {"variant": "uniform"})
    kernel = KernelSpec(kt.get("variant", "uniform"), float(kt.get("p_same", 0.5)),
                        None if "matrix" not in kt else np.asarray(kt["matrix"], dtype=float))
    vt = mod.get("velocities", {"speeds": [-1.0, 1.0]})
    speeds = np.asarray(vt.get("speeds", [-1.0, 1.0]), dtype=float)
    weights = np.asarray(vt.get("weights", np.ones(speeds.size)), dtype=float)
    velocities = None
    try:
        velocities = VelocitySet(speeds, weights)
    except ConfigurationError as exc:
        errs.add(exc)

    d = _get(sig, "d", "signal", errs, kind="floats")
    k = _get(sig, "k", "signal", errs, kind="floats")
    k0 = _get(sig, "k0", "signal", errs, kind="floats")
    _positive(d, "signal.d", errs)
    _positive(k, "signal.k", errs)
    _positive(k0, "signal.k0", errs)
    reaction = sig.get("reaction", "produce_degrade")
    decay = sig.get("decay_matrix")
    errs.raise_if_any()

    try:
        params = SignalParams(d, k, k0, reaction, None if decay is None else np.asarray(decay, dtype=float))
    except ConfigurationError as exc:
        errs.add(exc)
        errs.raise_if_any()
    if len(gspec.a) != params.M:
        errs.add(ConfigurationError("SHAPE", "model.g.a", f"need one coefficient per signal component ({params.M})"))
    if smode == "elliptic" and reaction != "produce_degrade":
        errs.add(ConfigurationError("UNSUPPORTED", "signal.reaction", "elliptic mode needs the produce_degrade reaction"))
    try:
        model = ModelConfig(t_e=t_e, t_a=t_a, g=gspec, turning_rate=lam, kernel=kernel, velocities=velocities,
                            signal=params, L=L, nx=nx, ny=ny, transduction=mod.get("transduction", "cartoon"))
    except ConfigurationError as exc:
        errs.add(exc)
        errs.raise_if_any()
    if y_coords == "eigen" and (t_e == t_a or model.transduction != "cartoon"):
        errs.add(ConfigurationError("UNSUPPORTED", "domain.y_coords",
                                    "eigen-coordinates need the cartoon model with t_e != t_a"))
    if dt is not None and dt > min(t_e, t_a) / 4.0 * (1 + 1e-12):
        errs.add(ConfigurationError("STEP_SIZE", "scenario.dt", f"dt must not exceed min(t_e, t_a)/4 = {min(t_e, t_a) / 4}"))

    # initial data
    xi = ini.get("x", {})
    if not xi:
        errs.add(ConfigurationError("MISSING_FIELD", "initial.x", "required field is missing"))
        errs.raise_if_any()
    x_kind = xi.get("kind", "gaussian")
    if x_kind not in ("gaussian", "box"):
        errs.add(ConfigurationError("UNKNOWN_VARIANT", "initial.x.kind", f"unknown profile {x_kind!r}"))
    width = float(xi.get("width", 1.0))
    _positive(width, "initial.x.width", errs)
    v_w = np.asarray(ini.get("v_weights", np.full(speeds.size, 1.0 / speeds.size)), dtype=float)
    if v_w.shape != speeds.shape:
        errs.add(ConfigurationError("SHAPE", "initial.v_weights", "need one weight per velocity"))
    _positive(v_w, "initial.v_weights", errs, strict=False)
    y0 = np.asarray(ini.get("y_box", [[0.0, 0.0], [0.0, 0.0]]), dtype=float)
    if y0.shape != (2, 2) or np.any(y0[:, 1] < y0[:, 0]):
        errs.add(ConfigurationError("SHAPE", "initial.y_box", "expected [[y1_lo, y1_hi], [y2_lo, y2_hi]]"))
    mass = float(ini.get("mass", 1.0))
    _positive(mass, "initial.mass", errs, strict=False)
    init = InitialData(x_kind, float(xi.get("center", 0.5 * L)), width, float(xi.get("cutoff", 4.0)), v_w, y0, mass)
    if 2.0 * init.x_support() >= 0.5 * L:
        errs.add(ConfigurationError("SUPPORT_WIDTH", "initial.x",
                                    f"x-support width {2 * init.x_support():g} must stay below L/2 = {0.5 * L:g}"))
    if y_box is not None and y0.shape == (2, 2) and (np.any(y0[:, 0] < y_box[:, 0]) or np.any(y0[:, 1] > y_box[:, 1])):
        errs.add(ConfigurationError("SUPPORT_WIDTH", "initial.y_box", "initial y-support must lie inside domain.y_box"))

    S0 = sig.get("initial")
    pres = None
    if smode == "prescribed":
        pt = sig.get("prescribed")
        if pt is None:
            errs.add(ConfigurationError("MISSING_FIELD", "signal.prescribed", "prescribed signal mode needs a profile"))
        else:
            pres = PrescribedSignal(pt.get("kind", "constant"),
                                    tuple(np.broadcast_to(np.atleast_1d(pt.get("baseline", 0.0)), (params.M,)).tolist()),
                                    tuple(np.broadcast_to(np.atleast_1d(pt.get("amplitude", 0.0)), (params.M,)).tolist()),
                                    float(pt.get("center", 0.5 * L)), float(pt.get("width", 1.0)))
            if pres.kind not in ("constant", "bump"):
                errs.add(ConfigurationError("UNKNOWN_VARIANT", "signal.prescribed.kind", "kind must be constant or bump"))
            _positive(pres.baseline, "signal.prescribed.baseline", errs, strict=False)
            _positive(pres.amplitude, "signal.prescribed.amplitude", errs, strict=False)

    # growth hypotheses
    C = {kk: float(vv) for kk, vv in gro.get("C", {}).items()}
    growth = GrowthSpec(
        Phi=_growth_fn(gro.get("Phi"), "growth.Phi", errs),
        Psi=_growth_fn(gro.get("Psi"), "growth.Psi", errs),
        Lambda_fn=_growth_fn(gro.get("Lambda"), "growth.Lambda", errs) or GrowthFunction(),
        Pi=_growth_fn(gro.get("Pi"), "growth.Pi", errs) or GrowthFunction(),
        omega=float(gro.get("omega", 1.0)), sigma=float(gro.get("sigma", 1.0)), gamma=float(gro.get("gamma", 1.0)),
        C=C,
    )
    cmp = raw.get("compare", {})
    lad = raw.get("ladder", {})
    mon = raw.get("monitor", {})
    errs.raise_if_any()

    cfg = ScenarioConfig(
        name=name, model=model, growth=growth, mode=mode, signal_mode=smode, initial=init, T=T, dt=dt,
        output_every=out_every, snapshot_every=snap_every, seed=seed, workers=workers, n_agents=n_agents,
        trajectory_cap=traj_cap, y_box=y_box, y_coords=y_coords, y_anchor=y_anchor, S0=S0, prescribed=pres, sample=dict(gro.get("sample", {})),
        compare_times=tuple(float(t) for t in cmp.get("times", ())),
        ladder=tuple(float(f) for f in lad.get("factors", ())),
        negative_control=float(mon.get("negative_control", 0.5)), series_path=mon.get("series"),
        config_hash=config_hash(raw), raw=raw,
    )
    for name_, val in (("scenario.output_every", out_every), ("scenario.snapshot_every", snap_every)):
        if T > 0 and abs(val / dt - round(val / dt)) > 1e-9:
            errs.add(ConfigurationError("CADENCE", name_, "must be a multiple of dt"))
    if abs(T / dt - round(T / dt)) > 1e-9:
        errs.add(ConfigurationError("CADENCE", "scenario.T", "horizon must be a multiple of dt"))
    for t in cfg.compare_times:
        if abs(t / dt - round(t / dt)) > 1e-9 or t > T:
            errs.add(ConfigurationError("CADENCE", "compare.times", f"time {t} must be a multiple of dt within [0, T]"))
    if mode in ("agent", "compare") and n_agents <= 0:
        errs.add(ConfigurationError("POSITIVITY", "scenario.n_agents", "agent modes need a positive agent count"))
    errs.raise_if_any()
    cfg.validation = validate_growth_conditions(model, growth, sample_box_for(cfg))
    return cfg


def sample_box_for(cfg):
    """Sampling box for the growth validators, from the a priori signal and state bounds."""
    from .scenario import signal_sup_bound, state_box
    s_max = cfg.sample.get("S_max")
    if s_max is None:
        s_max = float(np.max(signal_sup_bound(cfg)))
    box = state_box(cfg)
    dcdt = cfg.sample.get("dCdt_max", 10.0)
    return SampleBox(float(s_max), float(dcdt), box, int(cfg.sample.get("n", 41)))
