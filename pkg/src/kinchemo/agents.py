"""Monte Carlo velocity-jump (run and tumble) simulation.

Agents move in straight runs and reorient at the event times of an
inhomogeneous Poisson process with intensity ``lambda(y1)``.  Events are
sampled exactly by thinning: candidates arrive at a dominating constant rate
``lam_max`` and are kept with probability ``lambda(y1)/lam_max``.  Between
candidates the internal state follows the same exact affine cartoon flow
used by the characteristic tracer.

Every agent draws from its own counter-based stream, so trajectories do not
depend on how agents are split over workers.
"""

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .characteristics import GL_NODES, GL_WEIGHTS, cartoon_propagator
from .errors import ModelEvaluationError, ThinningBoundError
from .model import signal_derivative_along_trajectory

RATIO_TOL = 1e-12


@dataclass
class AgentEnsemble:
    """Agent states plus per-agent random-stream counters.

    ``y`` has shape ``(2, N)``; ``counter`` is the next unused draw index of
    each agent's stream ``(seed, ids[i])``.
    """

    x: np.ndarray
    v_idx: np.ndarray
    y: np.ndarray
    ids: np.ndarray
    counter: np.ndarray
    seed: int
    t: float = 0.0
    mass: float = 1.0
    turned: np.ndarray = None
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.turned is None:
            self.turned = np.zeros(self.x.size, dtype=bool)

    @property
    def size(self):
        return self.x.size

    def copy(self):
        return AgentEnsemble(self.x.copy(), self.v_idx.copy(), self.y.copy(), self.ids.copy(),
                             self.counter.copy(), self.seed, self.t, self.mass, self.turned.copy(),
                             dict(self.stats))

    def subset(self, sl):
        return AgentEnsemble(self.x[sl], self.v_idx[sl], self.y[:, sl], self.ids[sl], self.counter[sl],
                             self.seed, self.t, self.mass, self.turned[sl])


def ensemble_from_field(f, n_agents, seed, t=None):
    """Sample agents from the discrete phase-space density ``f``.

    A cell is chosen with probability proportional to its mass and the agent
    is placed uniformly inside it, which reproduces the piecewise-constant
    density exactly in distribution.
    """
    vals = f.values
    cell_mass = vals * f.cell_measure[None, :, None, None]
    cdf = np.cumsum(cell_mass.ravel())
    total = cdf[-1]
    if total <= 0:
        raise ValueError("cannot sample agents from a field with zero mass")
    ids = np.arange(n_agents, dtype=np.uint64)
    u = rng.uniform(seed, ids, 0)
    flat = np.minimum(np.searchsorted(cdf, u * total, side="right"), cdf.size - 1)
    ix, iv, i1, i2 = np.unravel_index(flat, vals.shape)
    ox = rng.uniform(seed, ids, 1)
    o1 = rng.uniform(seed, ids, 2)
    o2 = rng.uniform(seed, ids, 3)
    yg = f.ygrid
    x = (ix + ox) * f.xgrid.h
    y = yg.to_state(yg.lo[0] + (i1 + o1) * yg.h[0], yg.lo[1] + (i2 + o2) * yg.h[1])
    counter = np.full(n_agents, 4, dtype=np.uint64)
    return AgentEnsemble(np.mod(x, f.xgrid.L), iv.astype(np.int64), y, ids, counter, int(seed),
                         f.t if t is None else t, float(total))


def ensemble_at(x, v_idx, y, seed, mass=1.0, t=0.0):
    """Ensemble with prescribed states."""
    x = np.asarray(x, dtype=float)
    n = x.size
    y = np.asarray(y, dtype=float)
    y = np.broadcast_to(y.reshape(2, -1), (2, n)).copy()
    return AgentEnsemble(x.copy(), np.broadcast_to(np.asarray(v_idx, dtype=np.int64), (n,)).copy(), y,
                         np.arange(n, dtype=np.uint64), np.zeros(n, dtype=np.uint64), int(seed), t, mass)


def _advance_state(x, v, y, t0, h, signal, cfg, L):
    """Move agents along straight runs for individual durations ``h``."""
    if cfg.transduction == "frozen":
        return np.mod(x + v * h, L), y
    P, _ = cartoon_propagator(cfg, h)  # P shape (2, 2, n)
    y_new = np.einsum("abn,bn->an", P, y)
    if cfg.transduction == "cartoon":
        c = np.array([1.0 / cfg.t_e, 1.0 / cfg.t_a])
        for node, wt in zip(GL_NODES, GL_WEIGHTS):
            r = 0.5 * h * (node + 1.0)
            gval = cfg.g(np.asarray(signal(x + v * r, t0 + r)).reshape(cfg.M, -1))
            if not np.all(np.isfinite(gval)):
                raise ModelEvaluationError("non-finite forcing along agent path")
            Pr, _ = cartoon_propagator(cfg, h - r)
            y_new += 0.5 * h * wt * np.einsum("abn,b->an", Pr, c) * gval
    else:
        raise ValueError("agents support the cartoon and frozen transduction models only")
    return np.mod(x + v * h, L), y_new


def _step_block(ens, signal, dt, cfg, lam_max, L, record):
    speeds = cfg.velocities.speeds
    cols = np.cumsum(cfg.kernel_matrix * cfg.velocities.weights[:, None], axis=0)  # cdf over new v per old v
    n = ens.size
    x = ens.x.copy()
    y = ens.y.copy()
    vi = ens.v_idx.copy()
    ctr = ens.counter.copy()
    tau = np.zeros(n)
    turned = np.zeros(n, dtype=bool)
    max_ratio = 0.0
    events = []
    active = np.ones(n, dtype=bool) if lam_max > 0 else np.zeros(n, dtype=bool)
    if lam_max <= 0:
        x, y = _advance_state(x, speeds[vi], y, ens.t, np.full(n, dt), signal, cfg, L)
    while np.any(active):
        a = np.flatnonzero(active)
        E = rng.exponential(ens.seed, ens.ids[a], ctr[a], lam_max)
        ctr[a] += np.uint64(1)
        seg = np.minimum(E, dt - tau[a])
        x[a], y[:, a] = _advance_state(x[a], speeds[vi[a]], y[:, a], ens.t + tau[a], seg, signal, cfg, L)
        tau[a] += seg
        cand = E < dt - (tau[a] - seg)
        done = a[~cand]
        tau[done] = dt
        active[done] = False
        c = a[cand]
        if c.size == 0:
            continue
        lam = cfg.turning_rate(y[0, c])
        ratio = lam / lam_max
        max_ratio = max(max_ratio, float(ratio.max()))
        if ratio.max() > 1.0 + RATIO_TOL:
            k = int(np.argmax(ratio))
            raise ThinningBoundError(
                f"turning rate {lam[k]:.6g} exceeds dominating rate {lam_max:.6g} "
                f"(agent {int(ens.ids[c][k])}, y1={y[0, c][k]:.6g})")
        U = rng.uniform(ens.seed, ens.ids[c], ctr[c])
        ctr[c] += np.uint64(1)
        acc = c[U < ratio]
        if acc.size:
            U2 = rng.uniform(ens.seed, ens.ids[acc], ctr[acc])
            ctr[acc] += np.uint64(1)
            cdf = cols[:, vi[acc]]  # (nv, n_acc)
            new = np.minimum((U2[None, :] > cdf).sum(axis=0), speeds.size - 1)
            vi[acc] = new
            turned[acc] = True
            if record:
                events.append(np.stack([ens.ids[acc].astype(float), ens.t + tau[acc]]))
    if lam_max <= 0:
        lam = cfg.turning_rate(y[0])
        if np.any(lam > 0):
            raise ThinningBoundError("dominating rate is zero but a positive turning rate was encountered")
    return x, vi, y, ctr, turned, max_ratio, events


def step_agents(ens, signal, dt, cfg, lam_max, L=None, workers=1, record_events=False):
    """Advance every agent by ``dt`` with exact thinning of the turning events.

    Parameters
    ----------
    ens : AgentEnsemble
    signal : signal object
        Signal seen along the paths; must accept per-point times.
    dt : float
    cfg : ModelConfig
    lam_max : float
        Dominating turning rate; exceeded rates raise ``ThinningBoundError``.
    L : float, optional
        Domain length (defaults to ``cfg.L``).
    workers : int
        Threads over agent blocks; does not change results.
    record_events : bool
        Append accepted event times to ``ens.stats["events"]``.

    Returns
    -------
    AgentEnsemble
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    L = cfg.L if L is None else L
    n = ens.size
    workers = max(1, min(int(workers), max(n, 1)))
    bounds = np.linspace(0, n, workers + 1).round().astype(int)
    blocks = [slice(bounds[i], bounds[i + 1]) for i in range(workers)]

    def work(sl):
        return _step_block(ens.subset(sl), signal, dt, cfg, lam_max, L, record_events)

    if workers == 1:
        results = [work(blocks[0])]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(work, blocks))
    x = np.concatenate([r[0] for r in results])
    vi = np.concatenate([r[1] for r in results])
    y = np.concatenate([r[2] for r in results], axis=1)
    ctr = np.concatenate([r[3] for r in results])
    turned = np.concatenate([r[4] for r in results])
    stats = dict(ens.stats)
    stats["max_ratio"] = max([stats.get("max_ratio", 0.0)] + [r[5] for r in results])
    if record_events:
        ev = [e for r in results for e in r[6]]
        stats.setdefault("events", []).extend(ev)
    out = AgentEnsemble(x, vi, y, ens.ids, ctr, ens.seed, ens.t + dt, ens.mass, turned, stats)
    # signal change seen by the agents at the end of the step, for the growth check
    if hasattr(signal, "gradient") and n:
        try:
            grad = np.asarray(signal.gradient(x, out.t)).reshape(cfg.M, -1)
            dts = np.asarray(signal.time_derivative(x, out.t)).reshape(cfg.M, -1)
            seen = signal_derivative_along_trajectory(cfg.velocities.speeds[vi], grad, dts)
            out.stats["max_dCdt"] = max(stats.get("max_dCdt", 0.0), float(np.abs(seen).max()))
        except Exception:  # derivative data unavailable beyond the history
            pass
    return out


def thinning_event_times(rate, rate_max, t_end, seed, stream=0):
    """Event times of an inhomogeneous Poisson process on ``[0, t_end]`` by thinning.

    Parameters
    ----------
    rate : callable
        Intensity ``rate(t)``, must satisfy ``0 <= rate(t) <= rate_max``.
    """
    times = []
    t = 0.0
    k = 0
    while True:
        t += float(rng.exponential(seed, stream, k, rate_max))
        k += 1
        if t > t_end:
            break
        r = float(rate(t)) / rate_max
        if r > 1.0 + RATIO_TOL:
            raise ThinningBoundError(f"rate {rate(t)} exceeds bound {rate_max}")
        if float(rng.uniform(seed, stream, k)) < r:
            times.append(t)
        k += 1
    return np.array(times)


def empirical_density(ens, grid):
    """Histogram estimate of the cell density; ``sum(n) h`` equals the agent mass."""
    if ens.size == 0:
        return np.zeros(grid.nx)
    idx = np.minimum((np.mod(ens.x, grid.L) / grid.h).astype(np.int64), grid.nx - 1)
    counts = np.bincount(idx, minlength=grid.nx).astype(float)
    return counts * (ens.mass / ens.size) / grid.h


def write_trajectories(path, rows, header=()):
    """Trajectory CSV with columns agent_id, t, x, v, y1, y2, event."""
    with open(path, "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["agent_id", "t", "x", "v", "y1", "y2", "event"])
        for r in rows:
            w.writerow([int(r[0])] + [f"{v:.17g}" for v in r[1:6]] + [int(r[6])])


def trajectory_rows(ens, cfg, cap):
    """Rows for the first ``cap`` agents at the ensemble's current time."""
    k = min(cap, ens.size)
    sp = cfg.velocities.speeds[ens.v_idx[:k]]
    return [(int(ens.ids[i]), ens.t, ens.x[i], sp[i], ens.y[0, i], ens.y[1, i], bool(ens.turned[i]))
            for i in range(k)]
