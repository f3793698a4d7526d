"""Model ingredients: velocities, turning kernels and rates, transduction, growth checks.

The cell population is described by its phase-space density over position,
velocity and a two-component internal state ``y = (y1, y2)``: ``y1`` is the
response variable that sets the turning rate, ``y2`` is the adaptation
variable.  The default internal dynamics is the excitation/adaptation
"cartoon" model

    dy1/dt = (g(S) - (y1 + y2)) / t_e
    dy2/dt = (g(S) - y2) / t_a

whose divergence in ``y`` is the constant ``-(1/t_e + 1/t_a)``.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, ModelEvaluationError

KERNEL_TOL = 1e-12


@dataclass(frozen=True)
class VelocitySet:
    """Finite symmetric velocity set with quadrature weights.

    The weights define the measure on V; with unit weights the measure is the
    counting measure and ``|V|`` equals the number of velocities.
    """

    speeds: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        speeds = np.asarray(self.speeds, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "speeds", speeds)
        object.__setattr__(self, "weights", weights)
        if speeds.ndim != 1 or speeds.shape != weights.shape or speeds.size == 0:
            raise ConfigurationError("SHAPE", "velocities", "speeds and weights must be equal-length 1D arrays")
        if not np.all(np.isfinite(speeds)):
            raise ConfigurationError("FINITE", "velocities.speeds", "speeds must be finite")
        if np.any(weights <= 0):
            raise ConfigurationError("POSITIVITY", "velocities.weights", "weights must be positive")
        idx = self.opposite_index
        if np.any(idx < 0) or not np.allclose(weights[idx], weights, rtol=1e-12, atol=0):
            raise ConfigurationError("SYMMETRY", "velocities", "velocity set must be symmetric with matching weights")

    @classmethod
    def two_speed(cls, s=1.0):
        return cls(np.array([-s, s]), np.ones(2))

    @property
    def size(self):
        return self.speeds.size

    @property
    def measure(self):
        """Total measure ``|V|``."""
        return float(self.weights.sum())

    @property
    def vmax(self):
        return float(np.abs(self.speeds).max())

    @property
    def opposite_index(self):
        """Index of ``-v`` for every ``v`` (``-1`` where absent)."""
        out = np.full(self.speeds.size, -1)
        for i, s in enumerate(self.speeds):
            hit = np.flatnonzero(np.isclose(self.speeds, -s, rtol=1e-12, atol=1e-14))
            if hit.size:
                out[i] = hit[0]
        return out


@dataclass(frozen=True)
class KernelSpec:
    """Turning kernel ``K(v_new, v_old)``.

    ``variant`` is one of ``"uniform"``, ``"persistence"`` or ``"tabulated"``.
    The persistence kernel is the 1D form of an angle kernel: in one space
    dimension the angle between old and new velocity is 0 or pi, so the
    kernel takes one value for same-sign and another for opposite-sign pairs.
    ``p_same`` is the probability of keeping the direction of motion.
    ``matrix`` (tabulated only) is indexed ``[new, old]``.
    """

    variant: str = "uniform"
    p_same: float = 0.5
    matrix: Optional[np.ndarray] = None

    def matrix_for(self, velocities):
        """Kernel matrix on ``velocities``, validated to be doubly stochastic."""
        n = velocities.size
        meas = velocities.measure
        if self.variant == "uniform":
            K = np.full((n, n), 1.0 / meas)
        elif self.variant == "persistence":
            if not 0.0 <= self.p_same <= 1.0:
                raise ConfigurationError("KERNEL_RANGE", "kernel.p_same", "p_same must lie in [0, 1]")
            sgn = np.sign(velocities.speeds)
            same = np.equal.outer(sgn, sgn)
            # same-sign and opposite-sign halves of a symmetric set each carry |V|/2
            K = np.where(same, 2.0 * self.p_same / meas, 2.0 * (1.0 - self.p_same) / meas)
        elif self.variant == "tabulated":
            if self.matrix is None:
                raise ConfigurationError("MISSING_FIELD", "kernel.matrix", "tabulated kernel needs a matrix")
            K = np.asarray(self.matrix, dtype=float)
            if K.shape != (n, n):
                raise ConfigurationError("SHAPE", "kernel.matrix", f"expected {n}x{n} matrix, got {K.shape}")
        else:
            raise ConfigurationError("UNKNOWN_VARIANT", "kernel.variant", f"unknown kernel variant {self.variant!r}")
        check_kernel(K, velocities)
        return K


def check_kernel(K, velocities, tol=KERNEL_TOL):
    """Raise unless ``K`` is nonnegative and doubly stochastic w.r.t. the weights."""
    w = velocities.weights
    if not np.all(np.isfinite(K)) or np.any(K < 0):
        raise ConfigurationError("KERNEL_SIGN", "kernel.matrix", "kernel entries must be finite and nonnegative")
    col = w @ K  # sum over new velocities, one value per old velocity
    if np.max(np.abs(col - 1.0)) > tol:
        raise ConfigurationError(
            "KERNEL_NORMALIZATION", "kernel.matrix",
            f"weighted column sums {np.round(col, 14).tolist()} differ from 1",
        )
    row = K @ w
    if np.max(np.abs(row - 1.0)) > tol:
        raise ConfigurationError(
            "KERNEL_NORMALIZATION", "kernel.matrix",
            f"weighted row sums {np.round(row, 14).tolist()} differ from 1 (kernel must be doubly stochastic)",
        )


@dataclass(frozen=True)
class LambdaSpec:
    """Turning rate as a function of the response variable ``y1``.

    Kinds
    -----
    ``constant``        ``base``
    ``clipped_linear``  ``max(0, base + slope * y1)``
    ``saturating``      ``base * (1 - amplitude * H(y1 / half_sat))`` with the
                        odd Hill function ``H(u) = sign(u)|u|^h / (1 + |u|^h)``;
                        stays in ``[base(1-amplitude), base(1+amplitude)]``
    ``power``           ``coef * |y1|**exponent``
    ``one_sided``       ``base + slope * max(0, -y1)``: extra turning only while
                        the sensed signal falls
    """

    kind: str = "constant"
    base: float = 1.0
    slope: float = 0.0
    amplitude: float = 0.0
    half_sat: float = 1.0
    hill: float = 1.0
    coef: float = 1.0
    exponent: float = 1.0

    def __call__(self, y1):
        y1 = np.asarray(y1, dtype=float)
        if self.kind == "constant":
            lam = np.full_like(y1, self.base)
        elif self.kind == "clipped_linear":
            lam = self.base + self.slope * y1
        elif self.kind == "saturating":
            u = np.abs(y1 / self.half_sat) ** self.hill
            lam = self.base * (1.0 - self.amplitude * np.sign(y1) * u / (1.0 + u))
        elif self.kind == "power":
            lam = self.coef * np.abs(y1) ** self.exponent
        elif self.kind == "one_sided":
            lam = self.base + self.slope * np.maximum(-y1, 0.0)
        else:
            raise ConfigurationError("UNKNOWN_VARIANT", "turning_rate.kind", f"unknown turning-rate kind {self.kind!r}")
        return np.maximum(lam, 0.0)

    def upper_bound(self, lo, hi):
        """Maximum of the rate over ``y1`` in ``[lo, hi]``.

        Every shipped kind is monotone in ``y1`` or in ``|y1|``, so the maximum
        is attained at an endpoint or at zero.
        """
        pts = np.array([lo, hi, min(max(0.0, lo), hi)])
        return float(np.max(self(pts)))

    def scaled(self, factor):
        """Copy whose sensitivity to ``y1`` is multiplied by ``factor``."""
        from dataclasses import replace
        if self.kind in ("clipped_linear", "one_sided"):
            return replace(self, slope=self.slope * factor)
        if self.kind == "saturating":
            return replace(self, half_sat=self.half_sat / factor)
        if self.kind == "power":
            return replace(self, coef=self.coef * factor**self.exponent)
        return self


@dataclass(frozen=True)
class GSpec:
    """Signal-to-stimulus map ``g: R^M -> [0, inf)``.

    ``linear``:     ``g(S) = sum_i a_i S_i``
    ``saturating``: ``g(S) = sum_i a_i S_i / (1 + b_i S_i)``
    The result is clipped at zero.
    """

    kind: str = "linear"
    a: tuple = (1.0,)
    b: tuple = (0.0,)

    def __call__(self, S):
        """Evaluate on ``S`` with shape ``(M, ...)``."""
        S = np.asarray(S, dtype=float)
        a = np.asarray(self.a, dtype=float).reshape((-1,) + (1,) * (S.ndim - 1))
        if self.kind == "linear":
            val = np.sum(a * S, axis=0)
        elif self.kind == "saturating":
            b = np.asarray(self.b, dtype=float).reshape(a.shape)
            val = np.sum(a * S / (1.0 + b * S), axis=0)
        else:
            raise ConfigurationError("UNKNOWN_VARIANT", "g.kind", f"unknown g kind {self.kind!r}")
        val = np.maximum(val, 0.0)
        if not np.all(np.isfinite(val)):
            raise ModelEvaluationError("g(S) produced a non-finite value")
        return val

    def gradient(self, S):
        """Gradient w.r.t. ``S``, shape ``(M, ...)`` (ignores the clip at zero)."""
        S = np.asarray(S, dtype=float)
        a = np.asarray(self.a, dtype=float).reshape((-1,) + (1,) * (S.ndim - 1))
        if self.kind == "linear":
            return np.broadcast_to(a, S.shape).copy()
        b = np.asarray(self.b, dtype=float).reshape(a.shape)
        return a / (1.0 + b * S) ** 2


@dataclass(frozen=True)
class SignalParams:
    """Constants of the extracellular signal equations, one entry per component.

    ``reaction`` selects ``"produce_degrade"`` (``R = k n - k0 S``) or
    ``"consume"`` (``R = -k S n``).  ``decay_matrix`` optionally replaces the
    diagonal degradation ``diag(k0)`` by a full coupling matrix.
    """

    d: np.ndarray
    k: np.ndarray
    k0: np.ndarray
    reaction: str = "produce_degrade"
    decay_matrix: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("d", "k", "k0"):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            object.__setattr__(self, name, arr)
            if np.any(~np.isfinite(arr)) or np.any(arr <= 0):
                raise ConfigurationError("POSITIVITY", f"signal.{name}", f"all {name} must be positive")
        if not (self.d.shape == self.k.shape == self.k0.shape):
            raise ConfigurationError("SHAPE", "signal", "d, k and k0 must have one entry per component")
        if self.reaction not in ("produce_degrade", "consume"):
            raise ConfigurationError("UNKNOWN_VARIANT", "signal.reaction", f"unknown reaction {self.reaction!r}")
        if self.decay_matrix is not None:
            Km = np.asarray(self.decay_matrix, dtype=float)
            if Km.shape != (self.M, self.M) or np.any(Km < 0):
                raise ConfigurationError("SHAPE", "signal.decay_matrix", "decay matrix must be a nonnegative MxM matrix")
            object.__setattr__(self, "decay_matrix", Km)

    @property
    def M(self):
        return self.d.size


@dataclass(frozen=True)
class ModelConfig:
    """All model parameters of the kinetic chemotaxis system.

    ``transduction`` is ``"cartoon"`` (excitation/adaptation model),
    ``"frozen"`` (``F = 0``, internal state never changes) or ``"custom"``,
    in which case ``custom_rhs(S, y)`` and ``custom_div(S, y)`` give ``F`` and
    its divergence in ``y``.  Only the characteristic tracer supports custom
    dynamics.
    """

    t_e: float
    t_a: float
    g: GSpec
    turning_rate: LambdaSpec
    kernel: KernelSpec
    velocities: VelocitySet
    signal: SignalParams
    L: float = 40.0
    nx: int = 256
    ny: tuple = (33, 32)
    transduction: str = "cartoon"
    custom_rhs: Optional[Callable] = None
    custom_div: Optional[Callable] = None
    m: int = 2
    kernel_matrix: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not (self.t_e > 0 and self.t_a > 0):
            raise ConfigurationError("POSITIVITY", "model.t_e/t_a", "time constants must be positive")
        if self.transduction not in ("cartoon", "frozen", "custom"):
            raise ConfigurationError("UNKNOWN_VARIANT", "model.transduction", f"unknown transduction {self.transduction!r}")
        if self.transduction == "custom" and (self.custom_rhs is None or self.custom_div is None):
            raise ConfigurationError("MISSING_FIELD", "model.custom_rhs", "custom transduction needs rhs and div callables")
        if self.L <= 0 or self.nx <= 0:
            raise ConfigurationError("POSITIVITY", "grid", "domain length and grid size must be positive")
        object.__setattr__(self, "kernel_matrix", self.kernel.matrix_for(self.velocities))

    @property
    def M(self):
        return self.signal.M

    @property
    def kernel_max(self):
        """Bounded-kernel constant ``C_K``: the largest kernel entry."""
        return float(self.kernel_matrix.max())

    @property
    def divergence_rate(self):
        """``1/t_e + 1/t_a``; minus the y-divergence of the cartoon model."""
        return 1.0 / self.t_e + 1.0 / self.t_a


# -- model functions ---------------------------------------------------------

def cartoon_rhs(S_value, y, cfg):
    """Right-hand side of the cartoon excitation/adaptation model.

    Parameters
    ----------
    S_value : array_like, shape (M, ...)
    y : array_like, shape (2, ...)
    cfg : ModelConfig
    """
    if cfg.m != 2:
        raise ValueError("cartoon model needs a two-component internal state")
    y = np.asarray(y, dtype=float)
    g = cfg.g(S_value)
    if not np.all(np.isfinite(g)):
        raise ModelEvaluationError("g(S) produced a non-finite value")
    return np.stack([(g - (y[0] + y[1])) / cfg.t_e, (g - y[1]) / cfg.t_a])


def cartoon_jacobian(cfg):
    """Constant matrix dF/dy of the cartoon model."""
    return np.array([[-1.0 / cfg.t_e, -1.0 / cfg.t_e], [0.0, -1.0 / cfg.t_a]])


def transduction_rhs(S_value, y, cfg):
    """``F(S, y)`` for whichever transduction model ``cfg`` selects."""
    if cfg.transduction == "cartoon":
        return cartoon_rhs(S_value, y, cfg)
    if cfg.transduction == "frozen":
        return np.zeros_like(np.asarray(y, dtype=float))
    return np.asarray(cfg.custom_rhs(S_value, y), dtype=float)


def divergence_y(S_value, y, cfg):
    """Divergence of ``F`` with respect to ``y``."""
    y = np.asarray(y, dtype=float)
    if cfg.transduction == "cartoon":
        return np.full(y.shape[1:], -cfg.divergence_rate)
    if cfg.transduction == "frozen":
        return np.zeros(y.shape[1:])
    return np.asarray(cfg.custom_div(S_value, y), dtype=float)


def turning_rate(y1, cfg):
    """Turning rate ``lambda(y1) >= 0``."""
    lam = cfg.turning_rate(y1)
    if not np.all(np.isfinite(lam)):
        raise ModelEvaluationError("turning rate produced a non-finite value")
    return lam


def turning_kernel(v_new, v_old, kernel, velocities):
    """Kernel value ``K(v_new, v_old)`` for velocity indices."""
    return kernel.matrix_for(velocities)[v_new, v_old]


def combined_kernel(v_new, v_old, y, cfg):
    """``T(v_new, v_old, y) = lambda(y1) K(v_new, v_old)``."""
    y = np.asarray(y, dtype=float)
    return turning_rate(y[0], cfg) * cfg.kernel_matrix[v_new, v_old]


def signal_derivative_along_trajectory(v, grad_S, dt_S):
    """Rate of change of the signal seen by a cell moving with velocity ``v``."""
    return v * np.asarray(grad_S, dtype=float) + np.asarray(dt_S, dtype=float)


# -- growth hypotheses ---------------------------------------------------------

@dataclass(frozen=True)
class GrowthFunction:
    """Nondecreasing comparison function on ``[0, inf)``.

    ``poly``: ``c0 + c1 * r**power``; ``table``: piecewise-linear through
    ``(xs, ys)`` with the last slope continued beyond the table.
    """

    kind: str = "poly"
    c0: float = 0.0
    c1: float = 0.0
    power: float = 1.0
    xs: tuple = ()
    ys: tuple = ()

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "poly":
            return self.c0 + self.c1 * np.abs(r) ** self.power
        xs = np.asarray(self.xs, dtype=float)
        ys = np.asarray(self.ys, dtype=float)
        out = np.interp(r, xs, ys)
        if xs.size > 1:
            slope = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
            out = np.where(r > xs[-1], ys[-1] + slope * (r - xs[-1]), out)
        return out

    def check(self, r_max, n=257):
        """True if nonnegative and nondecreasing on ``[0, r_max]``."""
        vals = self(np.linspace(0.0, r_max, n))
        return bool(np.all(vals >= 0) and np.all(np.diff(vals) >= -1e-14 * max(1.0, np.abs(vals).max())))


ZERO = GrowthFunction("poly", 0.0, 0.0)


@dataclass(frozen=True)
class GrowthSpec:
    """Comparison functions, exponents and constants of the growth hypotheses.

    Constants left as ``None`` in ``C`` are fitted: the validator computes
    the smallest constant that makes the sampled inequality hold and records
    it in its report.
    """

    Phi: Optional[GrowthFunction] = None
    Psi: Optional[GrowthFunction] = None
    Lambda_fn: GrowthFunction = ZERO
    Pi: GrowthFunction = ZERO
    omega: float = 1.0
    sigma: float = 1.0
    gamma: float = 1.0
    C: dict = field(default_factory=dict)

    @property
    def exponent_products(self):
        return {"omega*sigma": self.omega * self.sigma, "omega*gamma": self.omega * self.gamma}

    def constant(self, name):
        return self.C.get(name)

    def scaled(self, factor):
        """Copy with every given constant multiplied by ``factor``."""
        from dataclasses import replace
        return replace(self, C={k: (None if v is None else v * factor) for k, v in self.C.items()})


@dataclass(frozen=True)
class SampleBox:
    """Deterministic sampling ranges for the growth validators."""

    S_max: float
    dCdt_max: float
    y_box: np.ndarray  # [[y1_lo, y1_hi], [y2_lo, y2_hi]]
    n: int = 41

    def __post_init__(self):
        y_box = np.asarray(self.y_box, dtype=float)
        object.__setattr__(self, "y_box", y_box)
        if (self.n < 1 or y_box.shape != (2, 2) or np.any(y_box[:, 1] < y_box[:, 0])
                or self.S_max < 0 or self.dCdt_max < 0
                or not np.all(np.isfinite(y_box)) or not np.isfinite(self.S_max)):
            raise ValueError("empty or malformed sample box")


@dataclass
class CheckResult:
    passed: bool
    constant: Optional[float] = None
    witness: Optional[dict] = None
    detail: str = ""


@dataclass
class ValidationReport:
    """Per-hypothesis results plus the theorem regimes they imply."""

    checks: dict
    regimes: dict

    @property
    def satisfied_regimes(self):
        return [name for name, ok in self.regimes.items() if ok]

    def summary(self):
        lines = []
        for name, res in self.checks.items():
            status = "pass" if res.passed else "FAIL"
            extra = f" C={res.constant:.6g}" if res.constant is not None else ""
            wit = f" witness={res.witness}" if (res.witness and not res.passed) else ""
            lines.append(f"{name:>18s}: {status}{extra}{wit} {res.detail}".rstrip())
        lines.append("regimes: " + (", ".join(self.satisfied_regimes) or "none"))
        return "\n".join(lines)


def _check_le(lhs, rhs, given, points, label):
    """Inequality ``lhs <= C * rhs`` on samples; fits ``C`` when not given."""
    lhs = np.asarray(lhs, dtype=float).ravel()
    rhs = np.asarray(rhs, dtype=float).ravel()
    if given is None:
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(rhs > 0, lhs / rhs, np.where(lhs > 0, np.inf, 0.0))
        C = float(np.max(ratio)) if ratio.size else 0.0
        ok = np.isfinite(C)
        i = int(np.argmax(ratio))
        wit = None if ok else {k: float(np.ravel(v)[i]) for k, v in points.items()}
        return CheckResult(bool(ok), C if ok else None, wit, f"fitted ({label})")
    slack = lhs - given * rhs
    tol = 1e-12 * np.maximum(1.0, np.abs(lhs))
    bad = slack > tol
    if np.any(bad):
        i = int(np.argmax(slack))
        return CheckResult(False, given, {k: float(np.ravel(v)[i]) for k, v in points.items()}, label)
    return CheckResult(True, given, None, label)


def validate_growth_conditions(cfg, gs, sample_box):
    """Check the growth hypotheses of the existence theorems on a sample grid.

    Parameters
    ----------
    cfg : ModelConfig
    gs : GrowthSpec
    sample_box : SampleBox
        Ranges for ``|S|`` (signals are taken nonnegative), ``|dC/dt|`` and ``y``.

    Returns
    -------
    ValidationReport
        ``checks`` maps hypothesis names to :class:`CheckResult`;
        ``regimes`` maps ``theorem1``, ``theorem2``, ``corollary1`` and
        ``corollary2`` to whether their hypotheses all hold.
    """
    box = sample_box
    n = box.n
    M = cfg.M
    y1 = np.linspace(box.y_box[0, 0], box.y_box[0, 1], n)
    y2 = np.linspace(box.y_box[1, 0], box.y_box[1, 1], n)
    Y1, Y2 = np.meshgrid(y1, y2, indexing="ij")
    ynorm = np.hypot(Y1, Y2)
    svals = np.linspace(0.0, box.S_max, n)
    # signals: every component on the same axis, plus each component alone
    S_samples = [np.tile(svals, (M, 1))]
    for i in range(M):
        Si = np.zeros((M, n))
        Si[i] = svals
        S_samples.append(Si)
    S_all = np.concatenate(S_samples, axis=1)
    Snorm = np.linalg.norm(S_all, axis=0)
    lam = turning_rate(y1, cfg)
    lam_grid = turning_rate(Y1, cfg)
    Kmat = cfg.kernel_matrix
    C_K = cfg.kernel_max
    checks = {}

    checks["lambda_nonneg"] = CheckResult(bool(np.all(lam >= 0)), None,
                                          None if np.all(lam >= 0) else {"y1": float(y1[np.argmin(lam)])})

    # |g| + |grad g| <= Phi(|z|)
    if gs.Phi is None:
        checks["g_growth"] = CheckResult(False, detail="Phi not given")
    else:
        lhs = np.abs(cfg.g(S_all)) + np.linalg.norm(cfg.g.gradient(S_all), axis=0)
        checks["g_growth"] = _check_le(lhs, gs.Phi(Snorm), 1.0, {"|S|": Snorm}, "|g|+|dg| <= Phi(|S|)")

    # |T| + |grad_y T| <= Psi(|y|)
    if gs.Psi is None:
        checks["T_growth"] = CheckResult(False, detail="Psi not given")
    else:
        eps = 1e-6 * max(1.0, float(np.abs(y1).max()))
        dlam = (turning_rate(Y1 + eps, cfg) - turning_rate(Y1 - eps, cfg)) / (2 * eps)
        lhs = (np.abs(lam_grid) + np.abs(dlam)) * C_K
        checks["T_growth"] = _check_le(lhs, gs.Psi(ynorm), 1.0, {"y1": Y1, "y2": Y2}, "|T|+|dT| <= Psi(|y|)")

    # bounded kernel K <= C_K
    ck_given = gs.constant("C_K")
    checks["bounded_kernel"] = _check_le(Kmat, np.ones_like(Kmat), ck_given, {"K": Kmat}, "K <= C_K")

    # T <= C_T lambda
    T = lam[:, None, None] * Kmat[None]
    checks["growthT"] = _check_le(T, np.broadcast_to(lam[:, None, None], T.shape), gs.constant("C_T"),
                                  {"y1": np.broadcast_to(y1[:, None, None], T.shape)}, "T <= C_T lambda")

    # growthylam: |y1| <= C1 (1 + |dC/dt|^omega), lambda <= C2 (1 + |y1|^sigma), omega*sigma <= 1
    dC = np.linspace(0.0, box.dCdt_max, n)
    lhs1 = np.abs(y1)[:, None] * np.ones_like(dC)[None]
    rhs1 = np.ones_like(y1)[:, None] * (1.0 + dC[None, :] ** gs.omega)
    c1 = _check_le(lhs1, rhs1, gs.constant("C1"), {"y1": np.broadcast_to(y1[:, None], lhs1.shape)}, "|y1| bound")
    c2 = _check_le(lam, 1.0 + np.abs(y1) ** gs.sigma, gs.constant("C2"), {"y1": y1}, "lambda <= C2(1+|y1|^sigma)")
    exp_ok = gs.omega * gs.sigma <= 1.0
    checks["growthylam"] = CheckResult(
        c1.passed and c2.passed and exp_ok, c2.constant,
        None if exp_ok else {"omega*sigma": gs.omega * gs.sigma},
        f"omega*sigma={gs.omega * gs.sigma:g}" + ("" if exp_ok else " > 1"),
    )

    # growthlambda: lambda(y1) <= C_lambda (1 + Lambda(|C|) + |dC/dt|); worst case |C| = 0, dC/dt = 0
    direct = _check_le(lam, np.full_like(lam, 1.0 + float(gs.Lambda_fn(0.0))), gs.constant("C_lambda"),
                       {"y1": y1}, "lambda <= C(1+Lambda(0))")
    if direct.passed:
        checks["growthlambda"] = direct
    elif checks["growthylam"].passed:
        checks["growthlambda"] = CheckResult(True, None, None, "implied by growthylam")
    else:
        checks["growthlambda"] = direct

    # divergence conditions, sampled on (S, y)
    divs = np.stack([divergence_y(S_all[:, j], np.stack([Y1, Y2]), cfg) for j in range(S_all.shape[1])])
    Sn = np.broadcast_to(Snorm[:, None, None], divs.shape)
    checks["divF2"] = _check_le(np.abs(divs), 1.0 + gs.Pi(Sn), gs.constant("C_divF"),
                                {"|S|": Sn, "y1": np.broadcast_to(Y1, divs.shape)}, "|div F| <= C(1+Pi)")
    nonpos = bool(np.all(divs <= 1e-14))
    yn = np.broadcast_to(ynorm, divs.shape)
    upper = _check_le(np.maximum(divs, 0.0), 1.0 + gs.Pi(Sn) + yn**gs.gamma, gs.constant("C_divF1"),
                      {"|S|": Sn}, "div F <= C(1+Pi+|y|^gamma)")
    og = gs.omega * gs.gamma <= 1.0
    checks["divF1"] = CheckResult(nonpos and upper.passed and og, upper.constant,
                                  None if nonpos else {"max_div": float(divs.max())},
                                  f"omega*gamma={gs.omega * gs.gamma:g}")

    # growthTlam: lambda <= C and T <= C (1 + |lambda|)
    cl = _check_le(lam, np.ones_like(lam), gs.constant("C_Tlam"), {"y1": y1}, "lambda <= C")
    ct = _check_le(T, 1.0 + np.broadcast_to(lam[:, None, None], T.shape), gs.constant("C_Tlam"),
                   {"y1": np.broadcast_to(y1[:, None, None], T.shape)}, "T <= C(1+lambda)")
    checks["growthTlam"] = CheckResult(cl.passed and ct.passed,
                                       max(cl.constant or 0.0, ct.constant or 0.0) if cl.passed and ct.passed else None,
                                       cl.witness or ct.witness, "lambda bounded")

    ok = {k: v.passed for k, v in checks.items()}
    regimes = {
        "theorem1": cfg.transduction == "cartoon" and ok["g_growth"] and ok["T_growth"],
        "theorem2": ok["growthlambda"] and ok["growthT"] and ok["divF2"],
        "corollary1": ok["growthylam"] and ok["growthT"] and ok["divF1"],
        "corollary2": ok["growthTlam"] and (ok["divF2"] or ok["divF1"]),
    }
    return ValidationReport(checks, regimes)
