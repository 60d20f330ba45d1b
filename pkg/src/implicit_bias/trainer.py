"""Gradient-ascent dynamics on the smooth-margin objective.

Three modes:

* ``two-layer``: explicit Euler steps ``w <- w + eta * m * grad F_m(w)`` on all
  unit parameters.
* ``fixed-directions``: units ``r_j * theta_j`` with frozen directions; the
  masses ``a_j = r_j^2 / m`` follow a multiplicative (mirror-ascent-like)
  recursion with ``eta(t) = 1 / (16 |z|_inf sqrt(t+1))``.
* ``output-layer``: linear output weights on frozen features with
  ``eta(t) = beta(t) sqrt(2) / (|z|_inf sqrt(t+1))``.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .datagen import LabeledDataset
from .features import FeatureKind, FeatureModel, NeuronCloud, _augment
from .smoothmargin import LossKind, smooth_margin, smooth_margin_grad


class TrainingError(ArithmeticError):
    def __init__(self, message: str, step: int):
        super().__init__(f"{message} at step {step}")
        self.step = step


class Mode(str, enum.Enum):
    TWO_LAYER = "two-layer"
    FIXED_DIRECTIONS = "fixed-directions"
    OUTPUT_LAYER = "output-layer"


class InitKind(str, enum.Enum):
    BALANCED_SPHERE = "balanced-sphere"
    GAUSSIAN = "gaussian"
    UNIFORM_MASS = "uniform-mass"
    ZERO = "zero"


@dataclass(frozen=True)
class InitScheme:
    kind: InitKind
    sigma: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", InitKind(self.kind))
        if self.kind is InitKind.GAUSSIAN and not self.sigma > 0:
            raise ValueError("Gaussian initialisation needs sigma > 0")


@dataclass(frozen=True)
class TrainConfig:
    mode: Mode
    steps: int
    loss: LossKind = LossKind.EXPONENTIAL
    step_rule: str = "schedule"  # "schedule" or "constant"
    eta: float | None = None
    init: InitScheme | None = None
    seed: int = 0
    record_every: int = 1000

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "loss", LossKind(self.loss))
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.step_rule not in ("schedule", "constant"):
            raise ValueError(f"unknown step rule {self.step_rule!r}")
        if self.step_rule == "constant" and not (self.eta is not None and self.eta > 0):
            raise ValueError("a constant step rule needs eta > 0")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        if self.mode is not Mode.TWO_LAYER and self.loss is not LossKind.EXPONENTIAL:
            raise ValueError("fixed-direction and output-layer dynamics use the exponential loss")
        if self.init is None:
            default = {
                Mode.TWO_LAYER: InitKind.BALANCED_SPHERE,
                Mode.FIXED_DIRECTIONS: InitKind.UNIFORM_MASS,
                Mode.OUTPUT_LAYER: InitKind.ZERO,
            }[self.mode]
            object.__setattr__(self, "init", InitScheme(default))


# -- signed features ----------------------------------------------------------


@dataclass(frozen=True)
class SignedFeatureMatrix:
    """Z[i, j] = y_i phi(theta_j, x_i)."""

    Z: np.ndarray

    def __post_init__(self):
        Z = np.atleast_2d(np.array(self.Z, dtype=float))
        if not np.all(np.isfinite(Z)):
            raise ValueError("signed features must be finite")
        Z.setflags(write=False)
        object.__setattr__(self, "Z", Z)

    @property
    def inf_norm(self) -> float:
        return float(np.max(np.abs(self.Z)))

    @property
    def shape(self):
        return self.Z.shape

    def __array__(self, dtype=None, copy=None):
        return self.Z if dtype is None else self.Z.astype(dtype)


def build_signed_features(dataset: LabeledDataset, directions, model: FeatureModel,
                          require_unit: bool = True) -> SignedFeatureMatrix:
    dirs = np.atleast_2d(np.asarray(directions, dtype=float))
    if require_unit and np.any(np.abs(model.radius(dirs) - 1.0) > 1e-10):
        raise ValueError("fixed directions must lie on the unit sphere")
    Phi = model.features(dirs, dataset.points)
    return SignedFeatureMatrix(dataset.labels[:, None] * Phi)


def random_feature_matrix(dataset: LabeledDataset, cloud: NeuronCloud) -> SignedFeatureMatrix:
    """Output-layer features z_ij = y_i sigma(a_j . (x_i, 1)) from a cloud's hidden layer."""
    A = cloud.weights[:, :-1]
    pre = _augment(dataset.points) @ A.T
    act = np.maximum(pre, 0.0)
    if cloud.model.kind is FeatureKind.SRELU:
        act = act ** 2
    return SignedFeatureMatrix(dataset.labels[:, None] * act)


# -- initialisation -----------------------------------------------------------


def init_params(scheme: InitScheme, model: FeatureModel, m: int, seed: int = 0) -> NeuronCloud:
    """Initial cloud of ``m`` units; deterministic in ``seed``.

    ``balanced-sphere`` puts the input weights uniformly on the sphere of
    radius 1/sqrt(2) and the output weight at +-1/sqrt(2), so every unit has
    |a| = |b| and |w| = 1.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    rng = np.random.default_rng(seed)
    p = model.param_dim
    if scheme.kind is InitKind.BALANCED_SPHERE:
        a = rng.standard_normal((m, p - 1))
        a /= np.linalg.norm(a, axis=1, keepdims=True)
        sign = rng.choice([-1.0, 1.0], size=m)
        if model.kind is FeatureKind.RELU:
            W = np.hstack([a, sign[:, None]]) / np.sqrt(2.0)
        else:
            W = np.hstack([a, sign[:, None]])
    elif scheme.kind is InitKind.GAUSSIAN:
        W = scheme.sigma * rng.standard_normal((m, p))
        if model.kind is FeatureKind.SRELU:
            W[:, -1] = np.where(W[:, -1] < 0, -1.0, 1.0)
    else:
        raise ValueError(f"{scheme.kind.value} initialises radial variables, not a cloud")
    return NeuronCloud(model, W)


def init_radial(scheme: InitScheme, m: int, seed: int = 0) -> np.ndarray:
    """Initial radial vector r(0) for the fixed-feature dynamics."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if scheme.kind is InitKind.UNIFORM_MASS:
        return np.ones(m)
    if scheme.kind is InitKind.ZERO:
        return np.zeros(m)
    if scheme.kind is InitKind.GAUSSIAN:
        return scheme.sigma * np.random.default_rng(seed).standard_normal(m)
    raise ValueError(f"{scheme.kind.value} initialises a cloud, not a radial vector")


# -- trajectories -------------------------------------------------------------

CSV_COLUMNS = ("t", "objective", "raw_margin", "beta", "norm_margin", "best_margin")


def record_schedule(steps: int, record_every: int) -> np.ndarray:
    """Recorded steps: powers of two, multiples of ``record_every`` and the last step."""
    t = set(range(record_every, steps + 1, record_every))
    k = 1
    while k <= steps:
        t.add(k)
        k *= 2
    t.add(steps)
    return np.array(sorted(t), dtype=int)


@dataclass
class Trajectory:
    """Recorded quantities at steps ``t >= 1``.

    ``best_margin[k]`` is the best normalised margin over iterates
    ``0 .. t[k] - 1``; the other columns describe iterate ``t[k]``.
    """

    t: np.ndarray
    objective: np.ndarray
    raw_margin: np.ndarray
    beta: np.ndarray
    norm_margin: np.ndarray
    best_margin: np.ndarray
    extras: dict = field(default_factory=dict)

    def __len__(self):
        return self.t.shape[0]

    @property
    def final_margin(self) -> float:
        return float(self.norm_margin[-1])

    @property
    def final_best(self) -> float:
        """Best normalised margin over all iterates including the last one."""
        return float(max(self.best_margin[-1], self.norm_margin[-1]))

    def rows(self):
        for k in range(len(self)):
            yield (int(self.t[k]), self.objective[k], self.raw_margin[k], self.beta[k],
                   self.norm_margin[k], self.best_margin[k])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(",".join(CSV_COLUMNS) + "\n")
            for row in self.rows():
                fh.write(str(row[0]) + "," + ",".join("%.17g" % v for v in row[1:]) + "\n")

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != CSV_COLUMNS:
                raise ValueError(f"unexpected trajectory header {header}")
            rows = [list(map(float, r)) for r in reader]
        arr = np.array(rows, dtype=float).reshape(-1, len(CSV_COLUMNS))
        return cls(arr[:, 0].astype(int), *(arr[:, k] for k in range(1, len(CSV_COLUMNS))))


class _Recorder:
    def __init__(self, steps, record_every, extra_names=()):
        self.when = record_schedule(steps, record_every)
        self._next = 0
        self.cols = {c: [] for c in CSV_COLUMNS}
        self.extra = {k: [] for k in extra_names}
        self.best = -np.inf

    def wants(self, t) -> bool:
        return self._next < self.when.size and self.when[self._next] == t

    def add(self, t, objective, raw, beta, norm, **extra):
        self.cols["t"].append(t)
        self.cols["objective"].append(objective)
        self.cols["raw_margin"].append(raw)
        self.cols["beta"].append(beta)
        self.cols["norm_margin"].append(norm)
        self.cols["best_margin"].append(self.best)
        for k, v in extra.items():
            self.extra[k].append(v)
        self._next += 1

    def trajectory(self, **extras) -> Trajectory:
        arrays = {c: np.asarray(v, dtype=float) for c, v in self.cols.items()}
        arrays["t"] = arrays["t"].astype(int)
        ex = {k: np.asarray(v) for k, v in self.extra.items()}
        ex.update(extras)
        return Trajectory(extras=ex, **arrays)


def _softmin_weights(v: np.ndarray, beta: float) -> np.ndarray:
    w = np.exp(-beta * (v - v.min()))
    return w / w.sum()


def _check_z(Z) -> np.ndarray:
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if Z.size == 0:
        raise ValueError("empty feature matrix")
    if float(np.max(np.abs(Z))) == 0.0:
        raise ValueError("all-zero features: the step-size schedule is undefined")
    return Z


def _reference_margin(Z, kind):
    # solvers live in margins, which itself imports this module
    from . import margins

    try:
        cert = margins.gamma1_lp(Z) if kind == "gamma1" else margins.gamma2_dual(Z)
    except margins.SolverError as err:
        cert = err.certificate
        if cert is None:
            return float("nan")
    return cert.primal_value


# -- fixed directions ---------------------------------------------------------


def train_fixed_directions(Z, cfg: TrainConfig, keep_states: bool = False,
                           reference: bool = True) -> Trajectory:
    """Train the radii of frozen directions; returns the trajectory.

    The state is kept as the normalised masses ``a_bar`` and ``log beta``; one
    step multiplies ``a`` by ``1 + 4 eta g + 4 eta^2 g^2`` with
    ``g = grad G_1(a)``, which equals squaring ``r + eta m grad F_m(r)``.
    """
    if cfg.mode is not Mode.FIXED_DIRECTIONS:
        raise ValueError("config mode must be fixed-directions")
    Z = _check_z(Z)
    n, m = Z.shape
    zinf = float(np.max(np.abs(Z)))
    r0 = init_radial(cfg.init, m, cfg.seed)
    a = r0 ** 2 / m
    beta = float(a.sum())
    if beta <= 0:
        raise ValueError("fixed-direction dynamics need a nonzero initial mass")
    abar = a / beta
    log_beta = math.log(beta)
    rec = _Recorder(cfg.steps, cfg.record_every, ("bsum", "eta"))
    bsum = 0.0
    states = [abar.copy()] if keep_states else None
    log_betas = [log_beta] if keep_states else None
    logn = math.log(n)
    for t in range(cfg.steps + 1):
        v = Z @ abar
        vmin = float(v.min())
        beta = math.exp(log_beta) if log_beta < 709.0 else math.inf
        if rec.wants(t):
            objective = beta * vmin + logn - float(logsumexp(-beta * (v - vmin))) \
                if np.isfinite(beta) else math.inf
            rec.add(t, objective, beta * vmin, beta, vmin, bsum=bsum,
                    eta=_fixed_eta(cfg, zinf, t))
        rec.best = max(rec.best, vmin)
        if t == cfg.steps:
            break
        bsum += 1.0 / (beta * math.sqrt(t + 1.0))
        eta = _fixed_eta(cfg, zinf, t)
        g = Z.T @ _softmin_weights(v, beta)
        b = abar * (1.0 + 4.0 * eta * g + 4.0 * eta * eta * g * g)
        s = float(b.sum())
        if not (s > 0 and np.isfinite(s)):
            raise TrainingError("non-finite or vanishing mass", t + 1)
        abar = b / s
        log_beta += math.log(s)
        if keep_states:
            states.append(abar.copy())
            log_betas.append(log_beta)
    extras = {"zinf": zinf, "final_a_bar": abar, "final_log_beta": log_beta}
    if reference:
        gamma = _reference_margin(Z, "gamma1")
        extras["gamma"] = gamma
        extras["rate_guarantee"] = bool(gamma > 0)
    if keep_states:
        extras["a_bar"] = np.array(states)
        extras["log_beta"] = np.array(log_betas)
    return rec.trajectory(**extras)


def _fixed_eta(cfg, zinf, t):
    if cfg.step_rule == "constant":
        return cfg.eta
    return 1.0 / (16.0 * zinf * math.sqrt(t + 1.0))


# -- output layer -------------------------------------------------------------


def train_output_layer(Z, cfg: TrainConfig, keep_states: bool = False,
                       reference: bool = True) -> Trajectory:
    """Train linear output weights ``r`` on frozen features ``Z``.

    With ``a = r / m`` one step reads ``a <- a + (eta / m) grad G_1(a)``;
    ``beta(t) = max(1, max_{s <= t} sqrt(m) |a(s)|_2)``.
    """
    if cfg.mode is not Mode.OUTPUT_LAYER:
        raise ValueError("config mode must be output-layer")
    Z = _check_z(Z)
    n, m = Z.shape
    zinf = float(np.max(np.abs(Z)))
    sqm = math.sqrt(m)
    a = init_radial(cfg.init, m, cfg.seed) / m
    beta = max(1.0, sqm * float(np.linalg.norm(a)))
    rec = _Recorder(cfg.steps, cfg.record_every, ("eta",))
    logn = math.log(n)
    states, betas = ([], []) if keep_states else (None, None)
    for t in range(cfg.steps + 1):
        beta = max(beta, sqm * float(np.linalg.norm(a)))
        u = Z @ a
        umin = float(u.min())
        if cfg.step_rule == "constant":
            eta = cfg.eta
        else:
            eta = beta * math.sqrt(2.0) / (zinf * math.sqrt(t + 1.0))
        if keep_states:
            states.append(a / beta)
            betas.append(beta)
        if rec.wants(t):
            objective = umin + logn - float(logsumexp(-(u - umin)))
            rec.add(t, objective, umin, beta, umin / beta, eta=eta)
        rec.best = max(rec.best, umin / beta)
        if t == cfg.steps:
            break
        g = Z.T @ _softmin_weights(u, 1.0)
        a = a + (eta / m) * g
        if not np.all(np.isfinite(a)):
            raise TrainingError("non-finite output weights", t + 1)
    extras = {"zinf": zinf, "final_a_bar": a / beta}
    if reference:
        gamma = _reference_margin(Z, "gamma2")
        extras["gamma"] = gamma
        extras["rate_guarantee"] = bool(gamma > 0)
    if keep_states:
        extras["a_bar"] = np.array(states)
        extras["beta_path"] = np.array(betas)
    return rec.trajectory(**extras)


# -- both layers --------------------------------------------------------------


def default_two_layer_eta(dataset: LabeledDataset) -> float:
    return 0.05 / float(np.max(np.sum(dataset.points ** 2, axis=1) + 1.0))


def _balance_gap(model: FeatureModel, W: np.ndarray) -> np.ndarray:
    if model.kind is not FeatureKind.RELU:
        return np.zeros(W.shape[0])
    return np.sum(W[:, :-1] ** 2, axis=1) - W[:, -1] ** 2


def train_two_layer(dataset: LabeledDataset, model: FeatureModel, cfg: TrainConfig, m: int = 100,
                    cloud: NeuronCloud | None = None):
    """Euler ascent on F_m(w) = S(y * h_m(w, x)) for all unit parameters.

    Returns the final cloud and the trajectory.  ``beta`` is the mass of the
    projected measure ``(1/m) sum_j |w_j|^2`` and ``norm_margin`` the margin
    of the normalised projected measure.  For ReLU models the extra
    ``balance_drift`` tracks ``max_j | (|a_j|^2 - b_j^2)(t) - (|a_j|^2 - b_j^2)(0) |``.
    """
    if cfg.mode is not Mode.TWO_LAYER:
        raise ValueError("config mode must be two-layer")
    if dataset.d != model.input_dim:
        raise ValueError("dataset and model dimensions differ")
    if cloud is None:
        cloud = init_params(cfg.init, model, m, cfg.seed)
    W = np.array(cloud.weights, dtype=float)
    m = W.shape[0]
    X1 = _augment(dataset.points)
    y = dataset.labels
    eta = cfg.eta if cfg.step_rule == "constant" else default_two_layer_eta(dataset)
    gap0 = _balance_gap(model, W)
    rec = _Recorder(cfg.steps, cfg.record_every, ("balance_drift",))
    with np.errstate(over="ignore", invalid="ignore"):
        _two_layer_loop(model, cfg, W, X1, y, eta, gap0, rec)
    final = NeuronCloud(model, W)
    traj = rec.trajectory(eta=eta, balance_drift_final=float(
        np.max(np.abs(_balance_gap(model, W) - gap0))))
    return final, traj


def _two_layer_loop(model, cfg, W, X1, y, eta, gap0, rec):
    for t in range(cfg.steps + 1):
        pre = X1 @ W[:, :-1].T
        Phi = model._features_from_pre(pre, W)
        u = y * Phi.mean(axis=1)
        if not np.all(np.isfinite(u)):
            raise TrainingError("non-finite predictions", t)
        mass = float(np.mean(model.radius(W) ** 2))
        umin = float(u.min())
        norm = umin / mass if mass > 0 else 0.0
        if rec.wants(t):
            drift = float(np.max(np.abs(_balance_gap(model, W) - gap0)))
            rec.add(t, smooth_margin(cfg.loss, u), umin, mass, norm, balance_drift=drift)
        rec.best = max(rec.best, norm)
        if t == cfg.steps:
            break
        c = smooth_margin_grad(cfg.loss, u) * y
        W += eta * model._grad_from_pre(pre, W, X1, c)
        if not np.all(np.isfinite(W)):
            raise TrainingError("non-finite parameters", t + 1)
