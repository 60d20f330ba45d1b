"""2-homogeneous feature maps for two-layer networks and their measure views.

A hidden unit with parameters ``w`` contributes ``phi(w, x)`` to the
prediction.  Two feature maps are supported:

* ReLU:  ``w = (a, b)`` with ``a`` in R^{d+1}, ``phi(w, x) = b * (a . (x, 1))_+``
* SReLU: ``w = (a, eps)`` with ``eps`` in {-1, +1} stored as the sign of the
  last coordinate, ``phi(w, x) = eps * (a . (x, 1))_+ ** 2``

Both are positively 2-homogeneous in the radial part of ``w`` and balanced.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

_UNIT_TOL = 1e-12


class FeatureKind(str, enum.Enum):
    RELU = "relu"
    SRELU = "srelu"


def _augment(x: np.ndarray) -> np.ndarray:
    """Append the constant 1 to inputs, ``(n, d) -> (n, d+1)``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return np.hstack([x, np.ones((x.shape[0], 1))])


@dataclass(frozen=True)
class FeatureModel:
    kind: FeatureKind
    input_dim: int

    def __post_init__(self):
        object.__setattr__(self, "kind", FeatureKind(self.kind))
        if int(self.input_dim) < 1:
            raise ValueError(f"input_dim must be >= 1, got {self.input_dim}")
        object.__setattr__(self, "input_dim", int(self.input_dim))

    @property
    def param_dim(self) -> int:
        return self.input_dim + 2

    # -- parameter geometry -------------------------------------------------

    def _check_params(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        if w.shape[-1] != self.param_dim:
            raise ValueError(
                f"parameter dimension {w.shape[-1]} != {self.param_dim} for {self.kind.value}"
            )
        return w

    def _check_inputs(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[-1] != self.input_dim:
            raise ValueError(f"input dimension {x.shape[-1]} != {self.input_dim}")
        return x

    def radius(self, w) -> np.ndarray:
        """Radial part of ``w``: the norm that the 2-homogeneity scales."""
        w = self._check_params(w)
        if self.kind is FeatureKind.RELU:
            return np.linalg.norm(w, axis=-1)
        return np.linalg.norm(w[..., :-1], axis=-1)

    def scale(self, w, r) -> np.ndarray:
        """Return ``r * w`` in the sense of the homogeneity (sign channel untouched)."""
        w = self._check_params(w)
        r = np.asarray(r, dtype=float)
        if self.kind is FeatureKind.RELU:
            return w * r[..., None] if r.ndim else w * r
        out = w.copy()
        out[..., :-1] = w[..., :-1] * (r[..., None] if r.ndim else r)
        out[..., -1] = np.where(w[..., -1] < 0, -1.0, 1.0)
        return out

    def balance(self, theta) -> np.ndarray:
        """Balance map T: flips the output sign so that phi(T(theta), .) = -phi(theta, .)."""
        theta = self._check_params(theta).copy()
        theta[..., -1] = -theta[..., -1]
        return theta

    # -- evaluation ---------------------------------------------------------

    def features(self, W, X) -> np.ndarray:
        """Matrix ``Phi[i, j] = phi(W[j], X[i])`` of shape ``(n, m)``."""
        W = np.atleast_2d(self._check_params(W))
        X1 = _augment(self._check_inputs(X))
        return self._features_from_pre(X1 @ W[:, :-1].T, W)

    def weighted_grad(self, W, X, c) -> np.ndarray:
        """``sum_i c_i grad_w phi(W[j], X[i])`` for every unit ``j``, shape ``(m, p)``.

        The ReLU kink uses the zero subgradient.  For SReLU the sign channel
        gets a zero gradient.
        """
        W = np.atleast_2d(self._check_params(W))
        X1 = _augment(self._check_inputs(X))
        return self._grad_from_pre(X1 @ W[:, :-1].T, W, X1, np.asarray(c, dtype=float))

    def _features_from_pre(self, pre, W):
        if self.kind is FeatureKind.RELU:
            return np.maximum(pre, 0.0) * W[:, -1]
        eps = np.where(W[:, -1] < 0, -1.0, 1.0)
        return np.maximum(pre, 0.0) ** 2 * eps

    def _grad_from_pre(self, pre, W, X1, c):
        pos = np.maximum(pre, 0.0)
        out = np.empty_like(W)
        if self.kind is FeatureKind.RELU:
            active = (pre > 0.0) * c[:, None]
            out[:, :-1] = (active.T @ X1) * W[:, -1][:, None]
            out[:, -1] = c @ pos
        else:
            eps = np.where(W[:, -1] < 0, -1.0, 1.0)
            out[:, :-1] = 2.0 * ((pos * c[:, None]).T @ X1) * eps[:, None]
            out[:, -1] = 0.0
        return out


def eval_feature(model: FeatureModel, w, x) -> float:
    w = np.asarray(w, dtype=float)
    x = np.asarray(x, dtype=float)
    if w.ndim != 1 or x.ndim != 1:
        raise ValueError("eval_feature expects a single parameter vector and a single input")
    return float(model.features(w[None, :], x[None, :])[0, 0])


def balance_map(model: FeatureModel, theta) -> np.ndarray:
    return model.balance(theta)


@dataclass(frozen=True)
class NeuronCloud:
    """``m`` units with mass ``1/m`` each, i.e. the discrete measure mu_m."""

    model: FeatureModel
    weights: np.ndarray

    def __post_init__(self):
        w = np.atleast_2d(np.array(self.weights, dtype=float))
        if w.shape[0] < 1:
            raise ValueError("a cloud needs at least one unit")
        self.model._check_params(w)
        if not np.all(np.isfinite(w)):
            raise ValueError("non-finite unit parameters")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def m(self) -> int:
        return self.weights.shape[0]

    def predict(self, X) -> np.ndarray:
        """h_m(w, x) = (1/m) sum_j phi(w_j, x), vectorised over rows of X."""
        return self.model.features(self.weights, X).mean(axis=1)

    def total_mass(self) -> float:
        return float(np.mean(self.model.radius(self.weights) ** 2))


@dataclass(frozen=True)
class SphereMeasure:
    directions: np.ndarray
    masses: np.ndarray
    model: FeatureModel | None = field(default=None, compare=False)

    def __post_init__(self):
        masses = np.array(self.masses, dtype=float).reshape(-1)
        if masses.size == 0:
            width = self.model.param_dim if self.model is not None else 0
            dirs = np.array(self.directions, dtype=float).reshape(0, width)
        else:
            dirs = np.atleast_2d(np.array(self.directions, dtype=float))
        if dirs.shape[0] != masses.shape[0]:
            raise ValueError("one mass per direction required")
        if np.any(masses < 0):
            raise ValueError("masses must be nonnegative")
        if masses.size:
            norms = (self.model.radius(dirs) if self.model is not None
                     else np.linalg.norm(dirs, axis=1))
            if np.any(np.abs(norms - 1.0) > _UNIT_TOL):
                raise ValueError("atoms must lie on the unit sphere")
        dirs.setflags(write=False)
        masses.setflags(write=False)
        object.__setattr__(self, "directions", dirs)
        object.__setattr__(self, "masses", masses)

    def __len__(self):
        return self.masses.shape[0]

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    def normalized(self) -> "SphereMeasure":
        total = self.total_mass
        if total <= 0:
            raise ValueError("cannot normalize a measure with zero total mass")
        return SphereMeasure(self.directions, self.masses / total, self.model)


def project_h2(cloud: NeuronCloud) -> SphereMeasure:
    """Push the cloud to the sphere, reweighting each unit by its squared radius.

    Units with exactly zero radius carry no mass and are dropped.
    """
    model = cloud.model
    radii = model.radius(cloud.weights)
    keep = radii > 0
    if not np.any(keep):
        return SphereMeasure(np.zeros((0, model.param_dim)), np.zeros(0), model)
    w = cloud.weights[keep]
    r = radii[keep]
    dirs = model.scale(w, 1.0 / r)
    # rescaling by 1/r is exact up to rounding; renormalise so the unit check holds
    dirs = model.scale(dirs, 1.0 / model.radius(dirs))
    return SphereMeasure(dirs, r**2 / cloud.m, model)


def predict(measure: SphereMeasure, model: FeatureModel, x) -> np.ndarray | float:
    """Sum over atoms of ``mass * phi(theta, x)``; scalar for a single input."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = model._check_inputs(x)
    if len(measure) == 0:
        out = np.zeros(X.shape[0])
    else:
        out = model.features(measure.directions, X) @ measure.masses
    return float(out[0]) if single else out


# -- equivalence with the (a . z)_+ parameterisation -------------------------


@dataclass(frozen=True)
class SignedAtoms:
    """Signed measure on the unit sphere of R^{d+1} for the feature (a . (x, 1))_+."""

    points: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        masses = np.array(self.masses, dtype=float).reshape(-1)
        pts = np.array(self.points, dtype=float)
        pts = pts.reshape(masses.shape[0], -1) if masses.size else pts.reshape(0, -1)
        if pts.shape[0] != masses.shape[0]:
            raise ValueError("one mass per point required")
        if masses.size and np.any(np.abs(np.linalg.norm(pts, axis=1) - 1.0) > _UNIT_TOL):
            raise ValueError("points must lie on the unit sphere")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "masses", masses)

    @property
    def total_variation(self) -> float:
        return float(np.abs(self.masses).sum())

    def predict(self, X) -> np.ndarray:
        if self.masses.size == 0:
            return np.zeros(np.atleast_2d(X).shape[0])
        return np.maximum(_augment(X) @ self.points.T, 0.0) @ self.masses


def lift_signed(atoms: SignedAtoms, model: FeatureModel) -> SphereMeasure:
    """T map: positive part to (a, 1)/sqrt2 and negative part to (a, -1)/sqrt2, mass doubled."""
    if model.kind is not FeatureKind.RELU:
        raise ValueError("the norm-equivalence maps are defined for ReLU features")
    sign = np.where(atoms.masses < 0, -1.0, 1.0)
    dirs = np.hstack([atoms.points, sign[:, None]]) / np.sqrt(2.0)
    return SphereMeasure(dirs, 2.0 * np.abs(atoms.masses), model)


def project_signed(measure: SphereMeasure, model: FeatureModel) -> SignedAtoms:
    """Pi map: atom ((a, c), mu) becomes signed mass ``mu * c * |a|`` at ``a / |a|``."""
    if model.kind is not FeatureKind.RELU:
        raise ValueError("the norm-equivalence maps are defined for ReLU features")
    a = measure.directions[:, :-1]
    c = measure.directions[:, -1]
    na = np.linalg.norm(a, axis=1)
    keep = na > 0
    return SignedAtoms(a[keep] / na[keep, None], measure.masses[keep] * c[keep] * na[keep])


def norm_maps_pi_and_t(obj, model: FeatureModel, direction: str):
    if direction == "lift_T":
        return lift_signed(obj, model)
    if direction == "project_Pi":
        return project_signed(obj, model)
    raise ValueError(f"unknown direction {direction!r}")
