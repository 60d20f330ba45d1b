"""Discrete max-margin problems with duality certificates.

gamma1:  max_{a in simplex}           min_i z_i . a
gamma2:  max_{sqrt(m) |a|_2 <= 1}      min_i z_i . a

Each solver returns a :class:`MarginCertificate` holding a primal point, a
dual point ``p`` in the simplex over data rows, both objective values and the
complementary-slackness residuals.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm as _normal
from scipy.stats import qmc

from .datagen import LabeledDataset
from .features import FeatureKind, FeatureModel, SphereMeasure, predict
from .trainer import SignedFeatureMatrix, build_signed_features

LP_GAP_TOL = 1e-9
DUAL_GAP_TOL = 1e-8
SUPPORT_TOL = 1e-6


class SolverError(RuntimeError):
    """Raised when a solver cannot certify its answer; carries the best certificate."""

    def __init__(self, message: str, certificate: "MarginCertificate | None" = None):
        super().__init__(message)
        self.certificate = certificate


@dataclass
class MarginCertificate:
    kind: str  # "gamma1" or "gamma2"
    primal: np.ndarray
    dual: np.ndarray
    primal_value: float
    dual_value: float
    support_residual_primal: float
    support_residual_dual: float
    separable: bool
    iterations: int = 0
    extras: dict = field(default_factory=dict)

    @property
    def gap(self) -> float:
        return self.dual_value - self.primal_value

    @property
    def value(self) -> float:
        return self.primal_value

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "value": self.primal_value,
            "dual_value": self.dual_value,
            "gap": self.gap,
            "primal": self.primal.tolist(),
            "dual": self.dual.tolist(),
            "residuals": {
                "support_primal": self.support_residual_primal,
                "support_dual": self.support_residual_dual,
            },
            "separable": bool(self.separable),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "MarginCertificate":
        return cls(
            kind=d["kind"],
            primal=np.asarray(d["primal"], dtype=float),
            dual=np.asarray(d["dual"], dtype=float),
            primal_value=float(d["value"]),
            dual_value=float(d["dual_value"]),
            support_residual_primal=float(d["residuals"]["support_primal"]),
            support_residual_dual=float(d["residuals"]["support_dual"]),
            separable=bool(d["separable"]),
        )


def _as_matrix(Z) -> np.ndarray:
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if Z.ndim != 2 or Z.shape[0] < 1 or Z.shape[1] < 1:
        raise ValueError("Z must be a non-empty n x m matrix")
    if not np.all(np.isfinite(Z)):
        raise ValueError("Z has non-finite entries")
    return Z


def margin(u) -> float:
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.size < 1:
        raise ValueError("empty margin vector")
    return float(u.min())


# -- residuals ----------------------------------------------------------------


def _dual_residual(Z, a, p, tol):
    u = Z @ a
    return float(p[u > u.min() + tol].sum())


def _primal_residual(kind, Z, a, p, tol):
    score = Z.T @ p
    if kind == "gamma1":
        return float(a[score < score.max() - tol].sum())
    m = Z.shape[1]
    return float(max(0.0, np.linalg.norm(score) / np.sqrt(m) - score @ a))


def _certificate(kind, Z, a, p, tol=SUPPORT_TOL, iterations=0) -> MarginCertificate:
    primal_value = float((Z @ a).min())
    score = Z.T @ p
    if kind == "gamma1":
        dual_value = float(score.max())
    else:
        dual_value = float(np.linalg.norm(score) / np.sqrt(Z.shape[1]))
    return MarginCertificate(
        kind=kind,
        primal=a,
        dual=p,
        primal_value=primal_value,
        dual_value=dual_value,
        support_residual_primal=_primal_residual(kind, Z, a, p, tol),
        support_residual_dual=_dual_residual(Z, a, p, tol),
        separable=primal_value > 0,
        iterations=iterations,
    )


# -- gamma1: dense dual simplex ----------------------------------------------


def _dual_simplex(A: np.ndarray, max_pivots: int, tol: float = 1e-12):
    """Solve ``min 1.x  s.t.  A x >= 1, x >= 0`` for a positive matrix A.

    Works on the tableau of ``-A x + s = -1``; the all-slack basis is dual
    feasible because the costs are positive.  Leaving and entering variables
    follow Bland's smallest-index rule.  Returns the optimal basis.
    """
    n, m = A.shape
    T = np.zeros((n + 1, m + n + 1))
    T[1:, :m] = -A
    T[1:, m:m + n] = np.eye(n)
    T[1:, -1] = -1.0
    T[0, :m] = 1.0
    basis = np.arange(m, m + n)
    for it in range(max_pivots):
        rhs = T[1:, -1]
        infeasible = np.flatnonzero(rhs < -tol)
        if infeasible.size == 0:
            return basis, it
        r = infeasible[np.argmin(basis[infeasible])] + 1
        row = T[r, :-1]
        cand = np.flatnonzero(row < -tol)
        if cand.size == 0:
            raise SolverError("LP is primal infeasible; cannot happen for a positive matrix")
        ratios = T[0, cand] / -row[cand]
        best = ratios.min()
        ties = cand[ratios <= best + tol * max(1.0, abs(best))]
        k = ties.min()
        T[r] /= T[r, k]
        col = T[:, k].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        basis[r - 1] = k
    raise SolverError(f"dual simplex did not terminate within {max_pivots} pivots")


def _basis_solution(A: np.ndarray, basis: np.ndarray):
    """Recompute primal x and dual y from the basis by direct linear solves."""
    n, m = A.shape
    full = np.hstack([-A, np.eye(n)])
    B = full[:, basis]
    xb = np.linalg.solve(B, -np.ones(n))
    cost = np.concatenate([np.ones(m), np.zeros(n)])
    pi = np.linalg.solve(B.T, cost[basis])
    x = np.zeros(m + n)
    x[basis] = xb
    return np.clip(x[:m], 0.0, None), np.clip(-pi, 0.0, None)


def gamma1_lp(Z, tol: float = LP_GAP_TOL, max_pivots: int | None = None) -> MarginCertificate:
    """Exact value of max over the simplex of min_i z_i . a, by linear programming.

    The matrix is shifted to be entrywise >= 1, which turns the max-min into
    ``min 1.x s.t. Z' x >= 1, x >= 0`` (``a = x / sum(x)``) solved by a dense
    dual simplex; the dual multipliers give the row weights ``p``.
    """
    Z = _as_matrix(np.asarray(Z))
    n, m = Z.shape
    shift = 1.0 - Z.min()
    A = Z + shift
    if max_pivots is None:
        max_pivots = 50 * (n + m) + 1000
    basis, pivots = _dual_simplex(A, max_pivots)
    x, y = _basis_solution(A, basis)
    if x.sum() <= 0 or y.sum() <= 0:
        raise SolverError("degenerate LP basis")
    cert = _certificate("gamma1", Z, x / x.sum(), y / y.sum(), iterations=pivots)
    if not cert.gap <= tol:
        raise SolverError(f"gamma1 gap {cert.gap:.3e} exceeds {tol:.1e}", cert)
    return cert


# -- gamma2: projected gradient on the dual ----------------------------------


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort based)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = np.flatnonzero(u - css / idx > 0)[-1]
    return np.maximum(v - css[rho] / (rho + 1.0), 0.0)


def _power_iteration(Z: np.ndarray, iters: int = 50, tol: float = 1e-10) -> float:
    """Largest eigenvalue of Z Z^T."""
    rng = np.random.default_rng(0)
    v = rng.standard_normal(Z.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = Z @ (Z.T @ v)
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        new = float(v @ w)
        v = w / nw
        if abs(new - lam) <= tol * max(1.0, abs(new)):
            lam = new
            break
        lam = new
    # power iteration approaches from below; pad so that 1/L stays a safe step
    return lam * 1.05


def _gamma2_from_dual(Z, p) -> MarginCertificate:
    m = Z.shape[1]
    v = Z.T @ p
    nv = np.linalg.norm(v)
    cert_zero = _certificate("gamma2", Z, np.zeros(m), p)
    if nv == 0:
        return cert_zero
    cert = _certificate("gamma2", Z, v / (np.sqrt(m) * nv), p)
    # a = 0 is always feasible with value 0
    return cert if cert.primal_value >= cert_zero.primal_value else cert_zero


def _polish(Z, support):
    """Minimise |Z_S^T p|^2 subject to sum(p) = 1 on a fixed support S."""
    Zs = Z[support]
    k = Zs.shape[0]
    G = Zs @ Zs.T
    K = np.zeros((k + 1, k + 1))
    K[:k, :k] = G
    K[:k, k] = 1.0
    K[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    ps = sol[:k]
    if np.any(ps < -1e-14):
        return None
    p = np.zeros(Z.shape[0])
    p[support] = np.maximum(ps, 0.0)
    s = p.sum()
    return p / s if s > 0 else None


def gamma2_dual(Z, tol: float = DUAL_GAP_TOL, max_iter: int = 200_000,
                check_every: int = 50) -> MarginCertificate:
    """max over the scaled l2 ball of min_i z_i . a, through its dual.

    The dual is ``min_{p in simplex} |Z^T p|_2 / sqrt(m)``; its square is
    minimised by accelerated projected gradient with step 1/L,
    ``L = |Z|_op^2``, and the iterate is polished by an equality-constrained
    solve on its support.  A zero dual optimum means the fixed features do
    not separate the data; the value is then 0 and ``separable`` is False.
    """
    Z = _as_matrix(np.asarray(Z))
    n, m = Z.shape
    L = _power_iteration(Z)
    if L == 0.0:
        p = np.full(n, 1.0 / n)
        return _certificate("gamma2", Z, np.zeros(m), p)
    step = 1.0 / L
    p = np.full(n, 1.0 / n)
    y = p.copy()
    t_k = 1.0
    best = _gamma2_from_dual(Z, p)
    f_prev = np.inf
    for it in range(1, max_iter + 1):
        p_new = project_simplex(y - step * (Z @ (Z.T @ y)))
        f_new = 0.5 * float(np.sum((Z.T @ p_new) ** 2))
        if f_new > f_prev:
            # adaptive restart: drop momentum and take a plain projected step
            t_k = 1.0
            p_new = project_simplex(p - step * (Z @ (Z.T @ p)))
            f_new = 0.5 * float(np.sum((Z.T @ p_new) ** 2))
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_k * t_k))
        y = p_new + ((t_k - 1.0) / t_next) * (p_new - p)
        p, t_k, f_prev = p_new, t_next, f_new
        if it % check_every == 0:
            cand = [_gamma2_from_dual(Z, p)]
            support = np.flatnonzero(p > 1e-12)
            polished = _polish(Z, support)
            if polished is not None:
                cand.append(_gamma2_from_dual(Z, polished))
            for c in cand:
                if c.gap < best.gap:
                    best = c
            if best.gap <= tol:
                best.iterations = it
                return best
    best.iterations = max_iter
    raise SolverError(f"gamma2 gap {best.gap:.3e} exceeds {tol:.1e}", best)


# -- certificates -------------------------------------------------------------


@dataclass
class CertifyReport:
    passed: bool
    gap: float
    feasibility: float
    support_residual_primal: float
    support_residual_dual: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def certify(Z, cert: MarginCertificate, tol: float = SUPPORT_TOL) -> CertifyReport:
    """Recheck a certificate against Z from scratch."""
    Z = _as_matrix(np.asarray(Z))
    a = np.asarray(cert.primal, dtype=float)
    p = np.asarray(cert.dual, dtype=float)
    m = Z.shape[1]
    feas_dual = abs(p.sum() - 1.0) + float(np.clip(-p, 0, None).sum())
    if cert.kind == "gamma1":
        feas_primal = abs(a.sum() - 1.0) + float(np.clip(-a, 0, None).sum())
    else:
        feas_primal = max(0.0, np.sqrt(m) * np.linalg.norm(a) - 1.0)
    fresh = _certificate(cert.kind, Z, a, p, tol=tol)
    feas = feas_primal + feas_dual
    passed = (
        feas <= tol
        and fresh.gap <= tol
        and fresh.support_residual_primal <= tol
        and fresh.support_residual_dual <= tol
    )
    return CertifyReport(bool(passed), fresh.gap, feas,
                         fresh.support_residual_primal, fresh.support_residual_dual)


# -- measures on the sphere ---------------------------------------------------


def f1_margin(measure: SphereMeasure, dataset: LabeledDataset, model: FeatureModel) -> float:
    """min_i y_i h(nu_bar, x_i) for the mass-normalised measure nu_bar."""
    nu = measure.normalized()
    return float(np.min(dataset.labels * predict(nu, model, dataset.points)))


def reference_directions(model: FeatureModel, M: int, seed: int = 0) -> np.ndarray:
    """2M unit directions: M quasi-uniform hidden directions and their balanced images.

    Hidden directions come from a scrambled Sobol sequence pushed through the
    Gaussian quantile and normalised, so the first M points are shared by any
    larger M.  ReLU directions are placed at |a| = |b| = 1/sqrt(2); any other
    point of the sphere has a dominated feature.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    dim = model.input_dim + 1
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # Sobol balance warning for non powers of two
        u = qmc.Sobol(dim, scramble=True, seed=seed).random(M)
    g = _normal.ppf(np.clip(u, 1e-12, 1 - 1e-12))
    nrm = np.linalg.norm(g, axis=1, keepdims=True)
    nrm[nrm == 0] = 1.0
    hidden = g / nrm
    if model.kind is FeatureKind.RELU:
        pos = np.hstack([hidden, np.ones((M, 1))]) / np.sqrt(2.0)
    else:
        pos = np.hstack([hidden, np.ones((M, 1))])
    dirs = np.empty((2 * M, model.param_dim))
    dirs[0::2] = pos
    dirs[1::2] = model.balance(pos)
    return dirs


def gamma1_reference(dataset: LabeledDataset, model: FeatureModel, M: int,
                     seed: int = 0) -> float:
    """Certified lower bound on the F1 max-margin from M fixed direction pairs."""
    dirs = reference_directions(model, M, seed)
    Z = build_signed_features(dataset, dirs, model)
    return gamma1_lp(Z.Z).primal_value
