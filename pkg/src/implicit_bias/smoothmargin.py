"""Exponential-tail losses and the smooth-margin (soft-min) functionals.

All reductions go through a max-shifted log-sum-exp: the scale ``beta`` of the
margins grows without bound during training.
"""
from __future__ import annotations

import enum

import numpy as np
from scipy.special import logsumexp, softmax


class LossKind(str, enum.Enum):
    EXPONENTIAL = "exponential"
    LOGISTIC = "logistic"


def _margins(u) -> np.ndarray:
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.ndim != 1 or u.size < 1:
        raise ValueError("margin vector must be a non-empty 1-d array")
    return u


def loss(kind: LossKind, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if LossKind(kind) is LossKind.EXPONENTIAL:
        return np.exp(v)
    return np.logaddexp(0.0, v)


def loss_prime(kind: LossKind, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if LossKind(kind) is LossKind.EXPONENTIAL:
        return np.exp(v)
    return np.exp(-np.logaddexp(0.0, -v))


def log_loss(kind: LossKind, v) -> np.ndarray:
    """log l(v), accurate far into the exponential tail."""
    v = np.asarray(v, dtype=float)
    if LossKind(kind) is LossKind.EXPONENTIAL:
        return v.copy()
    out = np.empty_like(v)
    tail = v < -30.0
    head = ~tail
    out[head] = np.log(np.logaddexp(0.0, v[head]))
    # log(log1p(e^v)) = v + log(log1p(e^v) / e^v); the ratio is 1 - e^v/2 + ...
    ev = np.exp(v[tail])
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.where(ev > 0, np.log(np.log1p(ev) / np.where(ev > 0, ev, 1.0)), 0.0)
    out[tail] = v[tail] + corr
    return out


def log_loss_prime(kind: LossKind, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if LossKind(kind) is LossKind.EXPONENTIAL:
        return v.copy()
    return -np.logaddexp(0.0, -v)


def smooth_margin(kind: LossKind, u) -> float:
    """S(u) = -log((1/n) sum_i l(-u_i))."""
    u = _margins(u)
    return float(np.log(u.size) - logsumexp(log_loss(kind, -u)))


def smooth_margin_grad(kind: LossKind, u) -> np.ndarray:
    """Gradient of ``smooth_margin``: ``l'(-u_i) / sum_k l(-u_k)``.

    The 1/n inside the logarithm cancels between numerator and denominator,
    so this is exactly the derivative of ``smooth_margin``.  For the
    exponential loss the result is a point of the simplex.
    """
    u = _margins(u)
    if LossKind(kind) is LossKind.EXPONENTIAL:
        return softmax(-u)
    return np.exp(log_loss_prime(kind, -u) - logsumexp(log_loss(kind, -u)))


def soft_min(kind: LossKind, u, beta: float) -> float:
    """S_beta(u) = S(beta * u) / beta, within log(n)/beta of min(u) for positive u."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    return smooth_margin(kind, beta * _margins(u)) / beta


def _check_beta(Z, a, beta):
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    a = np.asarray(a, dtype=float).reshape(-1)
    if Z.shape[1] != a.shape[0]:
        raise ValueError(f"Z has {Z.shape[1]} columns but a has {a.shape[0]} entries")
    return Z, a


def g_beta(Z, a, beta: float) -> float:
    """G_beta(a) = -(1/beta) log((1/n) sum_i exp(-beta z_i . a))."""
    Z, a = _check_beta(Z, a, beta)
    return float((np.log(Z.shape[0]) - logsumexp(-beta * (Z @ a))) / beta)


def g_beta_weights(Z, a, beta: float) -> np.ndarray:
    """Softmin weights p in the simplex such that grad G_beta(a) = Z^T p."""
    Z, a = _check_beta(Z, a, beta)
    return softmax(-beta * (Z @ a))


def g_beta_grad(Z, a, beta: float) -> np.ndarray:
    Z, a = _check_beta(Z, a, beta)
    return Z.T @ softmax(-beta * (Z @ a))
