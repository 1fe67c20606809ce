"""Variational evidential loss, its gradient, and the standard EDL baseline.

The per-sample loss is

    sum_k (y_k - p_k)^2 + sum_k p_k (1 - p_k) / (S + 1) + anneal * beta * KL~(alpha || lambda)

where KL~ is the KL divergence to the prior with lambda-only constants dropped.
Functions work on a single alpha vector or a batch of shape (n, K).
"""

from dataclasses import dataclass

import numpy as np

from .dirichlet import as_alpha, as_prior, effective_kl, effective_kl_grad, kl_divergence, PriorParams


class LabelError(ValueError):
    pass


@dataclass
class LossConfig:
    """beta: KL weight; prior: lambda (None means all ones); warmup_epochs: annealing length."""

    beta: float = 0.1
    prior: object = None
    warmup_epochs: int = 20

    def __post_init__(self):
        if not self.beta >= 0:
            raise ValueError("beta must be >= 0")
        if int(self.warmup_epochs) != self.warmup_epochs or self.warmup_epochs < 1:
            raise ValueError("warmup_epochs must be an integer >= 1")
        if self.prior is not None and not isinstance(self.prior, PriorParams):
            self.prior = PriorParams(self.prior)

    def prior_vector(self, k):
        if self.prior is None:
            return np.ones(k)
        return as_prior(self.prior, k)


def one_hot(labels, k):
    labels = np.asarray(labels, dtype=np.int64)
    y = np.zeros(labels.shape + (k,))
    np.put_along_axis(y, labels[..., None], 1.0, axis=-1)
    return y


def _check_labels(y, k):
    y = np.asarray(y, dtype=np.float64)
    if y.shape[-1] != k:
        raise LabelError(f"label vector has {y.shape[-1]} classes, expected {k}")
    if not (np.all((y == 0.0) | (y == 1.0)) and np.all(y.sum(axis=-1) == 1.0)):
        raise LabelError("labels must be one-hot")
    return y


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def expected_mse(d, y):
    """Expected squared error under Dir(alpha), split as (total, bias, variance)."""
    alpha = as_alpha(d)
    y = _check_labels(y, alpha.shape[-1])
    s = alpha.sum(axis=-1, keepdims=True)
    p = alpha / s
    bias = np.sum((y - p) ** 2, axis=-1)
    variance = np.sum(p * (1.0 - p), axis=-1) / (s[..., 0] + 1.0)
    return _scalar(bias + variance), _scalar(bias), _scalar(variance)


def expected_mse_grad(d, y):
    alpha = as_alpha(d)
    y = _check_labels(y, alpha.shape[-1])
    s = alpha.sum(axis=-1, keepdims=True)
    p = alpha / s
    r = y - p
    # d p_j / d alpha_i = (delta_ij - p_j) / S
    g_bias = -2.0 / s * (r - np.sum(r * p, axis=-1, keepdims=True))
    sq = np.sum(p * p, axis=-1, keepdims=True)
    g_var = -(1.0 - sq) / (s + 1.0) ** 2 - 2.0 / (s * (s + 1.0)) * (p - sq)
    return g_bias + g_var


def vi_loss(d, y, cfg, anneal=1.0):
    alpha = as_alpha(d)
    total, _, _ = expected_mse(alpha, y)
    weight = anneal * cfg.beta
    if weight == 0.0:
        return total
    return _scalar(total + weight * effective_kl(alpha, cfg.prior_vector(alpha.shape[-1])))


def vi_loss_grad(d, y, cfg, anneal=1.0):
    alpha = as_alpha(d)
    grad = expected_mse_grad(alpha, y)
    weight = anneal * cfg.beta
    if weight == 0.0:
        return grad
    return grad + weight * effective_kl_grad(alpha, cfg.prior_vector(alpha.shape[-1]))


def vi_loss_terms(alpha, y, cfg, anneal):
    """Per-sample (bias, variance, weighted KL) and the gradient of their sum."""
    alpha = as_alpha(alpha)
    k = alpha.shape[-1]
    _, bias, variance = expected_mse(alpha, y)
    grad = expected_mse_grad(alpha, y)
    weight = anneal * cfg.beta
    if weight > 0.0:
        lam = cfg.prior_vector(k)
        kl = weight * np.asarray(effective_kl(alpha, lam))
        grad = grad + weight * effective_kl_grad(alpha, lam)
    else:
        kl = np.zeros_like(np.asarray(bias))
    return np.asarray(bias), np.asarray(variance), kl, grad


def masked_alpha(d, y):
    """alpha~ = y + (1 - y) * alpha: true-class evidence removed."""
    alpha = as_alpha(d)
    y = _check_labels(y, alpha.shape[-1])
    return y + (1.0 - y) * alpha


def edl_baseline_loss(d, y, anneal_t=1.0):
    """Standard EDL loss: expected MSE plus annealed KL of the masked Dirichlet to Dir(1)."""
    alpha = as_alpha(d)
    total, _, _ = expected_mse(alpha, y)
    a_tilde = masked_alpha(alpha, y)
    kl = kl_divergence(a_tilde, np.ones(alpha.shape[-1]))
    return _scalar(total + anneal_t * kl)


def edl_baseline_grad(d, y, anneal_t=1.0):
    alpha = as_alpha(d)
    y = _check_labels(y, alpha.shape[-1])
    a_tilde = masked_alpha(alpha, y)
    # the mask zeroes the true-class derivative
    kl_grad = effective_kl_grad(a_tilde, np.ones(alpha.shape[-1])) * (1.0 - y)
    return expected_mse_grad(alpha, y) + anneal_t * kl_grad
