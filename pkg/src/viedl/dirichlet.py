"""Dirichlet parameters, moments, sampling and the generalized KL divergence.

Operations accept either the parameter dataclasses or plain arrays. Arrays may
be batched: the last axis indexes classes, leading axes are samples.
"""

from dataclasses import dataclass

import numpy as np

from .special import digamma, lgamma, trigamma

ALPHA_MAX = 1e6


class DirichletError(ValueError):
    pass


def _freeze(values):
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class DirichletParams:
    """Concentration vector ``alpha`` restricted to the domain alpha_k >= 1."""

    alpha: np.ndarray

    def __post_init__(self):
        alpha = _freeze(self.alpha)
        if alpha.ndim != 1 or alpha.shape[0] < 2:
            raise DirichletError("alpha must be a vector with at least 2 classes")
        if not np.all(np.isfinite(alpha)):
            raise DirichletError("alpha must be finite")
        if np.any(alpha < 1.0):
            raise DirichletError("every alpha_k must be >= 1")
        if np.any(alpha > ALPHA_MAX):
            raise DirichletError(f"alpha components are capped at {ALPHA_MAX:g}")
        object.__setattr__(self, "alpha", alpha)

    @property
    def k(self):
        return self.alpha.shape[0]

    @property
    def strength(self):
        """Total concentration S."""
        return float(self.alpha.sum())


@dataclass(frozen=True)
class PriorParams:
    """Dirichlet prior vector ``lam`` with every component >= 1."""

    lam: np.ndarray

    def __post_init__(self):
        lam = _freeze(self.lam)
        if lam.ndim != 1 or lam.shape[0] < 2:
            raise DirichletError("prior must be a vector with at least 2 classes")
        if not np.all(np.isfinite(lam)) or np.any(lam < 1.0):
            raise DirichletError("every prior component must be >= 1")
        object.__setattr__(self, "lam", lam)

    @classmethod
    def uniform(cls, k):
        return cls(np.ones(k))

    @property
    def k(self):
        return self.lam.shape[0]

    @property
    def total(self):
        """||lambda||_1."""
        return float(self.lam.sum())


def as_alpha(d):
    if isinstance(d, DirichletParams):
        return d.alpha
    alpha = np.asarray(d, dtype=np.float64)
    if alpha.ndim == 0 or alpha.shape[-1] < 2:
        raise DirichletError("alpha must have at least 2 classes on the last axis")
    if np.any(~(alpha > 0.0)):
        raise DirichletError("alpha must be positive")
    return alpha


def as_prior(prior, k=None):
    if isinstance(prior, PriorParams):
        lam = prior.lam
    else:
        lam = np.asarray(prior, dtype=np.float64)
        if lam.ndim != 1 or np.any(lam < 1.0):
            raise DirichletError("prior must be a vector with components >= 1")
    if k is not None and lam.shape[0] != k:
        raise DirichletError(f"dimension mismatch: alpha has {k} classes, prior has {lam.shape[0]}")
    return lam


def mean(d):
    """Expected class probabilities p_hat = alpha / S."""
    alpha = as_alpha(d)
    return alpha / alpha.sum(axis=-1, keepdims=True)


def uncertainty(d, prior):
    """Epistemic uncertainty ||lambda||_1 / S.

    Requires S >= ||lambda||_1, i.e. alpha was built as evidence + prior.
    """
    alpha = as_alpha(d)
    lam = as_prior(prior, alpha.shape[-1])
    s = alpha.sum(axis=-1)
    total = lam.sum()
    # tolerance for round-off in alpha = e + lambda
    if np.any(s < total * (1.0 - 1e-12)):
        raise DirichletError("S < ||lambda||_1: alpha is not evidence + prior")
    u = np.minimum(total / s, 1.0)
    return float(u) if np.ndim(u) == 0 else u


def expected_log(d):
    """E[log p_k] = psi(alpha_k) - psi(S) under Dir(alpha)."""
    alpha = as_alpha(d)
    return digamma(alpha) - digamma(alpha.sum(axis=-1, keepdims=True))


def sample(d, rng_seed, n):
    """Draw ``n`` points from Dir(alpha) by normalizing independent Gamma(alpha_k, 1) draws."""
    if n < 1:
        raise ValueError("n must be >= 1")
    alpha = as_alpha(d)
    if alpha.ndim != 1:
        raise DirichletError("sample expects a single alpha vector")
    rng = np.random.default_rng(rng_seed)
    g = rng.standard_gamma(alpha, size=(n, alpha.shape[0]))
    return g / g.sum(axis=1, keepdims=True)


def _log_beta(a):
    return lgamma(a).sum(axis=-1) - lgamma(a.sum(axis=-1))


def _as_float(x):
    return float(x) if np.ndim(x) == 0 else x


def effective_kl(d, prior):
    """KL(Dir(alpha) || Dir(lambda)) without the lambda-only constant.

    log Gamma(S) - sum log Gamma(alpha_k) + sum (alpha_k - lambda_k)(psi(alpha_k) - psi(S))
    """
    alpha = as_alpha(d)
    lam = as_prior(prior, alpha.shape[-1])
    s = alpha.sum(axis=-1, keepdims=True)
    cross = ((alpha - lam) * (digamma(alpha) - digamma(s))).sum(axis=-1)
    return _as_float(lgamma(s)[..., 0] - lgamma(alpha).sum(axis=-1) + cross)


def kl_divergence(d, prior):
    """Exact KL(Dir(alpha) || Dir(lambda)), computed in log-Gamma space."""
    alpha = as_alpha(d)
    lam = as_prior(prior, alpha.shape[-1])
    value = effective_kl(alpha, lam) + _log_beta(lam)
    # exact zero at alpha == lambda; round-off below zero is snapped, real negatives are kept
    value = np.where(np.all(alpha == lam, axis=-1) | ((value < 0.0) & (value > -1e-12)), 0.0, value)
    return _as_float(value)


def effective_kl_grad(d, prior):
    """Gradient of :func:`effective_kl` with respect to alpha.

    d/d alpha_i = (alpha_i - lambda_i) psi'(alpha_i) - (S - ||lambda||_1) psi'(S)
    """
    alpha = as_alpha(d)
    lam = as_prior(prior, alpha.shape[-1])
    s = alpha.sum(axis=-1, keepdims=True)
    return (alpha - lam) * trigamma(alpha) - (s - lam.sum()) * trigamma(s)
