"""Closed-form bound constants and numerical certification of the gradient bound.

The generalization bound's hidden O(.) constant is fixed to 1, so reported gap
values are only meaningful for comparisons and monotonicity checks.
"""

from dataclasses import dataclass, field

import numpy as np

from .loss import LossConfig, vi_loss_grad


def _prior(prior, k=None):
    lam = np.asarray(prior, dtype=np.float64)
    if lam.ndim != 1 or np.any(lam < 1.0):
        raise ValueError("prior components must be >= 1")
    if k is not None and lam.shape[0] != k:
        raise ValueError("prior length must equal K")
    return lam


def mse_gradient_constant(k):
    """Bound on |d L_MSE / d alpha_i| over alpha_i >= 1: 2 + 1/(K+1)^2 + 2/(K(K+1))."""
    return 2.0 + 1.0 / (k + 1) ** 2 + 2.0 / (k * (k + 1))


def kl_gradient_constant(prior):
    """Bound on |d KL~ / d alpha_i|: 2 + 1/min(lambda) + 1/||lambda||_1."""
    lam = _prior(prior)
    return 2.0 + 1.0 / lam.min() + 1.0 / lam.sum()


def lipschitz_constant(k, beta, prior):
    """L_h, the sup-norm bound on the loss gradient with respect to alpha."""
    if k < 2:
        raise ValueError("K must be >= 2")
    if beta < 0:
        raise ValueError("beta must be >= 0")
    return float(mse_gradient_constant(k) + beta * kl_gradient_constant(_prior(prior, k)))


def evidence_capacity(prior, mu_min):
    """Total-evidence ceiling M = ||lambda||_1 (1/mu_min - 1) implied by u >= mu_min."""
    if not 0.0 < mu_min <= 1.0:
        raise ValueError("mu_min must lie in (0, 1]; mu_min = 0 leaves evidence unbounded")
    return float(_prior(prior).sum() * (1.0 / mu_min - 1.0))


@dataclass
class BoundInputs:
    k_classes: int
    beta: float
    prior: np.ndarray
    mu_min: float
    radius: float
    spectral_norms: np.ndarray
    activation_lipschitz: np.ndarray = field(default_factory=lambda: np.ones(0))
    n_samples: int = 1
    loss_bound: float = 1.0
    confidence: float = 0.05

    def __post_init__(self):
        self.prior = _prior(self.prior, self.k_classes)
        self.spectral_norms = np.asarray(self.spectral_norms, dtype=np.float64)
        self.activation_lipschitz = np.asarray(self.activation_lipschitz, dtype=np.float64)
        if not 0.0 < self.mu_min <= 1.0:
            raise ValueError("mu_min must lie in (0, 1]")
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence delta must lie in (0, 1)")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.radius < 0 or self.loss_bound < 0:
            raise ValueError("radius and loss_bound must be non-negative")


def bracket_constant(k, beta, prior):
    """2 + 1/(K+1)^2 + 2/(K(K+1)) + 2 beta + beta / min(lambda)."""
    lam = _prior(prior, k)
    return mse_gradient_constant(k) + 2.0 * beta + beta / lam.min()


def complexity_term(b):
    """(C ||lambda||_1 + beta)(1/mu_min - 1) R sqrt(K) prod(L_sigma) prod(||W||_2) / sqrt(n)."""
    c = bracket_constant(b.k_classes, b.beta, b.prior)
    lead = c * b.prior.sum() + b.beta
    net = np.prod(b.activation_lipschitz) * np.prod(b.spectral_norms)
    return float(lead * (1.0 / b.mu_min - 1.0) * b.radius * np.sqrt(b.k_classes) * net / np.sqrt(b.n_samples))


def concentration_term(b):
    """3 B sqrt(log(2/delta) / (2n))."""
    return float(3.0 * b.loss_bound * np.sqrt(np.log(2.0 / b.confidence) / (2.0 * b.n_samples)))


def generalization_gap(b):
    return complexity_term(b) + concentration_term(b)


def bound_inputs_from_state(state, data, mu_min, loss_bound=None, confidence=0.05, beta=0.0):
    """Collect the bound ingredients from a trained state and its training set.

    Activation constants of all but the last layer enter the product. The radius
    is measured on the inputs the network actually sees (after standardization).
    """
    from .data import feature_radius

    x = state.scale_inputs(data.features)
    k = state.n_classes
    return BoundInputs(
        k_classes=k,
        beta=beta,
        prior=state.prior,
        mu_min=mu_min,
        radius=feature_radius(x),
        spectral_norms=state.net.spectral_norms(),
        activation_lipschitz=state.net.activation_lipschitz()[:-1],
        n_samples=len(data),
        loss_bound=2.0 if loss_bound is None else loss_bound,
        confidence=confidence,
    )


@dataclass(frozen=True)
class Certificate:
    k: int
    beta: float
    prior_label: str
    trials: int
    empirical_sup: float
    bound: float
    mse_sup: float
    mse_bound: float

    @property
    def passed(self):
        return self.empirical_sup <= self.bound and self.mse_sup <= self.mse_bound

    @property
    def margin(self):
        return self.bound - self.empirical_sup


def sample_domain(k, prior, trials, rng, alpha_max=1e3):
    """Random (alpha, one-hot y) pairs with alpha = lambda + e, 1 + e log-uniform in [1, alpha_max]."""
    lam = _prior(prior, k)
    t = np.exp(rng.uniform(0.0, np.log(alpha_max), size=(trials, k)))
    alpha = lam + (t - 1.0)
    y = np.zeros((trials, k))
    y[np.arange(trials), rng.integers(0, k, size=trials)] = 1.0
    return alpha, y


def certify_gradient_bound(k, beta, prior, trials, seed, grad_fn=None, chunk_elems=2_000_000):
    """Empirical sup of ||grad_alpha L_VI||_inf at anneal = 1 against :func:`lipschitz_constant`.

    ``grad_fn(alpha, y, cfg)`` replaces the gradient under test (used for negative controls).
    Returns a :class:`Certificate`; the MSE-only part is tracked alongside.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    lam = _prior(prior, k)
    cfg = LossConfig(beta=beta, prior=lam)
    mse_cfg = LossConfig(beta=0.0, prior=lam)
    grad_fn = grad_fn or (lambda a, y, c: vi_loss_grad(a, y, c, 1.0))
    rng = np.random.default_rng(seed)
    step = max(1, chunk_elems // k)
    sup = mse_sup = 0.0
    done = 0
    while done < trials:
        m = min(step, trials - done)
        alpha, y = sample_domain(k, lam, m, rng)
        sup = max(sup, float(np.max(np.abs(grad_fn(alpha, y, cfg)))))
        mse_sup = max(mse_sup, float(np.max(np.abs(grad_fn(alpha, y, mse_cfg)))))
        done += m
    label = "ones" if np.all(lam == 1.0) else "mixed"
    return Certificate(k, beta, label, trials, sup, lipschitz_constant(k, beta, lam), mse_sup, mse_gradient_constant(k))


def default_grid(seed=0):
    """K in {2, 5, 10, 100} x beta in {0, 0.1, 0.5, 1} x prior in {ones, mixed in [1, 3]^K}."""
    rng = np.random.default_rng(seed)
    grid = []
    for k in (2, 5, 10, 100):
        mixed = rng.uniform(1.0, 3.0, size=k)
        for beta in (0.0, 0.1, 0.5, 1.0):
            grid.append((k, beta, np.ones(k)))
            grid.append((k, beta, mixed))
    return grid
