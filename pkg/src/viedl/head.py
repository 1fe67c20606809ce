"""Cosine prototype evidence layer.

Evidence for class k is ``softplus(gamma * (cos(x, r_k) - m))`` so it is capped
at ``softplus(gamma * (1 - m))`` whatever the feature magnitude.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .dirichlet import as_prior
from .special import sigmoid, softplus

logger = logging.getLogger(__name__)

MARGIN_LIMIT = 0.99


def _row_norms(x):
    """Euclidean row norms that do not overflow for entries near the float limit."""
    peak = np.max(np.abs(x), axis=-1)
    safe = np.where(peak > 0.0, peak, 1.0)
    return peak * np.sqrt(np.sum((x / safe[..., None]) ** 2, axis=-1))


def cosine(feature, prototype):
    """Cosine similarity clamped to [-1, 1]; a zero vector gives 0."""
    feature = np.asarray(feature, dtype=np.float64)
    prototype = np.asarray(prototype, dtype=np.float64)
    if feature.shape[-1] != prototype.shape[-1]:
        raise ValueError("feature and prototype dimensions differ")
    fn = float(_row_norms(feature))
    pn = float(_row_norms(prototype))
    if fn == 0.0 or pn == 0.0:
        return 0.0
    return float(np.clip((feature / fn) @ (prototype / pn), -1.0, 1.0))


@dataclass
class HeadCache:
    unit_x: np.ndarray
    unit_r: np.ndarray
    x_norm: np.ndarray
    r_norm: np.ndarray
    cos: np.ndarray
    z: np.ndarray
    zero_mask: np.ndarray


class EvidenceHead:
    """Learnable prototypes, scale and margin.

    The scale is stored as its logarithm so gradient steps keep it positive.

    Parameters
    ----------
    prototypes : array of shape (n_classes, feature_dim)
    scale : float
        gamma > 0.
    margin : float
        m in [-1, 1].
    """

    def __init__(self, prototypes, scale=5.0, margin=0.0):
        prototypes = np.array(prototypes, dtype=np.float64)
        if prototypes.ndim != 2 or prototypes.shape[0] < 2:
            raise ValueError("prototypes must be a (K, d) matrix with K >= 2")
        if np.any(np.linalg.norm(prototypes, axis=1) <= 0.0):
            raise ValueError("every prototype needs a nonzero norm")
        if not scale > 0:
            raise ValueError("scale must be positive")
        if not -1.0 <= margin <= 1.0:
            raise ValueError("margin must lie in [-1, 1]")
        self.prototypes = prototypes
        self.log_scale = np.array(np.log(scale))
        self.margin_ = np.array(float(margin))

    @classmethod
    def initialize(cls, n_classes, feature_dim, rng):
        bound = 1.0 / np.sqrt(feature_dim)
        protos = rng.uniform(-bound, bound, size=(n_classes, feature_dim))
        return cls(protos, scale=5.0, margin=0.0)

    @property
    def n_classes(self):
        return self.prototypes.shape[0]

    @property
    def feature_dim(self):
        return self.prototypes.shape[1]

    @property
    def scale(self):
        return float(np.exp(self.log_scale))

    @property
    def margin(self):
        return float(self.margin_)

    def parameters(self):
        return [self.prototypes, self.log_scale, self.margin_]

    def clamp_margin(self):
        np.clip(self.margin_, -MARGIN_LIMIT, MARGIN_LIMIT, out=self.margin_)

    def evidence_ceiling(self):
        return softplus(self.scale * (1.0 - self.margin))

    def forward(self, features):
        """Evidence for a batch of features, shape (n, d) -> (n, K)."""
        x = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if x.shape[1] != self.feature_dim:
            raise ValueError(f"expected features of dimension {self.feature_dim}, got {x.shape[1]}")
        x_norm = _row_norms(x)
        zero_mask = x_norm == 0.0
        if np.any(zero_mask):
            logger.warning("%d zero feature vector(s); cosine set to 0", int(zero_mask.sum()))
        x_norm = np.where(zero_mask, 1.0, x_norm)
        r_norm = _row_norms(self.prototypes)
        unit_x = x / x_norm[:, None]
        unit_r = self.prototypes / r_norm[:, None]
        cos = np.clip(unit_x @ unit_r.T, -1.0, 1.0)
        z = self.scale * (cos - self.margin)
        cache = HeadCache(unit_x, unit_r, x_norm, r_norm, cos, z, zero_mask)
        return softplus(z), cache

    def backward(self, cache, grad_e):
        """Chain ``grad_e`` (n, K) back through the head.

        Returns a dict with ``features``, ``prototypes``, ``scale``, ``log_scale``
        and ``margin`` gradients. The clamp on the cosine is treated as identity.
        """
        grad_e = np.asarray(grad_e, dtype=np.float64)
        gz = grad_e * sigmoid(cache.z)
        gamma = self.scale
        grad_scale = float(np.sum(gz * (cache.cos - self.margin)))
        grad_margin = -gamma * float(np.sum(gz))
        gc = gamma * gz
        # d cos / d x = (r_hat - cos x_hat) / |x|
        gx = (gc @ cache.unit_r - np.sum(gc * cache.cos, axis=1)[:, None] * cache.unit_x) / cache.x_norm[:, None]
        gx[cache.zero_mask] = 0.0
        gc_live = np.where(cache.zero_mask[:, None], 0.0, gc)
        gr = (gc_live.T @ cache.unit_x - np.sum(gc_live * cache.cos, axis=0)[:, None] * cache.unit_r) / cache.r_norm[:, None]
        return {
            "features": gx,
            "prototypes": gr,
            "scale": grad_scale,
            "log_scale": grad_scale * gamma,
            "margin": grad_margin,
        }


def evidence(head, feature):
    """Evidence vector for a single feature (or a batch)."""
    e, _ = head.forward(feature)
    return e[0] if np.ndim(feature) == 1 else e


def to_dirichlet(e, prior):
    """Conjugate update alpha = e + lambda."""
    e = np.asarray(e, dtype=np.float64)
    if np.any(e < 0):
        raise ValueError("evidence must be non-negative")
    lam = as_prior(prior, e.shape[-1])
    return e + lam


def evidence_backward(head, feature, grad_e):
    """Gradients of ``grad_e . evidence(head, feature)``.

    Returns ``(grad_feature, grad_prototypes, grad_gamma, grad_margin)``.
    """
    single = np.ndim(feature) == 1
    _, cache = head.forward(feature)
    g = head.backward(cache, np.atleast_2d(grad_e))
    gx = g["features"][0] if single else g["features"]
    return gx, g["prototypes"], g["scale"], g["margin"]
