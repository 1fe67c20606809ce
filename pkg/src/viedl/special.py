"""Scalar special functions used by the Dirichlet formulas.

All functions accept a Python float or a numpy array and return the same
kind. Accuracy targets (double precision):

* ``lgamma``   relative error <= 1e-12 on [0.5, 1e6] away from its roots at 1 and 2
  (absolute error <= 1e-14 there).
* ``digamma``  absolute error <= 1e-10 on [0.5, 1e6].
* ``trigamma`` satisfies 1/x < psi'(x) < 1/x + 1/x**2.
"""

import math

import numpy as np

__all__ = ["DomainError", "lgamma", "digamma", "trigamma", "softplus", "sigmoid"]


class DomainError(ValueError):
    """Argument outside the domain of a special function."""


_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

# Bernoulli numbers B_2 .. B_16
_BERNOULLI = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
)

_RECURRENCE_FLOOR = 10.0


def _prepare(x, name):
    scalar = np.ndim(x) == 0
    arr = np.asarray(x, dtype=np.float64)
    if np.any(~(arr > 0.0)):
        raise DomainError(f"{name} requires x > 0")
    return arr, scalar


def _out(arr, scalar):
    return float(arr) if scalar else arr


def _lgamma_lanczos(x):
    # valid for x >= 0.5
    z = x - 1.0
    series = np.full_like(z, _LANCZOS_COEF[0])
    for i, c in enumerate(_LANCZOS_COEF[1:], start=1):
        series = series + c / (z + i)
    t = z + _LANCZOS_G + 0.5
    return _HALF_LOG_2PI + (z + 0.5) * np.log(t) - t + np.log(series)


def lgamma(x):
    """Natural log of the Gamma function for x > 0 (Lanczos, g=7, 9 terms)."""
    arr, scalar = _prepare(x, "lgamma")
    small = arr < 0.5
    if np.any(small):
        # reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x)
        xs = np.where(small, arr, 0.5)
        refl = np.log(np.pi / np.sin(np.pi * xs)) - _lgamma_lanczos(1.0 - xs)
        res = np.where(small, refl, _lgamma_lanczos(np.where(small, 0.5, arr)))
    else:
        res = _lgamma_lanczos(arr)
    return _out(res, scalar)


def _shift_up(arr, step):
    """Apply the upward recurrence until every element is >= the floor.

    ``step(x)`` is the per-shift correction; returns (shifted x, accumulated correction).
    """
    acc = np.zeros_like(arr)
    x = arr.copy()
    # floor-many shifts take any x > 0 past the floor
    for _ in range(int(_RECURRENCE_FLOOR)):
        low = x < _RECURRENCE_FLOOR
        if not np.any(low):
            break
        acc = acc + np.where(low, step(x), 0.0)
        x = np.where(low, x + 1.0, x)
    return x, acc


def digamma(x):
    """psi(x) = d/dx log Gamma(x) for x > 0."""
    arr, scalar = _prepare(x, "digamma")
    x, acc = _shift_up(arr, lambda v: -1.0 / v)
    inv2 = 1.0 / (x * x)
    # sum_{n>=1} B_2n / (2n x^2n), Horner in 1/x^2
    tail = 0.0
    for n in range(len(_BERNOULLI), 0, -1):
        tail = (tail + _BERNOULLI[n - 1] / (2 * n)) * inv2
    res = np.log(x) - 0.5 / x - tail + acc
    return _out(res, scalar)


def trigamma(x):
    """psi'(x), the derivative of the digamma function, for x > 0."""
    arr, scalar = _prepare(x, "trigamma")
    x, acc = _shift_up(arr, lambda v: 1.0 / (v * v))
    inv = 1.0 / x
    inv2 = inv * inv
    # 1/x + 1/(2x^2) + sum_{n>=1} B_2n / x^(2n+1)
    tail = 0.0
    for n in range(len(_BERNOULLI), 0, -1):
        tail = (tail + _BERNOULLI[n - 1]) * inv2
    res = inv + 0.5 * inv2 + tail * inv + acc
    return _out(res, scalar)


def softplus(z):
    """log(1 + exp(z)) without overflow or underflow to zero."""
    scalar = np.ndim(z) == 0
    z = np.asarray(z, dtype=np.float64)
    hi = z > 30.0
    lo = z < -30.0
    mid = ~(hi | lo)
    res = np.empty_like(z)
    res[hi] = z[hi] + np.exp(-z[hi])
    res[lo] = np.exp(z[lo])
    res[mid] = np.log1p(np.exp(z[mid]))
    return _out(res, scalar)


def sigmoid(z):
    """Logistic function; the derivative of softplus."""
    scalar = np.ndim(z) == 0
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(-np.abs(z))
    res = np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _out(res, scalar)
