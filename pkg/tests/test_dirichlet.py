import mpmath as mp
import numpy as np
import pytest

from conftest import central_diff, mc_kl, rel_err
from viedl.dirichlet import (
    ALPHA_MAX,
    DirichletError,
    DirichletParams,
    PriorParams,
    effective_kl,
    effective_kl_grad,
    expected_log,
    kl_divergence,
    mean,
    sample,
    uncertainty,
)
from viedl.special import lgamma, trigamma


@pytest.mark.parametrize(
    "alpha, expected",
    [((1, 1), (0.5, 0.5)), ((2, 1, 1), (0.5, 0.25, 0.25)), ((3, 7), (0.3, 0.7))],
)
def test_mean(alpha, expected):
    assert np.allclose(mean(DirichletParams(alpha)), expected, atol=1e-15)


def test_uncertainty_examples():
    assert uncertainty(np.ones(10), np.ones(10)) == 1.0
    a = np.ones(10)
    a[0] = 11
    assert uncertainty(a, np.ones(10)) == 0.5
    assert uncertainty(DirichletParams((2, 2)), PriorParams((1, 1))) == 0.5


def test_uncertainty_rejects_alpha_below_prior_mass():
    with pytest.raises(DirichletError):
        uncertainty((1.0, 1.0), (2.0, 2.0))


def test_expected_log_flat():
    assert np.allclose(expected_log((1, 1)), (-1.0, -1.0), atol=1e-14)


@pytest.mark.parametrize("seed", range(20))
def test_expected_log_monte_carlo(seed):
    rng = np.random.default_rng(100 + seed)
    alpha = np.array([3.0, 4.0, 5.0]) if seed == 0 else rng.uniform(1, 20, size=rng.integers(2, 6))
    logs = np.log(sample(alpha, seed, 10**6))
    se = logs.std(axis=0, ddof=1) / 1e3
    assert np.all(np.abs(logs.mean(axis=0) - expected_log(alpha)) <= 3 * se)


def test_sample_means():
    x = sample((1.0, 1.0), 0, 10**6)
    assert np.all(np.abs(x.mean(axis=0) - 0.5) <= 0.002)
    x = sample((5.0, 1.0), 1, 10**6)
    se = x.std(axis=0, ddof=1) / 1e3
    assert np.all(np.abs(x.mean(axis=0) - np.array([5, 1]) / 6) <= 3 * se)


def test_sample_deterministic():
    assert np.array_equal(sample((2.0, 3.0, 4.0), 11, 100), sample((2.0, 3.0, 4.0), 11, 100))
    assert not np.array_equal(sample((2.0, 3.0, 4.0), 11, 100), sample((2.0, 3.0, 4.0), 12, 100))


def test_kl_identical_is_zero():
    assert abs(kl_divergence((3, 4, 5), (3, 4, 5))) <= 1e-12


def test_kl_closed_form_value():
    # log 2 + psi(2) - psi(3) = log 2 - 1/2
    assert kl_divergence((2, 1), (1, 1)) == pytest.approx(np.log(2) - 0.5, abs=1e-14)


@pytest.mark.parametrize(
    "alpha, lam", [((2, 1), (1, 1)), ((4, 4, 4), (1, 1, 1)), ((1.5, 7.0, 2.0, 30.0), (1.0, 2.0, 1.0, 3.0))]
)
def test_kl_monte_carlo(alpha, lam):
    est, se = mc_kl(alpha, lam, 10**6, 3)
    assert abs(kl_divergence(alpha, lam) - est) <= 3 * se


def test_kl_against_mpmath_closed_form():
    rng = np.random.default_rng(9)
    for _ in range(30):
        k = int(rng.integers(2, 8))
        a = rng.uniform(1, 300, k)
        lam = rng.uniform(1, 3, k)
        s, t = mp.fsum(a), mp.fsum(lam)
        ref = mp.loggamma(s) - mp.fsum(mp.loggamma(v) for v in a) - mp.loggamma(t) + mp.fsum(mp.loggamma(v) for v in lam)
        ref += mp.fsum((ai - li) * (mp.digamma(ai) - mp.digamma(s)) for ai, li in zip(a, lam))
        assert kl_divergence(a, lam) == pytest.approx(float(ref), rel=1e-9, abs=1e-9)


def test_kl_nonnegative():
    rng = np.random.default_rng(10)
    k = 5
    alpha = np.exp(rng.uniform(0, np.log(1e3), (10**4, k)))
    lam = rng.uniform(1, 3, k)
    assert np.all(kl_divergence(alpha, lam) > 0)


def test_effective_kl_offset():
    for k in (2, 3, 10):
        assert effective_kl(np.ones(k), np.ones(k)) == pytest.approx(lgamma(float(k)), abs=1e-13)
    rng = np.random.default_rng(11)
    a, lam = rng.uniform(1, 50, 4), rng.uniform(1, 3, 4)
    offset = lgamma(lam).sum() - lgamma(lam.sum())
    assert kl_divergence(a, lam) == pytest.approx(effective_kl(a, lam) + offset, abs=1e-12)


def test_effective_kl_grad_values():
    assert np.all(effective_kl_grad((3, 4, 5), (3, 4, 5)) == 0.0)
    g = effective_kl_grad((2, 1), (1, 1))
    assert g[0] == pytest.approx(trigamma(2.0) - trigamma(3.0), abs=1e-14)


def test_effective_kl_grad_finite_differences():
    rng = np.random.default_rng(12)
    for _ in range(100):
        k = int(rng.integers(2, 11))
        a, lam = rng.uniform(1, 50, k), rng.uniform(1, 3, k)
        fd = central_diff(lambda x: effective_kl(x, lam), a)
        assert rel_err(effective_kl_grad(a, lam), fd) < 1e-5


def test_effective_kl_grad_component_bounds():
    rng = np.random.default_rng(13)
    for k in (2, 5, 10, 100):
        lam = rng.uniform(1, 3, k)
        alpha = lam + np.exp(rng.uniform(0, np.log(1e3), (10**5 // k * 2, k))) - 1
        s = alpha.sum(axis=1, keepdims=True)
        own = np.abs((alpha - lam) * trigamma(alpha))
        total = np.abs((s - lam.sum()) * trigamma(s))
        assert np.all(own < 1 + 1 / lam)
        assert np.all(total < 1 + 1 / lam.sum())
        bound = 2 + 1 / lam.min() + 1 / lam.sum()
        assert np.max(np.abs(effective_kl_grad(alpha, lam))) < bound


def test_batched_matches_rowwise():
    rng = np.random.default_rng(14)
    a, lam = rng.uniform(1, 9, (7, 3)), np.array([1.0, 2.0, 1.5])
    assert np.allclose(kl_divergence(a, lam), [kl_divergence(r, lam) for r in a], rtol=0, atol=1e-14)


@pytest.mark.parametrize(
    "alpha",
    [(1.0,), (0.5, 2.0), (1.0, np.nan), (1.0, np.inf), (1.0, ALPHA_MAX * 2)],
)
def test_params_validation(alpha):
    with pytest.raises(DirichletError):
        DirichletParams(alpha)


def test_prior_validation_and_dimension_mismatch():
    with pytest.raises(DirichletError):
        PriorParams((0.5, 1.0))
    with pytest.raises(DirichletError):
        kl_divergence((2, 1, 1), (1, 1))
    with pytest.raises(DirichletError):
        effective_kl_grad((2, 1), (1, 1, 1))
    assert PriorParams.uniform(4).total == 4.0


def test_params_immutable():
    d = DirichletParams((2.0, 3.0))
    with pytest.raises(ValueError):
        d.alpha[0] = 5.0
    assert d.strength == 5.0 and d.k == 2
