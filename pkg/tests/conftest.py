import mpmath as mp
import numpy as np


def log_dirichlet_norm(a):
    """log Gamma(sum a) - sum log Gamma(a), evaluated with mpmath."""
    return float(mp.loggamma(mp.fsum(a)) - mp.fsum(mp.loggamma(v) for v in a))


def mc_kl(alpha, lam, n, seed):
    """Monte Carlo E_alpha[log q_alpha(p) - log q_lam(p)] and its standard error."""
    p = np.random.default_rng(seed).dirichlet(alpha, size=n)
    logp = np.log(p)
    ratio = log_dirichlet_norm(alpha) - log_dirichlet_norm(lam) + logp @ (np.asarray(alpha) - np.asarray(lam))
    return ratio.mean(), ratio.std(ddof=1) / np.sqrt(n)


def mc_expected_sq_error(alpha, y, n, seed):
    p = np.random.default_rng(seed).dirichlet(alpha, size=n)
    v = np.sum((np.asarray(y) - p) ** 2, axis=1)
    return v.mean(), v.std(ddof=1) / np.sqrt(n)


def central_diff(f, x, h=1e-6, five_point=False):
    """Central finite-difference gradient of scalar f at array x.

    The five-point stencil tolerates a larger step, which matters when f is a
    difference of large log-Gamma terms.
    """
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        step = h * max(1.0, abs(old))
        vals = []
        for m in (1, -1, 2, -2) if five_point else (1, -1):
            x[idx] = old + m * step
            vals.append(f(x))
        x[idx] = old
        if five_point:
            g[idx] = (8 * (vals[0] - vals[1]) - (vals[2] - vals[3])) / (12 * step)
        else:
            g[idx] = (vals[0] - vals[1]) / (2 * step)
    return g


def rel_err(a, b, floor=1e-8):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b)) / max(floor, np.max(np.abs(a)), np.max(np.abs(b))))


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "VERDICTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
