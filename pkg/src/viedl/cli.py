"""Command-line entry point.

Exit codes: 0 success, 2 usage/config error, 3 numerical failure, 4 certification failure.
"""

import argparse
import csv
import logging
import sys

import numpy as np

from . import data as datamod
from .evaluation import auroc, evaluate, format_table, fpr_at_95_tpr, predict, simplex_points, write_reports_csv
from .theory import certify_gradient_bound, default_grid
from .train import (
    TrainConfig,
    fit,
    load_checkpoint,
    load_config,
    save_checkpoint,
    write_log_csv,
)
from .loss import vi_loss_grad

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3
EXIT_CERT = 4

DEFAULT_SYNTHETIC = "blobs:k=3,n=500,d=2,sep=6,spread=1,seed=7"

log = logging.getLogger("viedl")


class UsageError(Exception):
    pass


def _load_data(source):
    """A CSV path or a synthetic spec such as ``blobs:...`` / ``ood:...``."""
    if source.startswith(("blobs:", "ood:")):
        try:
            return datamod.parse_synthetic(source)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    try:
        return datamod.load_csv(source)
    except (OSError, datamod.DatasetFormatError) as exc:
        raise UsageError(str(exc)) from None


def _load_state(path):
    try:
        return load_checkpoint(path)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot load checkpoint {path}: {exc}") from None


def _check_dim(state, ds):
    if ds.dim != state.net.input_dim:
        raise UsageError(f"{ds.name}: dimension {ds.dim} does not match checkpoint input dimension {state.net.input_dim}")


def cmd_train(args):
    if args.config:
        try:
            cfg = load_config(args.config)
        except OSError as exc:
            raise UsageError(str(exc)) from None
    else:
        cfg = TrainConfig()
    ds = _load_data(args.data) if args.data else _load_data(args.synthetic or DEFAULT_SYNTHETIC)
    if ds.labels is None:
        raise UsageError(f"{ds.name}: training data needs a label column")
    try:
        state = fit(ds, cfg)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    save_checkpoint(state, args.out)
    log_path = args.log or f"{args.out}.log.csv"
    write_log_csv(state, log_path)
    if state.log:
        last = state.log[-1]
        print(f"trained {state.epoch} epochs on {ds.name}: loss={last['loss']:.5f} mean_u={last['mean_uncertainty']:.4f}")
    print(f"checkpoint: {args.out}\nlog: {log_path}")
    return EXIT_OK


def cmd_eval(args):
    state = _load_state(args.checkpoint)
    ds = _load_data(args.data)
    _check_dim(state, ds)
    labels, p_hat, u = predict(state, ds.features)
    if ds.labels is not None:
        print(f"accuracy: {np.mean(labels == ds.labels):.4f}")
    print(f"mean uncertainty: {np.mean(u):.4f}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "label", "uncertainty"] + [f"p{k}" for k in range(p_hat.shape[1])])
            for i in range(len(ds)):
                w.writerow([i, int(labels[i]), repr(float(u[i]))] + [repr(float(v)) for v in p_hat[i]])
    return EXIT_OK


def _write_table(text, out):
    print(text, end="")
    if out:
        with open(f"{out}.txt", "w") as fh:
            fh.write(text)


def cmd_ood(args):
    state = _load_state(args.checkpoint)
    id_ds = _load_data(args.id)
    _check_dim(state, id_ds)
    reports = []
    for source in args.ood:
        ood_ds = _load_data(source)
        _check_dim(state, ood_ds)
        reports.append(evaluate(state, id_ds, ood_ds))
    if args.out:
        write_reports_csv(reports, args.out)
    _write_table(format_table(reports), args.out)
    return EXIT_OK


def _parse_sigmas(text):
    try:
        sigmas = [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"malformed sigma list {text!r}") from None
    if not sigmas or any(not np.isfinite(s) or s < 0 for s in sigmas):
        raise UsageError(f"malformed sigma list {text!r}")
    return sigmas


NOISE_COLUMNS = ("sigma", "sigma_abs", "auroc", "fpr95", "mean_unc_clean", "mean_unc_noisy", "unc_diff")


def noise_sweep(state, ds, sigmas, scale=1.0, seed=0):
    """Clean (as ID) versus noisy copies (as OOD) for each sigma; one shared noise draw."""
    _, _, u_clean = predict(state, ds.features)
    rows = []
    for sigma in sigmas:
        noisy = datamod.add_gaussian_noise(ds, sigma * scale, seed)
        _, _, u_noisy = predict(state, noisy.features)
        rows.append(
            {
                "sigma": sigma,
                "sigma_abs": sigma * scale,
                "auroc": auroc(u_clean, u_noisy),
                "fpr95": fpr_at_95_tpr(u_clean, u_noisy),
                "mean_unc_clean": float(np.mean(u_clean)),
                "mean_unc_noisy": float(np.mean(u_noisy)),
                "unc_diff": float(np.mean(u_noisy) - np.mean(u_clean)),
            }
        )
    return rows


def cmd_noise(args):
    sigmas = _parse_sigmas(args.sigmas)
    state = _load_state(args.checkpoint)
    ds = _load_data(args.data)
    _check_dim(state, ds)
    scale = datamod.feature_radius(ds) if args.scale == "radius" else 1.0
    rows = noise_sweep(state, ds, sigmas, scale, args.seed)
    lines = ["  ".join(f"{c:>14}" for c in NOISE_COLUMNS)]
    lines += ["  ".join(f"{r[c]:>14.6f}" for c in NOISE_COLUMNS) for r in rows]
    text = f"noise sweep on {ds.name} (sigma scale {scale:g})\n" + "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(NOISE_COLUMNS)
            for r in rows:
                w.writerow([repr(float(r[c])) for c in NOISE_COLUMNS])
    _write_table(text, args.out)
    return EXIT_OK


def _read_grid(path):
    grid = []
    rng = np.random.default_rng(0)
    try:
        with open(path, newline="") as fh:
            for i, row in enumerate(csv.DictReader(fh), start=2):
                k = int(row["k"])
                beta = float(row["beta"])
                spec = row["prior"].strip()
                if spec == "ones":
                    prior = np.ones(k)
                elif spec == "mixed":
                    prior = rng.uniform(1.0, 3.0, size=k)
                else:
                    prior = np.array([float(v) for v in spec.split(";")])
                if prior.shape != (k,) or np.any(prior < 1.0) or k < 2 or beta < 0:
                    raise ValueError(f"line {i}: invalid configuration")
                grid.append((k, beta, prior))
    except (OSError, KeyError, ValueError, TypeError) as exc:
        raise UsageError(f"bad grid file {path}: {exc}") from None
    if not grid:
        raise UsageError(f"grid file {path} is empty")
    return grid


def cmd_verify(args):
    grid = default_grid() if args.grid == "default" else _read_grid(args.grid)
    grad_fn = None
    if args.inject_gradient_scale is not None:
        factor = args.inject_gradient_scale

        def grad_fn(a, y, c):
            return factor * vi_loss_grad(a, y, c, 1.0)

    header = f"{'K':>4} {'beta':>5} {'prior':>6} {'sup|grad|':>10} {'L_h':>8} {'margin':>8} {'sup|mse|':>10} {'mse bnd':>8}  status"
    print(f"gradient sup-norm certification, {args.trials} trials per row (alpha = lambda + e, 1 + e log-uniform in [1, 1e3])")
    print(header)
    failures = []
    for k, beta, prior in grid:
        cert = certify_gradient_bound(k, beta, prior, args.trials, args.seed, grad_fn=grad_fn)
        status = "ok" if cert.passed else "VIOLATED"
        print(
            f"{k:>4} {beta:>5g} {cert.prior_label:>6} {cert.empirical_sup:>10.5f} {cert.bound:>8.4f} "
            f"{cert.margin:>8.4f} {cert.mse_sup:>10.5f} {cert.mse_bound:>8.4f}  {status}"
        )
        if not cert.passed:
            failures.append(cert)
    if failures:
        for c in failures:
            print(f"violation: K={c.k} beta={c.beta:g} prior={c.prior_label} sup={c.empirical_sup:.6g} > bound={c.bound:.6g}")
        return EXIT_CERT
    print("all bounds hold")
    return EXIT_OK


def cmd_gen_data(args):
    ds = _load_data(args.synthetic)
    if args.noise:
        ds = datamod.add_gaussian_noise(ds, args.noise, args.noise_seed)
    datamod.save_csv(ds, args.out)
    print(f"wrote {len(ds)} rows ({ds.name}) to {args.out}")
    return EXIT_OK


def cmd_plot_simplex(args):
    state = _load_state(args.checkpoint)
    if state.n_classes < 3:
        raise UsageError("plot-simplex needs K >= 3")
    ds = _load_data(args.data)
    _check_dim(state, ds)
    top, coords, total = simplex_points(state, ds.features)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "class_a", "class_b", "class_c", "coord_a", "coord_b", "coord_c", "total_evidence"])
        for i in range(len(ds)):
            w.writerow([i, *map(int, top[i]), *(repr(float(v)) for v in coords[i]), repr(float(total[i]))])
    print(f"wrote {len(ds)} simplex points to {args.out}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="viedl", description="Variational evidential classification toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train backbone + evidential head")
    t.add_argument("--config", help="key=value config file (defaults used when omitted)")
    src = t.add_mutually_exclusive_group()
    src.add_argument("--data", help="training CSV")
    src.add_argument("--synthetic", help=f"synthetic spec, default {DEFAULT_SYNTHETIC}")
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--log", help="per-epoch CSV log (default <out>.log.csv)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="accuracy and uncertainty on one dataset")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", help="per-sample predictions CSV")
    e.set_defaults(func=cmd_eval)

    o = sub.add_parser("ood", help="OOD detection report")
    o.add_argument("--checkpoint", required=True)
    o.add_argument("--id", required=True, help="in-distribution CSV or synthetic spec")
    o.add_argument("--ood", required=True, action="append", help="OOD CSV or synthetic spec; repeatable")
    o.add_argument("--out", help="report CSV (table written to <out>.txt)")
    o.set_defaults(func=cmd_ood)

    n = sub.add_parser("noise", help="clean-vs-noisy detection sweep")
    n.add_argument("--checkpoint", required=True)
    n.add_argument("--data", required=True)
    n.add_argument("--sigmas", default="0.05,0.10,0.20")
    n.add_argument("--scale", choices=("radius", "none"), default="radius", help="multiply sigma by the data radius")
    n.add_argument("--seed", type=int, default=0)
    n.add_argument("--out")
    n.set_defaults(func=cmd_noise)

    v = sub.add_parser("verify", help="certify the loss-gradient bound")
    v.add_argument("--grid", default="default", help="'default' or a CSV with columns k,beta,prior")
    v.add_argument("--trials", type=int, default=100_000)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--inject-gradient-scale", type=float, default=None, help=argparse.SUPPRESS)
    v.set_defaults(func=cmd_verify)

    g = sub.add_parser("gen-data", help="write a synthetic dataset to CSV")
    g.add_argument("--synthetic", required=True)
    g.add_argument("--noise", type=float, default=0.0)
    g.add_argument("--noise-seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    s = sub.add_parser("plot-simplex", help="top-3 barycentric coordinates per sample")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_plot_simplex)
    return p


def main(argv=None):
    from .train import ConfigError, NonFiniteLossError

    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "trials", 1) < 1:
        parser.error("--trials must be >= 1")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NonFiniteLossError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
