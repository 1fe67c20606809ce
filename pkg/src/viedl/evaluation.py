"""Prediction, uncertainty scores and OOD detection metrics."""

import csv
from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class EvalReport:
    id_accuracy: float
    auroc: float
    fpr95: float
    mean_unc_id: float
    mean_unc_ood: float
    unc_diff: float
    id_set: str = ""
    ood_set: str = ""


def predict(state, x):
    """Return ``(labels, p_hat, u)``; ties in p_hat go to the lowest class index."""
    alpha, _ = state.alpha(x)
    s = alpha.sum(axis=1, keepdims=True)
    p_hat = alpha / s
    labels = np.argmax(p_hat, axis=1)
    u = state.prior.sum() / s[:, 0]
    if np.ndim(x) == 1:
        return int(labels[0]), p_hat[0], float(u[0])
    return labels, p_hat, u


def _check_scores(id_scores, ood_scores):
    a = np.asarray(id_scores, dtype=np.float64).ravel()
    b = np.asarray(ood_scores, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("score sets must be nonempty")
    return a, b


def auroc(id_scores, ood_scores):
    """P(ood > id) + P(ood == id) / 2, with OOD as the positive class."""
    a, b = _check_scores(id_scores, ood_scores)
    a = np.sort(a)
    below = np.searchsorted(a, b, side="left")
    below_or_equal = np.searchsorted(a, b, side="right")
    # twice the Mann-Whitney count keeps everything in integers
    twice = int(np.sum(below + below_or_equal))
    return twice / (2 * a.size * b.size)


def fpr_at_95_tpr(id_scores, ood_scores):
    """False-positive rate at the largest OOD-score threshold with TPR >= 0.95.

    A sample is flagged OOD when its score is >= the threshold.
    """
    a, b = _check_scores(id_scores, ood_scores)
    m = b.size
    needed = (95 * m + 99) // 100  # ceil(0.95 m) in integers
    threshold = np.sort(b)[::-1][needed - 1]
    return int(np.sum(a >= threshold)) / a.size


def evaluate(state, id_data, ood_data):
    """Score ID and OOD sets by epistemic uncertainty and collect the detection metrics."""
    if id_data.dim != ood_data.dim:
        raise ValueError("ID and OOD feature dimensions differ")
    labels, _, u_id = predict(state, id_data.features)
    _, _, u_ood = predict(state, ood_data.features)
    acc = float(np.mean(labels == id_data.labels)) if id_data.labels is not None else float("nan")
    mean_id = float(np.mean(u_id))
    mean_ood = float(np.mean(u_ood))
    return EvalReport(
        id_accuracy=acc,
        auroc=auroc(u_id, u_ood),
        fpr95=fpr_at_95_tpr(u_id, u_ood),
        mean_unc_id=mean_id,
        mean_unc_ood=mean_ood,
        unc_diff=mean_ood - mean_id,
        id_set=id_data.name,
        ood_set=ood_data.name,
    )


REPORT_COLUMNS = ("id_set", "ood_set", "id_accuracy", "auroc", "fpr95", "mean_unc_id", "mean_unc_ood", "unc_diff")


def write_reports_csv(reports, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for r in reports:
            row = asdict(r)
            w.writerow([row[c] if isinstance(row[c], str) else repr(float(row[c])) for c in REPORT_COLUMNS])


def format_table(reports):
    """Aligned text table: ID ACC | AUROC per OOD set | FPR95 per OOD set, in percent."""
    if not reports:
        return ""
    names = [r.ood_set for r in reports]
    header = ["ID ACC"] + [f"AUROC[{n}]" for n in names] + [f"FPR95[{n}]" for n in names]
    header += ["Unc ID", "Unc OOD", "Unc Diff"]
    acc = reports[0].id_accuracy
    cells = [f"{100 * acc:.2f}"] + [f"{100 * r.auroc:.2f}" for r in reports] + [f"{100 * r.fpr95:.2f}" for r in reports]
    cells += [f"{reports[0].mean_unc_id:.4f}", f"{np.mean([r.mean_unc_ood for r in reports]):.4f}"]
    cells += [f"{np.mean([r.unc_diff for r in reports]):.4f}"]
    widths = [max(len(h), len(c)) for h, c in zip(header, cells)]
    line1 = " | ".join(h.rjust(w) for h, w in zip(header, widths))
    line2 = "-+-".join("-" * w for w in widths)
    line3 = " | ".join(c.rjust(w) for c, w in zip(cells, widths))
    return f"ID set: {reports[0].id_set}\n{line1}\n{line2}\n{line3}\n"


def simplex_points(state, x):
    """Top-3 evidence classes per sample with barycentric coordinates and total evidence.

    Returns ``(top3 indices (n, 3), coords (n, 3), total evidence (n,))``.
    """
    alpha, e = state.alpha(x)
    if alpha.shape[1] < 3:
        raise ValueError("simplex projection needs at least 3 classes")
    return simplex_from_alpha(alpha, e)


def simplex_from_alpha(alpha, e):
    alpha = np.atleast_2d(alpha)
    e = np.atleast_2d(e)
    top = np.argsort(-e, axis=1, kind="stable")[:, :3]
    a3 = np.take_along_axis(alpha, top, axis=1)
    return top, a3 / a3.sum(axis=1, keepdims=True), e.sum(axis=1)
