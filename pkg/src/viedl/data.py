"""Synthetic datasets and CSV ingestion."""

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np


class DatasetFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.array(self.features, dtype=np.float64)
        if x.ndim != 2:
            raise ValueError("features must be an (n, d) matrix")
        x.setflags(write=False)
        object.__setattr__(self, "features", x)
        if self.labels is not None:
            y = np.array(self.labels, dtype=np.int64)
            if y.shape != (x.shape[0],):
                raise ValueError("need one label per row")
            if np.any(y < 0):
                raise ValueError("labels must be non-negative class indices")
            y.setflags(write=False)
            object.__setattr__(self, "labels", y)

    def __len__(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    @property
    def name(self):
        return self.metadata.get("name", "dataset")

    @property
    def n_classes(self):
        return None if self.labels is None else int(self.labels.max()) + 1


def class_means(k, d, separation):
    """k points evenly spaced on a circle of radius ``separation`` in the first two axes."""
    angles = 2.0 * np.pi * np.arange(k) / k
    means = np.zeros((k, d))
    means[:, 0] = separation * np.cos(angles)
    means[:, 1] = separation * np.sin(angles)
    return means


def gaussian_blobs(k, n_per_class, d=2, separation=6.0, spread=1.0, seed=0):
    if k < 2 or d < 2:
        raise ValueError("need k >= 2 and d >= 2")
    rng = np.random.default_rng(seed)
    means = class_means(k, d, separation)
    labels = np.repeat(np.arange(k), n_per_class)
    x = means[labels] + spread * rng.standard_normal((k * n_per_class, d))
    meta = {
        "name": f"blobs(k={k},n={n_per_class},d={d},sep={separation:g},spread={spread:g},seed={seed})",
        "generator": "blobs",
        "k": k,
        "n_per_class": n_per_class,
        "d": d,
        "separation": separation,
        "spread": spread,
        "seed": seed,
    }
    return Dataset(x, labels, meta)


def ood_blob(d, n, offset, spread=1.0, seed=0, direction=None):
    """Unlabeled cluster whose center sits ``offset`` away from the origin (the blobs' centroid).

    ``direction`` defaults to a random unit vector drawn from ``seed``.
    """
    if not offset > 0:
        raise ValueError("offset must be positive")
    rng = np.random.default_rng(seed)
    if direction is None:
        direction = rng.standard_normal(d)
    direction = np.asarray(direction, dtype=np.float64)
    direction = direction / np.linalg.norm(direction)
    center = offset * direction
    x = center + spread * rng.standard_normal((n, d))
    meta = {
        "name": f"ood(d={d},n={n},offset={offset:g},spread={spread:g},seed={seed})",
        "generator": "ood",
        "d": d,
        "n": n,
        "offset": offset,
        "spread": spread,
        "seed": seed,
    }
    return Dataset(x, None, meta)


def add_gaussian_noise(data, sigma, seed=0):
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return data
    rng = np.random.default_rng(seed)
    noisy = data.features + sigma * rng.standard_normal(data.features.shape)
    meta = dict(data.metadata, name=f"{data.name}+noise(sigma={sigma:g},seed={seed})", noise_sigma=sigma)
    return replace(data, features=noisy, metadata=meta)


def feature_radius(data):
    """Largest row norm, the empirical input radius R."""
    x = data.features if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)
    if x.shape[0] == 0:
        raise ValueError("empty dataset")
    return float(np.max(np.linalg.norm(x, axis=1)))


def save_csv(data, path):
    d = data.dim
    header = [f"f{j}" for j in range(d)]
    if data.labels is not None:
        header.append("label")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(len(data)):
            row = [repr(float(v)) for v in data.features[i]]
            if data.labels is not None:
                row.append(str(int(data.labels[i])))
            w.writerow(row)


def load_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetFormatError(f"{path}: empty file") from None
        has_label = bool(header) and header[-1] == "label"
        feat_cols = header[:-1] if has_label else header
        if not feat_cols or feat_cols != [f"f{j}" for j in range(len(feat_cols))]:
            raise DatasetFormatError(f"{path}: line 1: header must be f0,...,f{{d-1}}[,label]")
        rows, labels = [], []
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(header):
                raise DatasetFormatError(f"{path}: line {line}: expected {len(header)} fields, got {len(row)}")
            try:
                vals = [float(v) for v in row[: len(feat_cols)]]
                if has_label:
                    labels.append(int(row[-1]))
            except ValueError as exc:
                raise DatasetFormatError(f"{path}: line {line}: {exc}") from None
            if not all(math.isfinite(v) for v in vals):
                raise DatasetFormatError(f"{path}: line {line}: non-finite value")
            rows.append(vals)
    if not rows:
        raise DatasetFormatError(f"{path}: no data rows")
    x = np.array(rows, dtype=np.float64)
    return Dataset(x, np.array(labels) if has_label else None, {"name": str(path)})


def parse_synthetic(spec):
    """Build a dataset from ``blobs:k=3,n=500,d=2,sep=6,spread=1,seed=7`` or
    ``ood:d=2,n=500,offset=20,spread=1,seed=8``."""
    kind, _, rest = spec.partition(":")
    params = {}
    for item in filter(None, rest.split(",")):
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"bad synthetic parameter {item!r}")
        params[key.strip()] = value.strip()
    try:
        if kind == "blobs":
            allowed = {"k", "n", "d", "sep", "spread", "seed"}
            _reject_unknown(params, allowed)
            return gaussian_blobs(
                int(params.get("k", 3)),
                int(params.get("n", 500)),
                int(params.get("d", 2)),
                float(params.get("sep", 6.0)),
                float(params.get("spread", 1.0)),
                int(params.get("seed", 0)),
            )
        if kind == "ood":
            _reject_unknown(params, {"d", "n", "offset", "spread", "seed"})
            return ood_blob(
                int(params.get("d", 2)),
                int(params.get("n", 500)),
                float(params.get("offset", 20.0)),
                float(params.get("spread", 1.0)),
                int(params.get("seed", 0)),
            )
    except (TypeError, ValueError) as exc:
        raise ValueError(f"bad synthetic spec {spec!r}: {exc}") from None
    raise ValueError(f"unknown synthetic generator {kind!r} (expected blobs or ood)")


def _reject_unknown(params, allowed):
    extra = sorted(set(params) - allowed)
    if extra:
        raise ValueError(f"unknown parameter(s) {', '.join(extra)}")
