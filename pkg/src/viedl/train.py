"""Mini-batch training of backbone + evidential head with KL annealing."""

import csv
import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from .head import EvidenceHead
from .loss import LossConfig, edl_baseline_grad, edl_baseline_loss, expected_mse, one_hot, vi_loss_terms
from .nn import ACTIVATIONS, Layer, Mlp

logger = logging.getLogger(__name__)

LOG_COLUMNS = (
    "epoch",
    "lambda_t",
    "loss",
    "bias_term",
    "variance_term",
    "kl_term",
    "mean_evidence",
    "mean_uncertainty",
)


class NonFiniteLossError(FloatingPointError):
    def __init__(self, epoch, batch, norms):
        self.epoch = epoch
        self.batch = batch
        self.norms = norms
        detail = ", ".join(f"{k}={v:.4g}" for k, v in norms.items())
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}; parameter norms: {detail}")


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3
    loss: LossConfig = field(default_factory=LossConfig)
    seed: int = 7
    optimizer: str = "adam"
    hidden: tuple = (32, 32)
    feature_dim: int = 16
    activation: str = "relu"
    loss_kind: str = "vi"
    standardize: bool = True

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be adam or sgd")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if self.loss_kind not in ("vi", "edl"):
            raise ValueError("loss_kind must be vi or edl")
        self.hidden = tuple(int(h) for h in self.hidden)


def anneal_factor(t, warmup):
    """min(1, t / warmup) for epoch index t >= 1."""
    if t < 1 or warmup < 1:
        raise ValueError("t and warmup must be >= 1")
    return min(1.0, t / warmup)


class Sgd:
    def __init__(self, lr):
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g

    def state_arrays(self):
        return []


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_arrays(self):
        return self.m + self.v


@dataclass
class TrainState:
    net: Mlp
    head: EvidenceHead
    prior: np.ndarray
    optimizer: object
    epoch: int = 0
    log: list = field(default_factory=list)
    input_mean: np.ndarray = None
    input_scale: np.ndarray = None

    def __post_init__(self):
        d = self.net.input_dim
        if self.input_mean is None:
            self.input_mean = np.zeros(d)
        if self.input_scale is None:
            self.input_scale = np.ones(d)

    @property
    def n_classes(self):
        return self.head.n_classes

    def parameters(self):
        return self.net.parameters() + self.head.parameters()

    def parameter_norms(self):
        names = []
        for i in range(len(self.net.layers)):
            names += [f"W{i + 1}", f"b{i + 1}"]
        names += ["prototypes", "log_scale", "margin"]
        return {n: float(np.linalg.norm(p)) for n, p in zip(names, self.parameters())}

    def alpha(self, x):
        """Dirichlet parameters for inputs ``x``; also returns the evidence."""
        feat, _ = self.net.forward(self.scale_inputs(np.atleast_2d(x)))
        e, _ = self.head.forward(feat)
        return e + self.prior, e

    def scale_inputs(self, x):
        return (np.asarray(x, dtype=np.float64) - self.input_mean) / self.input_scale


def _make_optimizer(cfg, params):
    if cfg.optimizer == "adam":
        return Adam(params, cfg.learning_rate)
    return Sgd(cfg.learning_rate)


def init_state(input_dim, n_classes, cfg, data=None):
    """Fresh parameters; with ``cfg.standardize`` the input statistics come from ``data``."""
    rng = np.random.default_rng(cfg.seed)
    sizes = (input_dim,) + cfg.hidden + (cfg.feature_dim,)
    net = Mlp.initialize(sizes, cfg.activation, rng)
    head = EvidenceHead.initialize(n_classes, cfg.feature_dim, rng)
    prior = np.ones(n_classes) if cfg.loss_kind == "edl" else cfg.loss.prior_vector(n_classes)
    state = TrainState(net, head, np.array(prior), None)
    if cfg.standardize and data is not None:
        state.input_mean = data.features.mean(axis=0)
        scale = data.features.std(axis=0)
        state.input_scale = np.where(scale > 0.0, scale, 1.0)
    state.optimizer = _make_optimizer(cfg, state.parameters())
    return state


def _batch_loss(alpha, y, cfg, lam_t):
    if cfg.loss_kind == "vi":
        return vi_loss_terms(alpha, y, cfg.loss, lam_t)
    _, bias, variance = expected_mse(alpha, y)
    total = np.asarray(edl_baseline_loss(alpha, y, lam_t))
    kl = total - bias - variance
    return np.asarray(bias), np.asarray(variance), kl, edl_baseline_grad(alpha, y, lam_t)


def train_epoch(state, data, cfg):
    """Run one epoch of shuffled mini-batch updates; mutates and returns ``state``."""
    x = data.features
    n = x.shape[0]
    if n == 0:
        raise ValueError("empty dataset")
    if data.labels is None:
        raise ValueError("training data needs labels")
    if x.shape[1] != state.net.input_dim:
        raise ValueError("feature dimension does not match the network")
    x = state.scale_inputs(x)
    k = state.n_classes
    if data.labels.max() >= k:
        raise ValueError("label outside [0, K)")
    t = state.epoch + 1
    lam_t = anneal_factor(t, cfg.loss.warmup_epochs)
    order = np.random.default_rng(cfg.seed ^ t).permutation(n)
    params = state.parameters()
    sums = np.zeros(6)
    for b, start in enumerate(range(0, n, cfg.batch_size)):
        idx = order[start : start + cfg.batch_size]
        feat, tape = state.net.forward(x[idx])
        if not np.all(np.isfinite(feat)):
            raise NonFiniteLossError(t, b, state.parameter_norms())
        e, cache = state.head.forward(feat)
        alpha = e + state.prior
        if not np.all(np.isfinite(alpha)):
            raise NonFiniteLossError(t, b, state.parameter_norms())
        y = one_hot(data.labels[idx], k)
        bias, variance, kl, grad = _batch_loss(alpha, y, cfg, lam_t)
        per_sample = bias + variance + kl
        if not np.all(np.isfinite(per_sample)) or not np.all(np.isfinite(grad)):
            raise NonFiniteLossError(t, b, state.parameter_norms())
        m = len(idx)
        hg = state.head.backward(cache, grad / m)
        ng, _ = state.net.backward(tape, hg["features"])
        state.optimizer.step(params, ng + [hg["prototypes"], hg["log_scale"], hg["margin"]])
        state.head.clamp_margin()
        state.net.mark_updated()
        s = alpha.sum(axis=1)
        sums += [
            per_sample.sum(),
            bias.sum(),
            variance.sum(),
            kl.sum(),
            e.sum(),
            (state.prior.sum() / s).sum(),
        ]
    means = sums / n
    state.epoch = t
    state.log.append(dict(zip(LOG_COLUMNS, [t, lam_t, *means.tolist()])))
    logger.info("epoch %d lambda_t=%.3f loss=%.5f", t, lam_t, means[0])
    return state


def fit(data, cfg, state=None):
    """Train for ``cfg.epochs`` epochs starting from a fresh (or given) state."""
    if state is None:
        k = data.n_classes
        if cfg.loss.prior is not None:
            k = max(k, cfg.loss.prior.k)
        if k < 2:
            raise ValueError("need at least two classes")
        state = init_state(data.dim, k, cfg, data)
    for _ in range(cfg.epochs):
        train_epoch(state, data, cfg)
    return state


# --- log and config files -------------------------------------------------


def write_log_csv(state, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LOG_COLUMNS)
        for row in state.log:
            w.writerow([row["epoch"]] + [repr(float(row[c])) for c in LOG_COLUMNS[1:]])


REQUIRED_KEYS = ("epochs", "batch_size", "learning_rate", "seed", "optimizer", "beta", "warmup_epochs")
OPTIONAL_KEYS = ("prior", "hidden", "feature_dim", "activation", "loss", "standardize")


def parse_config(text, source="<config>"):
    """Parse ``key=value`` lines (``#`` comments allowed) into a :class:`TrainConfig`."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"{source}: line {lineno}: expected key=value")
        if key not in REQUIRED_KEYS + OPTIONAL_KEYS:
            raise ConfigError(f"{source}: line {lineno}: unknown key {key!r}")
        values[key] = value.strip()
    for key in REQUIRED_KEYS:
        if key not in values:
            raise ConfigError(f"{source}: missing key {key!r}")
    def conv(key, fn):
        try:
            return fn(values[key])
        except ValueError as exc:
            raise ConfigError(f"{source}: bad value for {key!r}: {exc}") from None

    kwargs = {
        "epochs": conv("epochs", int),
        "batch_size": conv("batch_size", int),
        "learning_rate": conv("learning_rate", float),
        "seed": conv("seed", int),
        "optimizer": values["optimizer"],
        "loss_kind": values.get("loss", "vi"),
    }
    if "prior" in values and values["prior"] != "ones":
        prior = conv("prior", lambda v: [float(p) for p in v.split(",")])
    else:
        prior = None
    if "hidden" in values:
        kwargs["hidden"] = conv("hidden", lambda v: tuple(int(h) for h in v.split(",") if h.strip()))
    if "feature_dim" in values:
        kwargs["feature_dim"] = conv("feature_dim", int)
    if "activation" in values:
        kwargs["activation"] = values["activation"]
    if "standardize" in values:
        flag = values["standardize"].lower()
        if flag not in ("true", "false"):
            raise ConfigError(f"{source}: bad value for 'standardize': expected true or false")
        kwargs["standardize"] = flag == "true"
    try:
        loss = LossConfig(conv("beta", float), prior, conv("warmup_epochs", int))
        return TrainConfig(loss=loss, **kwargs)
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read(), str(path))


def format_config(cfg):
    prior = "ones" if cfg.loss.prior is None else ",".join(repr(float(v)) for v in cfg.loss.prior.lam)
    lines = [
        f"epochs={cfg.epochs}",
        f"batch_size={cfg.batch_size}",
        f"learning_rate={cfg.learning_rate!r}",
        f"seed={cfg.seed}",
        f"optimizer={cfg.optimizer}",
        f"beta={cfg.loss.beta!r}",
        f"warmup_epochs={cfg.loss.warmup_epochs}",
        f"prior={prior}",
        f"hidden={','.join(str(h) for h in cfg.hidden)}",
        f"feature_dim={cfg.feature_dim}",
        f"activation={cfg.activation}",
        f"loss={cfg.loss_kind}",
        f"standardize={str(cfg.standardize).lower()}",
    ]
    return "\n".join(lines) + "\n"


# --- checkpoints ----------------------------------------------------------
#
# Little-endian layout:
#   b"VIEDL1"
#   u32 K, u32 input_dim, u32 feature_dim, u32 n_layers
#   per layer: u32 in, u32 out, u8 activation code
#   u32 epoch, u8 optimizer code (0 sgd, 1 adam), u64 adam step
#   f64 arrays: input mean, input scale, W_1, b_1, ..., W_L, b_L, prototypes, log_scale, margin, prior,
#               then (adam only) first moments and second moments in parameter order

MAGIC = b"VIEDL1"
_ACT_CODE = {name: i for i, name in enumerate(ACTIVATIONS)}


class CheckpointError(ValueError):
    pass


def checkpoint_bytes(state):
    net, head = state.net, state.head
    out = [MAGIC, struct.pack("<4I", head.n_classes, net.input_dim, net.feature_dim, len(net.layers))]
    for layer in net.layers:
        out_dim, in_dim = layer.weight.shape
        out.append(struct.pack("<2IB", in_dim, out_dim, _ACT_CODE[layer.activation]))
    adam = isinstance(state.optimizer, Adam)
    out.append(struct.pack("<IBQ", state.epoch, int(adam), state.optimizer.t if adam else 0))
    arrays = [state.input_mean, state.input_scale] + state.parameters() + [state.prior] + state.optimizer.state_arrays()
    for a in arrays:
        out.append(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return b"".join(out)


def save_checkpoint(state, path):
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(state))


def _take(buf, pos, fmt):
    size = struct.calcsize(fmt)
    if pos + size > len(buf):
        raise CheckpointError("truncated checkpoint")
    return struct.unpack_from(fmt, buf, pos), pos + size


def checkpoint_from_bytes(buf, learning_rate=1e-3):
    if buf[: len(MAGIC)] != MAGIC:
        raise CheckpointError("not a VIEDL1 checkpoint")
    pos = len(MAGIC)
    (k, input_dim, feature_dim, n_layers), pos = _take(buf, pos, "<4I")
    shapes = []
    for _ in range(n_layers):
        (in_dim, out_dim, code), pos = _take(buf, pos, "<2IB")
        if code >= len(ACTIVATIONS):
            raise CheckpointError(f"unknown activation code {code}")
        shapes.append((in_dim, out_dim, ACTIVATIONS[code]))
    (epoch, adam, adam_t), pos = _take(buf, pos, "<IBQ")

    def read(shape):
        nonlocal pos
        count = int(np.prod(shape))
        end = pos + 8 * count
        if end > len(buf):
            raise CheckpointError("truncated checkpoint")
        arr = np.frombuffer(buf, dtype="<f8", count=count, offset=pos).astype(np.float64).reshape(shape)
        pos = end
        return arr

    if not shapes:
        raise CheckpointError("checkpoint has no layers")
    input_mean = read((input_dim,))
    input_scale = read((input_dim,))
    layers = []
    for in_dim, out_dim, act in shapes:
        w = read((out_dim, in_dim))
        b = read((out_dim,))
        layers.append(Layer(w, b, act))
    net = Mlp(layers)
    if net.input_dim != input_dim or net.feature_dim != feature_dim:
        raise CheckpointError("layer shapes disagree with header")
    head = EvidenceHead(read((k, feature_dim)))
    head.log_scale = read(())
    head.margin_ = read(())
    prior = read((k,))
    state = TrainState(net, head, prior, None, epoch=epoch, input_mean=input_mean, input_scale=input_scale)
    if adam:
        opt = Adam(state.parameters(), learning_rate)
        opt.t = adam_t
        opt.m = [read(p.shape) for p in state.parameters()]
        opt.v = [read(p.shape) for p in state.parameters()]
        state.optimizer = opt
    else:
        state.optimizer = Sgd(learning_rate)
    if pos != len(buf):
        raise CheckpointError("trailing bytes in checkpoint")
    return state


def load_checkpoint(path, learning_rate=1e-3):
    with open(path, "rb") as fh:
        return checkpoint_from_bytes(fh.read(), learning_rate)
