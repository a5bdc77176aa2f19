"""Bidirectional LSTM classifier for variable-length velocity segments.

One input feature, ``hidden_units`` cells per direction, gates ordered
``i, f, g, o``. The last valid hidden states of both directions are
concatenated and mapped to two sigmoid outputs (index 0 = careful,
index 1 = not careful). Batches are zero-padded at the end and masked, so
padded steps never change the state or receive gradient.

Everything runs in float64 numpy.
"""

from __future__ import annotations

import copy
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, DataError, InputError, TrainingError
from .segmenter import Segment

CLASSES = ("C", "NC")
PARAM_NAMES = ("fwd_W", "fwd_U", "fwd_b", "bwd_W", "bwd_U", "bwd_b", "out_W", "out_b")
SCORE_CLAMP = 1e-7
MODEL_MAGIC = "CFMODEL 1"


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class ModelParams:
    hidden_units: int
    weights: Dict[str, np.ndarray]
    feature_mean: float = 0.0
    feature_std: float = 1.0
    input_dim: int = 1

    def __post_init__(self):
        h = self.hidden_units
        expected = {
            "fwd_W": (4 * h, self.input_dim), "fwd_U": (4 * h, h), "fwd_b": (4 * h,),
            "bwd_W": (4 * h, self.input_dim), "bwd_U": (4 * h, h), "bwd_b": (4 * h,),
            "out_W": (2, 2 * h), "out_b": (2,),
        }
        if self.input_dim != 1:
            raise ConfigError(f"model expects input_dim {self.input_dim}, pipeline provides 1")
        for name, shape in expected.items():
            w = self.weights.get(name)
            if w is None or w.shape != shape:
                got = None if w is None else w.shape
                raise ConfigError(f"weight {name}: expected shape {shape}, got {got}")
            if not np.all(np.isfinite(w)):
                raise ConfigError(f"weight {name} has non-finite entries")
        if not self.feature_std > 0:
            raise ConfigError("feature_std must be positive")

    @classmethod
    def zeros(cls, hidden_units: int = 32) -> "ModelParams":
        h = hidden_units
        shapes = dict(fwd_W=(4 * h, 1), fwd_U=(4 * h, h), fwd_b=(4 * h,),
                      bwd_W=(4 * h, 1), bwd_U=(4 * h, h), bwd_b=(4 * h,),
                      out_W=(2, 2 * h), out_b=(2,))
        return cls(h, {k: np.zeros(shapes[k]) for k in PARAM_NAMES})

    @classmethod
    def initialize(cls, hidden_units: int = 32, rng=None, feature_mean=0.0, feature_std=1.0):
        """Glorot-uniform matrices, forget-gate bias 1, other biases 0."""
        rng = np.random.default_rng(rng)
        p = cls.zeros(hidden_units)
        h = hidden_units
        for name in ("fwd_W", "fwd_U", "bwd_W", "bwd_U", "out_W"):
            fan_out, fan_in = p.weights[name].shape
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            p.weights[name] = rng.uniform(-lim, lim, size=(fan_out, fan_in))
        for name in ("fwd_b", "bwd_b"):
            p.weights[name][h:2 * h] = 1.0
        p.feature_mean = float(feature_mean)
        p.feature_std = float(feature_std)
        return p

    def copy(self) -> "ModelParams":
        return copy.deepcopy(self)

    def equal(self, other: "ModelParams") -> bool:
        return (self.hidden_units == other.hidden_units
                and self.feature_mean == other.feature_mean
                and self.feature_std == other.feature_std
                and all(np.array_equal(self.weights[k], other.weights[k]) for k in PARAM_NAMES))


@dataclass
class TrainConfig:
    batch_size: int = 30
    initial_lr: float = 1e-3
    lr_decay_rate: float = 0.95
    patience: int = 5
    max_epochs: int = 200
    seed: int = 0
    split: Tuple[float, float, float] = (0.72, 0.08, 0.20)
    hidden_units: int = 32
    min_improvement: float = 1e-6

    def __post_init__(self):
        self.split = tuple(float(x) for x in self.split)
        if len(self.split) != 3 or any(x < 0 for x in self.split) or abs(sum(self.split) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must be three non-negative values summing to 1, got {self.split}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        if self.initial_lr < 0 or not 0 < self.lr_decay_rate <= 1:
            raise ConfigError("need initial_lr >= 0 and 0 < lr_decay_rate <= 1")
        if self.hidden_units < 1:
            raise ConfigError("hidden_units must be >= 1")


@dataclass
class Prediction:
    label: str
    scores: Tuple[float, float]
    segment: Optional[Segment] = None
    inference_time: float = 0.0  # ms


# -- batching -----------------------------------------------------------------

def pad_batch(sequences: Sequence, length: int | None = None):
    """Zero-pad at the end. Returns ``(values (B, L), mask (B, L) bool)``."""
    arrays = [np.asarray(getattr(s, "values", s), dtype=np.float64) for s in sequences]
    for a in arrays:
        if a.ndim != 1 or a.size == 0:
            raise InputError("every sequence needs at least one sample")
    L = max(a.size for a in arrays) if length is None else int(length)
    x = np.zeros((len(arrays), L))
    mask = np.zeros((len(arrays), L), dtype=bool)
    for row, a in enumerate(arrays):
        if a.size > L:
            raise InputError(f"sequence of length {a.size} exceeds pad length {L}")
        x[row, :a.size] = a
        mask[row, :a.size] = True
    return x, mask


def one_hot(labels: Sequence[str]) -> np.ndarray:
    y = np.zeros((len(labels), 2))
    for row, lab in enumerate(labels):
        if lab not in CLASSES:
            raise InputError(f"unknown label {lab!r}")
        y[row, CLASSES.index(lab)] = 1.0
    return y


# -- forward / backward -------------------------------------------------------

def _direction_forward(xs, mask, W, U, b, steps, keep_cache):
    B = xs.shape[0]
    H = U.shape[1]
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    # input projections for all steps at once: (B, L, 4H)
    xw = xs[:, :, None] * W[:, 0][None, None, :] + b
    cache = []
    for t in steps:
        z = xw[:, t] + h @ U.T
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H:2 * H])
        g = np.tanh(z[:, 2 * H:3 * H])
        o = _sigmoid(z[:, 3 * H:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        m = mask[:, t, None]
        if keep_cache:
            cache.append((t, h, c, i, f, g, o, tc, m))
        c = np.where(m, c_new, c)
        h = np.where(m, h_new, h)
    return h, cache


def _direction_backward(cache, dh, xs, W, U):
    H = U.shape[1]
    dW = np.zeros_like(W)
    dU = np.zeros_like(U)
    db = np.zeros(4 * H)
    dc = np.zeros_like(dh)
    for t, h_prev, c_prev, i, f, g, o, tc, m in reversed(cache):
        dh_new = np.where(m, dh, 0.0)
        dc_in = np.where(m, dc, 0.0)
        do = dh_new * tc
        dc_new = dh_new * o * (1.0 - tc * tc) + dc_in
        di = dc_new * g
        dg = dc_new * i
        df = dc_new * c_prev
        dz = np.concatenate(
            [di * i * (1.0 - i), df * f * (1.0 - f), dg * (1.0 - g * g), do * o * (1.0 - o)],
            axis=1,
        )
        dW[:, 0] += dz.T @ xs[:, t]
        dU += dz.T @ h_prev
        db += dz.sum(axis=0)
        dh = np.where(m, 0.0, dh) + dz @ U
        dc = np.where(m, 0.0, dc) + dc_new * f
    return dW, dU, db


def _standardize(params: ModelParams, x, mask):
    return np.where(mask, (x - params.feature_mean) / params.feature_std, 0.0)


def _forward_batch(params: ModelParams, x, mask, keep_cache=False):
    w = params.weights
    xs = _standardize(params, x, mask)
    L = xs.shape[1]
    hf, cache_f = _direction_forward(xs, mask, w["fwd_W"], w["fwd_U"], w["fwd_b"], range(L), keep_cache)
    hb, cache_b = _direction_forward(xs, mask, w["bwd_W"], w["bwd_U"], w["bwd_b"],
                                     range(L - 1, -1, -1), keep_cache)
    hcat = np.concatenate([hf, hb], axis=1)
    scores = _sigmoid(hcat @ w["out_W"].T + w["out_b"])
    return scores, (xs, hcat, cache_f, cache_b)


def forward_batch(params: ModelParams, sequences) -> np.ndarray:
    """Scores, shape ``(B, 2)``, for a list of segments or 1-D arrays."""
    x, mask = pad_batch(sequences)
    return _forward_batch(params, x, mask)[0]


def _fused_weights(params: ModelParams):
    """Both directions stacked gate-by-gate, ``[i_f i_b f_f f_b g_f g_b o_f o_b]``.

    Sigmoid rows are pre-halved so one ``tanh`` evaluates every gate:
    ``sigmoid(z) = 0.5 + 0.5 * tanh(z / 2)``.
    """
    w = params.weights
    H = params.hidden_units
    U = np.zeros((8 * H, 2 * H))
    Wx = np.zeros((2, 8 * H))
    bias = np.zeros(8 * H)
    for gate in range(4):
        scale = 1.0 if gate == 2 else 0.5
        for d, prefix in enumerate(("fwd", "bwd")):
            rows = slice((2 * gate + d) * H, (2 * gate + d + 1) * H)
            src = slice(gate * H, (gate + 1) * H)
            U[rows, d * H:(d + 1) * H] = scale * w[prefix + "_U"][src]
            Wx[d, rows] = scale * w[prefix + "_W"][src, 0]
            bias[rows] = scale * w[prefix + "_b"][src]
    return U, Wx, bias


def forward(params: ModelParams, segment) -> np.ndarray:
    """Scores for one unpadded sequence, both directions advanced together."""
    values = np.asarray(getattr(segment, "values", segment), dtype=np.float64)
    if values.ndim != 1 or values.size == 0:
        raise InputError("cannot classify an empty segment")
    H = params.hidden_units
    U, Wx, bias = _fused_weights(params)
    xs = (values - params.feature_mean) / params.feature_std
    # step t feeds x[t] forward and x[K-1-t] backward
    drive = xs[:, None] * Wx[0] + xs[::-1, None] * Wx[1] + bias
    h = np.zeros(2 * H)
    c = np.zeros(2 * H)
    for t in range(values.size):
        a = np.tanh(drive[t] + U @ h)
        sig = 0.5 * a + 0.5
        c = sig[2 * H:4 * H] * c + sig[:2 * H] * a[4 * H:6 * H]
        h = sig[6 * H:] * np.tanh(c)
    return _sigmoid(params.weights["out_W"] @ h + params.weights["out_b"])


def bce(scores: np.ndarray, targets: np.ndarray) -> float:
    s = np.clip(scores, SCORE_CLAMP, 1.0 - SCORE_CLAMP)
    return float(np.mean(-(targets * np.log(s) + (1.0 - targets) * np.log(1.0 - s))))


def loss(params: ModelParams, sequences, labels) -> float:
    """Mean binary cross-entropy over batch entries and both outputs.

    ``labels`` may be class names or a one-hot array.
    """
    y = _targets(labels)
    return bce(forward_batch(params, sequences), y)


def _targets(labels):
    if isinstance(labels, np.ndarray) and labels.ndim == 2:
        return labels.astype(np.float64)
    return one_hot(list(labels))


def _loss_and_grads_padded(params: ModelParams, x, mask, y):
    w = params.weights
    scores, (xs, hcat, cache_f, cache_b) = _forward_batch(params, x, mask, keep_cache=True)
    # rows without a single valid step carry no sample: no loss, no gradient
    valid = mask.any(axis=1)
    B = int(valid.sum())
    if B == 0:
        raise InputError("batch has no valid steps")
    value = bce(scores[valid], y[valid])
    inside = (scores > SCORE_CLAMP) & (scores < 1.0 - SCORE_CLAMP) & valid[:, None]
    dlogit = np.where(inside, (scores - y) / (2.0 * B), 0.0)
    grads = {
        "out_W": dlogit.T @ hcat,
        "out_b": dlogit.sum(axis=0),
    }
    dh = dlogit @ w["out_W"]
    H = params.hidden_units
    grads["fwd_W"], grads["fwd_U"], grads["fwd_b"] = _direction_backward(
        cache_f, dh[:, :H], xs, w["fwd_W"], w["fwd_U"])
    grads["bwd_W"], grads["bwd_U"], grads["bwd_b"] = _direction_backward(
        cache_b, dh[:, H:], xs, w["bwd_W"], w["bwd_U"])
    return value, grads


def gradients(params: ModelParams, sequences, labels, with_loss=False):
    """Exact gradients of :func:`loss` with respect to every weight array.

    ``sequences`` may be segments, 1-D arrays, or a ``(values, mask)`` pair
    of pre-padded arrays.
    """
    if isinstance(sequences, tuple) and len(sequences) == 2 and np.ndim(sequences[0]) == 2:
        x, mask = np.asarray(sequences[0], dtype=np.float64), np.asarray(sequences[1], dtype=bool)
    else:
        x, mask = pad_batch(sequences)
    value, grads = _loss_and_grads_padded(params, x, mask, _targets(labels))
    return (value, grads) if with_loss else grads


def predict(params: ModelParams, segment) -> Prediction:
    t0 = time.perf_counter()
    scores = forward(params, segment)
    elapsed = (time.perf_counter() - t0) * 1000.0
    return Prediction(label_from_scores(scores), (float(scores[0]), float(scores[1])),
                      segment if isinstance(segment, Segment) else None, elapsed)


def label_from_scores(scores) -> str:
    # exact ties go to NC
    return "C" if scores[0] > scores[1] else "NC"


# -- training -----------------------------------------------------------------

class Adam:
    def __init__(self, params: ModelParams, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.weights.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.weights.items()}
        self.t = 0

    def step(self, params: ModelParams, grads, lr):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1 ** self.t
        corr2 = 1.0 - b2 ** self.t
        for k in PARAM_NAMES:
            g = grads[k]
            self.m[k] = b1 * self.m[k] + (1.0 - b1) * g
            self.v[k] = b2 * self.v[k] + (1.0 - b2) * g * g
            m_hat = self.m[k] / corr1
            v_hat = self.v[k] / corr2
            params.weights[k] = params.weights[k] - lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    val_loss: float


@dataclass
class TrainLog:
    epochs: List[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0
    stop_reason: str = ""
    split_indices: Dict[str, np.ndarray] = field(default_factory=dict)


def stratified_split(labels: Sequence[str], fractions, rng) -> Dict[str, np.ndarray]:
    """Per-class shuffled split preserving class proportions."""
    labels = np.asarray(labels)
    parts = {"train": [], "val": [], "test": []}
    for cls in CLASSES:
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(idx.size)]
        n_train = int(round(fractions[0] * idx.size))
        n_val = int(round(fractions[1] * idx.size))
        parts["train"].append(idx[:n_train])
        parts["val"].append(idx[n_train:n_train + n_val])
        parts["test"].append(idx[n_train + n_val:])
    return {k: np.sort(np.concatenate(v)) for k, v in parts.items()}


def feature_stats(sequences) -> Tuple[float, float]:
    values = np.concatenate([np.asarray(getattr(s, "values", s), dtype=np.float64) for s in sequences])
    mean = float(np.mean(values))
    std = float(np.std(values))
    return mean, (std if std > 0 else 1.0)


def evaluate_loss(params: ModelParams, sequences, y, batch_size=256) -> float:
    """Mean BCE over a whole set, evaluated in fixed-order chunks."""
    total = 0.0
    n = len(sequences)
    for start in range(0, n, batch_size):
        chunk = sequences[start:start + batch_size]
        total += bce(forward_batch(params, chunk), y[start:start + len(chunk)]) * len(chunk)
    return total / n


def train(sequences, labels, cfg: TrainConfig | None = None, progress=None):
    """Train a classifier. Returns ``(best ModelParams, TrainLog)``.

    ``sequences`` are segments or 1-D arrays, ``labels`` are ``"C"``/``"NC"``.
    """
    cfg = cfg or TrainConfig()
    labels = list(labels)
    if len(sequences) != len(labels):
        raise DataError(f"{len(sequences)} sequences but {len(labels)} labels")
    present = set(labels)
    if not present <= set(CLASSES):
        raise DataError(f"unknown labels {sorted(present - set(CLASSES))}")
    if len(present) < 2:
        raise TrainingError(f"training needs both classes, dataset only has {sorted(present)}")

    rng = np.random.default_rng(cfg.seed)
    split = stratified_split(labels, cfg.split, rng)
    if split["train"].size == 0 or split["val"].size == 0:
        raise TrainingError("train and validation splits must be non-empty")
    train_x = [sequences[i] for i in split["train"]]
    train_y = one_hot([labels[i] for i in split["train"]])
    val_x = [sequences[i] for i in split["val"]]
    val_y = one_hot([labels[i] for i in split["val"]])

    mean, std = feature_stats(train_x)
    params = ModelParams.initialize(cfg.hidden_units, rng, mean, std)
    opt = Adam(params)
    log = TrainLog(split_indices=split)

    best = params.copy()
    best_val = np.inf
    wait = 0
    n = len(train_x)
    for epoch in range(1, cfg.max_epochs + 1):
        lr = cfg.initial_lr * cfg.lr_decay_rate ** (epoch - 1)
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            x, mask = pad_batch([train_x[i] for i in idx])
            value, grads = _loss_and_grads_padded(params, x, mask, train_y[idx])
            opt.step(params, grads, lr)
            total += value * idx.size
        val = evaluate_loss(params, val_x, val_y)
        log.epochs.append(EpochRecord(epoch, lr, total / n, val))
        if progress is not None:
            progress(log.epochs[-1])
        if epoch == 1 or val < best_val - cfg.min_improvement:
            best_val = val
            best = params.copy()
            log.best_epoch = epoch
            wait = 0
        else:
            wait += 1
            if wait >= cfg.patience:
                log.stopped_epoch = epoch
                log.stop_reason = "early_stopping"
                break
    else:
        log.stopped_epoch = cfg.max_epochs
        log.stop_reason = "max_epochs"
    return best, log


# -- model file -----------------------------------------------------------------

def _fmt(x: float) -> str:
    return "%.17g" % x


def dumps_model(params: ModelParams) -> str:
    lines = [MODEL_MAGIC,
             f"hidden_units {params.hidden_units}",
             f"input_dim {params.input_dim}",
             f"feature_mean {_fmt(params.feature_mean)}",
             f"feature_std {_fmt(params.feature_std)}"]
    for name in PARAM_NAMES:
        w = params.weights[name]
        mat = w.reshape(1, -1) if w.ndim == 1 else w
        lines.append(f"matrix {name} {mat.shape[0]} {mat.shape[1]}")
        lines.extend(" ".join(_fmt(x) for x in row) for row in mat)
    return "\n".join(lines) + "\n"


def loads_model(text: str) -> ModelParams:
    lines = text.splitlines()
    if not lines or lines[0].strip() != MODEL_MAGIC:
        raise DataError(f"not a model file (expected {MODEL_MAGIC!r})", line=1)
    scalars = {}
    weights = {}
    pos = 1
    try:
        while pos < len(lines):
            parts = lines[pos].split()
            pos += 1
            if not parts:
                continue
            if parts[0] == "matrix":
                name, rows, cols = parts[1], int(parts[2]), int(parts[3])
                data = []
                for r in range(rows):
                    row = [float(v) for v in lines[pos].split()]
                    if len(row) != cols:
                        raise DataError(f"matrix {name} row {r}: expected {cols} values", line=pos + 1)
                    data.append(row)
                    pos += 1
                mat = np.array(data, dtype=np.float64).reshape(rows, cols)
                weights[name] = mat.ravel() if name.endswith("_b") else mat
            else:
                scalars[parts[0]] = parts[1]
    except (IndexError, ValueError) as exc:
        raise DataError(f"malformed model file: {exc}", line=pos) from exc
    try:
        return ModelParams(int(scalars["hidden_units"]), weights,
                           float(scalars["feature_mean"]), float(scalars["feature_std"]),
                           int(scalars.get("input_dim", 1)))
    except KeyError as exc:
        raise DataError(f"model file missing {exc.args[0]}") from exc


def save_model(path, params: ModelParams) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(dumps_model(params))


def load_model(path) -> ModelParams:
    with open(path) as fh:
        return loads_model(fh.read())
