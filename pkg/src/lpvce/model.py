"""A small softplus MLP with analytic input gradients, plus training,
temperature calibration by ECE minimization, and target-class selection."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit, log_softmax

from .errors import InvalidArgumentError, NumericalError

log = logging.getLogger(__name__)

ECE_BINS = 15
TEMPERATURE_BOUNDS = (0.05, 20.0)


def softplus(z):
    return np.logaddexp(0.0, z)


@dataclass
class MlpClassifier:
    """Dense layers with softplus in between; ``weights[i]`` has shape (in, out)."""

    weights: list
    biases: list
    temperature: float = 1.0
    image_shape: Optional[tuple] = None
    history: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise InvalidArgumentError("need one bias per weight matrix")
        if not self.temperature > 0:
            raise InvalidArgumentError("temperature must be positive")

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_classes(self) -> int:
        return self.weights[-1].shape[1]

    def _forward(self, X):
        acts = [X]
        pre = []
        h = X
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W + b
            pre.append(z)
            h = softplus(z) if i < len(self.weights) - 1 else z
            acts.append(h)
        return pre, acts

    def raw_logits(self, X):
        """Logits before the temperature is applied."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return self._forward(X)[1][-1]

    def logits(self, X):
        return self.raw_logits(X) / self.temperature

    def log_probs(self, X):
        return log_softmax(self.logits(X), axis=1)

    def probs(self, X):
        return np.exp(self.log_probs(X))

    def predict(self, X):
        return np.argmax(self.raw_logits(X), axis=1)

    def value_and_grad(self, k: int, x):
        """log p(k | x) and its gradient with respect to the input x."""
        self._check_class(k)
        x = np.asarray(x, dtype=np.float64).reshape(1, -1)
        pre, acts = self._forward(x)
        z = acts[-1][0] / self.temperature
        lp = log_softmax(z)
        g = -np.exp(lp)
        g[k] += 1.0
        g = (g / self.temperature)[None, :]
        for i in range(len(self.weights) - 1, -1, -1):
            if i < len(self.weights) - 1:
                g = g * expit(pre[i])
            g = g @ self.weights[i].T
        return float(lp[k]), g[0]

    def _check_class(self, k):
        if not (0 <= int(k) < self.n_classes) or int(k) != k:
            raise InvalidArgumentError(f"class {k} out of range 0..{self.n_classes - 1}")

    def copy(self) -> "MlpClassifier":
        return MlpClassifier([W.copy() for W in self.weights], [b.copy() for b in self.biases],
                             self.temperature, self.image_shape)


def init_mlp(input_dim: int, hidden: Sequence[int], n_classes: int, seed: int = 0,
             image_shape=None) -> MlpClassifier:
    rng = np.random.default_rng(seed)
    dims = [input_dim, *hidden, n_classes]
    Ws = [rng.normal(scale=math.sqrt(2.0 / a), size=(a, b)) for a, b in zip(dims[:-1], dims[1:])]
    bs = [np.zeros(b) for b in dims[1:]]
    return MlpClassifier(Ws, bs, 1.0, image_shape)


def log_prob(model: MlpClassifier, k: int, x) -> float:
    model._check_class(k)
    return float(model.log_probs(np.asarray(x, dtype=np.float64).reshape(1, -1))[0, k])


def grad_log_prob(model: MlpClassifier, k: int, x) -> np.ndarray:
    return model.value_and_grad(k, x)[1]


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    split: np.ndarray
    n_classes: int
    image_shape: tuple

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        self.split = np.asarray(self.split)
        if self.X.ndim != 2 or len(self.X) != len(self.y) or len(self.y) != len(self.split):
            raise InvalidArgumentError("X, y and split must have matching lengths")
        if np.any(self.y < 0) or np.any(self.y >= self.n_classes):
            raise InvalidArgumentError("labels out of range")
        if np.any(self.X < 0) or np.any(self.X > 1):
            raise InvalidArgumentError("features must lie in [0, 1]")

    def part(self, name: str):
        m = self.split == name
        return self.X[m], self.y[m]


def make_blobs(n_per_class: int = 100, n_classes: int = 4, size: int = 8, seed: int = 0,
               noise: float = 0.05, label_noise: float = 0.0,
               fractions=(0.6, 0.2, 0.2)) -> Dataset:
    """Grayscale size x size images, each class a Gaussian blob with its own
    position and elongation, randomly jittered. Splits train/calibration/test.

    ``label_noise`` replaces that fraction of labels by uniformly drawn ones,
    which caps the attainable accuracy (useful for calibration fixtures).
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    X, y = [], []
    for k in range(n_classes):
        angle = 2 * math.pi * k / n_classes
        cy = (size - 1) / 2 + 0.27 * size * math.sin(angle)
        cx = (size - 1) / 2 + 0.27 * size * math.cos(angle)
        sy, sx = (0.12 * size, 0.22 * size) if k % 2 else (0.22 * size, 0.12 * size)
        for _ in range(n_per_class):
            jy, jx = rng.normal(scale=0.06 * size, size=2)
            amp = rng.uniform(0.6, 1.0)
            img = amp * np.exp(-0.5 * (((yy - cy - jy) / sy) ** 2 + ((xx - cx - jx) / sx) ** 2))
            img = img + rng.normal(scale=noise, size=img.shape) + 0.1
            X.append(np.clip(img, 0.0, 1.0).ravel())
            y.append(k)
    X, y = np.array(X), np.array(y)
    flip = rng.uniform(size=len(y)) < label_noise
    y[flip] = rng.integers(0, n_classes, size=flip.sum())
    perm = rng.permutation(len(y))
    X, y = X[perm], y[perm]
    n = len(y)
    n_train = int(round(fractions[0] * n))
    n_cal = int(round(fractions[1] * n))
    split = np.array(["train"] * n_train + ["calibration"] * n_cal
                     + ["test"] * (n - n_train - n_cal))
    return Dataset(X, y, split, n_classes, (size, size, 1))


@dataclass
class TrainConfig:
    hidden: tuple = (32,)
    epochs: int = 30
    learning_rate: float = 0.1
    batch_size: int = 32
    seed: int = 0


def _loss_and_param_grads(model, X, y):
    pre, acts = model._forward(X)
    lp = log_softmax(acts[-1], axis=1)
    n = len(y)
    loss = -lp[np.arange(n), y].mean()
    g = np.exp(lp)
    g[np.arange(n), y] -= 1.0
    g /= n
    gW, gb = [None] * len(model.weights), [None] * len(model.weights)
    for i in range(len(model.weights) - 1, -1, -1):
        if i < len(model.weights) - 1:
            g = g * expit(pre[i])
        gW[i] = acts[i].T @ g
        gb[i] = g.sum(axis=0)
        g = g @ model.weights[i].T
    return loss, gW, gb


def accuracy(model: MlpClassifier, X, y) -> float:
    return float(np.mean(model.predict(X) == y)) if len(y) else float("nan")


def train_mlp(config: TrainConfig, data: Dataset) -> MlpClassifier:
    """Mini-batch SGD on cross-entropy at temperature 1. Deterministic in seed.

    Per-epoch mean loss is kept in ``model.history``; accuracies are logged.
    """
    X, y = data.part("train")
    if len(y) == 0:
        raise InvalidArgumentError("train split is empty")
    model = init_mlp(X.shape[1], config.hidden, data.n_classes, config.seed, data.image_shape)
    rng = np.random.default_rng(config.seed + 1)
    for epoch in range(config.epochs):
        perm = rng.permutation(len(y))
        total = 0.0
        for s in range(0, len(y), config.batch_size):
            idx = perm[s:s + config.batch_size]
            loss, gW, gb = _loss_and_param_grads(model, X[idx], y[idx])
            if not math.isfinite(loss):
                raise NumericalError("training loss diverged", iteration=epoch)
            total += loss * len(idx)
            for i in range(len(model.weights)):
                model.weights[i] -= config.learning_rate * gW[i]
                model.biases[i] -= config.learning_rate * gb[i]
        model.history.append(total / len(y))
    Xt, yt = data.part("test")
    log.info("train accuracy %.4f, test accuracy %.4f", accuracy(model, X, y), accuracy(model, Xt, yt))
    return model


def ece_from_probs(probs, labels, bins: int = ECE_BINS) -> float:
    """Equal-width confidence bins (lo, hi]; sum_b n_b / N |acc_b - conf_b|."""
    probs = np.asarray(probs)
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise InvalidArgumentError("ECE of an empty split")
    if bins < 1:
        raise InvalidArgumentError("bins must be >= 1")
    conf = probs.max(axis=1)
    correct = (probs.argmax(axis=1) == labels).astype(np.float64)
    b = np.clip(np.ceil(conf * bins).astype(int) - 1, 0, bins - 1)
    acc = np.bincount(b, weights=correct, minlength=bins)
    cs = np.bincount(b, weights=conf, minlength=bins)
    return float(np.sum(np.abs(acc - cs)) / len(labels))


def ece(model: MlpClassifier, X, y, bins: int = ECE_BINS) -> float:
    return ece_from_probs(model.probs(X), y, bins)


def _golden_section(f, a, b, tol=1e-4):
    invphi = (math.sqrt(5) - 1) / 2
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def calibrate_temperature(model: MlpClassifier, X, y, bins: int = ECE_BINS,
                          bounds=TEMPERATURE_BOUNDS) -> float:
    """Temperature minimizing ECE on (X, y); golden-section search over log T.

    The current temperature is kept if the search does not beat it.
    """
    if len(y) == 0:
        raise InvalidArgumentError("calibration split is empty")
    z = model.raw_logits(X)

    def err(logt):
        return ece_from_probs(np.exp(log_softmax(z / math.exp(logt), axis=1)), y, bins)

    logt, best = _golden_section(err, math.log(bounds[0]), math.log(bounds[1]))
    current = err(math.log(model.temperature))
    if current <= best:
        return model.temperature
    return math.exp(logt)


def pick_target_second(model: MlpClassifier, x) -> int:
    """Class with the second largest probability; ties go to the lower index."""
    if model.n_classes < 2:
        raise InvalidArgumentError("need at least two classes")
    z = model.raw_logits(np.asarray(x, dtype=np.float64).reshape(1, -1))[0]
    order = np.argsort(-z, kind="stable")
    return int(order[1])
