"""One-shot MLP baseline: 784 -> H (ReLU) -> 10, Adam on softmax cross-entropy."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embed import EmbeddingSpace

N_IN = 784
N_OUT = 10
PARAM_NAMES = ("w1", "b1", "w2", "b2")


@dataclass
class MlpModel:
    w1: np.ndarray  # (784, H)
    b1: np.ndarray  # (H,)
    w2: np.ndarray  # (H, 10)
    b2: np.ndarray  # (10,)

    @property
    def hidden_size(self) -> int:
        return self.b1.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "MlpModel":
        return MlpModel(*(p.copy() for p in self.params().values()))

    def save(self, path) -> None:
        """Binary matrices (u64 rows, u64 cols, f64 LE row-major) back to back, with a JSON header."""
        path = Path(path)
        parts = []
        for p in self.params().values():
            m = np.atleast_2d(p) if p.ndim == 1 else p
            parts.append(np.array(m.shape, dtype="<u8").tobytes() + np.ascontiguousarray(m, dtype="<f8").tobytes())
        path.write_bytes(b"".join(parts))
        header = {"hidden_size": self.hidden_size, "activation": "relu", "order": list(PARAM_NAMES)}
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(header))

    @classmethod
    def load(cls, path) -> "MlpModel":
        buf = Path(path).read_bytes()
        off, arrays = 0, []
        for name in PARAM_NAMES:
            rows, cols = np.frombuffer(buf, dtype="<u8", count=2, offset=off)
            off += 16
            a = np.frombuffer(buf, dtype="<f8", count=int(rows * cols), offset=off).reshape(int(rows), int(cols))
            off += 8 * int(rows * cols)
            arrays.append(a[0].copy() if name.startswith("b") else a.copy())
        return cls(*arrays)


def init_mlp(hidden: int, seed: int = 0, n_in: int = N_IN, n_out: int = N_OUT) -> MlpModel:
    """Uniform(+-1/sqrt(fan_in)) for weights and biases."""
    if hidden < 1:
        raise ValueError("hidden size must be >= 1")
    rng = np.random.default_rng(seed)
    a1, a2 = 1.0 / math.sqrt(n_in), 1.0 / math.sqrt(hidden)
    return MlpModel(
        rng.uniform(-a1, a1, (n_in, hidden)),
        rng.uniform(-a1, a1, hidden),
        rng.uniform(-a2, a2, (hidden, n_out)),
        rng.uniform(-a2, a2, n_out),
    )


def normalize_images(images) -> np.ndarray:
    x = np.asarray(images)
    return x.reshape(len(x), -1).astype(np.float64) / 255.0


def forward(model: MlpModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (hidden, logits) for one flattened input or a batch."""
    hidden = np.maximum(0.0, x @ model.w1 + model.b1)
    return hidden, hidden @ model.w2 + model.b2


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    logits = np.atleast_2d(logits)
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(len(labels)), labels].mean())


def loss_and_grads(model: MlpModel, x: np.ndarray, y: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
    pre = x @ model.w1 + model.b1
    h = np.maximum(0.0, pre)
    logits = h @ model.w2 + model.b2
    n = len(y)
    p = softmax(logits)
    loss = cross_entropy(logits, y)
    dlogits = p
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    dh = dlogits @ model.w2.T
    dpre = dh * (pre > 0)
    return loss, {
        "w1": x.T @ dpre,
        "b1": dpre.sum(0),
        "w2": h.T @ dlogits,
        "b2": dlogits.sum(0),
    }


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def update(self, model: MlpModel, grads: dict[str, np.ndarray]) -> None:
        self.step += 1
        c1 = 1.0 - self.beta1**self.step
        c2 = 1.0 - self.beta2**self.step
        for name, g in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            param = getattr(model, name)
            param -= self.lr * (self.m[name] / c1) / (np.sqrt(self.v[name] / c2) + self.eps)


@dataclass
class TrainResult:
    model: MlpModel
    steps: int
    converged: bool
    loss_history: list


def train_one_shot(model: MlpModel, x: np.ndarray, y: np.ndarray, *, max_epochs: int = 5000,
                   lr: float = 1e-3, target_loss: float = 1e-3) -> TrainResult:
    """Full-batch Adam until every example is fit and loss < ``target_loss``.

    Non-convergence is reported through ``converged``; it is not an error.
    """
    y = np.asarray(y, dtype=np.int64)
    if sorted(y.tolist()) != list(range(N_OUT)):
        raise ValueError("one-shot training needs exactly one example of each class")
    model = model.copy()
    opt = AdamState(lr=lr)
    history = []
    for step in range(max_epochs):
        loss, grads = loss_and_grads(model, x, y)
        history.append(loss)
        if loss < target_loss and np.array_equal(forward(model, x)[1].argmax(1), y):
            return TrainResult(model, step, True, history)
        opt.update(model, grads)
    _, logits = forward(model, x)
    loss = cross_entropy(logits, y)
    history.append(loss)
    ok = loss < target_loss and np.array_equal(logits.argmax(1), y)
    return TrainResult(model, max_epochs, ok, history)


def embed_hidden(model: MlpModel, images, labels) -> EmbeddingSpace:
    x = images if np.asarray(images).dtype.kind == "f" else normalize_images(images)
    hidden, _ = forward(model, np.asarray(x).reshape(len(x), -1))
    return EmbeddingSpace(hidden, labels, "cosine", "hidden-activation")


def count_params(kind: str, size: int, full: bool = False) -> int:
    """``ann``: 785*H, the input layer only; ``full=True`` adds the 10-way
    output layer. ``bnn``: n^2 + 3n."""
    if size < 1:
        raise ValueError("size must be >= 1")
    if kind == "ann":
        return 785 * size + (size * N_OUT + N_OUT if full else 0)
    if kind == "bnn":
        return size * size + 3 * size
    raise ValueError(f"unknown model kind {kind!r}")
