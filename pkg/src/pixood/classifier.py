"""Small dense classifier providing the per-class logit axis.

A two-layer network with an erf-exact GELU hidden layer, trained by the
same adaptive-moment optimizer as the condensation loop, plus a purely
affine probe trained by the identical loop for baseline comparisons.
"""

import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .core import FormatError, atomic_write_bytes
from .optim import AdamW

__all__ = [
    "MLPParams",
    "TrainConfig",
    "gelu",
    "forward",
    "softmax_cross_entropy",
    "train_mlp",
    "linear_probe",
    "logit_score",
    "write_params",
    "read_params",
]

_MAGIC = b"MLP1"


@dataclass
class MLPParams:
    """Dense network parameters.

    ``w1`` is H×D and ``w2`` is C×H.  The affine-probe restricted form is
    encoded as H = 0: ``w1``/``b1`` are empty and ``w2`` is C×D, applied to
    the input directly.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        self.w1 = np.asarray(self.w1, dtype=np.float64)
        self.b1 = np.asarray(self.b1, dtype=np.float64)
        self.w2 = np.asarray(self.w2, dtype=np.float64)
        self.b2 = np.asarray(self.b2, dtype=np.float64)
        h = self.w1.shape[0] if self.w1.ndim == 2 else -1
        if self.w1.ndim != 2 or self.b1.shape != (h,) or self.w2.ndim != 2:
            raise ValueError("inconsistent parameter shapes")
        if h > 0 and self.w2.shape[1] != h:
            raise ValueError("inconsistent parameter shapes")
        if self.b2.shape != (self.w2.shape[0],):
            raise ValueError("inconsistent parameter shapes")
        for a in (self.w1, self.b1, self.w2, self.b2):
            if not np.all(np.isfinite(a)):
                raise ValueError("parameters must be finite")

    @property
    def hidden_width(self) -> int:
        return self.w1.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w1.shape[1] if self.hidden_width > 0 else self.w2.shape[1]

    @property
    def class_count(self) -> int:
        return self.w2.shape[0]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    learning_rate: float = 1e-4
    batch_size: int = 128
    hidden_width: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.hidden_width < 0:
            raise ValueError("batch_size must be >= 1 and hidden_width >= 0")


def gelu(x):
    """x times the standard normal CDF, evaluated exactly via erf."""
    x = np.asarray(x, dtype=np.float64)
    return x * ndtr(x)


def _gelu_grad(x):
    pdf = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
    return ndtr(x) + x * pdf


def forward(params: MLPParams, x) -> np.ndarray:
    """Logits for one point (D,) or a batch (N, D)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    pts = x[None, :] if single else x
    if pts.ndim != 2 or pts.shape[1] != params.input_dim:
        raise ValueError(
            f"input has dimension {pts.shape[-1]}, parameters expect {params.input_dim}"
        )
    if params.hidden_width > 0:
        hidden = gelu(pts @ params.w1.T + params.b1)
        logits = hidden @ params.w2.T + params.b2
    else:
        logits = pts @ params.w2.T + params.b2
    return logits[0] if single else logits


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy and its gradient w.r.t. the logits.

    Log-sum-exp with max shift; finite for logit magnitudes up to 1e4 and
    beyond.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    loss = float((lse - shifted[np.arange(n), labels]).mean())
    probs = np.exp(shifted)
    probs /= probs.sum(axis=1, keepdims=True)
    dlogits = probs
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    return loss, dlogits


def loss_and_gradients(params: MLPParams, pts: np.ndarray, labels: np.ndarray):
    """Cross-entropy loss plus gradients for every parameter array."""
    pts = np.asarray(pts, dtype=np.float64)
    if params.hidden_width > 0:
        pre = pts @ params.w1.T + params.b1
        hidden = gelu(pre)
        logits = hidden @ params.w2.T + params.b2
        loss, dlogits = softmax_cross_entropy(logits, labels)
        gw2 = dlogits.T @ hidden
        gb2 = dlogits.sum(axis=0)
        dhidden = (dlogits @ params.w2) * _gelu_grad(pre)
        gw1 = dhidden.T @ pts
        gb1 = dhidden.sum(axis=0)
    else:
        logits = pts @ params.w2.T + params.b2
        loss, dlogits = softmax_cross_entropy(logits, labels)
        gw2 = dlogits.T @ pts
        gb2 = dlogits.sum(axis=0)
        gw1 = np.zeros_like(params.w1)
        gb1 = np.zeros_like(params.b1)
    return loss, [gw1, gb1, gw2, gb2]


def _init_params(dim: int, hidden: int, classes: int, rng) -> MLPParams:
    if hidden > 0:
        w1 = rng.standard_normal((hidden, dim)) * np.sqrt(2.0 / dim)
        b1 = np.zeros(hidden)
        w2 = rng.standard_normal((classes, hidden)) * np.sqrt(1.0 / hidden)
    else:
        w1 = np.zeros((0, dim))
        b1 = np.zeros(0)
        w2 = rng.standard_normal((classes, dim)) * np.sqrt(1.0 / dim)
    return MLPParams(w1, b1, w2, np.zeros(classes))


def _quantize(params: MLPParams) -> MLPParams:
    # round-trip through float32 so saved and in-memory parameters agree
    return MLPParams(
        *(a.astype(np.float32).astype(np.float64) for a in (params.w1, params.b1, params.w2, params.b2))
    )


def _train(data, config: TrainConfig, hidden: int) -> MLPParams:
    pts = np.asarray(data.points, dtype=np.float64)
    labels = data.labels
    if labels is None:
        raise ValueError("training requires labels")
    classes = int(labels.max()) + 1
    if len(np.unique(labels)) < 2:
        raise ValueError("training requires at least two classes")
    rng = np.random.default_rng(config.seed)
    params = _init_params(pts.shape[1], hidden, classes, rng)
    arrays = [params.w1, params.b1, params.w2, params.b2]
    opt = AdamW(arrays, lr=config.learning_rate)
    n = pts.shape[0]
    bs = min(config.batch_size, n)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, bs):
            idx = order[start : start + bs]
            _, grads = loss_and_gradients(params, pts[idx], labels[idx])
            opt.step(grads)
    return _quantize(params)


def train_mlp(data, config: TrainConfig = TrainConfig()) -> MLPParams:
    """Fit the two-layer network; deterministic for a fixed seed."""
    return _train(data, config, config.hidden_width)


def linear_probe(data, config: TrainConfig = TrainConfig()) -> MLPParams:
    """Fit the affine-only restricted form with the identical loop."""
    return _train(data, config, 0)


def logit_score(params: MLPParams, x, class_id: int) -> float:
    """The raw logit of one class; the classifier's projection coordinate."""
    if not 0 <= class_id < params.class_count:
        raise ValueError(f"class_id {class_id} out of range [0, {params.class_count})")
    return float(forward(params, np.asarray(x, dtype=np.float64))[..., class_id])


def write_params(path, params: MLPParams) -> None:
    """Fixed-layout binary dump; float32 little-endian arrays."""
    head = _MAGIC + struct.pack(
        "<III", params.input_dim, params.hidden_width, params.class_count
    )
    body = b"".join(
        np.ascontiguousarray(a, dtype="<f4").tobytes()
        for a in (params.w1, params.b1, params.w2, params.b2)
    )
    atomic_write_bytes(path, head + body)


def read_params(path) -> MLPParams:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}")
    if len(blob) < 16:
        raise FormatError(f"{path}: truncated header")
    dim, hidden, classes = struct.unpack("<III", blob[4:16])
    w2_cols = hidden if hidden > 0 else dim
    counts = [hidden * dim, hidden, classes * w2_cols, classes]
    need = 16 + 4 * sum(counts)
    if len(blob) != need:
        raise FormatError(f"{path}: expected {need} bytes, found {len(blob)}")
    offset = 16
    arrays = []
    for count in counts:
        arrays.append(np.frombuffer(blob, dtype="<f4", count=count, offset=offset).astype(np.float64))
        offset += 4 * count
    w1 = arrays[0].reshape(hidden, dim)
    w2 = arrays[2].reshape(classes, w2_cols)
    return MLPParams(w1, arrays[1], w2, arrays[3])
