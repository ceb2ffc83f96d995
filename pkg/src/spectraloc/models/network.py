"""1D CNN with a softmax-over-spots head, forward and backward in plain numpy.

Layout of activations is channel-last, ``(batch, length, channels)``. The
convolution weight is stored PyTorch-style as ``(out, in, kernel)``.

Pipeline (``bn_first=False``, the default):

    conv1(1->32, k3, s2) -> ReLU -> BN -> conv2(32->64, k3, s2) -> ReLU -> BN
    -> flatten -> fc1 -> ReLU -> dropout -> fc2 -> softmax -> weights @ spots

Inputs too short for two valid convolutions use the ``"mlp"`` variant,
``flatten -> fc1 -> ReLU -> dropout -> fc2``.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

KERNEL = 3
STRIDE = 2
CONV1_CHANNELS = 32
CONV2_CHANNELS = 64
BN_EPS = 1e-5
BN_MOMENTUM = 0.1
MIN_CNN_LENGTH = 7


class ShapeError(ValueError):
    pass


def conv_out_length(length: int) -> int:
    return (length - KERNEL) // STRIDE + 1


def cnn_lengths(length: int) -> tuple[int, int]:
    """Output lengths of the two stride-2 valid convolutions."""
    if length < MIN_CNN_LENGTH:
        raise ShapeError(
            f"input length {length} too short for two convolutions; minimum is {MIN_CNN_LENGTH}"
        )
    l1 = conv_out_length(length)
    return l1, conv_out_length(l1)


@dataclass
class NetworkParams:
    arch: str
    input_length: int
    n_spots: int
    hidden: int = 128
    dropout: float = 0.5
    bn_first: bool = False
    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    buffers: dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "NetworkParams":
        return copy.deepcopy(self)

    @property
    def flat_length(self) -> int:
        if self.arch == "mlp":
            return self.input_length
        return CONV2_CHANNELS * cnn_lengths(self.input_length)[1]

    def n_parameters(self) -> int:
        return sum(t.size for t in self.tensors.values())


def init_params(input_length: int, n_spots: int, rng: np.random.Generator, *, hidden: int = 128,
                dropout: float = 0.5, arch: str = "auto", bn_first: bool = False) -> NetworkParams:
    """He-normal weights, zero biases, unit BN scale and zero shift."""
    if n_spots < 2:
        raise ShapeError("the location head needs at least two spots")
    if arch == "auto":
        arch = "cnn" if input_length >= MIN_CNN_LENGTH else "mlp"
    if arch not in ("cnn", "mlp"):
        raise ValueError(f"unknown architecture {arch!r}")

    def he(shape, fan_in):
        return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)

    p = NetworkParams(arch, input_length, n_spots, hidden, dropout, bn_first)
    t = p.tensors
    if arch == "cnn":
        cnn_lengths(input_length)
        t["conv1.weight"] = he((CONV1_CHANNELS, 1, KERNEL), KERNEL)
        t["conv1.bias"] = np.zeros(CONV1_CHANNELS)
        t["bn1.weight"] = np.ones(CONV1_CHANNELS)
        t["bn1.bias"] = np.zeros(CONV1_CHANNELS)
        t["conv2.weight"] = he((CONV2_CHANNELS, CONV1_CHANNELS, KERNEL), CONV1_CHANNELS * KERNEL)
        t["conv2.bias"] = np.zeros(CONV2_CHANNELS)
        t["bn2.weight"] = np.ones(CONV2_CHANNELS)
        t["bn2.bias"] = np.zeros(CONV2_CHANNELS)
        for name, ch in (("bn1", CONV1_CHANNELS), ("bn2", CONV2_CHANNELS)):
            p.buffers[f"{name}.running_mean"] = np.zeros(ch)
            p.buffers[f"{name}.running_var"] = np.ones(ch)
    flat = p.flat_length
    t["fc1.weight"] = he((flat, hidden), flat)
    t["fc1.bias"] = np.zeros(hidden)
    t["fc2.weight"] = he((hidden, n_spots), hidden)
    t["fc2.bias"] = np.zeros(n_spots)
    return p


# --- layers ----------------------------------------------------------------

def _conv_forward(x, w, b):
    # x: (B, L, C), w: (O, C, K)
    n, _, c = x.shape
    o = w.shape[0]
    cols = sliding_window_view(x, KERNEL, axis=1)[:, ::STRIDE]  # (B, Lout, C, K)
    lout = cols.shape[1]
    cols = cols.reshape(n, lout, c * KERNEL)
    wmat = w.reshape(o, c * KERNEL).T
    return cols @ wmat + b, cols


def _conv_backward(dout, cols, w, in_length):
    n, lout, o = dout.shape
    c = w.shape[1]
    wmat = w.reshape(o, c * KERNEL).T
    dw = (cols.reshape(-1, c * KERNEL).T @ dout.reshape(-1, o)).T.reshape(w.shape)
    db = dout.sum(axis=(0, 1))
    dcols = (dout @ wmat.T).reshape(n, lout, c, KERNEL)
    dx = np.zeros((n, in_length, c))
    for k in range(KERNEL):
        dx[:, k:k + STRIDE * lout:STRIDE, :] += dcols[:, :, :, k]
    return dx, dw, db


def _bn_forward(x, gamma, beta, mean, var, train):
    if train:
        mu = x.mean(axis=(0, 1))
        v = x.var(axis=(0, 1))
    else:
        mu, v = mean, var
    inv = 1.0 / np.sqrt(v + BN_EPS)
    xhat = (x - mu) * inv
    return gamma * xhat + beta, (xhat, inv, mu, v)


def _bn_backward(dy, gamma, cache):
    xhat, inv, _, _ = cache
    m = dy.shape[0] * dy.shape[1]
    dgamma = (dy * xhat).sum(axis=(0, 1))
    dbeta = dy.sum(axis=(0, 1))
    dxhat = dy * gamma
    dx = (inv / m) * (m * dxhat - dxhat.sum(axis=(0, 1)) - xhat * (dxhat * xhat).sum(axis=(0, 1)))
    return dx, dgamma, dbeta


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class ForwardResult:
    weights: np.ndarray  # (B, K) softmax over spots
    coords: np.ndarray  # (B, 2)
    logits: np.ndarray
    cache: dict


def _conv_block(x, p: NetworkParams, idx: int, train: bool, cache: dict, stats: dict):
    t = p.tensors
    z, cols = _conv_forward(x, t[f"conv{idx}.weight"], t[f"conv{idx}.bias"])
    bn = (t[f"bn{idx}.weight"], t[f"bn{idx}.bias"],
          p.buffers[f"bn{idx}.running_mean"], p.buffers[f"bn{idx}.running_var"])
    if p.bn_first:
        y, bcache = _bn_forward(z, *bn, train)
        a = np.maximum(y, 0.0)
        relu_in = y
    else:
        a0 = np.maximum(z, 0.0)
        a, bcache = _bn_forward(a0, *bn, train)
        relu_in = z
    cache[f"conv{idx}"] = (cols, x.shape[1], relu_in, bcache)
    stats[f"bn{idx}"] = bcache
    return a


def forward(p: NetworkParams, spots_xy: np.ndarray, x: np.ndarray, mode: str = "eval",
            rng: np.random.Generator | None = None, dropout: bool = True) -> ForwardResult:
    """Run a batch ``x`` of shape ``(B, L)`` (or a single ``(L,)`` vector).

    ``mode="train"`` uses batch statistics in batch norm and applies dropout
    (unless ``dropout=False``); ``"eval"`` uses running statistics and is
    deterministic.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != p.input_length:
        raise ShapeError(f"input length {x.shape[1]} does not match network ({p.input_length})")
    spots_xy = np.asarray(spots_xy, dtype=np.float64)
    if spots_xy.shape != (p.n_spots, 2):
        raise ShapeError(f"spot table shape {spots_xy.shape} does not match {p.n_spots} spots")
    train = mode == "train"
    t = p.tensors
    cache: dict = {"x": x, "spots_xy": spots_xy}
    stats: dict = {}
    if p.arch == "cnn":
        h = x[:, :, None]
        h = _conv_block(h, p, 1, train, cache, stats)
        h = _conv_block(h, p, 2, train, cache, stats)
        cache["flat_shape"] = h.shape
        flat = h.reshape(x.shape[0], -1)
    else:
        flat = x
    cache["flat"] = flat
    z1 = flat @ t["fc1.weight"] + t["fc1.bias"]
    h1 = np.maximum(z1, 0.0)
    cache["z1"] = z1
    if train and dropout and p.dropout > 0:
        if rng is None:
            raise ValueError("training-mode dropout needs an rng stream")
        keep = (rng.random(h1.shape) >= p.dropout) / (1.0 - p.dropout)
        h1 = h1 * keep
        cache["keep"] = keep
    cache["h1"] = h1
    logits = h1 @ t["fc2.weight"] + t["fc2.bias"]
    w = softmax(logits)
    cache["stats"] = stats
    return ForwardResult(w, w @ spots_xy, logits, cache)


def update_running_stats(p: NetworkParams, result: ForwardResult) -> None:
    n = result.cache["x"].shape[0]
    for name, (xhat, inv, mu, var) in result.cache["stats"].items():
        m = n * xhat.shape[1]
        unbiased = var * m / max(m - 1, 1)
        rm, rv = p.buffers[f"{name}.running_mean"], p.buffers[f"{name}.running_var"]
        rm *= 1 - BN_MOMENTUM
        rm += BN_MOMENTUM * mu
        rv *= 1 - BN_MOMENTUM
        rv += BN_MOMENTUM * unbiased


def backward(p: NetworkParams, result: ForwardResult, dlogits: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of every trainable tensor given d(loss)/d(logits)."""
    t = p.tensors
    c = result.cache
    g: dict[str, np.ndarray] = {}
    g["fc2.weight"] = c["h1"].T @ dlogits
    g["fc2.bias"] = dlogits.sum(axis=0)
    dh1 = dlogits @ t["fc2.weight"].T
    if "keep" in c:
        dh1 = dh1 * c["keep"]
    dz1 = dh1 * (c["z1"] > 0)
    g["fc1.weight"] = c["flat"].T @ dz1
    g["fc1.bias"] = dz1.sum(axis=0)
    if p.arch == "mlp":
        return g
    dh = (dz1 @ t["fc1.weight"].T).reshape(c["flat_shape"])
    for idx in (2, 1):
        cols, in_len, relu_in, bcache = c[f"conv{idx}"]
        gamma = t[f"bn{idx}.weight"]
        if p.bn_first:
            dy = dh * (relu_in > 0)
            dz, g[f"bn{idx}.weight"], g[f"bn{idx}.bias"] = _bn_backward(dy, gamma, bcache)
        else:
            da, g[f"bn{idx}.weight"], g[f"bn{idx}.bias"] = _bn_backward(dh, gamma, bcache)
            dz = da * (relu_in > 0)
        dh, g[f"conv{idx}.weight"], g[f"conv{idx}.bias"] = _conv_backward(
            dz, cols, t[f"conv{idx}.weight"], in_len
        )
    return g


def loss_from_result(result: ForwardResult, y: np.ndarray, loss: str = "mse",
                     targets: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """Loss value and d(loss)/d(logits).

    ``"mse"`` is the mean squared Euclidean coordinate error; ``"ce"`` is
    cross-entropy on the spot index ``targets``.
    """
    w = result.weights
    b = w.shape[0]
    if loss == "mse":
        diff = result.coords - y
        value = float((diff**2).sum() / b)
        dcoords = 2.0 * diff / b
        dw = dcoords @ result.cache["spots_xy"].T
        dlogits = w * (dw - (dw * w).sum(axis=1, keepdims=True))
    elif loss == "ce":
        if targets is None:
            raise ValueError("cross-entropy loss needs spot-index targets")
        idx = np.arange(b)
        value = float(-np.log(np.maximum(w[idx, targets], 1e-300)).sum() / b)
        dlogits = w.copy()
        dlogits[idx, targets] -= 1.0
        dlogits /= b
    else:
        raise ValueError(f"unknown loss {loss!r}")
    return value, dlogits


def loss_and_grad(p: NetworkParams, spots_xy: np.ndarray, x: np.ndarray, y: np.ndarray,
                  rng: np.random.Generator | None = None, *, dropout: bool = True,
                  loss: str = "mse", targets: np.ndarray | None = None,
                  ) -> tuple[float, dict[str, np.ndarray], ForwardResult]:
    """Training-mode loss over a batch and the gradient of every tensor."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1, 2)
    if x.ndim != 2 or x.shape[0] == 0 or x.shape[0] != y.shape[0]:
        raise ShapeError("batch must be a non-empty (B, L) array with matching (B, 2) targets")
    result = forward(p, spots_xy, x, "train", rng, dropout=dropout)
    value, dlogits = loss_from_result(result, y, loss, targets)
    return value, backward(p, result, dlogits), result
