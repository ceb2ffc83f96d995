"""Adam and the mini-batch training loop with early stopping."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from spectraloc.models.network import (
    NetworkParams,
    forward,
    init_params,
    loss_and_grad,
    loss_from_result,
    update_running_stats,
)


class TrainingError(RuntimeError):
    def __init__(self, message: str, epoch: int):
        self.epoch = epoch
        super().__init__(f"epoch {epoch}: {message}")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    learning_rate: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_epochs: int = 300
    patience: int = 20
    seed: int = 0
    dropout: float = 0.5
    hidden: int = 128
    loss: str = "mse"
    bn_first: bool = False
    arch: str = "auto"

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")
        if self.loss not in ("mse", "ce"):
            raise ValueError(f"loss must be 'mse' or 'ce', got {self.loss!r}")
        if self.max_epochs < 1 or self.patience < 1:
            raise ValueError("max_epochs and patience must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1 - self.beta1**self.t
        c2 = 1 - self.beta2**self.t
        for name, g in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            params[name] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class History:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1
    stopped_early: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate_loss(p: NetworkParams, spots_xy, x, y, loss: str = "mse", targets=None,
                  batch_size: int = 512) -> float:
    total = 0.0
    for s in range(0, len(x), batch_size):
        r = forward(p, spots_xy, x[s:s + batch_size], "eval")
        t = None if targets is None else targets[s:s + batch_size]
        value, _ = loss_from_result(r, y[s:s + batch_size], loss, t)
        total += value * len(r.weights)
    return total / len(x)


def _spot_targets(y: np.ndarray, spots_xy: np.ndarray) -> np.ndarray:
    d = ((y[:, None, :] - spots_xy[None]) ** 2).sum(axis=-1)
    return d.argmin(axis=1)


def train(cfg: TrainConfig, train_x, train_y, val_x, val_y, spots_xy) -> tuple[NetworkParams, History]:
    """Fit a network; returns the best-validation parameters and the loss history.

    Everything random (initialisation, shuffling, dropout) comes from one
    generator seeded with ``cfg.seed``, so runs are bit-reproducible.
    """
    train_x = np.asarray(train_x, dtype=np.float64)
    train_y = np.asarray(train_y, dtype=np.float64)
    val_x = np.asarray(val_x, dtype=np.float64)
    val_y = np.asarray(val_y, dtype=np.float64)
    spots_xy = np.asarray(spots_xy, dtype=np.float64)
    if len(train_x) == 0 or len(val_x) == 0:
        raise ValueError("training and validation sets must be non-empty")
    if train_x.shape[1] != val_x.shape[1]:
        raise ValueError("training and validation inputs differ in length")

    rng = np.random.default_rng(cfg.seed)
    params = init_params(train_x.shape[1], len(spots_xy), rng, hidden=cfg.hidden,
                         dropout=cfg.dropout, arch=cfg.arch, bn_first=cfg.bn_first)
    opt = Adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    train_t = _spot_targets(train_y, spots_xy) if cfg.loss == "ce" else None
    val_t = _spot_targets(val_y, spots_xy) if cfg.loss == "ce" else None

    hist = History()
    best = params.copy()
    best_val = math.inf
    stale = 0
    n = len(train_x)
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n)
        running = 0.0
        for s in range(0, n, cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            value, grads, result = loss_and_grad(
                params, spots_xy, train_x[idx], train_y[idx], rng, loss=cfg.loss,
                targets=None if train_t is None else train_t[idx],
            )
            if not math.isfinite(value):
                raise TrainingError("training loss is not finite", epoch)
            update_running_stats(params, result)
            opt.step(params.tensors, grads)
            running += value * len(idx)
        val = evaluate_loss(params, spots_xy, val_x, val_y, cfg.loss, val_t)
        if not math.isfinite(val):
            raise TrainingError("validation loss is not finite", epoch)
        hist.train_loss.append(running / n)
        hist.val_loss.append(val)
        if val < best_val:
            best_val, best, stale = val, params.copy(), 0
            hist.best_epoch = epoch
        else:
            stale += 1
            if stale >= cfg.patience:
                hist.stopped_early = True
                break
    return best, hist
