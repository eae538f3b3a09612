"""MSE loss, Adam and the epoch loop."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .dataset import Pairs, SplitDataset
from .dynamics import fmt
from .model import TnmModel, backward, forward, predict

DIVERGENCE_LIMIT = 1e6


class DivergenceError(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"loss diverged at epoch {epoch}: {loss}")
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 60
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    # None means one full-batch update per epoch
    batch_size: int | None = 8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1 or None")


def mse(predictions, targets) -> float:
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.size == 0:
        raise ValueError("mse of an empty batch")
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {t.shape}")
    diff = p - t
    return float(np.mean(diff * diff))


def mse_gradient(prediction, target, n: int | None = None) -> np.ndarray:
    """d(mse)/d(prediction); ``n`` is the batch size of the enclosing loss.

    With batched ``(B, d)`` input ``n`` defaults to ``B``.
    """
    p = np.asarray(prediction, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if n is None:
        n = p.shape[0] if p.ndim == 2 else 1
    return 2.0 * (p - t) / (n * p.shape[-1])


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState,
              cfg: TrainConfig) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam update, applied in place to ``params``."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state disagree in length")
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.epsilon)
    return params, state


def loss_and_grads(model: TnmModel, pairs: Pairs):
    pred, cache = forward(model, pairs.windows)
    grads = backward(model, cache, mse_gradient(pred, pairs.targets))
    return mse(pred, pairs.targets), [g for layer in grads for g in layer]


@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    model: TnmModel | None = None
    wall_time: float = 0.0

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "val_loss"])
            for i, (tl, vl) in enumerate(zip(self.train_loss, self.val_loss), start=1):
                w.writerow([i, fmt(tl), fmt(vl)])


def _check_loss(epoch: int, loss: float) -> None:
    if not np.isfinite(loss) or loss > DIVERGENCE_LIMIT:
        raise DivergenceError(epoch, loss)


def fit(model: TnmModel, data: SplitDataset, cfg: TrainConfig, log=None) -> TrainReport:
    """Train ``model`` in place on ``data.train``, monitoring ``data.val`` after every epoch.

    Each epoch visits the training pairs in a seeded random order (or in
    order, full batch, when ``cfg.batch_size`` is None) with one Adam update
    per batch.  Recorded losses are post-epoch MSEs in standardized units.
    """
    if len(data.train) == 0 or len(data.val) == 0:
        raise ValueError("fit needs nonempty train and val splits")
    t0 = time.perf_counter()
    params = model.flat_params()
    state = AdamState.zeros_like(params)
    rng = np.random.default_rng(cfg.seed)
    n = len(data.train)
    bs = n if cfg.batch_size is None else min(cfg.batch_size, n)
    report = TrainReport(model=model)
    for epoch in range(1, cfg.epochs + 1):
        order = np.arange(n) if bs == n else rng.permutation(n)
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            batch = Pairs(data.train.windows[idx], data.train.targets[idx])
            loss, grads = loss_and_grads(model, batch)
            _check_loss(epoch, loss)
            adam_step(params, grads, state, cfg)
        tl = mse(predict(model, data.train.windows), data.train.targets)
        vl = mse(predict(model, data.val.windows), data.val.targets)
        _check_loss(epoch, tl)
        _check_loss(epoch, vl)
        report.train_loss.append(tl)
        report.val_loss.append(vl)
        if log is not None:
            log(f"epoch {epoch:4d}  train {tl:.6g}  val {vl:.6g}")
    report.wall_time = time.perf_counter() - t0
    return report
