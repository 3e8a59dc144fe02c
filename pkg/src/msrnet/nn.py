"""Parameters, the regularized squared-error objective, Adam and training."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .tensor import ShapeError

log = logging.getLogger(__name__)


@dataclass
class Parameter:
    name: str
    value: np.ndarray
    grad: np.ndarray = None
    adam_m: np.ndarray = None
    adam_v: np.ndarray = None
    step_count: int = 0

    def __post_init__(self):
        for attr in ("grad", "adam_m", "adam_v"):
            if getattr(self, attr) is None:
                setattr(self, attr, np.zeros_like(self.value))
            elif getattr(self, attr).shape != self.value.shape:
                raise ShapeError(f"{self.name}.{attr} shape differs from value shape")

    @property
    def is_weight(self) -> bool:
        """Convolution weights are 4-D; biases are 1-D and exempt from decay."""
        return self.value.ndim == 4

    def zero_grad(self):
        self.grad[...] = 0


@dataclass
class TrainConfig:
    lr0: float = 1e-4
    lr_drop_iters: list = field(default_factory=lambda: [100_000, 200_000])
    lr_drop_factor: float = 10.0
    max_iters: int = 300_000
    batch: int = 64
    lam: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if self.lr0 < 0:
            raise ValueError(f"lr0 must be >= 0, got {self.lr0}")
        if self.batch < 1 or self.max_iters < 1:
            raise ValueError("batch and max_iters must be positive")
        if self.lr_drop_factor <= 0:
            raise ValueError("lr_drop_factor must be positive")
        drops = list(self.lr_drop_iters)
        if any(b <= a for a, b in zip(drops, drops[1:])):
            raise ValueError(f"lr_drop_iters must be strictly increasing: {drops}")
        if drops and drops[-1] >= self.max_iters:
            raise ValueError(f"lr drops {drops} must lie below max_iters={self.max_iters}")


def lr_at(iteration: int, cfg: TrainConfig) -> float:
    """Piecewise-constant schedule: divide by the drop factor at each drop."""
    if not 0 <= iteration < cfg.max_iters:
        raise ValueError(f"iteration {iteration} outside [0, {cfg.max_iters})")
    drops = sum(1 for d in cfg.lr_drop_iters if iteration >= d)
    return cfg.lr0 / cfg.lr_drop_factor ** drops


def loss_mse_l2(pred: np.ndarray, target: np.ndarray,
                params: Sequence[Parameter] = (), lam: float = 0.0):
    """Batch-mean squared Frobenius error plus ``lam`` times the squared
    Frobenius norm of every weight tensor (biases excluded).

    Returns ``(loss, grad_pred)``. The penalty gradient ``2*lam*W`` is added
    to each weight's ``grad`` in place.
    """
    if pred.shape != target.shape:
        raise ShapeError(f"pred {pred.shape} vs target {target.shape}")
    n = pred.shape[0]
    diff = pred.astype(np.float64) - target.astype(np.float64)
    loss = float(np.sum(diff * diff)) / n
    if lam:
        for p in params:
            if p.is_weight:
                w = p.value.astype(np.float64)
                loss += lam * float(np.sum(w * w))
                p.grad += (2.0 * lam * w).astype(p.grad.dtype)
    grad_pred = (2.0 / n) * diff
    return loss, grad_pred.astype(pred.dtype)


def adam_step(param: Parameter, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> Parameter:
    param.step_count += 1
    t = param.step_count
    g = param.grad
    param.adam_m[...] = beta1 * param.adam_m + (1 - beta1) * g
    param.adam_v[...] = beta2 * param.adam_v + (1 - beta2) * g * g
    m_hat = param.adam_m / (1 - beta1 ** t)
    v_hat = param.adam_v / (1 - beta2 ** t)
    param.value -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(param.value.dtype)
    return param


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class PatchDataset:
    """Aligned low-light / ground-truth patch stacks, both (N, 3, P, P).

    With ``full_batch`` every batch is the whole stack in order, whatever
    size is asked for.
    """

    ll: np.ndarray
    hq: np.ndarray
    full_batch: bool = False

    def __post_init__(self):
        if self.ll.shape != self.hq.shape or self.ll.ndim != 4:
            raise ShapeError(f"misaligned patch stacks {self.ll.shape} / {self.hq.shape}")
        if len(self.ll) == 0:
            raise ValueError("empty patch dataset")

    def __len__(self):
        return len(self.ll)

    def batch(self, iteration: int, size: int, seed: int):
        if self.full_batch:
            return self.ll, self.hq
        # sampling with replacement, keyed on (seed, iteration) so a resumed
        # run draws exactly the batches an uninterrupted run would
        rng = np.random.default_rng([seed, iteration])
        idx = rng.integers(0, len(self.ll), size=size)
        return self.ll[idx], self.hq[idx]


@dataclass
class TrainResult:
    losses: list
    iteration: int
    checkpoint: Optional[Path] = None


def train_loop(model, dataset: PatchDataset, cfg: TrainConfig, *, start_iter: int = 0,
               log_every: int = 100, checkpoint_every: int = 0,
               out_dir: Optional[Path] = None,
               callbacks: Sequence[Callable[[int, float, float], None]] = ()) -> TrainResult:
    """Run Adam on ``model`` from ``start_iter`` up to ``cfg.max_iters``.

    ``model`` must provide ``parameters()`` and ``forward_backward(x, y, lam)``.
    With ``out_dir`` set, ``loss.csv`` (``iter,lr,loss``) is appended to every
    ``log_every`` iterations and checkpoints are written every
    ``checkpoint_every`` iterations and at the end.
    """
    from .checkpoint import save_checkpoint

    cfg.validate()
    params = model.parameters()
    losses = []
    writer = fh = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        log_path = out_dir / "loss.csv"
        fresh = start_iter == 0 or not log_path.exists()
        fh = open(log_path, "w" if fresh else "a", newline="")
        writer = csv.writer(fh)
        if fresh:
            writer.writerow(["iter", "lr", "loss"])
    ckpt = None
    try:
        for it in range(start_iter, cfg.max_iters):
            x, y = dataset.batch(it, cfg.batch, cfg.seed)
            loss = model.forward_backward(x, y, cfg.lam)
            if not math.isfinite(loss):
                dump = None
                if out_dir is not None:
                    dump = out_dir / f"diverged_iter{it}.npz"
                    np.savez(dump, ll=x, hq=y)
                raise TrainingDiverged(
                    f"non-finite loss {loss} at iteration {it}; batch dumped to {dump}")
            lr = lr_at(it, cfg)
            for p in params:
                adam_step(p, lr)
            losses.append(loss)
            for cb in callbacks:
                cb(it, lr, loss)
            if log_every and (it % log_every == 0 or it == cfg.max_iters - 1):
                log.info("iter %d lr %.3g loss %.6g", it, lr, loss)
                if writer is not None:
                    writer.writerow([it, repr(lr), repr(loss)])
                    fh.flush()
            if out_dir is not None and checkpoint_every and (it + 1) % checkpoint_every == 0:
                ckpt = save_checkpoint(out_dir / f"ckpt_{it + 1:07d}.msrn", model,
                                       iteration=it + 1)
        if out_dir is not None:
            ckpt = save_checkpoint(out_dir / "final.msrn", model, iteration=cfg.max_iters)
    finally:
        if fh is not None:
            fh.close()
    return TrainResult(losses, cfg.max_iters, ckpt)
