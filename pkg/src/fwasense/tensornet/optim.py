"""Adam, losses, and the shared fit loop (early stopping + plateau decay)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import ops
from .tensor import Tensor

BCE_CLAMP = 1e-7


class TrainingDiverged(RuntimeError):
    """Loss became non-finite."""


def adam_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    state: dict,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[list[np.ndarray], dict]:
    """One functional Adam update with bias correction; returns new params
    and state, leaving the inputs untouched."""
    if len(params) != len(grads):
        raise ValueError(f"{len(params)} params vs {len(grads)} grads")
    t = state.get("t", 0) + 1
    ms = state.get("m") or [np.zeros_like(p) for p in params]
    vs = state.get("v") or [np.zeros_like(p) for p in params]
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, ms, vs):
        if p.shape != g.shape:
            raise ValueError(f"param shape {p.shape} != grad shape {g.shape}")
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        new_params.append((p - lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.dtype))
        new_m.append(m.astype(p.dtype))
        new_v.append(v.astype(p.dtype))
    return new_params, {"t": t, "m": new_m, "v": new_v}


class Adam:
    def __init__(self, named_params: list[tuple[str, Tensor]], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.named_params = named_params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in named_params}
        self.v = {name: np.zeros_like(p.data) for name, p in named_params}

    def zero_grad(self) -> None:
        for _, p in self.named_params:
            p.grad = None

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for name, p in self.named_params:
            if p.grad is None:
                continue
            g = p.grad
            m = self.m[name] = b1 * self.m[name] + (1.0 - b1) * g
            v = self.v[name] = b2 * self.v[name] + (1.0 - b2) * (g * g)
            p.data -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.data.dtype)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {"opt:t": np.array([self.t], dtype=np.int64)}
        for name in self.m:
            out[f"opt:m:{name}"] = self.m[name]
            out[f"opt:v:{name}"] = self.v[name]
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.t = int(arrays["opt:t"][0])
        for name in self.m:
            self.m[name] = arrays[f"opt:m:{name}"].copy()
            self.v[name] = arrays[f"opt:v:{name}"].copy()


def bce_loss(pred: Tensor, labels) -> Tensor:
    """Binary cross-entropy over probabilities, clamped to
    [1e-7, 1 - 1e-7]; mean over the batch."""
    labels = ops.as_tensor(labels, pred.dtype)
    p = ops.clip(pred, BCE_CLAMP, 1.0 - BCE_CLAMP)
    loss = ops.neg(labels * ops.log(p) + (1.0 - labels) * ops.log(1.0 - p))
    return ops.mean(loss)


def mse_loss(pred: Tensor, target) -> Tensor:
    target = ops.as_tensor(target, pred.dtype)
    if target.shape != pred.shape:
        raise ValueError(f"pred shape {pred.shape} != target shape {target.shape}")
    diff = pred - target
    return ops.mean(diff * diff)


@dataclass
class FitSchedule:
    lr: float
    epochs: int
    batch_size: int
    early_stop_patience: int = 15
    lr_decay: float = 0.5
    lr_patience: int = 5
    min_lr: float = 1e-6


def fit_loop(schedule: FitSchedule, optimizer: Adam, model,
             train_epoch_fn, val_loss_fn, log_fn=None) -> list[dict]:
    """Generic epoch loop: run ``train_epoch_fn(epoch)``, evaluate
    ``val_loss_fn()``, decay the LR on plateau, stop early, and restore the
    best-validation weights at the end. Returns the per-epoch history."""
    history: list[dict] = []
    best_val = math.inf
    best_state: dict | None = None
    since_best = 0
    since_decay = 0
    optimizer.lr = schedule.lr
    for epoch in range(1, schedule.epochs + 1):
        train_loss = train_epoch_fn(epoch)
        if not math.isfinite(train_loss):
            raise TrainingDiverged(f"train loss {train_loss} at epoch {epoch}")
        val_loss = val_loss_fn()
        if not math.isfinite(val_loss):
            raise TrainingDiverged(f"validation loss {val_loss} at epoch {epoch}")
        history.append(
            {"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss, "lr": optimizer.lr}
        )
        if log_fn:
            log_fn(history[-1])
        if val_loss < best_val:
            best_val = val_loss
            best_state = {k: v.copy() for k, v in model.state_arrays().items()}
            since_best = 0
            since_decay = 0
        else:
            since_best += 1
            since_decay += 1
        if since_best >= schedule.early_stop_patience:
            break
        if since_decay >= schedule.lr_patience and optimizer.lr > schedule.min_lr:
            optimizer.lr = max(optimizer.lr * schedule.lr_decay, schedule.min_lr)
            since_decay = 0
    if best_state is not None:
        model.load_state_arrays(best_state)
    return history
