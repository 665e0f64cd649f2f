"""Training loop: Adam with decoupled weight decay, linear warmup then linear
decay, gradient accumulation, periodic dev evaluation, and retention of the
top checkpoints by dev macro-F1.

A fixed TrainConfig seed makes the whole trajectory reproducible: shuffling,
dropout, and initialization all draw from generators derived from it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import metrics
from ..constants import ADAM_EPS
from ..featurize import FeatureSet
from .config import ModelConfig, TrainConfig
from .loss import loss_ce_smoothed
from .model import FusionModel, backward, forward, write_checkpoint


class EmptySplit(ValueError):
    pass


class DivergedLoss(RuntimeError):
    pass


@dataclass(frozen=True)
class EvalResult:
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    confusion: np.ndarray
    loss: float | None = None

    def to_json_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "confusion": self.confusion.tolist(),
            "loss": self.loss,
        }


@dataclass
class Checkpoint:
    model: FusionModel
    step: int
    metrics: EvalResult
    fingerprint: str


@dataclass
class TrainResult:
    best: Checkpoint
    retained: list[Checkpoint]
    log: list[dict] = field(default_factory=list)


def evaluate(model: FusionModel, data: FeatureSet, eval_batch: int = 256) -> EvalResult:
    if len(data) == 0:
        raise EmptySplit("cannot evaluate an empty set")
    preds = np.empty(len(data), dtype=np.int64)
    total_loss = 0.0
    eps = model.config.label_smoothing_eps
    for start in range(0, len(data), eval_batch):
        stop = min(start + eval_batch, len(data))
        sl = slice(start, stop)
        logits, _ = forward(model, data.x_video[sl], data.x_text[sl], train_mode=False)
        preds[sl] = logits.argmax(axis=1)
        loss, _ = loss_ce_smoothed(logits, data.labels[sl], eps)
        total_loss += loss * (stop - start)
    cm = metrics.confusion_matrix(data.labels, preds, model.config.num_classes)
    prf = metrics.macro_prf(cm)
    return EvalResult(
        accuracy=prf.accuracy,
        macro_precision=prf.macro_precision,
        macro_recall=prf.macro_recall,
        macro_f1=prf.macro_f1,
        confusion=cm,
        loss=total_loss / len(data),
    )


class AdamW:
    def __init__(self, params: dict[str, np.ndarray], lr: float, weight_decay: float):
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = 0.9, 0.999
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr_scale: float):
        self.t += 1
        lr = self.lr * lr_scale
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            update = (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + ADAM_EPS)
            params[k] -= lr * (update + self.weight_decay * params[k])


def _lr_scale(step: int, total: int, warmup_ratio: float) -> float:
    """Linear warmup for warmup_ratio of optimizer steps, then linear decay to 0."""
    warmup = int(total * warmup_ratio)
    if warmup > 0 and step < warmup:
        return (step + 1) / warmup
    if total == warmup:
        return 1.0
    return max(0.0, (total - step) / (total - warmup))


def train(
    model: FusionModel,
    train_set: FeatureSet,
    dev_set: FeatureSet,
    tcfg: TrainConfig,
    log_path=None,
    checkpoint_dir=None,
) -> TrainResult:
    """Train in place and return the best checkpoint by dev macro-F1."""
    if len(train_set) == 0 or len(dev_set) == 0:
        raise EmptySplit("train and dev sets must be non-empty")
    cfg = model.config
    rng = np.random.default_rng(tcfg.seed)
    opt = AdamW(model.params, tcfg.lr, tcfg.weight_decay)

    n = len(train_set)
    micro_per_epoch = (n + tcfg.batch_size - 1) // tcfg.batch_size
    opt_per_epoch = (micro_per_epoch + tcfg.grad_accum_steps - 1) // tcfg.grad_accum_steps
    total_opt_steps = opt_per_epoch * tcfg.epochs

    log: list[dict] = []
    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None
    retained: list[Checkpoint] = []
    fingerprint = cfg.fingerprint()

    def record(entry: dict):
        log.append(entry)
        if log_fh:
            log_fh.write(json.dumps(entry) + "\n")
            log_fh.flush()

    def snapshot(step: int):
        dev = evaluate(model, dev_set)
        record(
            {
                "step": step,
                "train_loss": float(np.mean(recent_losses)) if recent_losses else None,
                "dev_loss": dev.loss,
                "dev_macro_f1": dev.macro_f1,
            }
        )
        recent_losses.clear()
        ckpt = Checkpoint(model.copy(), step, dev, fingerprint)
        retained.append(ckpt)
        retained.sort(key=lambda c: (-c.metrics.macro_f1, c.step))
        del retained[tcfg.checkpoints_retained :]
        if checkpoint_dir is not None:
            _sync_checkpoint_dir(checkpoint_dir, retained)

    opt_step = 0
    recent_losses: list[float] = []
    accum: dict[str, np.ndarray] | None = None
    accum_count = 0

    try:
        for _ in range(tcfg.epochs):
            order = rng.permutation(n)
            for start in range(0, n, tcfg.batch_size):
                idx = order[start : start + tcfg.batch_size]
                logits, cache = forward(
                    model,
                    train_set.x_video[idx],
                    train_set.x_text[idx],
                    train_mode=True,
                    rng=rng,
                )
                loss, dlogits = loss_ce_smoothed(
                    logits, train_set.labels[idx], cfg.label_smoothing_eps
                )
                if not np.isfinite(loss):
                    raise DivergedLoss(f"non-finite loss at optimizer step {opt_step}")
                recent_losses.append(loss)
                grads = backward(model, cache, dlogits)
                if accum is None:
                    accum = grads
                else:
                    for k in accum:
                        accum[k] += grads[k]
                accum_count += 1
                if accum_count == tcfg.grad_accum_steps:
                    _apply(opt, model, accum, accum_count, opt_step, total_opt_steps, tcfg)
                    opt_step += 1
                    accum, accum_count = None, 0
                    if opt_step % tcfg.eval_every_steps == 0:
                        snapshot(opt_step)
            # flush a leftover partial accumulation at epoch end
            if accum_count:
                _apply(opt, model, accum, accum_count, opt_step, total_opt_steps, tcfg)
                opt_step += 1
                accum, accum_count = None, 0
                if opt_step % tcfg.eval_every_steps == 0:
                    snapshot(opt_step)

        if not retained or retained[0].step != opt_step:
            snapshot(opt_step)
    finally:
        if log_fh:
            log_fh.close()

    best = max(retained, key=lambda c: c.metrics.macro_f1)
    return TrainResult(best=best, retained=retained, log=log)


def _apply(opt: AdamW, model: FusionModel, accum, count: int, step: int, total: int, tcfg: TrainConfig):
    for k in accum:
        accum[k] /= count
    opt.step(model.params, accum, _lr_scale(step, total, tcfg.warmup_ratio))


def _sync_checkpoint_dir(checkpoint_dir, retained: list[Checkpoint]):
    d = Path(checkpoint_dir)
    d.mkdir(parents=True, exist_ok=True)
    keep = set()
    for rank, ckpt in enumerate(retained):
        name = f"step{ckpt.step:08d}.mtgc"
        keep.add(name)
        path = d / name
        if not path.exists():
            write_checkpoint(
                path,
                ckpt.model,
                {
                    "step": ckpt.step,
                    "metrics": ckpt.metrics.to_json_dict(),
                    "fingerprint": ckpt.fingerprint,
                },
            )
        if rank == 0:
            write_checkpoint(
                d / "best.mtgc",
                ckpt.model,
                {
                    "step": ckpt.step,
                    "metrics": ckpt.metrics.to_json_dict(),
                    "fingerprint": ckpt.fingerprint,
                },
            )
    for old in d.glob("step*.mtgc"):
        if old.name not in keep:
            old.unlink()
