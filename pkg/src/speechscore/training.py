"""Objective, optimizer, and the training loop.

The loop is deterministic per seed: one seed sequence feeds three
independent streams (parameter init, epoch shuffling, dropout masks), epoch
logs store floats via repr so reruns are byte-identical, and the checkpoint
with the lowest validation utterance-level MSE is kept.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .checkpoint import save_checkpoint
from .data import (build_mos_batch, build_sim_batch, load_features,
                   read_manifest)
from .models import ModelConfig, init_params, mos_forward, sim_forward


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 0.8
    lr: float = 1e-4
    batch_size: int = 32
    epochs: int = 200
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    stop_at_train_mse: float | None = None

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0):
            raise ValueError("bad adam hyperparameters")


def default_batch_size(model_cfg: ModelConfig) -> int:
    return 16 if (model_cfg.use_gqt and model_cfg.use_el) else 32


def combined_mse_loss(frame_scores: Tensor, utt_scores: Tensor, targets, mask,
                      alpha: float) -> Tensor:
    """Mean over utterances of squared utterance error plus alpha times the
    per-utterance mean squared frame error; masked frames never contribute
    and each utterance's frame term divides by its own valid-frame count."""
    targets = np.asarray(targets, dtype=np.float64)
    b = targets.shape[0]
    if b == 0:
        raise ValueError("loss needs at least one utterance")
    if utt_scores.shape != (b,) or frame_scores.shape != mask.shape:
        raise ValueError(f"loss shapes: frames {frame_scores.shape}, "
                         f"utterances {utt_scores.shape}, targets {targets.shape}")
    mask = np.asarray(mask, dtype=np.float64)
    counts = mask.sum(axis=1)
    if np.any(counts == 0):
        raise ValueError("loss: an utterance has no valid frames")
    utt_term = ad.mean(ad.square(ad.add(utt_scores, Tensor(-targets))))
    t = mask.shape[1]
    target_rows = np.repeat(targets[:, None], t, axis=1)
    weights = mask * (alpha / (counts[:, None] * b))
    frame_sq = ad.square(ad.add(frame_scores, Tensor(-target_rows)))
    return ad.add(utt_term, ad.sum_(ad.mul(frame_sq, Tensor(weights))))


class Adam:
    """Standard Adam with bias correction; parameter updates are
    out-of-place so tensors captured by existing graphs stay valid."""

    def __init__(self, cfg: TrainConfig):
        self.lr = cfg.lr
        self.beta1, self.beta2, self.eps = cfg.beta1, cfg.beta2, cfg.eps
        self.t = 0
        self.m: dict = {}
        self.v: dict = {}

    def step(self, params: dict, context: str = "") -> dict:
        self.t += 1
        suffix = f" ({context})" if context else ""
        new_params = {}
        for name in sorted(params):
            p = params[name]
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if not np.isfinite(g).all():
                raise TrainingError(f"non-finite gradient for {name!r}{suffix}")
            m = self.m.get(name)
            if m is None:
                m = np.zeros_like(p.data)
                self.v[name] = np.zeros_like(p.data)
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            self.m[name], self.v[name] = m, v
            m_hat = m / (1.0 - self.beta1 ** self.t)
            v_hat = v / (1.0 - self.beta2 ** self.t)
            new_params[name] = Tensor(p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps),
                                      requires_grad=True)
        return new_params


@dataclass
class TrainResult:
    best_epoch: int
    best_val_mse: float
    history: list                 # (epoch, train_loss, val_mse)
    checkpoint_path: Path
    log_path: Path
    stopped_early: bool = False
    final_train_mse: float | None = None


def _forward(model_cfg, params, feats, targets, idx, training, rng):
    subset = [feats[i] for i in idx]
    scores = targets[idx]
    if model_cfg.task == "mos":
        block, mask, t = build_mos_batch(subset, scores)
        out = mos_forward(model_cfg, params, block, mask, training=training, rng=rng)
    else:
        a, b, ma, mb, t = build_sim_batch(subset, scores)
        out = sim_forward(model_cfg, params, a, b, ma, mb, training=training, rng=rng)
    return out, t


def predict_all(model_cfg, params, feats) -> np.ndarray:
    """Eval-mode predictions, one forward per item so batching cannot
    influence the scores."""
    preds = np.empty(len(feats))
    for i in range(len(feats)):
        out, _ = _forward(model_cfg, params, feats, np.zeros(len(feats)),
                          np.array([i]), training=False, rng=None)
        preds[i] = out.utterance_score.data[0]
    return preds


def write_log(path, history) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epoch,train_loss,val_mse\n")
        for epoch, train_loss, val_mse in history:
            fh.write(f"{epoch},{train_loss!r},{val_mse!r}\n")


def train(model_cfg: ModelConfig, train_cfg: TrainConfig, train_manifest,
          val_manifest, out_dir) -> TrainResult:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    same_sets = Path(train_manifest).resolve() == Path(val_manifest).resolve()
    records = read_manifest(train_manifest, model_cfg.task)
    val_records = read_manifest(val_manifest, model_cfg.task)
    feats = load_features(records)
    val_feats = load_features(val_records)
    targets = np.array([r.score for r in records])
    val_targets = np.array([r.score for r in val_records])

    streams = np.random.SeedSequence(train_cfg.seed).spawn(3)
    rng_init, rng_shuffle, rng_drop = (np.random.default_rng(s) for s in streams)
    params = init_params(model_cfg, rng_init)
    adam = Adam(train_cfg)

    ckpt_path = out_dir / "best.ckpt"
    log_path = out_dir / "log.csv"
    best_mse = math.inf
    best_epoch = 0
    history = []
    stopped = False
    final_train_mse = None

    n = len(records)
    for epoch in range(1, train_cfg.epochs + 1):
        perm = rng_shuffle.permutation(n)
        total = 0.0
        for step, start in enumerate(range(0, n, train_cfg.batch_size)):
            idx = perm[start:start + train_cfg.batch_size]
            out, batch_targets = _forward(model_cfg, params, feats, targets,
                                          idx, training=True, rng=rng_drop)
            loss = combined_mse_loss(out.frame_scores, out.utterance_score,
                            batch_targets, out.mask, train_cfg.alpha)
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingError(
                    f"non-finite loss {value} at epoch {epoch} step {step}")
            ad.backward(loss)
            params = adam.step(params, context=f"epoch {epoch} step {step}")
            total += value * len(idx)
        train_loss = total / n

        val_preds = predict_all(model_cfg, params, val_feats)
        val_mse = float(np.mean((val_preds - val_targets) ** 2))
        history.append((epoch, train_loss, val_mse))
        if val_mse < best_mse:
            best_mse = val_mse
            best_epoch = epoch
            save_checkpoint(params, model_cfg, ckpt_path)

        if train_cfg.stop_at_train_mse is not None:
            if same_sets:
                final_train_mse = val_mse  # identical records, identical forwards
            else:
                train_preds = predict_all(model_cfg, params, feats)
                final_train_mse = float(np.mean((train_preds - targets) ** 2))
            if final_train_mse < train_cfg.stop_at_train_mse:
                stopped = True
                break

    write_log(log_path, history)
    return TrainResult(best_epoch=best_epoch, best_val_mse=best_mse,
                       history=history, checkpoint_path=ckpt_path,
                       log_path=log_path, stopped_early=stopped,
                       final_train_mse=final_train_mse)
