"""Desk-scale training loop: place-balanced batches (B places x K images),
SGD with momentum and L2 weight decay, a divide-by-N-every-P-epochs learning
rate schedule, and checkpointing.

One epoch runs ceil(#train places / B) batches so every place is drawn once
in expectation. The whole loop is deterministic under a fixed seed.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from . import loss as losses
from . import mixer
from .checkpoint import save_checkpoint
from .kernel import ShapeError
from .tensorfile import read_tensor

__all__ = [
    "TrainConfig",
    "TrainingDivergedError",
    "InsufficientDataError",
    "lr_at_epoch",
    "sample_batch",
    "SGDState",
    "sgd_step",
    "train",
]


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; message carries epoch/batch diagnostics."""


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    places_per_batch: int = 8   # B
    images_per_place: int = 4   # K
    epochs: int = 50
    lr0: float = 0.05
    lr_divisor: float = 3.0
    lr_period_epochs: int = 5
    momentum: float = 0.9
    weight_decay: float = 0.001
    seed: int = 0

    def __post_init__(self):
        if self.places_per_batch < 2:
            raise ValueError("places_per_batch must be >= 2 (loss needs negatives)")
        if self.images_per_place < 2:
            raise ValueError("images_per_place must be >= 2 (loss needs positives)")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.lr_divisor <= 0 or self.lr_period_epochs < 1:
            raise ValueError("bad learning-rate schedule")


def lr_at_epoch(cfg, epoch):
    """Piecewise-constant schedule: lr0 / divisor^(epoch // period)."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    return cfg.lr0 / cfg.lr_divisor ** (epoch // cfg.lr_period_epochs)


def group_by_place(records):
    groups = {}
    for rec in records:
        groups.setdefault(rec.place_id, []).append(rec)
    return groups


def sample_batch(records, cfg, rng):
    """Draw B distinct places, then K images each: without replacement when a
    place has >= K images, with replacement otherwise. Returns records grouped
    by place, B*K total.
    """
    groups = group_by_place(records)
    place_ids = sorted(groups)
    if len(place_ids) < cfg.places_per_batch:
        raise InsufficientDataError(
            f"need {cfg.places_per_batch} distinct places, manifest has {len(place_ids)}"
        )
    chosen = rng.choice(len(place_ids), size=cfg.places_per_batch, replace=False)
    batch = []
    for pi in chosen:
        candidates = groups[place_ids[pi]]
        replace = len(candidates) < cfg.images_per_place
        idx = rng.choice(len(candidates), size=cfg.images_per_place, replace=replace)
        batch.extend(candidates[j] for j in idx)
    return batch


class SGDState:
    """Per-parameter velocity buffers plus schedule position."""

    def __init__(self, params):
        self.velocities = {name: np.zeros_like(p) for name, p in params.items()}
        self.epoch = 0
        self.lr = 0.0


def sgd_step(params, grads, state, lr, momentum, weight_decay):
    """v <- mu*v + g + wd*theta; theta <- theta - lr*v. Updates in place."""
    for name, theta in params.items():
        g = grads[name]
        if g.shape != theta.shape:
            raise ShapeError(f"{name}: gradient {g.shape} vs parameter {theta.shape}")
        v = state.velocities[name]
        v *= momentum
        v += g + weight_decay * theta
        theta -= lr * v
    state.lr = lr


def _load_features(records, feature_root):
    features = {}
    for rec in records:
        path = os.path.join(feature_root, rec.features)
        try:
            features[rec.image_id] = read_tensor(path)
        except OSError as exc:
            raise OSError(f"cannot read features for {rec.image_id!r}: {path}: {exc}") from exc
    return features


def batches_per_epoch(n_places, cfg):
    return math.ceil(n_places / cfg.places_per_batch)


def train(records, agg_config, cfg, out_dir, feature_root=".", loss_cfg=None):
    """Run the full loop over the train split and write out_dir/checkpoint
    plus out_dir/loss.log (one `epoch,batch,lr,loss` line per step).

    Returns (model, per-step losses).
    """
    if loss_cfg is None:
        loss_cfg = losses.LossConfig()
    train_records = [r for r in records if r.split == "train"]
    groups = group_by_place(train_records)
    if len(groups) < cfg.places_per_batch:
        raise InsufficientDataError(
            f"need {cfg.places_per_batch} distinct train places, got {len(groups)}"
        )
    features = _load_features(train_records, feature_root)
    first = next(iter(features.values()))
    if first.ndim != 2:
        raise ShapeError(f"features must be (C, D) token matrices, got {first.shape}")
    token_count, embed_dim = first.shape

    init_seed, batch_seed = np.random.SeedSequence(cfg.seed).spawn(2)
    rng = np.random.default_rng(batch_seed)
    model = mixer.init_model(token_count, embed_dim, agg_config, seed=init_seed)
    params = model.parameters()
    state = SGDState(params)

    n_batches = batches_per_epoch(len(groups), cfg)
    log_lines = []
    step_losses = []
    for epoch in range(cfg.epochs):
        lr = lr_at_epoch(cfg, epoch)
        state.epoch = epoch
        for batch_idx in range(n_batches):
            batch = sample_batch(train_records, cfg, rng)
            descriptors = []
            caches = []
            for rec in batch:
                desc, cache = mixer._forward_cache(features[rec.image_id], model)
                descriptors.append(desc)
                caches.append(cache)
            descriptors = np.stack(descriptors)

            sims = losses.similarity_matrix(descriptors)
            labels = [rec.place_id for rec in batch]
            pairs = losses.mine_pairs(labels, loss_cfg, similarities=sims)
            loss_value = float(losses.ms_loss(sims, pairs, loss_cfg))
            if not math.isfinite(loss_value):
                raise TrainingDivergedError(
                    f"non-finite loss {loss_value} at epoch {epoch} batch {batch_idx} "
                    f"(lr={lr!r})"
                )
            grad_sims = losses.ms_loss_backward(sims, pairs, loss_cfg)
            grad_desc = losses.descriptor_grads(descriptors, grad_sims)

            total = {name: np.zeros_like(p) for name, p in params.items()}
            for i, rec in enumerate(batch):
                g = mixer.aggregate_backward(
                    features[rec.image_id], model, grad_desc[i], cache=caches[i]
                )
                for name in total:
                    total[name] += g[name]
            sgd_step(params, total, state, lr, cfg.momentum, cfg.weight_decay)

            step_losses.append((epoch, batch_idx, lr, loss_value))
            log_lines.append(f"{epoch},{batch_idx},{lr!r},{loss_value!r}")

    os.makedirs(out_dir, exist_ok=True)
    save_checkpoint(os.path.join(out_dir, "checkpoint"), model)
    log_path = os.path.join(out_dir, "loss.log")
    tmp = f"{log_path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write("\n".join(log_lines) + ("\n" if log_lines else ""))
    os.replace(tmp, log_path)
    return model, step_losses
