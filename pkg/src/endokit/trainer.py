"""Desk-scale training loop: selection plan -> toy ViT -> prediction file.

Training is fully reproducible: parameter init, epoch shuffles, and batch
accumulation order are all derived from the config seed, so a (plan,
TrainConfig) pair determines the checkpoint bit pattern.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields

import numpy as np

from .errors import ConsistencyError, SchemaMismatch
from .manifest import Manifest
from .metrics import PredictionRow, PredictionSet
from .rng import derive_seed, shuffled
from .sampler import SelectionPlan
from .synth import synth_image
from .vit import Params, TOY_CONFIG, ViTConfig, init_params, forward, loss_and_grads, save_checkpoint

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

# Stream tag base for per-epoch shuffles of the training frames.
EPOCH_TAG = 2000


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 8
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    checkpoint_path: str = "model.ckpt"

    def __post_init__(self):
        if self.epochs < 1:
            raise ConsistencyError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConsistencyError("batch_size must be >= 1")
        # 0 is allowed (freezes parameters; useful as a sanity probe).
        if self.learning_rate < 0:
            raise ConsistencyError("learning_rate must be >= 0")


def load_train_config(path: str) -> TrainConfig:
    """Read a TrainConfig from a TOML or JSON file (by extension)."""
    if path.endswith(".toml"):
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    else:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    known = {f.name for f in fields(TrainConfig)}
    unknown = set(doc) - known
    if unknown:
        raise SchemaMismatch(f"{path}: unknown train config keys: {sorted(unknown)}")
    return TrainConfig(**doc)


def train(
    plan: SelectionPlan,
    cfg: TrainConfig,
    model_cfg: ViTConfig = TOY_CONFIG,
    image_fn=synth_image,
) -> tuple[Params, list[float]]:
    """Adam-train the toy model on the plan's train split.

    Returns the final parameters and the per-epoch mean train loss; the
    checkpoint is written to ``cfg.checkpoint_path``.
    """
    if not plan.is_split:
        raise ConsistencyError("plan has no train/validation split")
    train_ids = list(plan.train)
    missing = [fid for fid in train_ids if fid not in plan.frame_labels]
    if missing:
        raise ConsistencyError(f"plan has no label data for {len(missing)} train frames")
    params = init_params(model_cfg, cfg.seed)
    m = {name: np.zeros_like(p) for name, p in params.items()}
    v = {name: np.zeros_like(p) for name, p in params.items()}
    step = 0
    losses: list[float] = []
    for epoch in range(cfg.epochs):
        order = shuffled(train_ids, derive_seed(cfg.seed, EPOCH_TAG + epoch))
        epoch_loss = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            grad_sum: Params = {}
            for fid in batch:
                mask = plan.frame_labels[fid]
                image = image_fn(mask, fid, model_cfg)
                loss, grads = loss_and_grads(image, mask, params, model_cfg)
                epoch_loss += loss
                for name, g in grads.items():
                    if name in grad_sum:
                        grad_sum[name] += g
                    else:
                        grad_sum[name] = g.copy()
            step += 1
            scale = 1.0 / len(batch)
            bc1 = 1.0 - cfg.beta1 ** step
            bc2 = 1.0 - cfg.beta2 ** step
            for name in params:
                g = grad_sum[name] * scale
                m[name] = cfg.beta1 * m[name] + (1.0 - cfg.beta1) * g
                v[name] = cfg.beta2 * v[name] + (1.0 - cfg.beta2) * g * g
                params[name] = params[name] - cfg.learning_rate * (
                    (m[name] / bc1) / (np.sqrt(v[name] / bc2) + cfg.epsilon)
                )
        losses.append(epoch_loss / max(1, len(order)))
    save_checkpoint(cfg.checkpoint_path, params, model_cfg)
    return params, losses


def predict(
    params: Params,
    model_cfg: ViTConfig,
    manifest: Manifest,
    image_fn=synth_image,
) -> PredictionSet:
    """Score every manifest frame, one prediction row per frame in file order."""
    rows = []
    for record in manifest.records:
        image = image_fn(record.labels, record.frame_id, model_cfg)
        scores = forward(image, params, model_cfg)
        rows.append(PredictionRow(record.frame_id, record.video_id, tuple(float(s) for s in scores)))
    return PredictionSet(rows)


def write_loss_curve(losses: list[float], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epoch,mean_loss\n")
        for epoch, loss in enumerate(losses, start=1):
            fh.write(f"{epoch},{loss!r}\n")
