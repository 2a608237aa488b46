"""Synthetic manifests and procedurally generated frame images.

No real endoscopy data ships with the toolkit, so the pipeline is exercised
on synthetic inputs with the same shape as the production data:

* Manifests draw label-set cardinality from a distribution dominated by
  single-label frames, and labels from a geometric weight ladder where the
  most common class is ``skew`` times more frequent than the rarest.
* Images are deterministic functions of (label set, frame_id): every label
  contributes a fixed random pattern keyed by its index, plus a small
  frame-specific noise field keyed by a hash of the frame id. A classifier
  can therefore overfit the label structure with zero real data.
"""

from __future__ import annotations

import hashlib

import numpy as np

from . import labels as lb
from .manifest import FrameRecord, Manifest
from .vit import ViTConfig

# Roughly the cardinality shares observed in large capsule-video corpora:
# single-label frames dominate, five-label frames are vanishingly rare.
CARDINALITY_WEIGHTS = ((1, 0.852), (2, 0.141), (3, 0.0064), (4, 0.0005), (5, 0.0001))

PATTERN_SCALE = 1.0
NOISE_SCALE = 0.1

_pattern_cache: dict[tuple[int, int, int, int], np.ndarray] = {}


def label_weights(skew: float = 1000.0) -> np.ndarray:
    """Per-label draw weights: weight(i) = skew ** (-i / 16), normalized."""
    raw = np.power(skew, -np.arange(lb.NUM_LABELS) / (lb.NUM_LABELS - 1))
    return raw / raw.sum()


def synthesize_masks(num_frames: int, seed: int, skew: float = 1000.0) -> list[int]:
    """Label masks only; vectorized so million-row manifests stay cheap."""
    gen = np.random.Generator(np.random.PCG64(seed))
    cards = np.array([c for c, _ in CARDINALITY_WEIGHTS])
    card_p = np.array([p for _, p in CARDINALITY_WEIGHTS])
    card_p = card_p / card_p.sum()
    k_of = gen.choice(cards, size=num_frames, p=card_p)
    weights = label_weights(skew)
    masks = np.zeros(num_frames, dtype=np.uint32)
    single = np.nonzero(k_of == 1)[0]
    if single.size:
        drawn = gen.choice(lb.NUM_LABELS, size=single.size, p=weights)
        masks[single] = np.uint32(1) << drawn.astype(np.uint32)
    for k in cards[cards > 1]:
        rows = np.nonzero(k_of == k)[0]
        if rows.size == 0:
            continue
        # Gumbel top-k = weighted sampling without replacement per row.
        keys = np.log(weights)[None, :] + gen.gumbel(size=(rows.size, lb.NUM_LABELS))
        top = np.argpartition(-keys, k, axis=1)[:, :k]
        row_masks = np.bitwise_or.reduce(np.uint32(1) << top.astype(np.uint32), axis=1)
        masks[rows] = row_masks
    return [int(m) for m in masks]


def synthesize_manifest(
    num_frames: int, seed: int, num_videos: int = 3, skew: float = 1000.0
) -> Manifest:
    """Synthetic ground-truth manifest with contiguous per-video frame runs."""
    if num_frames < 1:
        raise ValueError("num_frames must be >= 1")
    num_videos = max(1, min(num_videos, num_frames))
    masks = synthesize_masks(num_frames, seed, skew)
    bounds = np.linspace(0, num_frames, num_videos + 1).astype(int)
    records = []
    for v in range(num_videos):
        video_id = f"v{v + 1:03d}"
        for frame_index, global_idx in enumerate(range(bounds[v], bounds[v + 1])):
            frame_id = f"{video_id}_{frame_index:06d}"
            records.append(FrameRecord(frame_id, video_id, frame_index, masks[global_idx]))
    return Manifest(records, source_path="<synthetic>")


def _frame_seed(frame_id: str) -> int:
    digest = hashlib.sha256(frame_id.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def label_pattern(index: int, cfg: ViTConfig) -> np.ndarray:
    """Fixed +/-1 pattern a label stamps on every frame that carries it."""
    key = (index, cfg.channels, cfg.image_size, cfg.image_size)
    pattern = _pattern_cache.get(key)
    if pattern is None:
        gen = np.random.Generator(np.random.PCG64(10_000 + index))
        shape = (cfg.channels, cfg.image_size, cfg.image_size)
        pattern = gen.choice(np.array([-1.0, 1.0]), size=shape) * PATTERN_SCALE
        pattern.flags.writeable = False
        _pattern_cache[key] = pattern
    return pattern


def synth_image(mask: lb.LabelSet, frame_id: str, cfg: ViTConfig) -> np.ndarray:
    """Deterministic (channels, size, size) float image for one frame."""
    shape = (cfg.channels, cfg.image_size, cfg.image_size)
    image = np.zeros(shape)
    for i in lb.labels_in(mask):
        image += label_pattern(i, cfg)
    noise_gen = np.random.Generator(np.random.PCG64(_frame_seed(frame_id)))
    image += noise_gen.normal(0.0, NOISE_SCALE, size=shape)
    return image
