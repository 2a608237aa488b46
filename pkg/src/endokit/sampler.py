"""Multi-label under-sampling and the stratified train/validation split.

Balancing gives priority to frames carrying many labels:

1. Frames are partitioned by label cardinality ``k``.
2. Every frame with ``k >= full_inclusion_min_cardinality`` is selected
   unconditionally; its labels count toward the per-class totals.
3. The remaining buckets are visited in descending ``k`` order. Each bucket
   is shuffled with the frozen generator (:mod:`endokit.rng`, stream tag
   ``k``) and scanned in shuffled order; a frame is selected iff at least
   one of its labels is still below ``target_per_class``. Counts update on
   selection, so a frame kept for a rare label may push a co-occurring
   label past target. That spillover is accepted; there is no removal pass.
4. A bucket scan stops early only once every class has reached target,
   which cannot change the result (no later frame could qualify).

The split shuffles the selected frames once with stream tag ``SPLIT_TAG``
and walks them greedily: a frame goes to validation iff for each of its
labels the validation count stays within
``floor(validation_fraction * per_class_selected)``. Classes whose selected
frames are all single-label land exactly on that floor (a 122-frame class
at fraction 0.2 yields exactly 24 validation frames). For classes whose
selected frames are mostly multi-label the walk alone can fall several
frames short (saturated co-occurring labels block every remaining frame),
so a deterministic repair pass follows: while some class sits below the
tolerance window ``[ceil(f*n - 1), floor(f*n + 1)]``, move the first train
frame (in walk order) that fixes it without pushing any label above the
window, or failing that swap it against the first validation frame that
relieves the blocking labels. Each step strictly shrinks the total deficit,
so the pass terminates; single-label-only classes are never touched by it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import labels as lb
from .errors import ConsistencyError, SchemaMismatch
from .jsonio import read_json, write_json
from .manifest import Manifest
from .rng import derive_seed, shuffle_order, shuffled

# Stream tag for the split shuffle; bucket shuffles use their cardinality
# (1..17) as the tag, so this must stay outside that range.
SPLIT_TAG = 101


@dataclass(frozen=True)
class SamplingConfig:
    target_per_class: int = 3000
    full_inclusion_min_cardinality: int = 4
    validation_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.target_per_class < 1:
            raise ConsistencyError("target_per_class must be >= 1")
        if not 1 <= self.full_inclusion_min_cardinality <= lb.NUM_LABELS:
            raise ConsistencyError("full_inclusion_min_cardinality must be in [1, 17]")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ConsistencyError("validation_fraction must be in (0, 1)")
        if not 0 <= self.seed < 1 << 64:
            raise ConsistencyError("seed must be an unsigned 64-bit integer")


@dataclass
class SelectionPlan:
    config: SamplingConfig
    selected: list[str] = field(default_factory=list)
    train: list[str] = field(default_factory=list)
    validation: list[str] = field(default_factory=list)
    per_class_selected: dict[str, int] = field(default_factory=dict)
    per_class_train: dict[str, int] = field(default_factory=dict)
    per_class_validation: dict[str, int] = field(default_factory=dict)
    # Label masks of the selected frames; needed to split or train, carried
    # in memory only (plans on disk are rehydrated via attach_frame_labels).
    frame_labels: dict[str, lb.LabelSet] = field(default_factory=dict, compare=False, repr=False)

    @property
    def is_split(self) -> bool:
        return bool(self.train or self.validation)

    def check(self) -> None:
        """Internal consistency; does not need the source manifest."""
        if len(set(self.selected)) != len(self.selected):
            raise ConsistencyError("duplicate frame_id in selected list")
        if len(set(self.train)) != len(self.train):
            raise ConsistencyError("duplicate frame_id in train list")
        if len(set(self.validation)) != len(self.validation):
            raise ConsistencyError("duplicate frame_id in validation list")
        train, val = set(self.train), set(self.validation)
        if train & val:
            raise ConsistencyError("train and validation lists overlap")
        if self.is_split:
            if train | val != set(self.selected):
                raise ConsistencyError("train + validation do not partition the selection")
            for name in lb.LABEL_NAMES:
                total = self.per_class_selected.get(name, 0)
                parts = self.per_class_train.get(name, 0) + self.per_class_validation.get(name, 0)
                if total != parts:
                    raise ConsistencyError(
                        f"per-class counts for {name}: selected {total} != train+validation {parts}"
                    )
        else:
            if any(self.per_class_train.values()) or any(self.per_class_validation.values()):
                raise ConsistencyError("split counts present but split lists empty")
        if any(v < 0 for v in self.per_class_selected.values()):
            raise ConsistencyError("negative per-class count")


def _bit_lists(masks: list[int]) -> dict[int, tuple[int, ...]]:
    """Cache mask -> tuple of set-bit indices for the masks that occur."""
    cache: dict[int, tuple[int, ...]] = {}
    for mask in masks:
        if mask not in cache:
            cache[mask] = tuple(lb.labels_in(mask))
    return cache


def under_sample(manifest: Manifest, cfg: SamplingConfig) -> SelectionPlan:
    """Run the balancing selection; the returned plan has empty split fields."""
    records = manifest.records
    n = len(records)
    counts = [0] * lb.NUM_LABELS
    selected_idx: list[int] = []
    if n:
        masks = [r.labels for r in records]
        arr = np.fromiter(masks, dtype=np.uint32, count=n)
        card = np.bitwise_count(arr)
        bits_of = _bit_lists(masks)
        target = cfg.target_per_class
        classes_at_target = 0
        for k in range(lb.NUM_LABELS, 0, -1):
            bucket = np.nonzero(card == k)[0]
            if bucket.size == 0:
                continue
            if k >= cfg.full_inclusion_min_cardinality:
                for idx in bucket.tolist():
                    selected_idx.append(idx)
                    for i in bits_of[masks[idx]]:
                        counts[i] += 1
                        if counts[i] == target:
                            classes_at_target += 1
            else:
                order = shuffle_order(bucket.size, derive_seed(cfg.seed, k))
                bucket_list = bucket.tolist()
                for pos in order:
                    if classes_at_target == lb.NUM_LABELS:
                        break
                    idx = bucket_list[pos]
                    bits = bits_of[masks[idx]]
                    if any(counts[i] < target for i in bits):
                        selected_idx.append(idx)
                        for i in bits:
                            counts[i] += 1
                            if counts[i] == target:
                                classes_at_target += 1
        selected_idx.sort()
    plan = SelectionPlan(
        config=cfg,
        selected=[records[i].frame_id for i in selected_idx],
        per_class_selected={name: counts[i] for i, name in enumerate(lb.LABEL_NAMES)},
        per_class_train={name: 0 for name in lb.LABEL_NAMES},
        per_class_validation={name: 0 for name in lb.LABEL_NAMES},
        frame_labels={records[i].frame_id: records[i].labels for i in selected_idx},
    )
    return plan


def split_train_val(plan: SelectionPlan, cfg: SamplingConfig) -> SelectionPlan:
    """Populate the train/validation partition of a selection plan."""
    missing = [fid for fid in plan.selected if fid not in plan.frame_labels]
    if missing:
        raise ConsistencyError(
            f"plan has no label data for {len(missing)} selected frames "
            "(rehydrate with attach_frame_labels)"
        )
    f = cfg.validation_fraction
    sel = [plan.per_class_selected.get(name, 0) for name in lb.LABEL_NAMES]
    caps = [math.floor(f * n) for n in sel]
    lo = [math.ceil(f * n - 1) for n in sel]
    hi = [math.floor(f * n + 1) for n in sel]
    walk = shuffled(plan.selected, derive_seed(cfg.seed, SPLIT_TAG))
    bits_of = {fid: lb.labels_in(plan.frame_labels[fid]) for fid in walk}
    val_counts = [0] * lb.NUM_LABELS
    in_val: dict[str, bool] = {}
    for fid in walk:
        bits = bits_of[fid]
        if all(val_counts[i] + 1 <= caps[i] for i in bits):
            in_val[fid] = True
            for i in bits:
                val_counts[i] += 1
        else:
            in_val[fid] = False
    _repair_deficits(walk, bits_of, in_val, val_counts, lo, hi)
    train_counts = [0] * lb.NUM_LABELS
    for fid in plan.selected:
        if not in_val[fid]:
            for i in bits_of[fid]:
                train_counts[i] += 1
    return SelectionPlan(
        config=cfg,
        selected=list(plan.selected),
        train=[fid for fid in plan.selected if not in_val[fid]],
        validation=[fid for fid in plan.selected if in_val[fid]],
        per_class_selected=dict(plan.per_class_selected),
        per_class_train={name: train_counts[i] for i, name in enumerate(lb.LABEL_NAMES)},
        per_class_validation={name: val_counts[i] for i, name in enumerate(lb.LABEL_NAMES)},
        frame_labels=dict(plan.frame_labels),
    )


def _repair_deficits(
    walk: list[str],
    bits_of: dict[str, list[int]],
    in_val: dict[str, bool],
    val_counts: list[int],
    lo: list[int],
    hi: list[int],
) -> None:
    """Close per-class validation deficits left by the greedy walk.

    Moves (and if necessary swaps) frames in walk order until every class
    sits inside its tolerance window or no step can make progress. Every
    accepted step reduces the total deficit by one, so this terminates.
    """
    while True:
        deficits = sorted(
            (i for i in range(lb.NUM_LABELS) if val_counts[i] < lo[i]),
            key=lambda i: (val_counts[i] - lo[i], i),
        )
        if not deficits:
            return
        c = deficits[0]
        if not _repair_step(c, walk, bits_of, in_val, val_counts, lo, hi):
            return  # best effort; remaining deficit is unclosable by 1-swaps


def _repair_step(c, walk, bits_of, in_val, val_counts, lo, hi) -> bool:
    for fid in walk:
        if in_val[fid] or c not in bits_of[fid]:
            continue
        bits = bits_of[fid]
        if all(val_counts[i] + 1 <= hi[i] for i in bits):
            in_val[fid] = True
            for i in bits:
                val_counts[i] += 1
            return True
    for fid in walk:
        if in_val[fid] or c not in bits_of[fid]:
            continue
        bits = bits_of[fid]
        blockers = [i for i in bits if val_counts[i] + 1 > hi[i]]
        for gid in walk:
            if not in_val[gid]:
                continue
            gbits = bits_of[gid]
            if c in gbits:
                continue
            if all(b in gbits for b in blockers) and all(val_counts[i] - 1 >= lo[i] for i in gbits):
                in_val[gid] = False
                for i in gbits:
                    val_counts[i] -= 1
                in_val[fid] = True
                for i in bits:
                    val_counts[i] += 1
                return True
    return False


def attach_frame_labels(plan: SelectionPlan, manifest: Manifest) -> None:
    """Rehydrate a plan read from disk with label masks from its manifest.

    Also cross-checks the stored per-class selected counts against the
    actual labels, so tampered plans fail here at the latest.
    """
    by_frame = manifest.labels_by_frame()
    frame_labels: dict[str, lb.LabelSet] = {}
    counts = [0] * lb.NUM_LABELS
    for fid in plan.selected:
        mask = by_frame.get(fid)
        if mask is None:
            raise ConsistencyError(f"selected frame {fid!r} not present in manifest")
        frame_labels[fid] = mask
        for i in lb.labels_in(mask):
            counts[i] += 1
    for i, name in enumerate(lb.LABEL_NAMES):
        if counts[i] != plan.per_class_selected.get(name, 0):
            raise ConsistencyError(
                f"per-class selected count for {name} is "
                f"{plan.per_class_selected.get(name, 0)} but manifest labels give {counts[i]}"
            )
    plan.frame_labels = frame_labels


def write_plan(plan: SelectionPlan, path: str) -> None:
    plan.check()
    doc = {
        "config": {
            "target_per_class": plan.config.target_per_class,
            "full_inclusion_min_cardinality": plan.config.full_inclusion_min_cardinality,
            "validation_fraction": plan.config.validation_fraction,
            "seed": plan.config.seed,
        },
        "selected": list(plan.selected),
        "train": list(plan.train),
        "validation": list(plan.validation),
        "per_class": {
            name: {
                "selected": plan.per_class_selected.get(name, 0),
                "train": plan.per_class_train.get(name, 0),
                "validation": plan.per_class_validation.get(name, 0),
            }
            for name in lb.LABEL_NAMES
        },
    }
    write_json(doc, path)


def read_plan(path: str) -> SelectionPlan:
    doc = read_json(path)
    for key in ("config", "selected", "train", "validation", "per_class"):
        if key not in doc:
            raise SchemaMismatch(f"{path}: missing key {key!r}")
    cfg_doc = doc["config"]
    for key in ("target_per_class", "full_inclusion_min_cardinality", "validation_fraction", "seed"):
        if key not in cfg_doc:
            raise SchemaMismatch(f"{path}: config missing key {key!r}")
    unknown = set(doc["per_class"]) - set(lb.LABEL_NAMES)
    if unknown:
        raise SchemaMismatch(f"{path}: unknown labels in per_class: {sorted(unknown)}")
    cfg = SamplingConfig(
        target_per_class=int(cfg_doc["target_per_class"]),
        full_inclusion_min_cardinality=int(cfg_doc["full_inclusion_min_cardinality"]),
        validation_fraction=float(cfg_doc["validation_fraction"]),
        seed=int(cfg_doc["seed"]),
    )
    per_class = doc["per_class"]

    def column(field_name: str) -> dict[str, int]:
        return {name: int(per_class.get(name, {}).get(field_name, 0)) for name in lb.LABEL_NAMES}

    plan = SelectionPlan(
        config=cfg,
        selected=[str(x) for x in doc["selected"]],
        train=[str(x) for x in doc["train"]],
        validation=[str(x) for x in doc["validation"]],
        per_class_selected=column("selected"),
        per_class_train=column("train"),
        per_class_validation=column("validation"),
    )
    plan.check()
    return plan
