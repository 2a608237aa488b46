"""Independent reference implementations used to cross-check the library.

Everything here is written the straightforward, unoptimized way: sequential
generator state instead of the closed form, full rescans instead of running
counters, no early exits. The point is that bugs in the production code and
bugs here are unlikely to coincide.
"""

from __future__ import annotations

import math

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

NUM_LABELS = 17


def ref_mix64(x: int) -> int:
    z = x & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def ref_derive_seed(seed: int, tag: int) -> int:
    return ref_mix64((seed & MASK64) ^ ref_mix64(tag))


def ref_shuffle(items: list, seed: int) -> list:
    """Sequential Fisher-Yates over the declared SplitMix64 draw stream."""
    out = list(items)
    state = seed & MASK64
    for i in range(len(out) - 1, 0, -1):
        state = (state + GOLDEN) & MASK64
        j = ref_mix64(state) % (i + 1)
        out[i], out[j] = out[j], out[i]
    return out


def _bits(mask: int) -> list[int]:
    return [i for i in range(NUM_LABELS) if mask >> i & 1]


def ref_under_sample(records, cfg):
    """Unoptimized selection scan; returns selected indices in manifest order."""
    buckets: dict[int, list[int]] = {}
    for idx, record in enumerate(records):
        k = bin(record.labels).count("1")
        buckets.setdefault(k, []).append(idx)
    counts = [0] * NUM_LABELS
    selected: list[int] = []
    for k in range(NUM_LABELS, 0, -1):
        bucket = buckets.get(k, [])
        if not bucket:
            continue
        if k >= cfg.full_inclusion_min_cardinality:
            order = bucket
        else:
            order = ref_shuffle(bucket, ref_derive_seed(cfg.seed, k))
        for idx in order:
            bits = _bits(records[idx].labels)
            if k >= cfg.full_inclusion_min_cardinality or any(
                counts[i] < cfg.target_per_class for i in bits
            ):
                selected.append(idx)
                for i in bits:
                    counts[i] += 1
    return sorted(selected), counts


def ref_greedy_split(selected_ids, frame_labels, per_class_selected, label_names, cfg):
    """The plain greedy walk only (no repair); returns the validation id set."""
    caps = [
        math.floor(cfg.validation_fraction * per_class_selected.get(name, 0))
        for name in label_names
    ]
    val_counts = [0] * NUM_LABELS
    val_ids = set()
    for fid in ref_shuffle(list(selected_ids), ref_derive_seed(cfg.seed, 101)):
        bits = _bits(frame_labels[fid])
        if all(val_counts[i] + 1 <= caps[i] for i in bits):
            val_ids.add(fid)
            for i in bits:
                val_counts[i] += 1
    return val_ids


def brute_force_ap(scores, positives, tau):
    """AP by walking every rank prefix and recounting from scratch."""
    if len(positives) == 0:
        return None
    retained = sorted(
        [(fid, s) for fid, s in scores if s >= tau], key=lambda e: (-e[1], e[0])
    )
    total = 0.0
    for k in range(1, len(retained) + 1):
        fid_k = retained[k - 1][0]
        if fid_k in positives:
            hits_in_top_k = sum(1 for fid, _ in retained[:k] if fid in positives)
            total += hits_in_top_k / k
    return total / len(positives)
