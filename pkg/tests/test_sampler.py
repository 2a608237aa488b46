from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import manifest_from_masks
from oracles import ref_greedy_split, ref_under_sample

from endokit import labels as lb
from endokit.errors import ConsistencyError, SchemaMismatch
from endokit.manifest import FrameRecord, Manifest
from endokit.sampler import (
    SamplingConfig,
    SelectionPlan,
    attach_frame_labels,
    read_plan,
    split_train_val,
    under_sample,
    write_plan,
)

FIVE_LABEL_MASK = lb.labelset_from_names(
    ["small_intestine", "pylorus", "active_bleeding", "blood", "angiectasia"]
)


def random_manifest(n, seed, max_card=5):
    gen = np.random.default_rng(seed)
    masks = []
    for _ in range(n):
        k = int(gen.integers(1, max_card + 1))
        bits = gen.choice(lb.NUM_LABELS, size=k, replace=False)
        masks.append(int(sum(1 << int(b) for b in bits)))
    return manifest_from_masks(masks)


def plan_key(plan):
    return (
        plan.selected,
        plan.train,
        plan.validation,
        plan.per_class_selected,
        plan.per_class_train,
        plan.per_class_validation,
    )


# ---------------------------------------------------------------- selection


def test_selection_matches_reference_scan():
    for seed in (0, 1, 99):
        m = random_manifest(300, seed)
        cfg = SamplingConfig(target_per_class=10, full_inclusion_min_cardinality=4, seed=seed)
        plan = under_sample(m, cfg)
        ref_idx, ref_counts = ref_under_sample(m.records, cfg)
        assert plan.selected == [m.records[i].frame_id for i in ref_idx]
        assert list(plan.per_class_selected.values()) == ref_counts


def test_ten_singles_target_three_deterministic():
    # 10 single-label frames of one class, target 3: exactly 3 selected,
    # the same 3 on every rerun, and exactly the reference scan's 3.
    m = manifest_from_masks([1 << 2] * 10)
    cfg = SamplingConfig(target_per_class=3, full_inclusion_min_cardinality=4, seed=77)
    plan = under_sample(m, cfg)
    assert len(plan.selected) == 3
    assert plan.per_class_selected["stomach"] == 3
    again = under_sample(m, cfg)
    assert plan_key(again) == plan_key(plan)
    ref_idx, _ = ref_under_sample(m.records, cfg)
    assert plan.selected == [m.records[i].frame_id for i in ref_idx]


def test_five_label_frame_always_selected():
    base = [1, 2, 4, 1 << 9, 3] * 8
    masks = base + [FIVE_LABEL_MASK]
    for seed in (0, 5, 123456789):
        for target in (1, 2, 50):
            m = manifest_from_masks(masks)
            cfg = SamplingConfig(target_per_class=target, seed=seed)
            plan = under_sample(m, cfg)
            assert m.records[-1].frame_id in set(plan.selected)


def test_under_target_class_fully_included():
    # 122 frames of one rare class among plenty of a common one.
    masks = [1 << 5] * 122 + [1 << 4] * 5000
    m = manifest_from_masks(masks)
    cfg = SamplingConfig(target_per_class=3000, seed=3)
    plan = under_sample(m, cfg)
    assert plan.per_class_selected["z_line"] == 122
    selected = set(plan.selected)
    for record in m.records:
        if record.labels == 1 << 5:
            assert record.frame_id in selected


def test_quota_attainment_and_spillover():
    gen = np.random.default_rng(8)
    masks = [1 << 0] * 500 + [1 << 1] * 40
    masks += [(1 << 1) | (1 << 0)] * 30  # pairs spill over into class 0
    gen.shuffle(masks)
    m = manifest_from_masks([int(x) for x in masks])
    cfg = SamplingConfig(target_per_class=100, seed=9)
    plan = under_sample(m, cfg)
    assert plan.per_class_selected["mouth"] >= 100  # quota met
    assert plan.per_class_selected["esophagus"] == 70  # fully included, under target


def test_high_cardinality_completeness_and_subset():
    m = random_manifest(400, 21)
    cfg = SamplingConfig(target_per_class=5, full_inclusion_min_cardinality=4, seed=21)
    plan = under_sample(m, cfg)
    selected = set(plan.selected)
    assert len(selected) == len(plan.selected)
    all_ids = {r.frame_id for r in m.records}
    assert selected <= all_ids
    for record in m.records:
        if lb.cardinality(record.labels) >= 4:
            assert record.frame_id in selected


def test_target_monotonicity():
    m = random_manifest(600, 13)
    cfg_small = SamplingConfig(target_per_class=4, seed=13)
    cfg_big = SamplingConfig(target_per_class=9, seed=13)
    small = set(under_sample(m, cfg_small).selected)
    big = set(under_sample(m, cfg_big).selected)
    assert small <= big


def test_empty_manifest():
    plan = under_sample(Manifest([]), SamplingConfig(seed=1))
    assert plan.selected == []
    assert all(v == 0 for v in plan.per_class_selected.values())


# ------------------------------------------------------------------- split


def singles_manifest(n, label_index=1):
    return manifest_from_masks([1 << label_index] * n)


@pytest.mark.parametrize(
    "n,expect_train,expect_val",
    [(2256, 1805, 451), (122, 98, 24), (5, 4, 1)],
)
def test_split_single_label_rows(n, expect_train, expect_val):
    m = singles_manifest(n)
    cfg = SamplingConfig(target_per_class=10**6, validation_fraction=0.2, seed=40)
    plan = split_train_val(under_sample(m, cfg), cfg)
    assert len(plan.validation) == expect_val
    assert len(plan.train) == expect_train
    assert plan.per_class_validation["esophagus"] == expect_val


def test_split_is_partition_and_counts_consistent():
    m = random_manifest(500, 31)
    cfg = SamplingConfig(target_per_class=20, validation_fraction=0.2, seed=31)
    plan = split_train_val(under_sample(m, cfg), cfg)
    assert set(plan.train) | set(plan.validation) == set(plan.selected)
    assert not set(plan.train) & set(plan.validation)
    for name in lb.LABEL_NAMES:
        assert (
            plan.per_class_selected[name]
            == plan.per_class_train[name] + plan.per_class_validation[name]
        )
    plan.check()


def test_split_fraction_tolerance():
    for seed in (1, 2, 3):
        m = random_manifest(3000, seed, max_card=3)
        cfg = SamplingConfig(target_per_class=60, validation_fraction=0.2, seed=seed)
        plan = split_train_val(under_sample(m, cfg), cfg)
        for name in lb.LABEL_NAMES:
            sel = plan.per_class_selected[name]
            if sel >= 5:
                assert abs(plan.per_class_validation[name] - cfg.validation_fraction * sel) <= 1.0


def test_split_single_label_matches_plain_greedy_reference():
    # On single-label-only data the repair pass must be a no-op, so the
    # result equals the unaided reference walk.
    masks = [1 << 1] * 300 + [1 << 4] * 77 + [1 << 9] * 13
    m = manifest_from_masks(masks)
    cfg = SamplingConfig(target_per_class=10**6, validation_fraction=0.2, seed=17)
    plan = split_train_val(under_sample(m, cfg), cfg)
    ref_val = ref_greedy_split(
        plan.selected, plan.frame_labels, plan.per_class_selected, lb.LABEL_NAMES, cfg
    )
    assert set(plan.validation) == ref_val


def test_split_deterministic():
    m = random_manifest(400, 55)
    cfg = SamplingConfig(target_per_class=15, seed=55)
    a = split_train_val(under_sample(m, cfg), cfg)
    b = split_train_val(under_sample(m, cfg), cfg)
    assert plan_key(a) == plan_key(b)


def test_split_requires_labels():
    plan = SelectionPlan(
        config=SamplingConfig(seed=1),
        selected=["x"],
        per_class_selected={name: 0 for name in lb.LABEL_NAMES},
        per_class_train={name: 0 for name in lb.LABEL_NAMES},
        per_class_validation={name: 0 for name in lb.LABEL_NAMES},
    )
    with pytest.raises(ConsistencyError):
        split_train_val(plan, plan.config)


# ------------------------------------------------------------ plan file IO


def test_plan_round_trip(tmp_path):
    m = random_manifest(200, 61)
    cfg = SamplingConfig(target_per_class=12, seed=61)
    plan = split_train_val(under_sample(m, cfg), cfg)
    path = tmp_path / "plan.json"
    write_plan(plan, str(path))
    back = read_plan(str(path))
    assert plan_key(back) == plan_key(plan)
    assert back.config == plan.config

    second = tmp_path / "plan2.json"
    write_plan(back, str(second))
    assert path.read_bytes() == second.read_bytes()


def test_selection_only_plan_round_trip(tmp_path):
    m = random_manifest(100, 62)
    cfg = SamplingConfig(target_per_class=7, seed=62)
    plan = under_sample(m, cfg)
    path = tmp_path / "plan.json"
    write_plan(plan, str(path))
    back = read_plan(str(path))
    assert not back.is_split
    assert back.selected == plan.selected
    assert back.per_class_selected == plan.per_class_selected


def test_plan_read_rejects_tampered_counts(tmp_path):
    m = singles_manifest(50)
    cfg = SamplingConfig(target_per_class=10**6, seed=5)
    plan = split_train_val(under_sample(m, cfg), cfg)
    path = tmp_path / "plan.json"
    write_plan(plan, str(path))
    doc = json.loads(path.read_text())
    doc["per_class"]["esophagus"]["train"] += 1
    path.write_text(json.dumps(doc))
    with pytest.raises(ConsistencyError):
        read_plan(str(path))


def test_plan_read_rejects_overlap(tmp_path):
    m = singles_manifest(50)
    cfg = SamplingConfig(target_per_class=10**6, seed=5)
    plan = split_train_val(under_sample(m, cfg), cfg)
    path = tmp_path / "plan.json"
    write_plan(plan, str(path))
    doc = json.loads(path.read_text())
    doc["validation"][0] = doc["train"][0]
    path.write_text(json.dumps(doc))
    with pytest.raises(ConsistencyError):
        read_plan(str(path))


def test_plan_read_rejects_missing_keys(tmp_path):
    path = tmp_path / "plan.json"
    path.write_text('{"config": {}}')
    with pytest.raises(SchemaMismatch):
        read_plan(str(path))


def test_attach_frame_labels_validates(tmp_path):
    m = singles_manifest(40)
    cfg = SamplingConfig(target_per_class=10**6, seed=5)
    plan = under_sample(m, cfg)
    path = tmp_path / "plan.json"
    write_plan(plan, str(path))
    back = read_plan(str(path))
    attach_frame_labels(back, m)
    assert back.frame_labels == plan.frame_labels

    # frame missing from the manifest
    other = manifest_from_masks([1 << 1] * 10, prefix="other")
    with pytest.raises(ConsistencyError):
        attach_frame_labels(read_plan(str(path)), other)

    # labels disagree with the stored per-class counts
    relabeled = manifest_from_masks([1 << 2] * 40)
    with pytest.raises(ConsistencyError):
        attach_frame_labels(read_plan(str(path)), relabeled)


def test_config_validation():
    with pytest.raises(ConsistencyError):
        SamplingConfig(target_per_class=0)
    with pytest.raises(ConsistencyError):
        SamplingConfig(full_inclusion_min_cardinality=0)
    with pytest.raises(ConsistencyError):
        SamplingConfig(full_inclusion_min_cardinality=18)
    with pytest.raises(ConsistencyError):
        SamplingConfig(validation_fraction=0.0)
    with pytest.raises(ConsistencyError):
        SamplingConfig(validation_fraction=1.0)
    with pytest.raises(ConsistencyError):
        SamplingConfig(seed=-1)


@settings(max_examples=25)
@given(st.integers(min_value=0, max_value=2**32), st.integers(min_value=1, max_value=30))
def test_selection_reference_property(seed, target):
    m = random_manifest(120, seed % 1000)
    cfg = SamplingConfig(target_per_class=target, seed=seed)
    plan = under_sample(m, cfg)
    ref_idx, ref_counts = ref_under_sample(m.records, cfg)
    assert plan.selected == [m.records[i].frame_id for i in ref_idx]
    assert list(plan.per_class_selected.values()) == ref_counts
