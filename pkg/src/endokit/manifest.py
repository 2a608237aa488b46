"""Frame/label manifest ingestion and dataset statistics.

Manifest format (CSV, UTF-8, LF or CRLF, header required)::

    frame_id,video_id,frame_index,labels

where ``labels`` is a semicolon-separated list of canonical label names.
Written manifests always use LF line endings so a write -> read -> write
cycle is byte-identical.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

from . import labels as lb
from .errors import (
    ConsistencyError,
    DuplicateFrameId,
    EmptyLabelSet,
    MalformedRow,
    SchemaMismatch,
)
from .jsonio import read_json, write_json

MANIFEST_HEADER = ("frame_id", "video_id", "frame_index", "labels")


@dataclass(frozen=True)
class FrameRecord:
    frame_id: str
    video_id: str
    frame_index: int
    labels: lb.LabelSet


@dataclass
class Manifest:
    records: list[FrameRecord]
    source_path: str = ""

    def __len__(self) -> int:
        return len(self.records)

    def labels_by_frame(self) -> dict[str, lb.LabelSet]:
        return {r.frame_id: r.labels for r in self.records}


def read_manifest(path: str, require_labels: bool = True) -> Manifest:
    """Streaming parse of a manifest CSV.

    Malformed rows abort with their 1-based line number. ``require_labels``
    enforces cardinality >= 1, which every ground-truth manifest must satisfy.
    """
    records: list[FrameRecord] = []
    seen: set[str] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != MANIFEST_HEADER:
            raise SchemaMismatch(
                f"{path}: expected header {','.join(MANIFEST_HEADER)}, got {header}"
            )
        for row in reader:
            line_no = reader.line_num
            if not row:
                continue
            if len(row) != 4:
                raise MalformedRow(line_no, f"expected 4 fields, got {len(row)}")
            frame_id, video_id, index_text, label_text = row
            if not frame_id:
                raise MalformedRow(line_no, "empty frame_id")
            if not video_id:
                raise MalformedRow(line_no, "empty video_id")
            if frame_id in seen:
                raise DuplicateFrameId(frame_id, line_no)
            seen.add(frame_id)
            try:
                frame_index = int(index_text)
            except ValueError:
                raise MalformedRow(line_no, f"frame_index not an integer: {index_text!r}")
            if frame_index < 0:
                raise MalformedRow(line_no, f"negative frame_index: {frame_index}")
            names = [t for t in label_text.split(";") if t]
            if not names and require_labels:
                raise EmptyLabelSet(line_no)
            try:
                mask = lb.labelset_from_names(names)
            except Exception as exc:
                raise MalformedRow(line_no, str(exc))
            records.append(FrameRecord(frame_id, video_id, frame_index, mask))
    return Manifest(records, source_path=path)


def write_manifest(manifest: Manifest, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        for r in manifest.records:
            writer.writerow(
                (r.frame_id, r.video_id, r.frame_index, ";".join(lb.labelset_to_names(r.labels)))
            )


@dataclass
class DatasetStats:
    per_label_count: dict[str, int] = field(default_factory=dict)
    cardinality_histogram: dict[int, int] = field(default_factory=dict)
    total_frames: int = 0

    def check(self) -> None:
        """Enforce the two-view consistency invariants."""
        weighted = sum(k * v for k, v in self.cardinality_histogram.items())
        label_sum = sum(self.per_label_count.values())
        if weighted != label_sum:
            raise ConsistencyError(
                f"sum k*histogram[k] = {weighted} != sum per-label counts = {label_sum}"
            )
        hist_total = sum(self.cardinality_histogram.values())
        if hist_total != self.total_frames:
            raise ConsistencyError(
                f"histogram total = {hist_total} != total_frames = {self.total_frames}"
            )


def empty_stats() -> DatasetStats:
    return DatasetStats(
        per_label_count={name: 0 for name in lb.LABEL_NAMES},
        cardinality_histogram={k: 0 for k in range(1, lb.NUM_LABELS + 1)},
        total_frames=0,
    )


def compute_stats(manifest: Manifest) -> DatasetStats:
    """Exact per-label counts and label-cardinality histogram.

    Single pass over the records; all counters are integers, so the result
    is independent of any internal chunking or parallelism.
    """
    stats = empty_stats()
    per_label = [0] * lb.NUM_LABELS
    hist = stats.cardinality_histogram
    for record in manifest.records:
        mask = record.labels
        k = lb.cardinality(mask)
        if k:
            hist[k] += 1
        for i in lb.labels_in(mask):
            per_label[i] += 1
    stats.per_label_count = {name: per_label[i] for i, name in enumerate(lb.LABEL_NAMES)}
    stats.total_frames = len(manifest.records)
    return stats


def write_stats_report(stats: DatasetStats, path: str) -> None:
    """Emit the stats report JSON; refuses to write inconsistent stats."""
    stats.check()
    doc = {
        "per_label": {name: stats.per_label_count.get(name, 0) for name in lb.LABEL_NAMES},
        "cardinality_histogram": {
            str(k): stats.cardinality_histogram.get(k, 0) for k in range(1, lb.NUM_LABELS + 1)
        },
        "total": stats.total_frames,
    }
    write_json(doc, path)


def read_stats_report(path: str) -> DatasetStats:
    doc = read_json(path)
    for key in ("per_label", "cardinality_histogram", "total"):
        if key not in doc:
            raise SchemaMismatch(f"{path}: missing key {key!r}")
    unknown = set(doc["per_label"]) - set(lb.LABEL_NAMES)
    if unknown:
        raise SchemaMismatch(f"{path}: unknown labels in per_label: {sorted(unknown)}")
    stats = DatasetStats(
        per_label_count={name: int(doc["per_label"].get(name, 0)) for name in lb.LABEL_NAMES},
        cardinality_histogram={int(k): int(v) for k, v in doc["cardinality_histogram"].items()},
        total_frames=int(doc["total"]),
    )
    stats.check()
    return stats
