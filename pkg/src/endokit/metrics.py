"""Thresholded average precision, per-video mAP, and report aggregation.

The AP definition is frozen as score-thresholded retrieval AP:

* ``P`` = number of ground-truth positive frames of the class in the video.
  Classes with ``P = 0`` are absent: they are excluded from the video mean
  (scoring them 0 would make perfect predictors score below 1).
* Drop candidates scoring below the threshold, sort the rest by score
  descending (ties broken by frame_id ascending), and average
  ``positives_in_top_k / k`` over the ranks ``k`` that hold a positive,
  normalized by ``P``. An empty retained list gives 0.

Raising the threshold only removes terms from that sum while ``P`` stays
fixed, so mAP is non-increasing in the threshold. The overall figure is the
unweighted mean of the per-video values.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

from . import labels as lb
from .errors import (
    ConsistencyError,
    DuplicateFrameId,
    InvalidScore,
    MissingPrediction,
    SchemaMismatch,
    UnknownFrame,
)
from .jsonio import read_json, write_json
from .manifest import Manifest, read_manifest

DEFAULT_THRESHOLDS = (0.5, 0.95)
PREDICTION_HEADER = ("frame_id", "video_id") + lb.LABEL_NAMES


@dataclass(frozen=True)
class PredictionRow:
    frame_id: str
    video_id: str
    scores: tuple[float, ...]  # length 17, frozen label order


@dataclass
class PredictionSet:
    rows: list[PredictionRow]

    def by_frame(self) -> dict[str, PredictionRow]:
        return {row.frame_id: row for row in self.rows}


@dataclass
class VideoReport:
    map_at: dict[float, float] = field(default_factory=dict)
    per_class_ap: dict[float, dict[str, float]] = field(default_factory=dict)
    excluded_classes: dict[float, int] = field(default_factory=dict)


@dataclass
class EvalReport:
    thresholds: list[float]
    per_video: dict[str, VideoReport]
    overall: dict[float, float]


def read_predictions(path: str) -> PredictionSet:
    rows: list[PredictionRow] = []
    seen: set[str] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != PREDICTION_HEADER:
            raise SchemaMismatch(f"{path}: bad prediction header")
        for row in reader:
            line_no = reader.line_num
            if not row:
                continue
            if len(row) != len(PREDICTION_HEADER):
                raise SchemaMismatch(
                    f"{path}: line {line_no}: expected {len(PREDICTION_HEADER)} columns, got {len(row)}"
                )
            frame_id, video_id = row[0], row[1]
            if frame_id in seen:
                raise DuplicateFrameId(frame_id, line_no)
            seen.add(frame_id)
            try:
                scores = tuple(float(x) for x in row[2:])
            except ValueError:
                raise SchemaMismatch(f"{path}: line {line_no}: non-numeric score")
            for s in scores:
                if not math.isfinite(s) or not 0.0 <= s <= 1.0:
                    raise InvalidScore(f"{path}: line {line_no}: score {s!r} outside [0, 1]")
            rows.append(PredictionRow(frame_id, video_id, scores))
    return PredictionSet(rows)


def write_predictions(pred: PredictionSet, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PREDICTION_HEADER)
        for row in pred.rows:
            writer.writerow((row.frame_id, row.video_id) + tuple(repr(s) for s in row.scores))


def average_precision(
    scores: list[tuple[str, float]], positives: set[str], tau: float
) -> float | None:
    """Frozen AP definition (see module docstring); None when P = 0."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {tau}")
    for _, s in scores:
        if math.isnan(s):
            raise InvalidScore("NaN score")
    p = len(positives)
    if p == 0:
        return None
    retained = sorted(
        ((fid, s) for fid, s in scores if s >= tau), key=lambda e: (-e[1], e[0])
    )
    hits = 0
    total = 0.0
    for rank, (fid, _) in enumerate(retained, start=1):
        if fid in positives:
            hits += 1
            total += hits / rank
    return total / p


def _video_frames(truth: Manifest, video_id: str) -> list:
    frames = [r for r in truth.records if r.video_id == video_id]
    if not frames:
        raise ConsistencyError(f"video {video_id!r} not present in ground truth")
    return frames


def _check_no_unknown(pred_by_frame: dict[str, PredictionRow], truth: Manifest) -> None:
    """Reject prediction rows that do not match any ground-truth frame."""
    truth_by_frame = {r.frame_id: r for r in truth.records}
    for fid, row in pred_by_frame.items():
        record = truth_by_frame.get(fid)
        if record is None:
            raise UnknownFrame(fid)
        if row.video_id != record.video_id:
            raise UnknownFrame(
                fid, f"predicted under video {row.video_id!r}, ground truth has {record.video_id!r}"
            )


def _video_eval(
    frames: list, pred_by_frame: dict[str, PredictionRow], tau: float
) -> tuple[float, dict[str, float], int]:
    per_class: dict[str, float] = {}
    for label in lb.LABELS:
        positives = {r.frame_id for r in frames if r.labels >> label.index & 1}
        candidates = []
        for r in frames:
            row = pred_by_frame.get(r.frame_id)
            if row is None:
                raise MissingPrediction(r.frame_id)
            candidates.append((r.frame_id, row.scores[label.index]))
        ap = average_precision(candidates, positives, tau)
        if ap is not None:
            per_class[label.canonical_name] = ap
    if not per_class:
        raise ConsistencyError("video has no positive class")
    mean = sum(per_class[name] for name in lb.LABEL_NAMES if name in per_class) / len(per_class)
    return mean, per_class, lb.NUM_LABELS - len(per_class)


def map_at(pred: PredictionSet, truth: Manifest, video_id: str, tau: float) -> float:
    """Mean AP over the classes with at least one positive in the video."""
    pred_by_frame = pred.by_frame()
    _check_no_unknown(pred_by_frame, truth)
    mean, _, _ = _video_eval(_video_frames(truth, video_id), pred_by_frame, tau)
    return mean


def overall_map(per_video_values: list[float]) -> float:
    """Unweighted mean over videos, summed in the given order."""
    values = list(per_video_values)
    if not values:
        raise ValueError("overall mAP needs at least one video")
    return sum(values) / len(values)


def evaluate(
    pred: PredictionSet, truth: Manifest, thresholds: list[float] | None = None
) -> EvalReport:
    """Full evaluation: per-video and overall mAP at every threshold."""
    taus = list(thresholds) if thresholds is not None else list(DEFAULT_THRESHOLDS)
    if not taus:
        raise ValueError("at least one threshold required")
    for tau in taus:
        if not 0.0 <= tau <= 1.0:
            raise ValueError(f"threshold must be in [0, 1], got {tau}")
    pred_by_frame = pred.by_frame()
    _check_no_unknown(pred_by_frame, truth)
    frames_by_video: dict[str, list] = {}
    for record in truth.records:
        frames_by_video.setdefault(record.video_id, []).append(record)
    videos = sorted(frames_by_video)
    per_video: dict[str, VideoReport] = {}
    overall: dict[float, float] = {}
    for video_id in videos:
        report = VideoReport()
        for tau in taus:
            mean, per_class, excluded = _video_eval(frames_by_video[video_id], pred_by_frame, tau)
            report.map_at[tau] = mean
            report.per_class_ap[tau] = per_class
            report.excluded_classes[tau] = excluded
        per_video[video_id] = report
    for tau in taus:
        overall[tau] = overall_map([per_video[v].map_at[tau] for v in videos])
    return EvalReport(thresholds=taus, per_video=per_video, overall=overall)


def evaluate_files(
    pred_path: str, truth_path: str, thresholds: list[float] | None = None
) -> EvalReport:
    pred = read_predictions(pred_path)
    truth = read_manifest(truth_path)
    return evaluate(pred, truth, thresholds)


def threshold_key(tau: float) -> str:
    """Canonical JSON key for a threshold value."""
    return format(tau, "g")


def write_report(report: EvalReport, path: str) -> None:
    doc = {
        "thresholds": list(report.thresholds),
        "per_video": {
            video_id: {
                "map": {threshold_key(t): v.map_at[t] for t in report.thresholds},
                "per_class_ap": {
                    threshold_key(t): dict(v.per_class_ap[t]) for t in report.thresholds
                },
                "excluded_classes": {
                    threshold_key(t): v.excluded_classes[t] for t in report.thresholds
                },
            }
            for video_id, v in report.per_video.items()
        },
        "overall": {threshold_key(t): report.overall[t] for t in report.thresholds},
    }
    write_json(doc, path)


def read_report(path: str) -> EvalReport:
    doc = read_json(path)
    for key in ("thresholds", "per_video", "overall"):
        if key not in doc:
            raise SchemaMismatch(f"{path}: missing key {key!r}")
    taus = [float(t) for t in doc["thresholds"]]
    per_video: dict[str, VideoReport] = {}
    for video_id, entry in doc["per_video"].items():
        report = VideoReport()
        for tau in taus:
            key = threshold_key(tau)
            try:
                report.map_at[tau] = float(entry["map"][key])
                report.per_class_ap[tau] = {
                    str(k): float(v) for k, v in entry["per_class_ap"][key].items()
                }
                report.excluded_classes[tau] = int(entry["excluded_classes"][key])
            except KeyError as exc:
                raise SchemaMismatch(f"{path}: video {video_id!r} missing {exc}")
        per_video[video_id] = report
    overall = {tau: float(doc["overall"][threshold_key(tau)]) for tau in taus}
    report = EvalReport(thresholds=taus, per_video=per_video, overall=overall)
    _check_report(report)
    return report


def _check_report(report: EvalReport) -> None:
    videos = sorted(report.per_video)
    for tau in report.thresholds:
        for video_id in videos:
            v = report.per_video[video_id]
            if not 0.0 <= v.map_at[tau] <= 1.0:
                raise ConsistencyError(f"mAP out of range for video {video_id!r}")
            for name, ap in v.per_class_ap[tau].items():
                if not 0.0 <= ap <= 1.0:
                    raise ConsistencyError(f"AP out of range for {video_id!r}/{name}")
        mean = overall_map([report.per_video[v].map_at[tau] for v in videos])
        if abs(mean - report.overall[tau]) > 1e-12:
            raise ConsistencyError(
                f"overall mAP at {tau} is {report.overall[tau]}, per-video mean is {mean}"
            )


def display_round(value: float) -> str:
    """Round half-up to 4 decimals for human-readable tables."""
    return str(Decimal(value).quantize(Decimal("0.0001"), rounding=ROUND_HALF_UP))
