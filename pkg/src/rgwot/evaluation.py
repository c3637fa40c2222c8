"""Scoring predicted key-step labels against ground truth.

Predicted cluster ids carry no meaning on their own, so a single Hungarian
matching over the whole task (concatenated videos, cost = negative frame
overlap) maps predictions onto ground-truth steps before counting. Frames
whose ground truth is background (-1) are excluded from every count by
default; predicted background on a real frame still costs a false negative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .data_model import LabelSequence
from .errors import LengthMismatch, ShapeMismatch


def hungarian(cost: np.ndarray) -> list[tuple[int, int]]:
    """Minimum-cost perfect matching of a square cost matrix."""
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ShapeMismatch(f"matching needs a square cost matrix, got {c.shape}")
    rows, cols = linear_sum_assignment(c)
    return sorted(zip(rows.tolist(), cols.tolist()))


def pad_square(cost: np.ndarray, pad_value: float = 1e9) -> np.ndarray:
    """Pad a rectangular cost matrix to square with a large constant."""
    c = np.asarray(cost, dtype=np.float64)
    n = max(c.shape)
    out = np.full((n, n), pad_value)
    out[: c.shape[0], : c.shape[1]] = c
    return out


@dataclass(frozen=True)
class StepMetrics:
    precision: float
    recall: float
    f1: float
    iou: float
    tp: int = 0
    fp: int = 0
    fn: int = 0


@dataclass(frozen=True)
class MetricsReport:
    matching: tuple[tuple[int, int], ...]  # (pred id, gt id)
    per_step: dict[int, StepMetrics]  # keyed by gt step id, gt-present steps only
    macro: StepMetrics
    per_video: dict[str, StepMetrics]


def _counts_to_metrics(tp: int, fp: int, fn: int) -> StepMetrics:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    iou = tp / (tp + fp + fn) if tp + fp + fn else 0.0
    return StepMetrics(precision, recall, f1, iou, tp, fp, fn)


def _macro(per_step: dict[int, StepMetrics]) -> StepMetrics:
    if not per_step:
        return StepMetrics(0.0, 0.0, 0.0, 0.0)
    vals = list(per_step.values())
    return StepMetrics(
        precision=float(np.mean([v.precision for v in vals])),
        recall=float(np.mean([v.recall for v in vals])),
        f1=float(np.mean([v.f1 for v in vals])),
        iou=float(np.mean([v.iou for v in vals])),
        tp=sum(v.tp for v in vals),
        fp=sum(v.fp for v in vals),
        fn=sum(v.fn for v in vals),
    )


def _step_metrics(pred, gt, steps) -> dict[int, StepMetrics]:
    out = {}
    for step in steps:
        tp = int(np.count_nonzero((pred == step) & (gt == step)))
        fp = int(np.count_nonzero((pred == step) & (gt != step)))
        fn = int(np.count_nonzero((pred != step) & (gt == step)))
        out[step] = _counts_to_metrics(tp, fp, fn)
    return out


def evaluate(predictions: list[LabelSequence], ground_truth: list[LabelSequence],
             k: int, exclude_background: bool = True) -> MetricsReport:
    """Hungarian-matched precision/recall/F1/IoU, macro over gt-present steps."""
    gt_by_id = {seq.video_id: seq for seq in ground_truth}
    pred_parts = []
    gt_parts = []
    video_slices = {}
    offset = 0
    for pred in predictions:
        if pred.video_id not in gt_by_id:
            raise LengthMismatch(f"no ground truth for video {pred.video_id!r}")
        gt = gt_by_id[pred.video_id]
        if pred.labels.size != gt.labels.size:
            raise LengthMismatch(
                f"{pred.video_id}: {pred.labels.size} predictions vs {gt.labels.size} labels"
            )
        keep = gt.labels != gt.background_code if exclude_background \
            else np.ones(gt.labels.size, dtype=bool)
        pred_parts.append(pred.labels[keep])
        gt_parts.append(gt.labels[keep])
        video_slices[pred.video_id] = (offset, offset + int(keep.sum()))
        offset += int(keep.sum())
    pred_all = np.concatenate(pred_parts) if pred_parts else np.empty(0, dtype=np.int64)
    gt_all = np.concatenate(gt_parts) if gt_parts else np.empty(0, dtype=np.int64)

    overlap = np.zeros((k, k))
    valid = (pred_all >= 0) & (pred_all < k)
    np.add.at(overlap, (pred_all[valid], gt_all[valid]), 1.0)
    matching = hungarian(-overlap)
    remap = {pred_id: gt_id for pred_id, gt_id in matching}

    mapped = np.full(pred_all.shape, -1, dtype=np.int64)
    for pred_id, gt_id in remap.items():
        mapped[pred_all == pred_id] = gt_id

    present = sorted(int(s) for s in np.unique(gt_all))
    per_step = _step_metrics(mapped, gt_all, present)
    per_video = {}
    for vid, (lo, hi) in video_slices.items():
        gt_vid = gt_all[lo:hi]
        steps = sorted(int(s) for s in np.unique(gt_vid))
        per_video[vid] = _macro(_step_metrics(mapped[lo:hi], gt_vid, steps))
    return MetricsReport(
        matching=tuple(matching),
        per_step=per_step,
        macro=_macro(per_step),
        per_video=per_video,
    )


def write_metrics_csv(report: MetricsReport, path, task_name: str,
                      header_comment: str | None = None) -> None:
    """One row per key step plus a macro row."""
    with open(path, "w") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        fh.write("task,keystep,precision,recall,f1,iou\n")
        for step, m in sorted(report.per_step.items()):
            fh.write(f"{task_name},{step},{m.precision:.6f},{m.recall:.6f},"
                     f"{m.f1:.6f},{m.iou:.6f}\n")
        m = report.macro
        fh.write(f"{task_name},macro,{m.precision:.6f},{m.recall:.6f},"
                 f"{m.f1:.6f},{m.iou:.6f}\n")
