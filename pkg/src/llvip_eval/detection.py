"""Box overlap, non-maximal suppression and detection AP / mAP evaluation.

Both matching and suppression use a strict ``IoU > threshold`` test.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyGroundTruth, NoGroundTruth

TP = True
FP = False

COCO_THRESHOLDS = tuple(round(0.5 + 0.05 * k, 2) for k in range(10))
INTERPOLATIONS = ("coco101", "allpoint")


@dataclass(frozen=True)
class Box:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"box coordinates must be finite: {coords}")
        if not (self.x2 > self.x1 and self.y2 > self.y1):
            raise ValueError(f"box must have positive area: {coords}")

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return self.x1, self.y1, self.x2, self.y2


@dataclass(frozen=True)
class Detection:
    image_id: str
    class_label: str
    confidence: float
    box: Box

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must lie in [0, 1], got {self.confidence}")


@dataclass(frozen=True)
class GroundTruthBox:
    image_id: str
    class_label: str
    box: Box


@dataclass
class PRCurve:
    recall: list[float] = field(default_factory=list)
    precision: list[float] = field(default_factory=list)
    confidence: list[float] = field(default_factory=list)

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.recall, self.precision))

    def __len__(self):
        return len(self.recall)


def iou(a: Box, b: Box) -> float:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def sort_by_confidence(dets: Iterable[Detection]) -> list[Detection]:
    """Descending confidence; ties keep their input order."""
    return sorted(dets, key=lambda d: -d.confidence)


def nms(dets: Sequence[Detection], iou_threshold: float) -> list[Detection]:
    """Greedy suppression for detections of one image and one class."""
    if not 0.0 <= iou_threshold <= 1.0:
        raise ValueError(f"IoU threshold must lie in [0, 1], got {iou_threshold}")
    remaining = sort_by_confidence(dets)
    kept = []
    while remaining:
        best = remaining.pop(0)
        kept.append(best)
        remaining = [d for d in remaining if iou(best.box, d.box) <= iou_threshold]
    return kept


def nms_all(dets: Iterable[Detection], iou_threshold: float) -> list[Detection]:
    """Run :func:`nms` separately for each (image, class) group."""
    groups = defaultdict(list)
    for d in dets:
        groups[(d.image_id, d.class_label)].append(d)
    out = []
    for key in sorted(groups):
        out.extend(nms(groups[key], iou_threshold))
    return out


def match_detections(dets: Sequence[Detection], gts: Sequence[GroundTruthBox],
                     iou_threshold: float) -> list[tuple[Detection, bool]]:
    """Greedy one-to-one matching of confidence-sorted detections to ground truth.

    Each detection takes the unmatched ground truth of its class with the
    highest IoU (first in input order on ties) and is a true positive when
    that IoU is strictly above ``iou_threshold``.
    """
    used = [False] * len(gts)
    out = []
    for det in dets:
        best, best_iou = -1, -1.0
        for j, gt in enumerate(gts):
            if used[j] or gt.class_label != det.class_label:
                continue
            o = iou(det.box, gt.box)
            if o > best_iou:
                best, best_iou = j, o
        if best >= 0 and best_iou > iou_threshold:
            used[best] = True
            out.append((det, TP))
        else:
            out.append((det, FP))
    return out


def precision_recall(flags: Sequence[bool], total_gt: int) -> tuple[float, float]:
    if total_gt < 0:
        raise ValueError("total_gt must be >= 0")
    tp = sum(1 for f in flags if f)
    fp = len(flags) - tp
    precision = tp / (tp + fp) if flags else 1.0
    recall = tp / total_gt if total_gt else 1.0
    return precision, recall


def _group_by_image(items):
    groups = defaultdict(list)
    for it in items:
        groups[it.image_id].append(it)
    return groups


def _ranked_flags(dets: Sequence[Detection], gts: Sequence[GroundTruthBox], iou_threshold: float):
    """TP/FP flags in global descending-confidence order, matched image by image."""
    ranked = sort_by_confidence(dets)
    gt_by_image = _group_by_image(gts)
    ranks_by_image = defaultdict(list)
    for k, d in enumerate(ranked):
        ranks_by_image[d.image_id].append(k)
    flags = [FP] * len(ranked)
    for image_id in sorted(ranks_by_image):
        ranks = ranks_by_image[image_id]
        matched = match_detections([ranked[k] for k in ranks], gt_by_image.get(image_id, []), iou_threshold)
        for k, (_, flag) in zip(ranks, matched):
            flags[k] = flag
    return ranked, flags


def _curve(ranked, flags, total_gt) -> PRCurve:
    tp = np.cumsum(np.asarray(flags, dtype=np.int64))
    fp = np.arange(1, len(flags) + 1) - tp
    recall = (tp / total_gt).tolist()
    precision = (tp / (tp + fp)).tolist()
    return PRCurve(recall, precision, [d.confidence for d in ranked])


def _envelope(precision: Sequence[float]) -> list[float]:
    env = list(precision)
    for i in range(len(env) - 2, -1, -1):
        env[i] = max(env[i], env[i + 1])
    return env


def ap_coco101(curve: PRCurve) -> float:
    """Mean over r = 0, 0.01, ..., 1 of the best precision at recall >= r."""
    if not len(curve):
        return 0.0
    env = _envelope(curve.precision)
    rec = curve.recall
    total = 0.0
    j = 0
    for k in range(101):
        r = k / 100
        while j < len(rec) and rec[j] < r:
            j += 1
        if j < len(rec):
            total += env[j]
    return total / 101


def ap_allpoint(curve: PRCurve) -> float:
    """Exact area under the monotone precision envelope."""
    if not len(curve):
        return 0.0
    env = _envelope(curve.precision)
    area = 0.0
    prev_r = 0.0
    for r, p in zip(curve.recall, env):
        if r > prev_r:
            area += (r - prev_r) * p
            prev_r = r
    return area


def average_precision(dets: Sequence[Detection], gts: Sequence[GroundTruthBox], iou_threshold: float,
                      interpolation: str = "coco101") -> tuple[float, PRCurve]:
    """AP for a single class pooled across images."""
    if interpolation not in INTERPOLATIONS:
        raise ValueError(f"interpolation must be one of {INTERPOLATIONS}, got {interpolation!r}")
    if not gts:
        raise NoGroundTruth("class has no ground-truth boxes; AP is undefined")
    ranked, flags = _ranked_flags(dets, gts, iou_threshold)
    curve = _curve(ranked, flags, len(gts))
    ap = ap_coco101(curve) if interpolation == "coco101" else ap_allpoint(curve)
    return ap, curve


def parse_thresholds(text: str) -> list[float]:
    """``a:b:step`` range (inclusive) or a comma separated list."""
    text = text.strip()
    if ":" in text:
        try:
            lo, hi, step = (float(p) for p in text.split(":"))
        except ValueError:
            raise ValueError(f"expected a:b:step, got {text!r}") from None
        if step <= 0 or hi < lo:
            raise ValueError(f"bad threshold range {text!r}")
        n = int(math.floor((hi - lo) / step + 1e-9)) + 1
        values = [round(lo + k * step, 10) for k in range(n)]
    else:
        try:
            values = [float(p) for p in text.split(",") if p.strip()]
        except ValueError:
            raise ValueError(f"bad threshold list {text!r}") from None
    if not values or any(not 0 < v <= 1 for v in values):
        raise ValueError(f"IoU thresholds must lie in (0, 1]: {text!r}")
    return values


@dataclass
class DetectionEvalResult:
    thresholds: list[float]
    per_class_ap: dict[str, dict[float, float]]
    map_per_threshold: dict[float, float]
    map_50: float
    map_50_95: float
    precision: float
    recall: float
    pr_curves: dict[str, dict[float, PRCurve]]
    gt_counts: dict[str, int]
    det_counts: dict[str, int]
    classes_without_gt: list[str]
    conf_threshold: float
    interpolation: str


def evaluate(dets: Sequence[Detection], gts: Sequence[GroundTruthBox],
             thresholds: Sequence[float] = COCO_THRESHOLDS, conf_threshold: float = 0.25,
             interpolation: str = "coco101") -> DetectionEvalResult:
    thresholds = [float(t) for t in thresholds]
    if not thresholds or any(not 0 < t <= 1 for t in thresholds):
        raise ValueError(f"IoU thresholds must be non-empty and in (0, 1]: {thresholds}")
    if not gts:
        raise EmptyGroundTruth("no ground-truth boxes to evaluate against")

    gt_by_class = defaultdict(list)
    for g in gts:
        gt_by_class[g.class_label].append(g)
    det_by_class = defaultdict(list)
    for d in dets:
        det_by_class[d.class_label].append(d)
    classes = sorted(gt_by_class)
    orphan = sorted(set(det_by_class) - set(gt_by_class))

    needed = list(thresholds)
    if 0.5 not in needed:
        needed.append(0.5)
    per_class_ap = {}
    curves = {}
    for c in classes:
        per_class_ap[c] = {}
        curves[c] = {}
        for t in needed:
            ap, curve = average_precision(det_by_class[c], gt_by_class[c], t, interpolation)
            per_class_ap[c][t] = ap
            curves[c][t] = curve

    def mean_ap(t):
        return sum(per_class_ap[c][t] for c in classes) / len(classes)

    map_per_threshold = {t: mean_ap(t) for t in thresholds}
    map_50 = mean_ap(0.5)
    map_50_95 = sum(map_per_threshold[t] for t in thresholds) / len(thresholds)
    if 0.5 not in thresholds:
        for c in classes:
            del per_class_ap[c][0.5]
            del curves[c][0.5]

    confident = [d for d in dets if d.confidence >= conf_threshold and d.class_label in gt_by_class]
    flags = []
    for c in classes:
        flags.extend(_ranked_flags([d for d in confident if d.class_label == c], gt_by_class[c], 0.5)[1])
    precision, recall = precision_recall(flags, len(gts))

    return DetectionEvalResult(
        thresholds=thresholds,
        per_class_ap=per_class_ap,
        map_per_threshold=map_per_threshold,
        map_50=map_50,
        map_50_95=map_50_95,
        precision=precision,
        recall=recall,
        pr_curves=curves,
        gt_counts={c: len(gt_by_class[c]) for c in classes},
        det_counts={c: len(det_by_class[c]) for c in sorted(det_by_class)},
        classes_without_gt=orphan,
        conf_threshold=conf_threshold,
        interpolation=interpolation,
    )
