"""Detection evaluation: IoU-thresholded F1, COCO-style AP, confidence curves.

Matching is greedy in descending confidence against the unmatched ground
truth of highest IoU, the COCO convention. "AP" without qualifier averages
the 0.5:0.95:0.05 IoU grid (the COCO definition); single-threshold AP is
available via ``iou_threshold``. Area buckets: small < 32^2, medium in
[32^2, 96^2), large >= 96^2 pixels squared; detections matched only by
out-of-bucket ground truth are ignored rather than penalized.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

F1_THRESHOLDS = (0.4, 0.5, 0.6, 0.7, 0.8)
AP_IOU_GRID = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
AREA_SMALL = 32.0 ** 2
AREA_LARGE = 96.0 ** 2


class Detection:
    """One detector output: image id, (x, y, w, h) box, confidence."""

    __slots__ = ("image_id", "bbox", "confidence", "mask")

    def __init__(self, image_id, bbox, confidence, mask=None):
        if bbox[2] < 0 or bbox[3] < 0:
            raise ValueError("detection bbox must have non-negative size")
        if not 0.0 <= confidence <= 1.0:
            raise ValueError("confidence must be in [0, 1]")
        self.image_id = image_id
        self.bbox = tuple(float(v) for v in bbox)
        self.confidence = float(confidence)
        self.mask = mask


@dataclass
class GroundTruthBox:
    image_id: int
    bbox: tuple
    area: float = None           # segmentation area when known, else box area

    def __post_init__(self):
        self.bbox = tuple(float(v) for v in self.bbox)
        if self.area is None:
            self.area = self.bbox[2] * self.bbox[3]


@dataclass
class EvalReport:
    f1_by_threshold: dict = field(default_factory=dict)
    ap: float = None
    ap50: float = None
    ap75: float = None
    ap_small: float = None
    ap_medium: float = None
    ap_large: float = None
    precision: list = field(default_factory=list)
    recall: list = field(default_factory=list)
    confidence_thresholds: list = field(default_factory=list)
    confidence_fractions: list = field(default_factory=list)
    empty_detections: bool = False

    def to_dict(self) -> dict:
        return {
            "f1_by_threshold": {f"{k:g}": v for k, v in self.f1_by_threshold.items()},
            "ap": self.ap, "ap50": self.ap50, "ap75": self.ap75,
            "ap_small": self.ap_small, "ap_medium": self.ap_medium,
            "ap_large": self.ap_large,
            "precision": self.precision, "recall": self.recall,
            "confidence_thresholds": self.confidence_thresholds,
            "confidence_fractions": self.confidence_fractions,
            "empty_detections": self.empty_detections,
        }


def iou(a, b) -> float:
    """Intersection over union of two (x, y, w, h) boxes; 0 for empty union."""
    ax0, ay0, aw, ah = a
    bx0, by0, bw, bh = b
    ix0 = max(ax0, bx0)
    iy0 = max(ay0, by0)
    ix1 = min(ax0 + aw, bx0 + bw)
    iy1 = min(ay0 + ah, by0 + bh)
    iw = max(0.0, ix1 - ix0)
    ih = max(0.0, iy1 - iy0)
    inter = iw * ih
    union = aw * ah + bw * bh - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def match_detections(gt_boxes: list, detections: list, threshold: float):
    """Greedy matching in descending confidence.

    Each detection takes the unmatched ground-truth box of highest IoU >=
    threshold (ties to the lower gt index). Returns (tp_pairs, fp_det_idx,
    fn_gt_idx) with indices into the input lists.
    """
    order = sorted(range(len(detections)),
                   key=lambda i: (-detections[i].confidence, i))
    matched_gt = [False] * len(gt_boxes)
    tp = []
    fp = []
    for di in order:
        best_iou = 0.0
        best_gi = -1
        for gi, g in enumerate(gt_boxes):
            if matched_gt[gi]:
                continue
            v = iou(detections[di].bbox, g.bbox if hasattr(g, "bbox") else g)
            if v >= threshold and v > best_iou:
                best_iou = v
                best_gi = gi
        if best_gi >= 0:
            matched_gt[best_gi] = True
            tp.append((di, best_gi))
        else:
            fp.append(di)
    fn = [gi for gi, m in enumerate(matched_gt) if not m]
    return tp, fp, fn


def _group_by_image(gt: list, det: list):
    images = sorted({g.image_id for g in gt} | {d.image_id for d in det})
    gt_by = {i: [] for i in images}
    det_by = {i: [] for i in images}
    for g in gt:
        gt_by[g.image_id].append(g)
    for d in det:
        det_by[d.image_id].append(d)
    return images, gt_by, det_by


def f1_at(gt: list, det: list, threshold: float) -> float:
    """Dataset-level F1 at one IoU threshold (TP/FP/FN pooled over images)."""
    images, gt_by, det_by = _group_by_image(gt, det)
    ntp = nfp = nfn = 0
    for img in images:
        tp, fp, fn = match_detections(gt_by[img], det_by[img], threshold)
        ntp += len(tp)
        nfp += len(fp)
        nfn += len(fn)
    if ntp + nfp == 0 or ntp + nfn == 0:
        return 0.0
    p = ntp / (ntp + nfp)
    r = ntp / (ntp + nfn)
    if p + r == 0.0:
        return 0.0
    return 2.0 * p * r / (p + r)


def f1_curve(gt: list, det: list, thresholds=F1_THRESHOLDS) -> dict:
    return {t: f1_at(gt, det, t) for t in thresholds}


def _bucket_of(area: float) -> str:
    if area < AREA_SMALL:
        return "small"
    if area < AREA_LARGE:
        return "medium"
    return "large"


def average_precision(gt: list, det: list, iou_threshold: float = 0.5,
                      area_bucket: str = None, return_pr: bool = False):
    """101-point interpolated AP at one IoU threshold.

    With an area bucket, out-of-bucket ground truth is ignore-only: a
    detection matching it is dropped from scoring instead of counted as a
    false positive. Returns None when the bucket holds no ground truth.
    """
    if area_bucket is not None:
        in_bucket = [_bucket_of(g.area) == area_bucket for g in gt]
    else:
        in_bucket = [True] * len(gt)
    n_positive = sum(in_bucket)
    if n_positive == 0:
        return (None, [], []) if return_pr else None

    images, gt_by, det_by = _group_by_image(gt, det)
    bucket_by_gt = {}
    for g, keep in zip(gt, in_bucket):
        bucket_by_gt[id(g)] = keep

    scored = []  # (confidence, image order, det order, is_tp, ignored)
    for img in images:
        gts = gt_by[img]
        matched = [False] * len(gts)
        order = sorted(range(len(det_by[img])),
                       key=lambda i: (-det_by[img][i].confidence, i))
        for di in order:
            d = det_by[img][di]
            best_iou = 0.0
            best_gi = -1
            # prefer countable ground truth; fall back to ignored gt
            for pass_keep in (True, False):
                if best_gi >= 0:
                    break
                for gi, g in enumerate(gts):
                    if matched[gi] or bucket_by_gt[id(g)] != pass_keep:
                        continue
                    v = iou(d.bbox, g.bbox)
                    if v >= iou_threshold and v > best_iou:
                        best_iou = v
                        best_gi = gi
                if best_gi >= 0:
                    matched[best_gi] = True
                    if pass_keep:
                        scored.append((d.confidence, img, di, True, False))
                    else:
                        scored.append((d.confidence, img, di, False, True))
            if best_gi < 0:
                scored.append((d.confidence, img, di, False, False))

    scored.sort(key=lambda r: (-r[0], r[1], r[2]))
    tp = 0
    fp = 0
    precisions = []
    recalls = []
    for conf, img, di, is_tp, ignored in scored:
        if ignored:
            continue
        if is_tp:
            tp += 1
        else:
            fp += 1
        precisions.append(tp / (tp + fp))
        recalls.append(tp / n_positive)

    # 101-point interpolation: max precision at recall >= r
    ap = 0.0
    for i in range(101):
        r = i / 100.0
        p_at = 0.0
        for p, rr in zip(precisions, recalls):
            if rr >= r and p > p_at:
                p_at = p
        ap += p_at
    ap /= 101.0
    if return_pr:
        return ap, precisions, recalls
    return ap


def coco_ap(gt: list, det: list, area_bucket: str = None):
    """AP averaged over the COCO 0.5:0.95 IoU grid; None for empty buckets."""
    vals = []
    for t in AP_IOU_GRID:
        v = average_precision(gt, det, iou_threshold=t, area_bucket=area_bucket)
        if v is None:
            return None
        vals.append(v)
    return sum(vals) / len(vals)


def confidence_curve(det: list, thresholds) -> tuple:
    """Fraction of detections with confidence strictly above each threshold.

    Returns (fractions, empty_flag); all-zero with the flag set when there
    are no detections.
    """
    thresholds = list(thresholds)
    if any(b < a for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError("thresholds must be ascending")
    if not det:
        return [0.0] * len(thresholds), True
    confs = np.array([d.confidence for d in det])
    return [float((confs > t).mean()) for t in thresholds], False


def evaluate(gt: list, det: list, f1_thresholds=F1_THRESHOLDS,
             confidence_thresholds=None) -> EvalReport:
    """Full report: F1 curve, COCO AP family, PR arrays, confidence curve."""
    if confidence_thresholds is None:
        confidence_thresholds = [round(0.05 * i, 2) for i in range(20)]
    report = EvalReport()
    report.f1_by_threshold = f1_curve(gt, det, f1_thresholds)
    report.ap = coco_ap(gt, det)
    ap50, precisions, recalls = average_precision(gt, det, 0.5, return_pr=True)
    report.ap50 = ap50
    report.ap75 = average_precision(gt, det, 0.75)
    report.ap_small = coco_ap(gt, det, "small")
    report.ap_medium = coco_ap(gt, det, "medium")
    report.ap_large = coco_ap(gt, det, "large")
    report.precision = precisions
    report.recall = recalls
    fractions, empty = confidence_curve(det, confidence_thresholds)
    report.confidence_thresholds = list(confidence_thresholds)
    report.confidence_fractions = fractions
    report.empty_detections = empty
    return report


# ---------------------------------------------------------------------------
# file I/O

class DetectionFileError(ValueError):
    pass


def load_coco_ground_truth(path) -> list:
    """Ground-truth boxes from a COCO-layout file."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    out = []
    for i, ann in enumerate(data.get("annotations", [])):
        try:
            area = ann.get("area")
            out.append(GroundTruthBox(image_id=ann["image_id"],
                                      bbox=tuple(ann["bbox"]),
                                      area=float(area) if area is not None else None))
        except (KeyError, TypeError, ValueError) as exc:
            raise DetectionFileError(f"annotations[{i}]: {exc}") from exc
    return out


def load_detections(path) -> list:
    """COCO results-style detection list: image_id, bbox, score."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, list):
        raise DetectionFileError("detection file must be a JSON array")
    out = []
    for i, d in enumerate(data):
        try:
            out.append(Detection(image_id=d["image_id"], bbox=tuple(d["bbox"]),
                                 confidence=float(d["score"]),
                                 mask=d.get("segmentation")))
        except (KeyError, TypeError, ValueError) as exc:
            raise DetectionFileError(f"detections[{i}]: {exc}") from exc
    return out


def write_report(report: EvalReport, out_dir) -> dict:
    """Write report JSON plus the two plotting CSVs; returns paths."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    rpath = os.path.join(out_dir, "report.json")
    with open(rpath, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2)
    paths["report"] = rpath
    fpath = os.path.join(out_dir, "f1_curve.csv")
    with open(fpath, "w", encoding="utf-8") as fh:
        fh.write("iou_threshold,f1\n")
        for t, v in report.f1_by_threshold.items():
            fh.write(f"{t:g},{v:.6f}\n")
    paths["f1_curve"] = fpath
    cpath = os.path.join(out_dir, "confidence_curve.csv")
    with open(cpath, "w", encoding="utf-8") as fh:
        fh.write("threshold,fraction_above\n")
        for t, v in zip(report.confidence_thresholds, report.confidence_fractions):
            fh.write(f"{t:g},{v:.6f}\n")
    paths["confidence_curve"] = cpath
    return paths
