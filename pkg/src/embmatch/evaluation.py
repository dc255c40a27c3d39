"""Detection evaluation: greedy IoU matching and AP averaged over IoU
thresholds 0.50 to 0.95 in steps of 0.05."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import rle
from .core import DataError, Detection, RleMask, _bbox_tuple

IOU_THRESHOLDS: tuple[float, ...] = tuple(np.linspace(0.50, 0.95, 10).tolist())
_RECALL_GRID = np.linspace(0.0, 1.0, 101)


@dataclass(frozen=True, eq=False)
class GroundTruthInstance:
    image_id: str
    class_id: str
    bbox: tuple[float, float, float, float]
    mask: Optional[RleMask] = None
    ignore: bool = False

    def __post_init__(self):
        object.__setattr__(self, "bbox", _bbox_tuple(self.bbox, "ground-truth bbox"))
        object.__setattr__(self, "ignore", bool(self.ignore))


@dataclass(frozen=True, eq=False)
class GroundTruthSet:
    """Ground-truth annotations plus the image and class universe of the run.

    ``images`` must list every evaluated image, including images with no
    annotations, so that detections on annotation-free images are scored as
    false positives instead of rejected.  ``class_ids`` optionally pins the
    known class list; when absent it is derived from the annotations.
    """

    instances: tuple[GroundTruthInstance, ...]
    images: tuple[str, ...]
    class_ids: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))
        object.__setattr__(self, "images", tuple(self.images))
        if self.class_ids is not None:
            object.__setattr__(self, "class_ids", tuple(self.class_ids))
        missing = {g.image_id for g in self.instances} - set(self.images)
        if missing:
            raise DataError(
                "unknown-image",
                f"annotations reference images not in the image list: {sorted(missing)}",
            )

    @classmethod
    def build(
        cls,
        instances: Sequence[GroundTruthInstance],
        images: Optional[Sequence[str]] = None,
        class_ids: Optional[Sequence[str]] = None,
    ) -> "GroundTruthSet":
        instances = tuple(instances)
        if images is None:
            images = sorted({g.image_id for g in instances})
        return cls(instances, tuple(images), tuple(class_ids) if class_ids is not None else None)


@dataclass(frozen=True, eq=False)
class EvalReport:
    class_ids: tuple[str, ...]
    iou_thresholds: tuple[float, ...]
    ap_per_class_per_iou: np.ndarray
    ap_per_class: np.ndarray
    mean_ap: float
    gt_counts: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "class_ids": list(self.class_ids),
            "iou_thresholds": list(self.iou_thresholds),
            "ap_per_class_per_iou": [[float(v) for v in row] for row in self.ap_per_class_per_iou],
            "ap_per_class": [float(v) for v in self.ap_per_class],
            "map": float(self.mean_ap),
            "gt_counts": dict(self.gt_counts),
        }


def iou_bbox(a, b) -> float:
    """Intersection over union of two (x, y, w, h) boxes."""
    ax, ay, aw, ah = _bbox_tuple(a, "bbox")
    bx, by, bw, bh = _bbox_tuple(b, "bbox")
    ix = max(0.0, min(ax + aw, bx + bw) - max(ax, bx))
    iy = max(0.0, min(ay + ah, by + bh) - max(ay, by))
    inter = ix * iy
    union = aw * ah + bw * bh - inter
    return inter / union


def iou_mask(a: RleMask, b: RleMask) -> float:
    """Pixel-count intersection over union of two masks on the same canvas."""
    if a.size != b.size:
        raise DataError("canvas-mismatch", f"mask canvases differ: {a.size} vs {b.size}")
    bm_a = rle.decode(a)
    bm_b = rle.decode(b)
    inter = int(np.logical_and(bm_a, bm_b).sum())
    union = int(np.logical_or(bm_a, bm_b).sum())
    if union == 0:
        return 0.0
    return inter / union


def _pair_iou(det: Detection, gt: GroundTruthInstance, mode: str) -> float:
    if mode == "bbox":
        return iou_bbox(det.bbox, gt.bbox)
    if det.mask is None:
        raise DataError("missing-mask", f"detection {det.proposal_id} has no mask in mask mode")
    if gt.mask is None:
        raise DataError("missing-mask", f"a ground-truth instance on {gt.image_id} has no mask")
    return iou_mask(det.mask, gt.mask)


def _greedy_labels(
    iou: np.ndarray, gt_ignore: np.ndarray, threshold: float
) -> list[Optional[bool]]:
    """Greedy matching for one image and class; rows already in score order.

    Returns one label per detection row: True for a match (TP), False for a
    miss (FP), None when the detection only overlaps ignored GT and drops out
    of the precision-recall sequence.  Equal-IoU candidates resolve toward
    the earliest GT index.
    """
    taken = np.zeros(iou.shape[1], dtype=bool)
    labels: list[Optional[bool]] = []
    for di in range(iou.shape[0]):
        best_gi = -1
        best_iou = -1.0
        for gi in range(iou.shape[1]):
            if taken[gi] or gt_ignore[gi]:
                continue
            v = iou[di, gi]
            if v >= threshold and v > best_iou:
                best_gi = gi
                best_iou = v
        if best_gi >= 0:
            taken[best_gi] = True
            labels.append(True)
        elif any(
            gt_ignore[gi] and iou[di, gi] >= threshold for gi in range(iou.shape[1])
        ):
            labels.append(None)
        else:
            labels.append(False)
    return labels


def _ap_from_labels(labels: Sequence[bool], npos: int) -> float:
    """Area under the monotone-interpolated PR curve on the 101-point recall grid."""
    if npos == 0 or len(labels) == 0:
        return 0.0
    flags = np.asarray(labels, dtype=bool)
    tp = np.cumsum(flags)
    fp = np.cumsum(~flags)
    recall = tp / npos
    precision = tp / (tp + fp)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, _RECALL_GRID, side="left")
    sampled = np.zeros_like(_RECALL_GRID)
    within = idx < len(envelope)
    sampled[within] = envelope[idx[within]]
    return float(sampled.mean())


def evaluate(
    detections: Sequence[Detection],
    gt: GroundTruthSet,
    mode: str = "bbox",
    max_detections: Optional[int] = None,
) -> EvalReport:
    """Score detections against ground truth.

    Per class and per IoU threshold, detections greedily match (in descending
    score order, ties by proposal_id) the available same-image GT with the
    highest IoU at or above the threshold; each GT matches at most once.  AP
    integrates the monotone-interpolated PR curve on a 101-point recall grid;
    the mean AP averages classes with at least one non-ignored GT instance.
    ``max_detections`` optionally caps detections per image (by score) before
    matching; the default is no cap.
    """
    if mode not in ("bbox", "mask"):
        raise DataError("bad-mode", f"mode must be 'bbox' or 'mask', got {mode!r}")
    detections = list(detections)

    if gt.class_ids is not None:
        class_ids = tuple(gt.class_ids)
        known = set(class_ids)
        for d in detections:
            if d.class_id not in known:
                raise DataError("unknown-class", f"detection references unknown class {d.class_id!r}")
    else:
        class_ids = tuple(
            sorted({g.class_id for g in gt.instances} | {d.class_id for d in detections})
        )

    image_set = set(gt.images)
    for d in detections:
        if d.image_id not in image_set:
            raise DataError("unknown-image", f"detection references unknown image {d.image_id!r}")

    if max_detections is not None:
        by_image: dict[str, list[Detection]] = {}
        for d in detections:
            by_image.setdefault(d.image_id, []).append(d)
        detections = []
        for img in sorted(by_image):
            dets = sorted(by_image[img], key=lambda d: (-d.score, d.proposal_id, d.class_id))
            detections.extend(dets[:max_detections])

    ap_matrix = np.zeros((len(class_ids), len(IOU_THRESHOLDS)))
    gt_counts: dict[str, int] = {}

    for ci, class_id in enumerate(class_ids):
        class_gt: dict[str, list[GroundTruthInstance]] = {}
        npos = 0
        for g in gt.instances:
            if g.class_id == class_id:
                class_gt.setdefault(g.image_id, []).append(g)
                if not g.ignore:
                    npos += 1
        gt_counts[class_id] = npos

        class_dets = sorted(
            (d for d in detections if d.class_id == class_id),
            key=lambda d: (-d.score, d.proposal_id),
        )

        # One IoU/ignore block per image; detection rows keep their global rank.
        blocks: dict[str, tuple[list[int], np.ndarray, np.ndarray]] = {}
        for rank, d in enumerate(class_dets):
            img = d.image_id
            if img not in blocks:
                gts = class_gt.get(img, [])
                blocks[img] = (
                    [],
                    np.zeros((0, len(gts))),
                    np.array([g.ignore for g in gts], dtype=bool),
                )
            blocks[img][0].append(rank)
        for img in blocks:
            ranks, _, ign = blocks[img]
            gts = class_gt.get(img, [])
            mat = np.zeros((len(ranks), len(gts)))
            for li, rank in enumerate(ranks):
                for gi, g in enumerate(gts):
                    mat[li, gi] = _pair_iou(class_dets[rank], g, mode)
            blocks[img] = (ranks, mat, ign)

        for ti, threshold in enumerate(IOU_THRESHOLDS):
            labels_by_rank: dict[int, Optional[bool]] = {}
            for ranks, mat, ign in blocks.values():
                labels = _greedy_labels(mat, ign, threshold)
                for local_i, rank in enumerate(ranks):
                    labels_by_rank[rank] = labels[local_i]
            sequence = [
                labels_by_rank[rank]
                for rank in range(len(class_dets))
                if labels_by_rank[rank] is not None
            ]
            ap_matrix[ci, ti] = _ap_from_labels(sequence, npos)

    ap_per_class = ap_matrix.mean(axis=1) if len(class_ids) else np.zeros((0,))
    scored = [ci for ci, c in enumerate(class_ids) if gt_counts[c] > 0]
    mean_ap = float(np.mean([ap_per_class[ci] for ci in scored])) if scored else 0.0
    return EvalReport(
        class_ids=class_ids,
        iou_thresholds=IOU_THRESHOLDS,
        ap_per_class_per_iou=ap_matrix,
        ap_per_class=ap_per_class,
        mean_ap=mean_ap,
        gt_counts=gt_counts,
    )
