"""Matching pipeline: view aggregation, cross-class normalization, score blending,
and objectness-prior weighting."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import (
    AGGREGATIONS,
    ConfigurationError,
    DataError,
    Detection,
    Proposal,
    ScoreTensor,
    ScoringConfig,
    TemplateBank,
    TemplateView,
)
from .similarity import (
    PoolingKind,
    integrated_similarity,
    kernel_matrix,
    proposal_descriptor,
    view_cls_matrix,
    view_descriptor_matrix,
)


@dataclass(frozen=True)
class AggregationSpec:
    """How per-view similarities reduce to one score per class."""

    kind: str = "topk_mean"
    k: int = 5

    def __post_init__(self):
        if self.kind not in AGGREGATIONS:
            raise ConfigurationError(f"aggregation must be one of {AGGREGATIONS}, got {self.kind!r}")
        if not (isinstance(self.k, int) and self.k >= 1):
            raise ConfigurationError(f"aggregation K must be an integer >= 1, got {self.k!r}")


def _reduce_views(view_scores: np.ndarray, agg: AggregationSpec) -> np.ndarray:
    """Reduce a (P, V) per-view score block to (P,).

    Scores are sorted per row first so the reduction is invariant to view
    order; K is clamped to the view count.
    """
    ordered = np.sort(view_scores, axis=1)
    if agg.kind == "max":
        return ordered[:, -1]
    if agg.kind == "mean":
        return ordered.mean(axis=1)
    k = min(agg.k, ordered.shape[1])
    return ordered[:, ordered.shape[1] - k :].mean(axis=1)


def aggregate_class_score(
    proposal: Proposal,
    views: Sequence[TemplateView],
    cfg: ScoringConfig,
    agg: AggregationSpec,
) -> float:
    """Integrated similarity against every view of one class, reduced per ``agg``."""
    views = tuple(views)
    if not views:
        raise ConfigurationError("cannot aggregate over an empty view list")
    scores = np.array([integrated_similarity(proposal, v, cfg) for v in views], dtype=np.float64)
    return float(_reduce_views(scores[None, :], agg)[0])


def _proposal_matrices(
    proposals: Sequence[Proposal], cfg: ScoringConfig, dim: int
) -> tuple[np.ndarray, Optional[np.ndarray]]:
    cls_rows = []
    desc_rows = []
    pool = PoolingKind.from_config(cfg)
    need_patch = cfg.alpha < 1.0
    for p in proposals:
        if p.cls_embedding.shape[0] != dim:
            raise DataError(
                "dim-mismatch",
                f"proposal {p.proposal_id} has dim {p.cls_embedding.shape[0]}, bank dim is {dim}",
            )
        cls_rows.append(np.asarray(p.cls_embedding, dtype=np.float64))
        if need_patch:
            try:
                desc = proposal_descriptor(p, pool)
            except DataError as exc:
                raise DataError(exc.code, f"proposal {p.proposal_id}: {exc}") from None
            if desc.shape[0] != dim:
                raise DataError(
                    "dim-mismatch",
                    f"proposal {p.proposal_id} patch data has dim {desc.shape[0]}, bank dim is {dim}",
                )
            desc_rows.append(desc)
    cls_mat = np.stack(cls_rows) if cls_rows else np.zeros((0, dim))
    desc_mat = None
    if need_patch:
        desc_mat = np.stack(desc_rows) if desc_rows else np.zeros((0, dim))
    return cls_mat, desc_mat


def _reject_zero_rows(mat: np.ndarray, labels: Sequence[str], what: str) -> None:
    norms = np.einsum("ij,ij->i", mat, mat)
    bad = np.nonzero(norms == 0.0)[0]
    if bad.size:
        raise DataError("degenerate", f"{what} {labels[int(bad[0])]} is an all-zero embedding")


def absolute_matrix(
    proposals: Sequence[Proposal],
    bank: TemplateBank,
    cfg: ScoringConfig,
    agg: AggregationSpec,
) -> ScoreTensor:
    """Per-class aggregated integrated similarity for every proposal.

    Entry (p, c) is the ``agg`` reduction over class c's views of the
    integrated similarity between proposal p and each view.
    """
    if bank.n_classes == 0:
        raise ConfigurationError("bank has no classes")
    proposals = tuple(proposals)
    dim = bank.dim
    pool = PoolingKind.from_config(cfg)
    pids = [p.proposal_id for p in proposals]

    cls_mat, desc_mat = _proposal_matrices(proposals, cfg, dim)
    if len(proposals):
        _reject_zero_rows(cls_mat, pids, "proposal")
        if desc_mat is not None:
            _reject_zero_rows(desc_mat, pids, "proposal")

    columns = []
    for ci, cls in enumerate(bank.classes):
        if not cls.views:
            raise ConfigurationError(f"class {cls.class_id} has no views")
        t_cls = view_cls_matrix(bank, ci)
        if t_cls.shape[1] != dim:
            raise DataError(
                "dim-mismatch",
                f"class {cls.class_id} cls embeddings have dim {t_cls.shape[1]}, bank dim is {dim}",
            )
        view_labels = [f"{cls.class_id}/view[{vi}]" for vi in range(len(cls.views))]
        _reject_zero_rows(t_cls, view_labels, "template")
        if len(proposals) == 0:
            columns.append(np.zeros((0,)))
            continue
        sims = kernel_matrix(cfg.metric, cls_mat, t_cls)
        if cfg.alpha < 1.0:
            t_desc = view_descriptor_matrix(bank, ci, pool)
            _reject_zero_rows(t_desc, view_labels, "template")
            patch_sims = kernel_matrix(cfg.metric, desc_mat, t_desc)
            sims = cfg.alpha * sims + (1.0 - cfg.alpha) * patch_sims
        columns.append(_reduce_views(sims, agg))

    values = np.stack(columns, axis=1) if proposals else np.zeros((0, bank.n_classes))
    return ScoreTensor("abs", values, tuple(pids), bank.class_ids)


def relative_matrix(abs_tensor: ScoreTensor, tau: float) -> ScoreTensor:
    """Row-wise temperature softmax of absolute scores across classes.

    Computed with row-max subtraction, which leaves the result unchanged
    (softmax is shift-invariant) but keeps exp() in range at small
    temperatures.
    """
    if not (isinstance(tau, (int, float)) and math.isfinite(float(tau)) and tau > 0):
        raise ConfigurationError(f"tau must be a finite number > 0, got {tau!r}")
    if len(abs_tensor.class_ids) == 0:
        raise ConfigurationError("cannot normalize over zero classes")
    vals = abs_tensor.values
    if not np.isfinite(vals).all():
        raise DataError("non-finite", "absolute scores contain non-finite entries")
    z = vals / float(tau)
    if z.shape[0]:
        z = z - z.max(axis=1, keepdims=True)
    ez = np.exp(z)
    rel = ez / ez.sum(axis=1, keepdims=True)
    return ScoreTensor("rel", rel, abs_tensor.proposal_ids, abs_tensor.class_ids)


def _check_aligned(a: ScoreTensor, b: ScoreTensor) -> None:
    if a.proposal_ids != b.proposal_ids or a.class_ids != b.class_ids:
        raise ConfigurationError("score tensors have mismatched proposal or class labels")


def joint_matrix(abs_tensor: ScoreTensor, rel_tensor: ScoreTensor, beta: float) -> ScoreTensor:
    """Element-wise blend beta * absolute + (1 - beta) * relative."""
    if not (isinstance(beta, (int, float)) and 0.0 <= float(beta) <= 1.0):
        raise ConfigurationError(f"beta must be in [0, 1], got {beta!r}")
    _check_aligned(abs_tensor, rel_tensor)
    beta = float(beta)
    values = beta * abs_tensor.values + (1.0 - beta) * rel_tensor.values
    return ScoreTensor("joint", values, abs_tensor.proposal_ids, abs_tensor.class_ids)


def scaled_prior(objectness: float, gamma: float) -> float:
    """Objectness confidence raised to gamma; boosts small confidences toward 1."""
    if not (isinstance(gamma, (int, float)) and 0.0 < float(gamma) <= 1.0):
        raise ConfigurationError(f"gamma must be in (0, 1], got {gamma!r}")
    conf = float(objectness)
    if not (math.isfinite(conf) and 0.0 <= conf <= 1.0):
        raise DataError("bad-objectness", f"objectness must be in [0, 1], got {objectness!r}")
    return conf ** float(gamma)


def final_matrix(
    joint_tensor: ScoreTensor, proposals: Sequence[Proposal], gamma: float
) -> ScoreTensor:
    """Joint scores weighted per row by the scaled objectness prior (unnormalized)."""
    proposals = tuple(proposals)
    if len(proposals) != len(joint_tensor.proposal_ids):
        raise ConfigurationError(
            f"joint tensor has {len(joint_tensor.proposal_ids)} rows, got {len(proposals)} proposals"
        )
    if tuple(p.proposal_id for p in proposals) != joint_tensor.proposal_ids:
        raise ConfigurationError("proposal order does not match the joint tensor rows")
    prior = np.array([scaled_prior(p.objectness, gamma) for p in proposals], dtype=np.float64)
    values = joint_tensor.values * prior[:, None]
    return ScoreTensor("final", values, joint_tensor.proposal_ids, joint_tensor.class_ids)


def row_argmax(values: np.ndarray) -> np.ndarray:
    """Per-row argmax with ties broken toward the lowest class index."""
    return np.argmax(values, axis=1)


@dataclass(frozen=True, eq=False)
class MatchResult:
    """All four pipeline stages plus the emitted detections."""

    absolute: ScoreTensor
    relative: ScoreTensor
    joint: ScoreTensor
    final: ScoreTensor
    detections: tuple[Detection, ...]

    @property
    def stages(self) -> dict[str, ScoreTensor]:
        return {
            "abs": self.absolute,
            "rel": self.relative,
            "joint": self.joint,
            "final": self.final,
        }


def match(
    proposals: Sequence[Proposal],
    bank: TemplateBank,
    cfg: ScoringConfig,
    agg: Optional[AggregationSpec] = None,
) -> MatchResult:
    """Run the full pipeline and emit one detection per (proposal, class) pair.

    Detections at or above ``cfg.score_floor`` (all pairs when no floor is
    set) carry the proposal's bbox and mask, sorted by (image_id,
    proposal_id, class_id) so output is deterministic regardless of input
    or worker order.
    """
    proposals = tuple(proposals)
    if agg is None:
        agg = AggregationSpec("topk_mean", cfg.top_k)
    abs_t = absolute_matrix(proposals, bank, cfg, agg)
    rel_t = relative_matrix(abs_t, cfg.tau)
    joint_t = joint_matrix(abs_t, rel_t, cfg.beta)
    final_t = final_matrix(joint_t, proposals, cfg.gamma)

    floor = cfg.score_floor
    detections = []
    for pi, p in enumerate(proposals):
        row = final_t.values[pi]
        for ci, class_id in enumerate(final_t.class_ids):
            score = float(row[ci])
            if floor is not None and score < floor:
                continue
            detections.append(
                Detection(
                    image_id=p.image_id,
                    proposal_id=p.proposal_id,
                    class_id=class_id,
                    score=score,
                    bbox=p.bbox,
                    mask=p.mask,
                )
            )
    detections.sort(key=lambda d: (d.image_id, d.proposal_id, d.class_id))
    return MatchResult(abs_t, rel_t, joint_t, final_t, tuple(detections))
