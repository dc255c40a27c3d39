"""Deterministic synthetic embedding worlds for desk-scale benchmarking.

Worlds are built from random unit-norm class prototypes: template views and
true-object proposals are Gaussian perturbations of a prototype, hard
negatives blend a proposal's own prototype toward a wrong one, and clutter
proposals are fresh random vectors with no ground truth.  Ground-truth boxes
sit on a non-overlapping grid so detection AP isolates scoring quality from
localization quality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np

from .core import (
    ConfigurationError,
    Proposal,
    ScoringConfig,
    TemplateBank,
    TemplateClass,
    TemplateView,
    default_config,
)
from .evaluation import GroundTruthInstance, GroundTruthSet, evaluate
from .scoring import AggregationSpec, match

OBJECTNESS_MODELS = ("informative", "constant")

_CELL = 100.0
_BOX = 64.0


@dataclass(frozen=True)
class WorldSpec:
    """Parameters of a synthetic world; identical specs generate identical worlds."""

    seed: int = 0
    d: int = 64
    n_classes: int = 8
    views_per_class: int = 42
    n_images: int = 20
    proposals_per_image: int = 12
    tokens_per_view: int = 4
    view_noise: float = 0.05
    proposal_noise: float = 0.45
    hard_negative_rate: float = 0.2
    blend_factor: float = 0.45
    clutter_rate: float = 0.2
    objectness_model: str = "informative"

    def __post_init__(self):
        def fail(msg):
            raise ConfigurationError(msg)

        for name in ("d", "n_classes", "views_per_class", "n_images", "proposals_per_image", "tokens_per_view"):
            v = getattr(self, name)
            if not (isinstance(v, int) and v >= 1):
                fail(f"{name} must be an integer >= 1, got {v!r}")
        if self.n_classes < 2:
            fail(f"n_classes must be >= 2, got {self.n_classes}")
        for name in ("view_noise", "proposal_noise"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v >= 0):
                fail(f"{name} must be a number >= 0, got {v!r}")
        for name in ("hard_negative_rate", "clutter_rate"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and 0.0 <= v <= 1.0):
                fail(f"{name} must be in [0, 1], got {v!r}")
        if not (isinstance(self.blend_factor, (int, float)) and 0.0 < self.blend_factor < 1.0):
            fail(f"blend_factor must be in (0, 1), got {self.blend_factor!r}")
        if self.objectness_model not in OBJECTNESS_MODELS:
            fail(f"objectness_model must be one of {OBJECTNESS_MODELS}, got {self.objectness_model!r}")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "d": self.d,
            "n_classes": self.n_classes,
            "views_per_class": self.views_per_class,
            "n_images": self.n_images,
            "proposals_per_image": self.proposals_per_image,
            "tokens_per_view": self.tokens_per_view,
            "view_noise": self.view_noise,
            "proposal_noise": self.proposal_noise,
            "hard_negative_rate": self.hard_negative_rate,
            "blend_factor": self.blend_factor,
            "clutter_rate": self.clutter_rate,
            "objectness_model": self.objectness_model,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "WorldSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise ConfigurationError(f"unknown world spec fields: {sorted(unknown)}")
        return cls(**obj)


@dataclass(frozen=True, eq=False)
class SyntheticWorld:
    spec: WorldSpec
    bank: TemplateBank
    proposals: tuple[Proposal, ...]
    gt: GroundTruthSet
    prototypes: np.ndarray

    @property
    def image_ids(self) -> tuple[str, ...]:
        return self.gt.images

    def proposals_for(self, image_id: str) -> tuple[Proposal, ...]:
        return tuple(p for p in self.proposals if p.image_id == image_id)


def _grid_bbox(slot: int) -> tuple[float, float, float, float]:
    cols = 8
    row, col = divmod(slot, cols)
    pad = (_CELL - _BOX) / 2.0
    return (col * _CELL + pad, row * _CELL + pad, _BOX, _BOX)


def _objectness(rng: np.random.Generator, model: str, is_object: bool) -> float:
    if model == "constant":
        return 0.5
    if is_object:
        return float(np.clip(rng.normal(0.85, 0.08), 0.05, 1.0))
    return float(np.clip(rng.normal(0.30, 0.12), 0.0, 0.90))


def generate_world(spec: WorldSpec) -> SyntheticWorld:
    """Build a bank plus per-image proposals and ground truth, deterministically per seed."""
    rng = np.random.default_rng(spec.seed)
    protos = rng.standard_normal((spec.n_classes, spec.d))
    protos /= np.linalg.norm(protos, axis=1, keepdims=True)

    classes = []
    for ci in range(spec.n_classes):
        views = []
        for _ in range(spec.views_per_class):
            cls_vec = protos[ci] + spec.view_noise * rng.standard_normal(spec.d)
            tokens = protos[ci][None, :] + spec.view_noise * rng.standard_normal(
                (spec.tokens_per_view, spec.d)
            )
            views.append(TemplateView(cls_embedding=cls_vec, patch_tokens=tokens))
        classes.append(TemplateClass(class_id=f"obj{ci}", views=tuple(views)))
    bank = TemplateBank(classes=tuple(classes), dim=spec.d, pooled=False)

    proposals = []
    gt_instances = []
    image_ids = []
    for ii in range(spec.n_images):
        image_id = f"img{ii:04d}"
        image_ids.append(image_id)
        for si in range(spec.proposals_per_image):
            bbox = _grid_bbox(si)
            pid = f"{image_id}/p{si:03d}"
            is_clutter = rng.random() < spec.clutter_rate
            if is_clutter:
                base = rng.standard_normal(spec.d)
                base /= np.linalg.norm(base)
            else:
                ci = int(rng.integers(spec.n_classes))
                if rng.random() < spec.hard_negative_rate:
                    other = int((ci + 1 + rng.integers(spec.n_classes - 1)) % spec.n_classes)
                    base = (1.0 - spec.blend_factor) * protos[ci] + spec.blend_factor * protos[other]
                else:
                    base = protos[ci]
                gt_instances.append(
                    GroundTruthInstance(image_id=image_id, class_id=f"obj{ci}", bbox=bbox)
                )
            cls_vec = base + spec.proposal_noise * rng.standard_normal(spec.d)
            tokens = base[None, :] + spec.proposal_noise * rng.standard_normal(
                (spec.tokens_per_view, spec.d)
            )
            proposals.append(
                Proposal(
                    proposal_id=pid,
                    image_id=image_id,
                    bbox=bbox,
                    objectness=_objectness(rng, spec.objectness_model, not is_clutter),
                    cls_embedding=cls_vec,
                    patch_tokens=tokens,
                )
            )

    gt = GroundTruthSet(
        instances=tuple(gt_instances),
        images=tuple(image_ids),
        class_ids=bank.class_ids,
    )
    protos.setflags(write=False)
    return SyntheticWorld(
        spec=spec, bank=bank, proposals=tuple(proposals), gt=gt, prototypes=protos
    )


def strip_prior(proposals: Sequence[Proposal]) -> tuple[Proposal, ...]:
    """Clone proposals with objectness forced to 1, making the prior a no-op."""
    return tuple(replace(p, objectness=1.0) for p in proposals)


@dataclass(frozen=True)
class AblationVariant:
    """A named scoring configuration; ``use_prior=False`` neutralizes the
    objectness prior (equivalent to a prior identically equal to one)."""

    name: str
    config: ScoringConfig
    use_prior: bool = True


@dataclass(frozen=True)
class AblationRow:
    name: str
    mean_ap: float


def ladder_variants(base: Optional[ScoringConfig] = None) -> tuple[AblationVariant, ...]:
    """The standard ablation ladder: each row enables one more scoring feature."""
    base = base or default_config()
    return (
        AblationVariant("baseline (cosine, cls only)", replace(base, metric="cosine", alpha=1.0, beta=1.0), False),
        AblationVariant("+ tanimoto kernel", replace(base, metric="tanimoto", alpha=1.0, beta=1.0), False),
        AblationVariant("+ pooled patch integration", replace(base, beta=1.0), False),
        AblationVariant("+ joint score", base, False),
        AblationVariant("+ objectness prior", base, True),
    )


def pooling_variants(base: Optional[ScoringConfig] = None) -> tuple[AblationVariant, ...]:
    """Pooling-strategy comparison rows (cls / patch / mean / max / gem)."""
    base = base or default_config()
    flat = replace(base, beta=1.0)
    return (
        AblationVariant("cls only", replace(flat, alpha=1.0), False),
        AblationVariant("patch only (gem)", replace(flat, alpha=0.0), False),
        AblationVariant("cls + patch (mean)", replace(flat, pooling="mean"), False),
        AblationVariant("cls + patch (max)", replace(flat, pooling="max"), False),
        AblationVariant("cls + patch (gem)", flat, False),
    )


def world_map(
    world: SyntheticWorld,
    cfg: ScoringConfig,
    use_prior: bool = True,
    agg: Optional[AggregationSpec] = None,
) -> float:
    """Mean AP of one configuration on one world (bbox mode)."""
    proposals = world.proposals if use_prior else strip_prior(world.proposals)
    result = match(proposals, world.bank, cfg, agg)
    return evaluate(result.detections, world.gt, mode="bbox").mean_ap


def run_ablation_suite(
    world: Union[WorldSpec, SyntheticWorld],
    variants: Sequence[AblationVariant],
) -> list[AblationRow]:
    """Evaluate every variant on the same world; one (name, mean AP) row each."""
    if isinstance(world, WorldSpec):
        world = generate_world(world)
    return [
        AblationRow(v.name, world_map(world, v.config, use_prior=v.use_prior)) for v in variants
    ]


def export_world(world: SyntheticWorld, out_dir) -> dict:
    """Write a world in the engine's wire formats; returns the file paths.

    Layout: bank/ (MEB v1), proposals.jsonl, gt.json, world.json.
    """
    from pathlib import Path

    from .storage import _canonical_json, save_bank, save_ground_truth, save_proposals

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_bank(world.bank, out / "bank")
    save_proposals(world.proposals, out / "proposals.jsonl")
    save_ground_truth(world.gt, out / "gt.json")
    (out / "world.json").write_text(_canonical_json(world.spec.to_dict()))
    return {
        "bank": str(out / "bank"),
        "proposals": str(out / "proposals.jsonl"),
        "gt": str(out / "gt.json"),
        "spec": str(out / "world.json"),
    }
