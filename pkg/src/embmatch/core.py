"""Domain types, configuration, and validation shared by the matching engine."""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

METRICS = ("tanimoto", "cosine")
POOLINGS = ("gem", "mean", "max")
AGGREGATIONS = ("topk_mean", "max", "mean")
STAGES = ("abs", "rel", "joint", "final")

# Tolerance for the row-stochasticity check on relative-stage tensors.
REL_ROW_SUM_TOL = 1e-6


class EngineError(Exception):
    """Base class for every error this package raises on purpose."""


class ConfigurationError(EngineError):
    """Invalid hyperparameters, flags, or structurally unusable call arguments."""


class DataError(EngineError):
    """Bad data content (non-finite values, dimension mismatches, broken files).

    ``code`` is a stable machine-readable identifier such as ``"non-finite"``,
    ``"dim-mismatch"``, ``"degenerate"``, ``"missing-blob"`` or ``"blob-length"``.
    """

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _f32_vector(values, what: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float32)
    if arr.ndim != 1 or arr.size == 0:
        raise DataError("bad-shape", f"{what} must be a non-empty 1-D vector, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def _f32_matrix(values, what: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float32)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DataError("bad-shape", f"{what} must be a non-empty 2-D matrix, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def _bbox_tuple(bbox, what: str) -> tuple[float, float, float, float]:
    vals = tuple(float(v) for v in bbox)
    if len(vals) != 4:
        raise DataError("bad-bbox", f"{what} must be (x, y, w, h), got {len(vals)} values")
    if not all(math.isfinite(v) for v in vals):
        raise DataError("bad-bbox", f"{what} contains non-finite values: {vals}")
    if vals[2] <= 0 or vals[3] <= 0:
        raise DataError("bad-bbox", f"{what} must have positive width and height, got {vals}")
    return vals


@dataclass(frozen=True)
class RleMask:
    """Run-length encoded binary mask on an image canvas of ``size`` (height, width)."""

    size: tuple[int, int]
    counts: str

    def __post_init__(self):
        h, w = (int(self.size[0]), int(self.size[1]))
        if h < 1 or w < 1:
            raise DataError("bad-mask", f"mask canvas must be positive, got {self.size}")
        object.__setattr__(self, "size", (h, w))


@dataclass(frozen=True, eq=False)
class TemplateView:
    """One template viewpoint: a class embedding plus either a compressed
    patch descriptor or the raw patch-token matrix."""

    cls_embedding: np.ndarray
    patch_descriptor: Optional[np.ndarray] = None
    patch_tokens: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "cls_embedding", _f32_vector(self.cls_embedding, "cls_embedding"))
        if (self.patch_descriptor is None) == (self.patch_tokens is None):
            raise ConfigurationError(
                "a template view needs exactly one of patch_descriptor or patch_tokens"
            )
        if self.patch_descriptor is not None:
            object.__setattr__(
                self, "patch_descriptor", _f32_vector(self.patch_descriptor, "patch_descriptor")
            )
        else:
            object.__setattr__(self, "patch_tokens", _f32_matrix(self.patch_tokens, "patch_tokens"))

    @property
    def pooled(self) -> bool:
        return self.patch_descriptor is not None


@dataclass(frozen=True, eq=False)
class TemplateClass:
    class_id: str
    views: tuple[TemplateView, ...]

    def __post_init__(self):
        object.__setattr__(self, "views", tuple(self.views))


@dataclass(frozen=True, eq=False)
class TemplateBank:
    """Immutable per-class, per-view template embeddings.

    ``pooled`` records whether patch tokens were compressed into descriptors
    at build time, with the exponent used recorded in ``pooled_exponent``.
    Construction only normalizes structure; content invariants are checked by
    :func:`validate_bank` so that broken banks loaded from storage can still
    be inspected.
    """

    classes: tuple[TemplateClass, ...]
    dim: int
    pooled: bool
    pooled_exponent: Optional[float] = None
    metric_hint: Optional[str] = None
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)
    _cache_lock: threading.Lock = field(
        default_factory=threading.Lock, init=False, repr=False, compare=False
    )

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        object.__setattr__(self, "dim", int(self.dim))

    @property
    def class_ids(self) -> tuple[str, ...]:
        return tuple(c.class_id for c in self.classes)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def cached(self, key, compute):
        """Return the cached value for ``key``, computing and inserting it once.

        Values must be pure functions of the immutable bank, so a lost race
        just recomputes an identical value; the lock makes insertion atomic.
        """
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        value = compute()
        with self._cache_lock:
            return self._cache.setdefault(key, value)


@dataclass(frozen=True, eq=False)
class Proposal:
    """A candidate object region with its embeddings and detector confidence."""

    proposal_id: str
    image_id: str
    bbox: tuple[float, float, float, float]
    objectness: float
    cls_embedding: np.ndarray
    patch_descriptor: Optional[np.ndarray] = None
    patch_tokens: Optional[np.ndarray] = None
    mask: Optional[RleMask] = None

    def __post_init__(self):
        object.__setattr__(self, "bbox", _bbox_tuple(self.bbox, f"proposal {self.proposal_id} bbox"))
        conf = float(self.objectness)
        if not (0.0 <= conf <= 1.0):
            raise DataError(
                "bad-objectness",
                f"proposal {self.proposal_id} objectness must be in [0, 1], got {conf}",
            )
        object.__setattr__(self, "objectness", conf)
        object.__setattr__(self, "cls_embedding", _f32_vector(self.cls_embedding, "cls_embedding"))
        if (self.patch_descriptor is None) == (self.patch_tokens is None):
            raise ConfigurationError(
                f"proposal {self.proposal_id} needs exactly one of patch_descriptor or patch_tokens"
            )
        if self.patch_descriptor is not None:
            object.__setattr__(
                self, "patch_descriptor", _f32_vector(self.patch_descriptor, "patch_descriptor")
            )
        else:
            object.__setattr__(self, "patch_tokens", _f32_matrix(self.patch_tokens, "patch_tokens"))

    @property
    def pooled(self) -> bool:
        return self.patch_descriptor is not None


@dataclass(frozen=True)
class ScoringConfig:
    """Scalar hyperparameters of the scoring pipeline.

    ``e`` is the generalized-mean pooling exponent, ``alpha`` blends class
    against patch similarity, ``tau`` is the softmax temperature, ``beta``
    blends absolute against relative scores, and ``gamma`` rescales the
    objectness prior.  ``pooling`` selects the patch-token reduction used for
    raw representations (``gem`` is the default; ``mean``/``max`` exist for
    ablations).
    """

    e: float = 1.5
    alpha: float = 0.5
    beta: float = 0.8
    tau: float = 0.02
    gamma: float = 0.1
    top_k: int = 5
    metric: str = "tanimoto"
    score_floor: Optional[float] = None
    pooling: str = "gem"

    def __post_init__(self):
        def fail(msg):
            raise ConfigurationError(msg)

        for name in ("e", "alpha", "beta", "tau", "gamma"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(float(v))):
                fail(f"{name} must be a finite number, got {v!r}")
            object.__setattr__(self, name, float(v))
        if self.e <= 0:
            fail(f"e must be > 0, got {self.e}")
        if not 0.0 <= self.alpha <= 1.0:
            fail(f"alpha must be in [0, 1], got {self.alpha}")
        if not 0.0 <= self.beta <= 1.0:
            fail(f"beta must be in [0, 1], got {self.beta}")
        if self.tau <= 0:
            fail(f"tau must be > 0, got {self.tau}")
        if not 0.0 < self.gamma <= 1.0:
            fail(f"gamma must be in (0, 1], got {self.gamma}")
        if not (isinstance(self.top_k, int) and self.top_k >= 1):
            fail(f"top_k must be an integer >= 1, got {self.top_k!r}")
        if self.metric not in METRICS:
            fail(f"metric must be one of {METRICS}, got {self.metric!r}")
        if self.pooling not in POOLINGS:
            fail(f"pooling must be one of {POOLINGS}, got {self.pooling!r}")
        if self.score_floor is not None:
            if not math.isfinite(float(self.score_floor)):
                fail(f"score_floor must be finite, got {self.score_floor!r}")
            object.__setattr__(self, "score_floor", float(self.score_floor))

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def default_config() -> ScoringConfig:
    """Default hyperparameters: e=1.5, alpha=0.5, beta=0.8, tau=0.02, gamma=0.1,
    top_k=5, Tanimoto kernel, GeM pooling, no score floor."""
    return ScoringConfig()


@dataclass(frozen=True, eq=False)
class ScoreTensor:
    """Proposal-by-class score matrix for one pipeline stage."""

    stage: str
    values: np.ndarray
    proposal_ids: tuple[str, ...]
    class_ids: tuple[str, ...]

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ConfigurationError(f"stage must be one of {STAGES}, got {self.stage!r}")
        vals = np.array(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise DataError("bad-shape", f"score tensor must be 2-D, got shape {vals.shape}")
        object.__setattr__(self, "proposal_ids", tuple(self.proposal_ids))
        object.__setattr__(self, "class_ids", tuple(self.class_ids))
        if vals.shape != (len(self.proposal_ids), len(self.class_ids)):
            raise DataError(
                "bad-shape",
                f"score tensor shape {vals.shape} does not match "
                f"{len(self.proposal_ids)} proposals x {len(self.class_ids)} classes",
            )
        if self.stage == "rel" and vals.shape[0] > 0:
            sums = vals.sum(axis=1)
            if not np.allclose(sums, 1.0, atol=REL_ROW_SUM_TOL, rtol=0.0):
                worst = float(np.abs(sums - 1.0).max())
                raise DataError("rel-not-normalized", f"relative rows must sum to 1 (off by {worst:g})")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True, eq=False)
class Detection:
    """Final (image, proposal, class, score) record for evaluation and export."""

    image_id: str
    proposal_id: str
    class_id: str
    score: float
    bbox: tuple[float, float, float, float]
    mask: Optional[RleMask] = None

    def __post_init__(self):
        s = float(self.score)
        if not math.isfinite(s):
            raise DataError("bad-score", f"detection score must be finite, got {s}")
        object.__setattr__(self, "score", s)
        object.__setattr__(self, "bbox", _bbox_tuple(self.bbox, f"detection {self.proposal_id} bbox"))


@dataclass(frozen=True)
class Violation:
    """One bank-validation finding."""

    code: str
    location: str
    message: str

    def __str__(self):
        return f"[{self.code}] {self.location}: {self.message}"


def _finite(arr: np.ndarray) -> bool:
    return bool(np.isfinite(arr).all())


def validate_bank(bank: TemplateBank) -> list[Violation]:
    """Check a bank against its content invariants; an empty list means valid.

    Pure reporting: never raises on bad content, so broken archives can be
    inspected after load.
    """
    report: list[Violation] = []
    if not bank.classes:
        report.append(Violation("empty-bank", "bank", "bank has no classes"))
        return report

    seen: set[str] = set()
    for cls in bank.classes:
        if cls.class_id in seen:
            report.append(
                Violation("duplicate-class-id", cls.class_id, "class_id appears more than once")
            )
        seen.add(cls.class_id)

    if bank.pooled and bank.pooled_exponent is None:
        report.append(
            Violation("missing-exponent", "bank", "pooled bank must record pooled_exponent")
        )

    for cls in bank.classes:
        if not cls.views:
            report.append(Violation("empty-class", cls.class_id, "class has no views"))
            continue
        for vi, view in enumerate(cls.views):
            where = f"{cls.class_id}/view[{vi}]"
            if view.pooled != bank.pooled:
                kind = "descriptor" if view.pooled else "tokens"
                report.append(
                    Violation(
                        "mixed-representation",
                        where,
                        f"view carries a patch {kind} but the bank is marked pooled={bank.pooled}",
                    )
                )
            if view.cls_embedding.shape != (bank.dim,):
                report.append(
                    Violation(
                        "dim-mismatch",
                        where,
                        f"cls embedding has length {view.cls_embedding.shape[0]}, bank dim is {bank.dim}",
                    )
                )
            if not _finite(view.cls_embedding):
                report.append(Violation("non-finite", where, "cls embedding has non-finite entries"))
            patch = view.patch_descriptor if view.pooled else view.patch_tokens
            expected = (bank.dim,) if view.pooled else (patch.shape[0], bank.dim)
            if patch.shape != expected:
                report.append(
                    Violation(
                        "dim-mismatch",
                        where,
                        f"patch data has shape {patch.shape}, expected {expected}",
                    )
                )
            if not _finite(patch):
                report.append(Violation("non-finite", where, "patch data has non-finite entries"))
    return report
