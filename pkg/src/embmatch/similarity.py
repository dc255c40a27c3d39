"""Patch-token pooling and pairwise similarity kernels."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .core import (
    POOLINGS,
    ConfigurationError,
    DataError,
    Proposal,
    ScoringConfig,
    TemplateBank,
    TemplateView,
)


def _checked_tokens(tokens, what: str) -> np.ndarray:
    arr = np.asarray(tokens, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DataError("bad-shape", f"{what} must be a non-empty L x d matrix, got shape {arr.shape}")
    bad = ~np.isfinite(arr)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise DataError("non-finite", f"{what} has a non-finite entry at row {r}, column {c}")
    return arr


def _checked_vector(values, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise DataError("bad-shape", f"{what} must be a non-empty vector, got shape {arr.shape}")
    bad = ~np.isfinite(arr)
    if bad.any():
        i = int(np.argwhere(bad)[0][0])
        raise DataError("non-finite", f"{what} has a non-finite entry at index {i}")
    return arr


def _signed_power(x: np.ndarray, p: float) -> np.ndarray:
    return np.sign(x) * np.abs(x) ** p


def gem_pool(tokens, e: float) -> np.ndarray:
    """Generalized-mean pooling of an L x d token matrix into one d-vector.

    Each entry maps through sign(x)*|x|^e, columns are averaged, and the
    result maps through sign(y)*|y|^(1/e).  The sign-preserving powers keep
    the reduction total over negative entries while leaving e=1 equal to the
    arithmetic mean.  Columns are summed in sorted order so the result is
    bit-identical under row permutation.
    """
    if not (np.isfinite(e) and e > 0):
        raise ConfigurationError(f"pooling exponent must be > 0, got {e}")
    arr = _checked_tokens(tokens, "tokens")
    powered = np.sort(_signed_power(arr, float(e)), axis=0)
    return _signed_power(powered.mean(axis=0), 1.0 / float(e))


def mean_pool(tokens) -> np.ndarray:
    """Column-wise arithmetic mean of an L x d token matrix."""
    return _checked_tokens(tokens, "tokens").mean(axis=0)


def max_pool(tokens) -> np.ndarray:
    """Column-wise maximum of an L x d token matrix."""
    return _checked_tokens(tokens, "tokens").max(axis=0)


@dataclass(frozen=True)
class PoolingKind:
    """Token-reduction choice: ``gem`` (with exponent), ``mean``, or ``max``."""

    kind: str
    e: Optional[float] = None

    def __post_init__(self):
        if self.kind not in POOLINGS:
            raise ConfigurationError(f"pooling kind must be one of {POOLINGS}, got {self.kind!r}")
        if self.kind == "gem":
            if self.e is None or not (np.isfinite(self.e) and self.e > 0):
                raise ConfigurationError(f"gem pooling needs an exponent > 0, got {self.e!r}")
            object.__setattr__(self, "e", float(self.e))
        elif self.e is not None:
            raise ConfigurationError(f"{self.kind} pooling takes no exponent")

    def apply(self, tokens) -> np.ndarray:
        if self.kind == "gem":
            return gem_pool(tokens, self.e)
        if self.kind == "mean":
            return mean_pool(tokens)
        return max_pool(tokens)

    @classmethod
    def from_config(cls, cfg: ScoringConfig) -> "PoolingKind":
        return cls(cfg.pooling, cfg.e if cfg.pooling == "gem" else None)


def tanimoto(u, v) -> float:
    """Continuous Tanimoto similarity u.v / (|u|^2 + |v|^2 - u.v), in [-1/3, 1].

    Sensitive to both direction and magnitude, unlike cosine.
    """
    a = _checked_vector(u, "u")
    b = _checked_vector(v, "v")
    if a.shape != b.shape:
        raise DataError("dim-mismatch", f"vector lengths differ: {a.shape[0]} vs {b.shape[0]}")
    dot = float(a @ b)
    nu = float(a @ a)
    nv = float(b @ b)
    if nu == 0.0 and nv == 0.0:
        raise DataError("degenerate", "tanimoto is undefined for two all-zero vectors")
    return dot / (nu + nv - dot)


def cosine(u, v) -> float:
    """Cosine similarity u.v / (|u| |v|), in [-1, 1]."""
    a = _checked_vector(u, "u")
    b = _checked_vector(v, "v")
    if a.shape != b.shape:
        raise DataError("dim-mismatch", f"vector lengths differ: {a.shape[0]} vs {b.shape[0]}")
    nu = float(a @ a)
    nv = float(b @ b)
    if nu == 0.0 or nv == 0.0:
        raise DataError("degenerate", "cosine is undefined for an all-zero vector")
    return float(a @ b) / np.sqrt(nu * nv)


_SCALAR_KERNELS = {"tanimoto": tanimoto, "cosine": cosine}


def kernel(metric: str):
    """Scalar similarity kernel by name."""
    try:
        return _SCALAR_KERNELS[metric]
    except KeyError:
        raise ConfigurationError(f"unknown metric {metric!r}") from None


def kernel_matrix(metric: str, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """All-pairs kernel values between row sets ``rows`` (n x d) and ``cols`` (m x d)."""
    if metric not in _SCALAR_KERNELS:
        raise ConfigurationError(f"unknown metric {metric!r}")
    a = np.asarray(rows, dtype=np.float64)
    b = np.asarray(cols, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise DataError("dim-mismatch", f"incompatible shapes {a.shape} and {b.shape}")
    dot = a @ b.T
    na = np.einsum("ij,ij->i", a, a)
    nb = np.einsum("ij,ij->i", b, b)
    if metric == "tanimoto":
        if (na == 0.0).any() and (nb == 0.0).any():
            raise DataError("degenerate", "tanimoto is undefined for a pair of all-zero vectors")
        return dot / (na[:, None] + nb[None, :] - dot)
    if (na == 0.0).any() or (nb == 0.0).any():
        raise DataError("degenerate", "cosine is undefined for an all-zero vector")
    return dot / (np.sqrt(na)[:, None] * np.sqrt(nb)[None, :])


def _descriptor(obj: Union[Proposal, TemplateView], pool: PoolingKind, what: str) -> np.ndarray:
    if obj.patch_descriptor is not None:
        if pool.kind != "gem":
            raise ConfigurationError(
                f"{what} carries a pooled descriptor; {pool.kind} pooling cannot be applied"
            )
        return np.asarray(obj.patch_descriptor, dtype=np.float64)
    return pool.apply(obj.patch_tokens)


def view_cls_matrix(bank: TemplateBank, class_index: int) -> np.ndarray:
    """Stacked class embeddings for one class, cached on the bank."""

    def compute():
        views = bank.classes[class_index].views
        return np.stack([np.asarray(v.cls_embedding, dtype=np.float64) for v in views])

    return bank.cached(("cls", class_index), compute)


def view_descriptor_matrix(bank: TemplateBank, class_index: int, pool: PoolingKind) -> np.ndarray:
    """Stacked patch descriptors for one class, pooling raw tokens on the fly.

    Pooled descriptors are cached on the bank per (class, pooling) so repeated
    matching never re-pools.
    """
    key = ("patch", class_index, pool.kind, pool.e)

    def compute():
        views = bank.classes[class_index].views
        cid = bank.classes[class_index].class_id
        rows = []
        for vi, view in enumerate(views):
            try:
                rows.append(_descriptor(view, pool, f"view {vi} of class {cid}"))
            except DataError as exc:
                raise DataError(exc.code, f"class {cid}, view {vi}: {exc}") from None
        return np.stack(rows)

    return bank.cached(key, compute)


def proposal_descriptor(proposal: Proposal, pool: PoolingKind) -> np.ndarray:
    return _descriptor(proposal, pool, f"proposal {proposal.proposal_id}")


def integrated_similarity(proposal: Proposal, view: TemplateView, cfg: ScoringConfig) -> float:
    """Blend of class-embedding and patch-descriptor similarity.

    Returns alpha * k(cls_p, cls_t) + (1 - alpha) * k(desc_p, desc_t) where k
    is the configured kernel and raw patch tokens are pooled on the fly with
    the configured exponent.
    """
    k = kernel(cfg.metric)
    pool = PoolingKind.from_config(cfg)
    s_cls = k(proposal.cls_embedding, view.cls_embedding)
    if cfg.alpha == 1.0:
        return float(s_cls)
    s_patch = k(proposal_descriptor(proposal, pool), _descriptor(view, pool, "template view"))
    return float(cfg.alpha * s_cls + (1.0 - cfg.alpha) * s_patch)
