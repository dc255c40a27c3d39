"""Bit-exact storage formats for banks, proposals, ground truth, and predictions.

Bank archives ("MEB v1") are a directory with a JSON manifest plus raw
little-endian float32 blobs, one file per referenced array, so any ML
ecosystem can write them without framework-specific containers.  Proposals
are JSON lines; predictions and ground truth are single JSON documents.  All
writers serialize canonically (sorted keys, fixed layout) so save - load -
save round-trips are byte-identical.
"""

from __future__ import annotations

import base64
import json
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .core import (
    ConfigurationError,
    DataError,
    Detection,
    Proposal,
    RleMask,
    TemplateBank,
    TemplateClass,
    TemplateView,
    validate_bank,
)
from .evaluation import GroundTruthInstance, GroundTruthSet
from .similarity import gem_pool

FORMAT_VERSION = 1

PathLike = Union[str, Path]


def _canonical_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write_blob(path: Path, arr: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_blob(root: Path, ref: str, expected: int, what: str) -> np.ndarray:
    path = root / ref
    if not path.is_file():
        raise DataError("missing-blob", f"{what}: blob {ref!r} does not exist under {root}")
    raw = path.read_bytes()
    if len(raw) != 4 * expected:
        raise DataError(
            "blob-length",
            f"{what}: blob {ref!r} holds {len(raw)} bytes, expected {4 * expected} "
            f"({expected} float32 values)",
        )
    arr = np.frombuffer(raw, dtype="<f4").copy()
    return arr


def _blob_name(class_index: int, view_index: int, kind: str) -> str:
    return f"blobs/c{class_index:04d}_v{view_index:04d}_{kind}.f32"


def save_bank(bank: TemplateBank, path: PathLike) -> None:
    """Write a bank as an MEB v1 directory (manifest.json + float32 blobs)."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    classes = []
    for ci, cls in enumerate(bank.classes):
        views = []
        for vi, view in enumerate(cls.views):
            cls_ref = _blob_name(ci, vi, "cls")
            patch_ref = _blob_name(ci, vi, "patch")
            _write_blob(root / cls_ref, view.cls_embedding)
            entry = {"cls": cls_ref, "patch": patch_ref}
            if view.pooled:
                _write_blob(root / patch_ref, view.patch_descriptor)
            else:
                _write_blob(root / patch_ref, view.patch_tokens)
                entry["patch_tokens"] = int(view.patch_tokens.shape[0])
            views.append(entry)
        classes.append({"class_id": cls.class_id, "views": views})
    manifest = {
        "format_version": FORMAT_VERSION,
        "dim": int(bank.dim),
        "pooled": bool(bank.pooled),
        "pooled_exponent": bank.pooled_exponent,
        "metric_hint": bank.metric_hint,
        "classes": classes,
    }
    (root / "manifest.json").write_text(_canonical_json(manifest))


def load_bank(path: PathLike, validate: bool = True) -> TemplateBank:
    """Load and fully validate an MEB v1 bank archive.

    ``validate=False`` skips the content scan so broken banks can still be
    inspected and reported on.
    """
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise DataError("missing-manifest", f"no manifest.json under {root}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError("bad-manifest", f"manifest.json is not valid JSON: {exc}") from None

    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise DataError(
            "format-version", f"unsupported bank format_version {version!r}, expected {FORMAT_VERSION}"
        )
    try:
        dim = int(manifest["dim"])
        pooled = bool(manifest["pooled"])
        class_entries = manifest["classes"]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError("bad-manifest", f"manifest is missing or mistypes a field: {exc}") from None

    classes = []
    for ci, centry in enumerate(class_entries):
        views = []
        for vi, ventry in enumerate(centry.get("views", [])):
            where = f"class {centry.get('class_id', ci)!r} view {vi}"
            cls_vec = _read_blob(root, ventry["cls"], dim, where)
            if pooled:
                patch = _read_blob(root, ventry["patch"], dim, where)
                views.append(TemplateView(cls_embedding=cls_vec, patch_descriptor=patch))
            else:
                tokens = ventry.get("patch_tokens")
                if not isinstance(tokens, int) or tokens < 1:
                    raise DataError(
                        "bad-manifest", f"{where}: raw view needs a positive patch_tokens count"
                    )
                patch = _read_blob(root, ventry["patch"], tokens * dim, where)
                views.append(
                    TemplateView(
                        cls_embedding=cls_vec, patch_tokens=patch.reshape(tokens, dim)
                    )
                )
        classes.append(TemplateClass(class_id=str(centry["class_id"]), views=tuple(views)))

    exponent = manifest.get("pooled_exponent")
    bank = TemplateBank(
        classes=tuple(classes),
        dim=dim,
        pooled=pooled,
        pooled_exponent=float(exponent) if exponent is not None else None,
        metric_hint=manifest.get("metric_hint"),
    )
    if validate:
        violations = validate_bank(bank)
        if violations:
            non_finite = [v for v in violations if v.code == "non-finite"]
            first = non_finite[0] if non_finite else violations[0]
            raise DataError(
                first.code, f"bank failed validation ({len(violations)} violations): {first}"
            )
    return bank


def pool_bank(src: PathLike, e: float, dst: PathLike) -> dict:
    """Compress a raw bank's patch tokens into per-view descriptors with exponent ``e``.

    Returns a byte-accounting report: raw vs pooled patch storage and the
    savings ratio.
    """
    if not (isinstance(e, (int, float)) and np.isfinite(e) and e > 0):
        raise ConfigurationError(f"pooling exponent must be > 0, got {e!r}")
    bank = load_bank(src)
    if bank.pooled:
        raise DataError("already-pooled", f"bank at {src} is already pooled")
    raw_bytes = 0
    classes = []
    for cls in bank.classes:
        views = []
        for view in cls.views:
            raw_bytes += 4 * view.patch_tokens.size
            descriptor = gem_pool(view.patch_tokens, float(e))
            views.append(
                TemplateView(cls_embedding=view.cls_embedding, patch_descriptor=descriptor)
            )
        classes.append(TemplateClass(class_id=cls.class_id, views=tuple(views)))
    pooled = TemplateBank(
        classes=tuple(classes),
        dim=bank.dim,
        pooled=True,
        pooled_exponent=float(e),
        metric_hint=bank.metric_hint,
    )
    save_bank(pooled, dst)
    n_views = sum(len(c.views) for c in pooled.classes)
    pooled_bytes = 4 * bank.dim * n_views
    return {
        "dim": bank.dim,
        "views": n_views,
        "pooled_exponent": float(e),
        "raw_patch_bytes": raw_bytes,
        "pooled_patch_bytes": pooled_bytes,
        "pooled_patch_bytes_per_view": 4 * bank.dim,
        "savings_ratio": raw_bytes / pooled_bytes if pooled_bytes else 0.0,
    }


def bank_footprint(bank: TemplateBank) -> dict:
    """Storage accounting: bytes per class and per view, as stored on disk."""
    per_class = {}
    total = 0
    for cls in bank.classes:
        cls_bytes = 0
        patch_bytes = 0
        for view in cls.views:
            cls_bytes += 4 * view.cls_embedding.size
            patch = view.patch_descriptor if view.pooled else view.patch_tokens
            patch_bytes += 4 * patch.size
        per_class[cls.class_id] = {
            "views": len(cls.views),
            "cls_bytes": cls_bytes,
            "patch_bytes": patch_bytes,
            "total_bytes": cls_bytes + patch_bytes,
        }
        total += cls_bytes + patch_bytes
    n_views = sum(len(c.views) for c in bank.classes)
    return {
        "dim": bank.dim,
        "pooled": bank.pooled,
        "pooled_exponent": bank.pooled_exponent,
        "n_classes": bank.n_classes,
        "n_views": n_views,
        "patch_bytes_per_view": (
            4 * bank.dim
            if bank.pooled
            else {
                cls.class_id: [4 * v.patch_tokens.size for v in cls.views]
                for cls in bank.classes
            }
        ),
        "per_class": per_class,
        "total_bytes": total,
    }


def _encode_f32(arr: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(arr, dtype="<f4").tobytes()).decode("ascii")


def _decode_embedding(field, root: Optional[Path], what: str) -> np.ndarray:
    if not isinstance(field, dict) or len(field) != 1:
        raise DataError("bad-embedding", f"{what}: embedding field must be {{'b64': ...}} or {{'ref': ...}}")
    if "b64" in field:
        try:
            raw = base64.b64decode(field["b64"], validate=True)
        except Exception:
            raise DataError("bad-embedding", f"{what}: invalid base64 payload") from None
        if len(raw) % 4:
            raise DataError("bad-embedding", f"{what}: payload length {len(raw)} is not a multiple of 4")
        return np.frombuffer(raw, dtype="<f4").copy()
    if "ref" in field:
        if root is None:
            raise DataError("bad-embedding", f"{what}: blob refs need a file root")
        path = root / field["ref"]
        if not path.is_file():
            raise DataError("missing-blob", f"{what}: blob {field['ref']!r} does not exist")
        return np.frombuffer(path.read_bytes(), dtype="<f4").copy()
    raise DataError("bad-embedding", f"{what}: embedding field must carry 'b64' or 'ref'")


def _mask_to_json(mask: Optional[RleMask]):
    if mask is None:
        return None
    return {"size": [mask.size[0], mask.size[1]], "counts": mask.counts}


def _mask_from_json(obj, what: str) -> Optional[RleMask]:
    if obj is None:
        return None
    try:
        h, w = obj["size"]
        counts = obj["counts"]
    except (KeyError, TypeError, ValueError):
        raise DataError("bad-mask", f"{what}: mask must carry size [h, w] and counts") from None
    if not isinstance(counts, str):
        raise DataError("bad-mask", f"{what}: mask counts must be a string")
    return RleMask(size=(int(h), int(w)), counts=counts)


def save_proposals(proposals: Sequence[Proposal], path: PathLike) -> None:
    """Write proposals as JSON lines with inline base64 float32 embeddings."""
    lines = []
    for p in proposals:
        record = {
            "image_id": p.image_id,
            "proposal_id": p.proposal_id,
            "bbox": [float(v) for v in p.bbox],
            "objectness": float(p.objectness),
            "mask": _mask_to_json(p.mask),
            "cls": {"b64": _encode_f32(p.cls_embedding)},
        }
        if p.pooled:
            record["patch"] = {"b64": _encode_f32(p.patch_descriptor)}
        else:
            record["patch"] = {
                "b64": _encode_f32(p.patch_tokens),
                "tokens": int(p.patch_tokens.shape[0]),
            }
        lines.append(json.dumps(record, sort_keys=True))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def load_proposals(path: PathLike, expected_dim: Optional[int] = None) -> list[Proposal]:
    """Load a proposal JSONL file, validating every record.

    Errors name the offending line.  ``expected_dim`` cross-checks embedding
    dimensions against a bank.
    """
    root = Path(path).parent
    proposals = []
    with open(path, "r") as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            where = f"{path}:{ln}"
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError("bad-jsonl", f"{where}: malformed JSON ({exc.msg})") from None
            try:
                pid = str(record["proposal_id"])
                image_id = str(record["image_id"])
                bbox = record["bbox"]
                objectness = record["objectness"]
                cls_field = record["cls"]
                patch_field = record["patch"]
            except (KeyError, TypeError) as exc:
                raise DataError("bad-record", f"{where}: missing field {exc}") from None

            cls_vec = _decode_embedding(cls_field, root, where)
            if not np.isfinite(cls_vec).all():
                raise DataError("non-finite", f"{where}: cls embedding has non-finite entries")
            patch_spec = dict(patch_field) if isinstance(patch_field, dict) else {}
            tokens = patch_spec.pop("tokens", None)
            patch_vec = _decode_embedding(patch_spec, root, where)
            if not np.isfinite(patch_vec).all():
                raise DataError("non-finite", f"{where}: patch data has non-finite entries")

            mask = _mask_from_json(record.get("mask"), where)
            try:
                if tokens is not None:
                    tokens = int(tokens)
                    if tokens < 1 or patch_vec.size % tokens:
                        raise DataError(
                            "bad-record",
                            f"{where}: patch payload of {patch_vec.size} floats does not "
                            f"split into {tokens} tokens",
                        )
                    proposal = Proposal(
                        proposal_id=pid,
                        image_id=image_id,
                        bbox=bbox,
                        objectness=objectness,
                        cls_embedding=cls_vec,
                        patch_tokens=patch_vec.reshape(tokens, patch_vec.size // tokens),
                        mask=mask,
                    )
                else:
                    proposal = Proposal(
                        proposal_id=pid,
                        image_id=image_id,
                        bbox=bbox,
                        objectness=objectness,
                        cls_embedding=cls_vec,
                        patch_descriptor=patch_vec,
                        mask=mask,
                    )
            except DataError as exc:
                raise DataError(exc.code, f"{where}: {exc}") from None

            if expected_dim is not None and proposal.cls_embedding.shape[0] != expected_dim:
                raise DataError(
                    "dim-mismatch",
                    f"{where}: embedding dim {proposal.cls_embedding.shape[0]} does not match "
                    f"bank dim {expected_dim}",
                )
            proposals.append(proposal)
    return proposals


def save_predictions(
    detections: Sequence[Detection], path: PathLike, config: Optional[dict] = None
) -> None:
    """Write detections as a prediction JSON document.

    Records are sorted by (image_id, score desc, class_id, proposal_id) for
    reproducible diffs; the effective configuration is echoed in the header.
    """
    records = [
        {
            "image_id": d.image_id,
            "proposal_id": d.proposal_id,
            "class_id": d.class_id,
            "bbox": [float(v) for v in d.bbox],
            "score": float(d.score),
            "mask": _mask_to_json(d.mask),
        }
        for d in sorted(detections, key=lambda d: (d.image_id, -d.score, d.class_id, d.proposal_id))
    ]
    doc = {"format_version": FORMAT_VERSION, "config": config, "predictions": records}
    Path(path).write_text(_canonical_json(doc))


def load_predictions(path: PathLike) -> tuple[list[Detection], Optional[dict]]:
    """Load a prediction file; returns (detections, config header)."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError("bad-json", f"{path}: malformed JSON ({exc.msg})") from None
    if doc.get("format_version") != FORMAT_VERSION:
        raise DataError(
            "format-version",
            f"unsupported prediction format_version {doc.get('format_version')!r}",
        )
    detections = []
    for i, rec in enumerate(doc.get("predictions", [])):
        where = f"{path}: prediction[{i}]"
        try:
            detections.append(
                Detection(
                    image_id=str(rec["image_id"]),
                    proposal_id=str(rec.get("proposal_id", "")),
                    class_id=str(rec["class_id"]),
                    score=rec["score"],
                    bbox=rec["bbox"],
                    mask=_mask_from_json(rec.get("mask"), where),
                )
            )
        except KeyError as exc:
            raise DataError("bad-record", f"{where}: missing field {exc}") from None
        except DataError as exc:
            raise DataError(exc.code, f"{where}: {exc}") from None
    return detections, doc.get("config")


def save_ground_truth(gt: GroundTruthSet, path: PathLike) -> None:
    annotations = [
        {
            "image_id": g.image_id,
            "class_id": g.class_id,
            "bbox": [float(v) for v in g.bbox],
            "ignore": bool(g.ignore),
            "mask": _mask_to_json(g.mask),
        }
        for g in gt.instances
    ]
    doc = {
        "format_version": FORMAT_VERSION,
        "images": list(gt.images),
        "class_ids": list(gt.class_ids) if gt.class_ids is not None else None,
        "annotations": annotations,
    }
    Path(path).write_text(_canonical_json(doc))


def load_ground_truth(path: PathLike) -> GroundTruthSet:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError("bad-json", f"{path}: malformed JSON ({exc.msg})") from None
    if doc.get("format_version") != FORMAT_VERSION:
        raise DataError(
            "format-version",
            f"unsupported ground-truth format_version {doc.get('format_version')!r}",
        )
    instances = []
    for i, rec in enumerate(doc.get("annotations", [])):
        where = f"{path}: annotation[{i}]"
        try:
            instances.append(
                GroundTruthInstance(
                    image_id=str(rec["image_id"]),
                    class_id=str(rec["class_id"]),
                    bbox=rec["bbox"],
                    mask=_mask_from_json(rec.get("mask"), where),
                    ignore=bool(rec.get("ignore", False)),
                )
            )
        except KeyError as exc:
            raise DataError("bad-record", f"{where}: missing field {exc}") from None
        except DataError as exc:
            raise DataError(exc.code, f"{where}: {exc}") from None
    images = doc.get("images")
    class_ids = doc.get("class_ids")
    return GroundTruthSet.build(
        instances,
        images=[str(s) for s in images] if images is not None else None,
        class_ids=[str(s) for s in class_ids] if class_ids is not None else None,
    )
