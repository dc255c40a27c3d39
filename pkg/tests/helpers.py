"""Shared builders for banks, proposals, and small fixtures."""

from __future__ import annotations

import numpy as np

from embmatch import Proposal, TemplateBank, TemplateClass, TemplateView


def make_raw_view(rng, d, tokens=3, base=None, noise=0.1):
    base = rng.standard_normal(d) if base is None else np.asarray(base, dtype=np.float64)
    return TemplateView(
        cls_embedding=base + noise * rng.standard_normal(d),
        patch_tokens=base[None, :] + noise * rng.standard_normal((tokens, d)),
    )


def make_raw_bank(rng, n_classes=3, views=4, d=6, tokens=3, noise=0.1):
    classes = []
    for ci in range(n_classes):
        base = rng.standard_normal(d)
        classes.append(
            TemplateClass(
                class_id=f"cls{ci}",
                views=tuple(make_raw_view(rng, d, tokens, base, noise) for _ in range(views)),
            )
        )
    return TemplateBank(classes=tuple(classes), dim=d, pooled=False)


def make_pooled_bank(rng, n_classes=3, views=4, d=6, exponent=1.5):
    classes = []
    for ci in range(n_classes):
        base = rng.standard_normal(d)
        cls_views = tuple(
            TemplateView(
                cls_embedding=base + 0.1 * rng.standard_normal(d),
                patch_descriptor=base + 0.1 * rng.standard_normal(d),
            )
            for _ in range(views)
        )
        classes.append(TemplateClass(class_id=f"cls{ci}", views=cls_views))
    return TemplateBank(classes=tuple(classes), dim=d, pooled=True, pooled_exponent=exponent)


def make_proposal(rng, d, tokens=3, pid="p0", image="img0", objectness=0.8, base=None, noise=0.1):
    base = rng.standard_normal(d) if base is None else np.asarray(base, dtype=np.float64)
    return Proposal(
        proposal_id=pid,
        image_id=image,
        bbox=(10.0, 10.0, 32.0, 32.0),
        objectness=objectness,
        cls_embedding=base + noise * rng.standard_normal(d),
        patch_tokens=base[None, :] + noise * rng.standard_normal((tokens, d)),
    )


def bank_to_plain(bank):
    """Bank as plain python structures for the straight-line oracle."""
    plain = []
    for cls in bank.classes:
        views = [
            {
                "cls": [float(v) for v in view.cls_embedding],
                "tokens": [[float(v) for v in row] for row in view.patch_tokens],
            }
            for view in cls.views
        ]
        plain.append((cls.class_id, views))
    return plain


def proposals_to_plain(proposals):
    return [
        {
            "id": p.proposal_id,
            "image": p.image_id,
            "objectness": float(p.objectness),
            "cls": [float(v) for v in p.cls_embedding],
            "tokens": [[float(v) for v in row] for row in p.patch_tokens],
        }
        for p in proposals
    ]
