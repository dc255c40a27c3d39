"""Straight-line reference implementations used as independent test oracles.

Everything here is deliberately written with plain Python floats, lists, and
the math module, sharing no code with the package under test.
"""

from __future__ import annotations

import math


def ref_gem(tokens, e):
    rows = len(tokens)
    cols = len(tokens[0])
    out = []
    for j in range(cols):
        total = 0.0
        for i in range(rows):
            x = float(tokens[i][j])
            total += math.copysign(abs(x) ** e, x)
        m = total / rows
        out.append(math.copysign(abs(m) ** (1.0 / e), m) if m != 0.0 else 0.0)
    return out


def ref_mean(tokens):
    rows = len(tokens)
    cols = len(tokens[0])
    return [sum(float(tokens[i][j]) for i in range(rows)) / rows for j in range(cols)]


def ref_max(tokens):
    cols = len(tokens[0])
    return [max(float(row[j]) for row in tokens) for j in range(cols)]


def ref_tanimoto(u, v):
    dot = sum(float(a) * float(b) for a, b in zip(u, v))
    nu = sum(float(a) * float(a) for a in u)
    nv = sum(float(b) * float(b) for b in v)
    return dot / (nu + nv - dot)


def ref_cosine(u, v):
    dot = sum(float(a) * float(b) for a, b in zip(u, v))
    nu = math.sqrt(sum(float(a) * float(a) for a in u))
    nv = math.sqrt(sum(float(b) * float(b) for b in v))
    return dot / (nu * nv)


def ref_softmax(row, tau):
    exps = [math.exp(float(x) / tau) for x in row]
    total = sum(exps)
    return [v / total for v in exps]


def ref_topk_mean(scores, k):
    ordered = sorted(scores, reverse=True)
    k = min(k, len(ordered))
    return sum(ordered[:k]) / k


def ref_pipeline(proposals, bank, cfg):
    """Full scoring pipeline on plain python structures.

    ``proposals``: list of dicts with keys id, image, objectness, cls (list),
    tokens (list of lists).  ``bank``: list of (class_id, views) where each
    view is a dict with cls and tokens.  ``cfg``: dict with e, alpha, beta,
    tau, gamma, top_k, metric.  Returns per-stage matrices as lists of lists
    plus the (proposal index, class_id, final score) triples.
    """
    kern = ref_tanimoto if cfg["metric"] == "tanimoto" else ref_cosine
    e = cfg["e"]
    alpha = cfg["alpha"]

    abs_rows = []
    for prop in proposals:
        p_desc = ref_gem(prop["tokens"], e)
        row = []
        for _, views in bank:
            sims = []
            for view in views:
                s_cls = kern(prop["cls"], view["cls"])
                s_patch = kern(p_desc, ref_gem(view["tokens"], e))
                sims.append(alpha * s_cls + (1.0 - alpha) * s_patch)
            row.append(ref_topk_mean(sims, cfg["top_k"]))
        abs_rows.append(row)

    rel_rows = [ref_softmax(row, cfg["tau"]) for row in abs_rows]
    beta = cfg["beta"]
    joint_rows = [
        [beta * a + (1.0 - beta) * r for a, r in zip(arow, rrow)]
        for arow, rrow in zip(abs_rows, rel_rows)
    ]
    final_rows = [
        [prop["objectness"] ** cfg["gamma"] * v for v in row]
        for prop, row in zip(proposals, joint_rows)
    ]
    triples = [
        (pi, bank[ci][0], final_rows[pi][ci])
        for pi in range(len(proposals))
        for ci in range(len(bank))
    ]
    return {
        "abs": abs_rows,
        "rel": rel_rows,
        "joint": joint_rows,
        "final": final_rows,
        "detections": triples,
    }


def ref_iou_xywh(a, b):
    ax, ay, aw, ah = (float(v) for v in a)
    bx, by, bw, bh = (float(v) for v in b)
    x1 = max(ax, bx)
    y1 = max(ay, by)
    x2 = min(ax + aw, bx + bw)
    y2 = min(ay + ah, by + bh)
    if x2 <= x1 or y2 <= y1:
        return 0.0
    inter = (x2 - x1) * (y2 - y1)
    return inter / (aw * ah + bw * bh - inter)


def ref_greedy_labels(dets, gts, threshold):
    """Greedy matching oracle for one image and class.

    ``dets``: list of (score, tiebreak_id, bbox) already any order; processed
    in descending score then ascending id.  ``gts``: list of (bbox, ignore).
    Returns labels aligned to the processing order as a list of
    (tiebreak_id, label) where label is True/False/None, together with the
    chosen assignment {det_id: gt_index}.
    """
    order = sorted(range(len(dets)), key=lambda i: (-dets[i][0], dets[i][1]))
    taken = [False] * len(gts)
    labels = []
    assignment = {}
    for di in order:
        score, det_id, bbox = dets[di]
        candidates = []
        for gi, (gbox, ignore) in enumerate(gts):
            if taken[gi] or ignore:
                continue
            iou = ref_iou_xywh(bbox, gbox)
            if iou >= threshold:
                candidates.append((iou, gi))
        if candidates:
            best_iou = max(c[0] for c in candidates)
            best_gi = min(gi for iou, gi in candidates if iou == best_iou)
            taken[best_gi] = True
            assignment[det_id] = best_gi
            labels.append((det_id, True))
            continue
        ignored_hit = any(
            ignore and ref_iou_xywh(bbox, gbox) >= threshold for gbox, ignore in gts
        )
        labels.append((det_id, None if ignored_hit else False))
    return labels, assignment


def ref_ap_101(labels, npos):
    """101-point interpolated AP from an ordered TP/FP sequence."""
    if npos == 0 or not labels:
        return 0.0
    tp = 0
    fp = 0
    points = []
    for flag in labels:
        if flag:
            tp += 1
        else:
            fp += 1
        points.append((tp / npos, tp / (tp + fp)))
    best = 0.0
    envelope = [0.0] * len(points)
    for i in range(len(points) - 1, -1, -1):
        best = max(best, points[i][1])
        envelope[i] = best
    total = 0.0
    for step in range(101):
        r = step / 100.0
        precision = 0.0
        for i, (recall, _) in enumerate(points):
            if recall >= r:
                precision = envelope[i]
                break
        total += precision
    return total / 101.0


def enumerate_valid_assignments(dets, gts, threshold):
    """Every injective detection-to-GT matching where matched pairs clear the
    threshold; detections and GTs referenced by index."""
    n_det = len(dets)
    results = []

    def recurse(di, used, current):
        if di == n_det:
            results.append(dict(current))
            return
        recurse(di + 1, used, current)
        for gi in range(len(gts)):
            if gi in used:
                continue
            if ref_iou_xywh(dets[di][2], gts[gi][0]) >= threshold:
                current[di] = gi
                recurse(di + 1, used | {gi}, current)
                del current[di]

    recurse(0, frozenset(), {})
    return results
