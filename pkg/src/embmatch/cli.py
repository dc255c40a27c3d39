"""Operator command line: pool, match, eval, synth, ablate, inspect.

Human-readable logs go to stderr; machine output goes to files or stdout
only, so pipelines stay parseable.  Exit codes: 0 success, 2 flag or
configuration errors, 3 data or format errors, 4 I/O errors, 70 internal
errors.
"""

from __future__ import annotations

import functools
import json
import os
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

import click

from .core import ConfigurationError, DataError, ScoringConfig, default_config
from .evaluation import evaluate
from .scoring import AggregationSpec, match
from .storage import (
    _canonical_json,
    bank_footprint,
    load_bank,
    load_ground_truth,
    load_predictions,
    load_proposals,
    pool_bank,
    save_predictions,
)
from .synthbench import (
    WorldSpec,
    export_world,
    generate_world,
    ladder_variants,
    pooling_variants,
    run_ablation_suite,
)

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_IO = 4
EXIT_INTERNAL = 70


def _log(msg: str) -> None:
    click.echo(msg, err=True)


def _wrap_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigurationError as exc:
            _log(f"error: {exc}")
            sys.exit(EXIT_CONFIG)
        except DataError as exc:
            _log(f"error [{exc.code}]: {exc}")
            sys.exit(EXIT_DATA)
        except OSError as exc:
            _log(f"i/o error: {exc}")
            sys.exit(EXIT_IO)
        except click.ClickException:
            raise
        except Exception:
            traceback.print_exc()
            sys.exit(EXIT_INTERNAL)

    return wrapper


@click.group()
@click.version_option(package_name="embmatch")
def main():
    """Match object proposals against multi-view template embedding banks."""


_CONFIG_FLAGS = ("e", "alpha", "beta", "tau", "gamma", "top_k", "metric", "score_floor", "pooling")


def _effective_config(ctx: click.Context, config_path) -> ScoringConfig:
    """Built-in defaults, overridden by the config file, overridden by explicit flags."""
    values = asdict(default_config())
    agg_kind = "topk_mean"
    if config_path:
        try:
            doc = json.loads(Path(config_path).read_text())
        except json.JSONDecodeError as exc:
            raise DataError("bad-json", f"{config_path}: malformed JSON ({exc.msg})") from None
        if not isinstance(doc, dict):
            raise DataError("bad-json", f"{config_path}: config must be a JSON object")
        agg_kind = doc.pop("aggregation", agg_kind)
        unknown = set(doc) - set(_CONFIG_FLAGS)
        if unknown:
            raise ConfigurationError(f"unknown config file fields: {sorted(unknown)}")
        values.update(doc)
    for name in _CONFIG_FLAGS:
        source = ctx.get_parameter_source(name)
        if source == click.core.ParameterSource.COMMANDLINE:
            values[name] = ctx.params[name]
    source = ctx.get_parameter_source("agg")
    if source == click.core.ParameterSource.COMMANDLINE:
        agg_kind = ctx.params["agg"]
    cfg = ScoringConfig(**values)
    ctx.obj = {"agg": AggregationSpec(agg_kind, cfg.top_k)}
    return cfg


def _config_options(fn):
    for decorator in reversed(
        [
            click.option("--config", "config_path", type=click.Path(), default=None, help="JSON config file."),
            click.option("--e", type=float, default=1.5, show_default=True, help="GeM pooling exponent."),
            click.option("--alpha", type=float, default=0.5, show_default=True, help="Class vs patch blend."),
            click.option("--beta", type=float, default=0.8, show_default=True, help="Absolute vs relative blend."),
            click.option("--tau", type=float, default=0.02, show_default=True, help="Softmax temperature."),
            click.option("--gamma", type=float, default=0.1, show_default=True, help="Objectness prior exponent."),
            click.option("--top-k", "top_k", type=int, default=5, show_default=True, help="Views averaged per class."),
            click.option("--metric", type=click.Choice(["tanimoto", "cosine"]), default="tanimoto", show_default=True),
            click.option("--score-floor", "score_floor", type=float, default=None, help="Minimum final score to emit."),
            click.option("--pooling", type=click.Choice(["gem", "mean", "max"]), default="gem", show_default=True),
            click.option("--agg", type=click.Choice(["topk_mean", "max", "mean"]), default="topk_mean", show_default=True),
        ]
    ):
        fn = decorator(fn)
    return fn


@main.command("pool")
@click.option("--bank", "bank_path", type=click.Path(), required=True, help="Raw bank archive.")
@click.option("--e", type=float, required=True, help="GeM pooling exponent.")
@click.option("--out", "out_path", type=click.Path(), required=True, help="Pooled bank destination.")
@_wrap_errors
def cmd_pool(bank_path, e, out_path):
    """Compress a raw bank's patch tokens into per-view GeM descriptors."""
    if not (e > 0):
        raise ConfigurationError(f"--e must be > 0, got {e}")
    report = pool_bank(bank_path, e, out_path)
    _log(
        f"pooled {report['views']} views: {report['raw_patch_bytes']} -> "
        f"{report['pooled_patch_bytes']} patch bytes ({report['savings_ratio']:.1f}x)"
    )
    click.echo(_canonical_json(report), nl=False)


@main.command("match")
@click.option("--bank", "bank_path", type=click.Path(), required=True)
@click.option("--proposals", "proposals_path", type=click.Path(), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True, help="Prediction file destination.")
@click.option("--dump-stages", "stages_dir", type=click.Path(), default=None, help="Directory for per-stage score tensors.")
@click.option("--jobs", type=int, default=None, help="Worker threads over images (default: EMBMATCH_JOBS or 1).")
@_config_options
@click.pass_context
@_wrap_errors
def cmd_match(ctx, bank_path, proposals_path, out_path, stages_dir, jobs, config_path, **_flags):
    """Score a proposal file against a bank and write predictions."""
    cfg = _effective_config(ctx, config_path)
    agg = ctx.obj["agg"]
    if jobs is None:
        jobs = int(os.environ.get("EMBMATCH_JOBS", "1"))
    if jobs < 1:
        raise ConfigurationError(f"--jobs must be >= 1, got {jobs}")

    bank = load_bank(bank_path)
    if bank.pooled and bank.pooled_exponent is not None and bank.pooled_exponent != cfg.e:
        _log(
            f"note: bank was pooled with exponent {bank.pooled_exponent}, "
            f"config e={cfg.e} only affects raw proposals"
        )
    proposals = load_proposals(proposals_path, expected_dim=bank.dim)

    by_image: dict[str, list] = {}
    for p in proposals:
        by_image.setdefault(p.image_id, []).append(p)
    image_ids = sorted(by_image)

    def run_image(image_id):
        return image_id, match(by_image[image_id], bank, cfg, agg)

    if jobs == 1 or len(image_ids) <= 1:
        results = [run_image(i) for i in image_ids]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_image, image_ids))
    results.sort(key=lambda pair: pair[0])

    detections = []
    for _, res in results:
        detections.extend(res.detections)
    detections.sort(key=lambda d: (d.image_id, d.proposal_id, d.class_id))

    header = {"scoring": cfg.to_dict(), "aggregation": {"kind": agg.kind, "k": agg.k}}
    save_predictions(detections, out_path, config=header)
    _log(f"wrote {len(detections)} detections for {len(image_ids)} images to {out_path}")

    if stages_dir:
        dump = {}
        for image_id, res in results:
            tensors = {}
            for stage, tensor in res.stages.items():
                tensors[stage] = [[float(v) for v in row] for row in tensor.values]
            dump[image_id] = {
                "proposal_ids": list(res.final.proposal_ids),
                "class_ids": list(res.final.class_ids),
                **tensors,
            }
        out = Path(stages_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "stages.json").write_text(_canonical_json({"config": header, "images": dump}))
        _log(f"wrote stage tensors to {out / 'stages.json'}")


@main.command("eval")
@click.option("--pred", "pred_path", type=click.Path(), required=True)
@click.option("--gt", "gt_path", type=click.Path(), required=True)
@click.option("--mode", type=click.Choice(["bbox", "mask"]), default="bbox", show_default=True)
@click.option("--max-det", "max_det", type=int, default=None, help="Optional per-image detection cap.")
@click.option("--out", "out_path", type=click.Path(), default=None, help="Write the full report JSON here.")
@_wrap_errors
def cmd_eval(pred_path, gt_path, mode, max_det, out_path):
    """Evaluate a prediction file against ground truth; prints the mean AP."""
    detections, _header = load_predictions(pred_path)
    gt = load_ground_truth(gt_path)
    report = evaluate(detections, gt, mode=mode, max_detections=max_det)
    if out_path:
        Path(out_path).write_text(_canonical_json(report.to_dict()))
        _log(f"wrote report to {out_path}")
    click.echo(f"map {report.mean_ap:.3f}")


@main.command("synth")
@click.option("--spec", "spec_path", type=click.Path(), default=None, help="WorldSpec JSON (defaults used when absent).")
@click.option("--seed", type=int, default=None, help="Override the spec seed.")
@click.option("--out", "out_path", type=click.Path(), required=True, help="Output directory.")
@_wrap_errors
def cmd_synth(spec_path, seed, out_path):
    """Generate a synthetic world and export it in the engine's file formats."""
    spec_doc = {}
    if spec_path:
        try:
            spec_doc = json.loads(Path(spec_path).read_text())
        except json.JSONDecodeError as exc:
            raise DataError("bad-json", f"{spec_path}: malformed JSON ({exc.msg})") from None
    spec = WorldSpec.from_dict(spec_doc)
    if seed is not None:
        spec = replace(spec, seed=seed)
    world = generate_world(spec)
    export_world(world, out_path)
    _log(
        f"world seed={spec.seed}: {world.bank.n_classes} classes x {spec.views_per_class} views, "
        f"{spec.n_images} images x {spec.proposals_per_image} proposals -> {out_path}"
    )


_GRIDS = {"ladder": ladder_variants, "pooling": pooling_variants}


@main.command("ablate")
@click.option("--spec", "spec_path", type=click.Path(), default=None, help="WorldSpec JSON.")
@click.option("--seed", type=int, default=None, help="Override the spec seed.")
@click.option("--grid", type=click.Choice(sorted(_GRIDS)), default="ladder", show_default=True)
@_wrap_errors
def cmd_ablate(spec_path, seed, grid):
    """Run an ablation grid on a synthetic world; prints a Markdown table."""
    spec_doc = {}
    if spec_path:
        try:
            spec_doc = json.loads(Path(spec_path).read_text())
        except json.JSONDecodeError as exc:
            raise DataError("bad-json", f"{spec_path}: malformed JSON ({exc.msg})") from None
    spec = WorldSpec.from_dict(spec_doc)
    if seed is not None:
        spec = replace(spec, seed=seed)
    rows = run_ablation_suite(spec, _GRIDS[grid]())

    width = max(len(r.name) for r in rows)
    click.echo(f"| {'variant'.ljust(width)} | map   | delta      |")
    click.echo(f"| {'-' * width} | ----- | ---------- |")
    prev = None
    for row in rows:
        if prev is None:
            delta = ""
        else:
            diff = row.mean_ap - prev
            arrow = "up" if diff >= 0 else "down"
            delta = f"{arrow} {abs(diff):.3f}"
        click.echo(f"| {row.name.ljust(width)} | {row.mean_ap:.3f} | {delta.ljust(10)} |")
        prev = row.mean_ap


@main.command("inspect")
@click.option("--bank", "bank_path", type=click.Path(), default=None)
@click.option("--proposals", "proposals_path", type=click.Path(), default=None)
@_wrap_errors
def cmd_inspect(bank_path, proposals_path):
    """Report dimensions, counts, violations, and storage footprint."""
    if (bank_path is None) == (proposals_path is None):
        raise ConfigurationError("pass exactly one of --bank or --proposals")
    if bank_path:
        from .core import validate_bank

        bank = load_bank(bank_path, validate=False)
        summary = bank_footprint(bank)
        summary["class_ids"] = list(bank.class_ids)
        summary["violations"] = [str(v) for v in validate_bank(bank)]
        click.echo(_canonical_json(summary), nl=False)
        if summary["violations"]:
            sys.exit(EXIT_DATA)
    else:
        proposals = load_proposals(proposals_path)
        images = sorted({p.image_id for p in proposals})
        dims = sorted({int(p.cls_embedding.shape[0]) for p in proposals})
        summary = {
            "n_proposals": len(proposals),
            "n_images": len(images),
            "dims": dims,
            "pooled": all(p.pooled for p in proposals) if proposals else None,
            "objectness_range": (
                [min(p.objectness for p in proposals), max(p.objectness for p in proposals)]
                if proposals
                else None
            ),
        }
        click.echo(_canonical_json(summary), nl=False)


if __name__ == "__main__":
    main()
