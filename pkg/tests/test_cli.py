"""Command-line behavior: subcommands, exit codes, precedence, determinism."""

import json

import numpy as np
import pytest
from click.testing import CliRunner

from embmatch import WorldSpec, export_world, generate_world, save_bank
from embmatch.cli import main

from helpers import make_raw_bank


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture()
def world_dir(tmp_path):
    world = generate_world(WorldSpec(seed=5, n_images=4))
    export_world(world, tmp_path / "world")
    return tmp_path / "world"


def _invoke(runner, args):
    return runner.invoke(main, args, catch_exceptions=False)


class TestSynthAndInspect:
    def test_synth_writes_world_files(self, runner, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"seed": 3, "n_images": 2}))
        result = _invoke(
            runner, ["synth", "--spec", str(spec), "--out", str(tmp_path / "w")]
        )
        assert result.exit_code == 0
        assert (tmp_path / "w" / "bank" / "manifest.json").is_file()
        assert (tmp_path / "w" / "proposals.jsonl").is_file()
        assert (tmp_path / "w" / "gt.json").is_file()

    def test_synth_seed_override(self, runner, tmp_path):
        _invoke(runner, ["synth", "--seed", "7", "--out", str(tmp_path / "w")])
        doc = json.loads((tmp_path / "w" / "world.json").read_text())
        assert doc["seed"] == 7

    def test_inspect_bank_reports_clean(self, runner, world_dir):
        result = _invoke(runner, ["inspect", "--bank", str(world_dir / "bank")])
        assert result.exit_code == 0
        doc = json.loads(result.stdout)
        assert doc["violations"] == []
        assert doc["dim"] == 64
        assert doc["n_classes"] == 8

    def test_inspect_proposals(self, runner, world_dir):
        result = _invoke(runner, ["inspect", "--proposals", str(world_dir / "proposals.jsonl")])
        assert result.exit_code == 0
        doc = json.loads(result.stdout)
        assert doc["n_proposals"] == 48
        assert doc["n_images"] == 4

    def test_inspect_requires_exactly_one_target(self, runner):
        result = runner.invoke(main, ["inspect"])
        assert result.exit_code == 2

    def test_inspect_surfaces_violations(self, runner, tmp_path):
        rng = np.random.default_rng(70)
        save_bank(make_raw_bank(rng, n_classes=1, views=1, d=4), tmp_path / "bank")
        blob = next((tmp_path / "bank" / "blobs").glob("*_cls.f32"))
        payload = np.frombuffer(blob.read_bytes(), dtype="<f4").copy()
        payload[0] = np.nan
        blob.write_bytes(payload.tobytes())
        result = runner.invoke(main, ["inspect", "--bank", str(tmp_path / "bank")])
        assert result.exit_code == 3
        doc = json.loads(result.stdout)
        assert any("non-finite" in v for v in doc["violations"])


class TestPool:
    def test_pool_and_ratio(self, runner, world_dir, tmp_path):
        result = _invoke(
            runner,
            ["pool", "--bank", str(world_dir / "bank"), "--e", "1.5", "--out", str(tmp_path / "pooled")],
        )
        assert result.exit_code == 0
        report = json.loads(result.stdout)
        # 4 tokens per view in the default world
        assert report["savings_ratio"] == 4.0
        assert report["pooled_exponent"] == 1.5

    def test_pool_already_pooled_is_data_error(self, runner, world_dir, tmp_path):
        _invoke(runner, ["pool", "--bank", str(world_dir / "bank"), "--e", "1.5", "--out", str(tmp_path / "p")])
        result = runner.invoke(
            main, ["pool", "--bank", str(tmp_path / "p"), "--e", "1.5", "--out", str(tmp_path / "q")]
        )
        assert result.exit_code == 3
        assert "already" in result.output

    def test_pool_zero_exponent_is_flag_error(self, runner, world_dir, tmp_path):
        result = runner.invoke(
            main, ["pool", "--bank", str(world_dir / "bank"), "--e", "0", "--out", str(tmp_path / "p")]
        )
        assert result.exit_code == 2

    def test_inspect_reports_storage_drop_after_pooling(self, runner, world_dir, tmp_path):
        _invoke(runner, ["pool", "--bank", str(world_dir / "bank"), "--e", "1.5", "--out", str(tmp_path / "p")])
        raw = json.loads(_invoke(runner, ["inspect", "--bank", str(world_dir / "bank")]).stdout)
        pooled = json.loads(_invoke(runner, ["inspect", "--bank", str(tmp_path / "p")]).stdout)
        raw_per_view = raw["patch_bytes_per_view"]["obj0"][0]
        assert raw_per_view == 4 * 64 * 4
        assert pooled["patch_bytes_per_view"] == 64 * 4
        assert raw_per_view // pooled["patch_bytes_per_view"] == 4


class TestMatchAndEval:
    def test_match_then_eval(self, runner, world_dir, tmp_path):
        pred = tmp_path / "pred.json"
        result = _invoke(
            runner,
            [
                "match",
                "--bank", str(world_dir / "bank"),
                "--proposals", str(world_dir / "proposals.jsonl"),
                "--out", str(pred),
            ],
        )
        assert result.exit_code == 0
        doc = json.loads(pred.read_text())
        assert doc["config"]["scoring"]["beta"] == 0.8
        assert len(doc["predictions"]) == 48 * 8

        result = _invoke(
            runner, ["eval", "--pred", str(pred), "--gt", str(world_dir / "gt.json")]
        )
        assert result.exit_code == 0
        assert result.stdout.startswith("map 0.9")

    def test_eval_perfect_fixture_prints_map_one(self, runner, tmp_path):
        gt = {
            "format_version": 1,
            "images": ["i0"],
            "class_ids": ["a"],
            "annotations": [
                {"image_id": "i0", "class_id": "a", "bbox": [0.0, 0.0, 10.0, 10.0], "ignore": False, "mask": None}
            ],
        }
        pred = {
            "format_version": 1,
            "config": None,
            "predictions": [
                {"image_id": "i0", "proposal_id": "p0", "class_id": "a", "bbox": [0.0, 0.0, 10.0, 10.0], "score": 0.9, "mask": None}
            ],
        }
        (tmp_path / "gt.json").write_text(json.dumps(gt))
        (tmp_path / "pred.json").write_text(json.dumps(pred))
        result = _invoke(
            runner, ["eval", "--pred", str(tmp_path / "pred.json"), "--gt", str(tmp_path / "gt.json")]
        )
        assert result.stdout.strip() == "map 1.000"

    def test_eval_report_file(self, runner, world_dir, tmp_path):
        pred = tmp_path / "pred.json"
        _invoke(
            runner,
            ["match", "--bank", str(world_dir / "bank"), "--proposals", str(world_dir / "proposals.jsonl"), "--out", str(pred)],
        )
        report_path = tmp_path / "report.json"
        _invoke(
            runner,
            ["eval", "--pred", str(pred), "--gt", str(world_dir / "gt.json"), "--out", str(report_path)],
        )
        report = json.loads(report_path.read_text())
        assert len(report["iou_thresholds"]) == 10
        assert set(report["gt_counts"]) == {f"obj{i}" for i in range(8)}

    def test_match_repeated_runs_byte_identical(self, runner, world_dir, tmp_path):
        args = [
            "match",
            "--bank", str(world_dir / "bank"),
            "--proposals", str(world_dir / "proposals.jsonl"),
        ]
        _invoke(runner, args + ["--out", str(tmp_path / "a.json")])
        _invoke(runner, args + ["--out", str(tmp_path / "b.json")])
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_match_jobs_do_not_change_bytes(self, runner, world_dir, tmp_path):
        args = [
            "match",
            "--bank", str(world_dir / "bank"),
            "--proposals", str(world_dir / "proposals.jsonl"),
        ]
        _invoke(runner, args + ["--out", str(tmp_path / "a.json"), "--jobs", "1"])
        _invoke(runner, args + ["--out", str(tmp_path / "b.json"), "--jobs", "8"])
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_dump_stages(self, runner, world_dir, tmp_path):
        _invoke(
            runner,
            [
                "match",
                "--bank", str(world_dir / "bank"),
                "--proposals", str(world_dir / "proposals.jsonl"),
                "--out", str(tmp_path / "pred.json"),
                "--dump-stages", str(tmp_path / "stages"),
            ],
        )
        doc = json.loads((tmp_path / "stages" / "stages.json").read_text())
        image = doc["images"]["img0000"]
        for stage in ("abs", "rel", "joint", "final"):
            assert stage in image
        assert len(image["abs"]) == len(image["proposal_ids"])
        for row in image["rel"]:
            assert abs(sum(row) - 1.0) < 1e-9

    def test_metric_flag_changes_scores(self, runner, world_dir, tmp_path):
        args = [
            "match",
            "--bank", str(world_dir / "bank"),
            "--proposals", str(world_dir / "proposals.jsonl"),
        ]
        _invoke(runner, args + ["--out", str(tmp_path / "tan.json"), "--metric", "tanimoto"])
        _invoke(runner, args + ["--out", str(tmp_path / "cos.json"), "--metric", "cosine"])
        tan = json.loads((tmp_path / "tan.json").read_text())["predictions"]
        cos = json.loads((tmp_path / "cos.json").read_text())["predictions"]
        tan_scores = {(r["proposal_id"], r["class_id"]): r["score"] for r in tan}
        cos_scores = {(r["proposal_id"], r["class_id"]): r["score"] for r in cos}
        assert tan_scores.keys() == cos_scores.keys()
        assert any(abs(tan_scores[k] - cos_scores[k]) > 1e-6 for k in tan_scores)

    def test_beta_one_flag_equals_joint_free_run(self, runner, world_dir, tmp_path):
        args = [
            "match",
            "--bank", str(world_dir / "bank"),
            "--proposals", str(world_dir / "proposals.jsonl"),
            "--out", str(tmp_path / "p.json"),
            "--beta", "1.0",
            "--dump-stages", str(tmp_path / "stages"),
        ]
        _invoke(runner, args)
        doc = json.loads((tmp_path / "stages" / "stages.json").read_text())
        image = doc["images"]["img0000"]
        assert image["joint"] == image["abs"]

    def test_config_file_and_flag_precedence(self, runner, world_dir, tmp_path):
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps({"beta": 1.0, "gamma": 0.5}))
        _invoke(
            runner,
            [
                "match",
                "--bank", str(world_dir / "bank"),
                "--proposals", str(world_dir / "proposals.jsonl"),
                "--out", str(tmp_path / "p.json"),
                "--config", str(cfg_file),
                "--beta", "0.3",
            ],
        )
        header = json.loads((tmp_path / "p.json").read_text())["config"]["scoring"]
        assert header["beta"] == 0.3  # explicit flag wins
        assert header["gamma"] == 0.5  # config file beats default
        assert header["alpha"] == 0.5  # untouched default

    def test_unknown_config_field_rejected(self, runner, world_dir, tmp_path):
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps({"betta": 1.0}))
        result = runner.invoke(
            main,
            [
                "match",
                "--bank", str(world_dir / "bank"),
                "--proposals", str(world_dir / "proposals.jsonl"),
                "--out", str(tmp_path / "p.json"),
                "--config", str(cfg_file),
            ],
        )
        assert result.exit_code == 2

    def test_bad_flag_value_exits_2(self, runner, world_dir, tmp_path):
        result = runner.invoke(
            main,
            [
                "match",
                "--bank", str(world_dir / "bank"),
                "--proposals", str(world_dir / "proposals.jsonl"),
                "--out", str(tmp_path / "p.json"),
                "--tau", "0",
            ],
        )
        assert result.exit_code == 2

    def test_unknown_flag_exits_2(self, runner):
        result = runner.invoke(main, ["match", "--frobnicate"])
        assert result.exit_code == 2

    def test_missing_proposals_file_exits_4(self, runner, world_dir, tmp_path):
        result = runner.invoke(
            main,
            [
                "match",
                "--bank", str(world_dir / "bank"),
                "--proposals", str(tmp_path / "ghost.jsonl"),
                "--out", str(tmp_path / "p.json"),
            ],
        )
        assert result.exit_code == 4

    def test_corrupt_bank_exits_3(self, runner, world_dir, tmp_path):
        result = runner.invoke(
            main,
            [
                "match",
                "--bank", str(tmp_path),
                "--proposals", str(world_dir / "proposals.jsonl"),
                "--out", str(tmp_path / "p.json"),
            ],
        )
        assert result.exit_code == 3


class TestAblate:
    def test_ladder_table(self, runner, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"seed": 1, "n_images": 6, "clutter_rate": 0.4, "proposal_noise": 0.5}))
        result = _invoke(runner, ["ablate", "--spec", str(spec)])
        assert result.exit_code == 0
        lines = [l for l in result.stdout.splitlines() if l.startswith("|")]
        assert len(lines) == 7  # header + separator + 5 rows
        assert "objectness prior" in lines[-1]

    def test_prior_row_not_below_joint_row(self, runner, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(
            json.dumps({"seed": 0, "clutter_rate": 0.4, "proposal_noise": 0.5, "hard_negative_rate": 0.0})
        )
        result = _invoke(runner, ["ablate", "--spec", str(spec)])
        rows = [l.split("|") for l in result.stdout.splitlines() if l.startswith("|")][2:]
        values = {cells[1].strip(): float(cells[2]) for cells in rows}
        assert values["+ objectness prior"] >= values["+ joint score"]

    def test_pooling_grid(self, runner, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"seed": 1, "n_images": 4}))
        result = _invoke(runner, ["ablate", "--spec", str(spec), "--grid", "pooling"])
        assert "cls + patch (gem)" in result.stdout
