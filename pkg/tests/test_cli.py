import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from synoe.cli import load_config_file, main, resolve_settings


@pytest.fixture
def runner():
    return CliRunner()


def invoke(runner, *args):
    return runner.invoke(main, [str(a) for a in args], catch_exceptions=False)


def generate(runner, src, out, *extra):
    return invoke(
        runner, "generate", "--input", src, "--out", out,
        "--variant", "V1", "--seed", "3", "--mock", *extra,
    )


class TestValidate:
    def test_valid_dataset(self, runner, street_dataset):
        src = street_dataset(2)
        result = invoke(runner, "validate", "--manifest", src)
        assert result.exit_code == 0
        body = json.loads(result.output)
        assert body["valid"] is True
        assert body["images"] == 2

    def test_missing_file_exits_1(self, runner, tmp_path):
        result = runner.invoke(main, ["validate", "--manifest", str(tmp_path / "nope.json")])
        assert result.exit_code == 1

    def test_malformed_file_exits_1(self, runner, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{oops")
        result = runner.invoke(main, ["validate", "--manifest", str(bad)])
        assert result.exit_code == 1

    def test_unexpected_crash_exits_2(self, runner, street_dataset, monkeypatch):
        import synoe.cli

        def boom(*a, **k):
            raise RuntimeError("wires crossed")

        monkeypatch.setattr(synoe.cli, "load_manifest", boom)
        result = runner.invoke(main, ["validate", "--manifest", str(street_dataset(1))])
        assert result.exit_code == 2

    def test_drop_class(self, runner, street_dataset):
        src = street_dataset(2, classes=("Car", "Truck"))
        result = invoke(runner, "validate", "--manifest", src, "--drop-class", "Truck")
        body = json.loads(result.output)
        assert "Truck" not in body["categories"]


class TestGenerate:
    def test_mock_end_to_end(self, runner, street_dataset, tmp_path):
        src = street_dataset(4, objects_per_image=(1, 1), classes=("Car",))
        out = tmp_path / "out"
        result = generate(runner, src, out)
        assert result.exit_code == 0, result.output
        summary = json.loads(result.output.splitlines()[-1])
        assert Path(summary["manifest"]).exists()
        assert Path(summary["report"]).exists()
        assert Path(summary["evidence"]).exists()
        assert summary["images_augmented"] == 4
        report = json.loads((out / "report.json").read_text())
        assert report["variant"] == "V1"
        assert report["seed"] == 3

    def test_deterministic_across_invocations(self, runner, street_dataset, tmp_path):
        src = street_dataset(3, objects_per_image=(1, 2))
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        generate(runner, src, out_a)
        generate(runner, src, out_b)
        assert (out_a / "manifest.json").read_bytes() == (out_b / "manifest.json").read_bytes()
        assert (out_a / "evidence.json").read_bytes() == (out_b / "evidence.json").read_bytes()
        assert (out_a / "report.json").read_bytes() == (out_b / "report.json").read_bytes()

    def test_requires_urls_or_mock(self, runner, street_dataset, tmp_path):
        src = street_dataset(1)
        result = runner.invoke(
            main,
            ["generate", "--input", str(src), "--out", str(tmp_path / "o"), "--variant", "V1"],
        )
        assert result.exit_code == 1
        assert "inpaint" in result.output.lower()

    def test_unknown_variant_is_usage_error(self, runner, street_dataset, tmp_path):
        result = runner.invoke(
            main,
            ["generate", "--input", str(street_dataset(1)), "--out", str(tmp_path / "o"),
             "--variant", "V9", "--mock"],
        )
        assert result.exit_code == 1
        assert "V9" in result.output

    def test_proportion_flag(self, runner, street_dataset, tmp_path):
        src = street_dataset(4)
        out = tmp_path / "out"
        generate(runner, src, out, "--proportion", "0.5")
        report = json.loads((out / "report.json").read_text())
        assert report["images_selected"] == 2

    def test_custom_prompt_file(self, runner, street_dataset, tmp_path):
        src = street_dataset(2, objects_per_image=(1, 1), classes=("Car",))
        prompts = tmp_path / "prompts.txt"
        prompts.write_text("manatee\n")
        out = tmp_path / "out"
        generate(runner, src, out, "--prompts", prompts)
        manifest = json.loads((out / "manifest.json").read_text())
        used = {a.get("prompt") for a in manifest["annotations"] if a.get("prompt")}
        assert used == {"manatee"}


class TestAudit:
    def test_audit_generated_output(self, runner, street_dataset, tmp_path):
        src = street_dataset(3, objects_per_image=(1, 1), classes=("Car",))
        out = tmp_path / "out"
        generate(runner, src, out)
        audited = tmp_path / "audited.json"
        report_path = tmp_path / "audit_report.json"
        result = invoke(
            runner, "audit", "--manifest", out / "manifest.json",
            "--out", audited, "--report", report_path,
        )
        assert result.exit_code == 0, result.output
        body = json.loads(result.output.splitlines()[-1])
        assert body["matched"] + body["ambiguous"] == body["total"] > 0
        assert audited.exists() and report_path.exists()
        audited_doc = json.loads(audited.read_text())
        states = {
            a["audit_state"]
            for a in audited_doc["annotations"]
            if a["provenance"] == "inpainted_ood"
        }
        assert "unchecked" not in states


class TestEval:
    def test_perfect_dump_scores_one(self, runner, street_dataset, tmp_path):
        src = street_dataset(2, objects_per_image=(1, 2))
        manifest = json.loads(src.read_text())
        dump = [
            {
                "image_id": a["image_id"],
                "bbox": a["bbox"],
                "category_id": a["category_id"],
                "score": 0.9,
            }
            for a in manifest["annotations"]
        ]
        dets = tmp_path / "dets.json"
        dets.write_text(json.dumps(dump))
        out = tmp_path / "metrics.json"
        result = invoke(runner, "eval", "--gt", src, "--dets", dets, "--out", out)
        assert result.exit_code == 0, result.output
        assert "mAP" in result.output
        payload = json.loads(out.read_text())
        assert payload["map_id"] == 1.0

    def test_class_agnostic_flag(self, runner, street_dataset, tmp_path):
        src = street_dataset(1, objects_per_image=(1, 1))
        dets = tmp_path / "dets.json"
        dets.write_text("[]")
        result = invoke(runner, "eval", "--gt", src, "--dets", dets, "--class-agnostic")
        assert result.exit_code == 0
        assert "agnostic" in result.output


class TestSettings:
    def test_precision_order(self, tmp_path, monkeypatch):
        cfg = tmp_path / "synoe.cfg"
        cfg.write_text(
            "# service endpoints\n"
            "inpaint_url = http://file:1\n"
            "detect_url = 'http://file:2'\n"
            "box_threshold = 0.5\n"
        )
        monkeypatch.setenv("INPAINT_URL", "http://env:1")
        settings = resolve_settings(str(cfg), None, None, None, None)
        assert settings["inpaint_url"] == "http://env:1"   # env beats file
        assert settings["detect_url"] == "http://file:2"   # file beats default
        assert settings["box_threshold"] == 0.5
        assert settings["text_threshold"] == 0.25          # default

        settings = resolve_settings(str(cfg), "http://flag:1", None, 0.7, None)
        assert settings["inpaint_url"] == "http://flag:1"  # flag beats env
        assert settings["box_threshold"] == 0.7

    def test_config_env_var_points_at_file(self, tmp_path, monkeypatch):
        cfg = tmp_path / "synoe.cfg"
        cfg.write_text("detect_url = http://cfg:9\n")
        monkeypatch.setenv("SYNOE_CONFIG", str(cfg))
        settings = resolve_settings(None, None, None, None, None)
        assert settings["detect_url"] == "http://cfg:9"

    def test_config_parse_error(self, tmp_path):
        import click

        cfg = tmp_path / "bad.cfg"
        cfg.write_text("just some words\n")
        with pytest.raises(click.UsageError, match=":1"):
            load_config_file(cfg)

    def test_thresholds_flow_into_manifest(self, runner, street_dataset, tmp_path):
        src = street_dataset(1, objects_per_image=(1, 1))
        out = tmp_path / "out"
        generate(runner, src, out, "--box-threshold", "0.6")
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["meta"]["box_threshold"] == 0.6


class TestHelp:
    def test_all_subcommands_exist(self, runner):
        result = invoke(runner, "--help")
        for cmd in ("generate", "audit", "eval", "review", "mock-services", "validate"):
            assert cmd in result.output
