import json
import subprocess
import sys

from toolforge import cli


def write_config(tmp_path, **extra):
    doc = {"task": {"variant": "step_reach"}, "source_tool": {"family": "platform"},
           "matcher": {"samples_per_feature": 9, "passes": 1, "cloud_n": 256},
           "targets": [{"id": "stool", "generator": {"kind": "family", "family": "platform",
                                                     "assignment": {"overall_height": 1.2}}}],
           "output_dir": "out"}
    doc.update(extra)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc))
    return str(path)


def test_run_succeeds(tmp_path) -> None:
    cfg = write_config(tmp_path)
    assert cli.main(["run", "--config", cfg, "--jobs", "2"]) == 0
    report = json.loads((tmp_path / "out" / "run_report.json").read_text())
    assert [t["id"] for t in report["targets"]] == ["stool"]


def test_stages_and_out_override(tmp_path) -> None:
    cfg = write_config(tmp_path)
    out = str(tmp_path / "elsewhere")
    for stage in ("suggest", "dataset", "discover", "classify", "transfer", "report"):
        assert cli.main([stage, "--config", cfg, "--out", out, "--seed", "3"]) == 0
    report = json.loads((tmp_path / "elsewhere" / "run_report.json").read_text())
    assert report["master_seed"] == 3


def test_config_error_exit_code(tmp_path, capsys) -> None:
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["run", "--config", str(bad)]) == 2
    assert cli.main(["run", "--config", str(tmp_path / "missing.json")]) == 2
    assert cli.main(["run", "--config", write_config(tmp_path, bogus=1)]) == 2
    assert "config error" in capsys.readouterr().err


def test_stage_error_exit_code(tmp_path, capsys) -> None:
    cfg = write_config(tmp_path)
    assert cli.main(["classify", "--config", cfg]) == 3
    assert "causal_report.json" in capsys.readouterr().err


def test_module_entry_point(tmp_path) -> None:
    res = subprocess.run([sys.executable, "-m", "toolforge.cli", "--help"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "discover" in res.stdout
