import json
import os

import pytest

from toolforge import editor, geometry, pipeline
from toolforge.errors import ConfigError, MissingStageInput, StageError

FAST_MATCHER = {"samples_per_feature": 9, "passes": 2, "refine_passes": 1, "cloud_n": 512}


def stick_target(tid, **assignment):
    return {"id": tid, "generator": {"kind": "family", "family": "stick",
                                     "assignment": assignment}}


def make_cfg(out, targets=(), **extra):
    doc = {"task": {"variant": "pull"}, "source_tool": {"family": "stick"},
           "matcher": dict(FAST_MATCHER), "targets": list(targets), "master_seed": 7,
           "boundary": {"enabled": False}}
    doc.update(extra)
    return pipeline.PipelineConfig.from_dict(doc, output_dir=str(out))


def read(path):
    with open(path) as fh:
        return fh.read()


def test_empty_targets_report(tmp_path) -> None:
    doc, timings = pipeline.run_end_to_end(make_cfg(tmp_path))
    assert doc["targets"] == [] and doc["ranking"] == []
    assert doc["expansion_iterations"] == 0
    assert set(doc["causal_report"]["causal_features"]) == {
        "shaft_length", "shaft_diameter", "blade_length", "blade_shaft_angle"}
    assert {"suggest", "dataset", "discover", "report"} <= set(timings)
    assert os.path.exists(tmp_path / "timings.json")


def test_sensitivity_rows(tmp_path) -> None:
    cfg = make_cfg(tmp_path, discovery={"grid_points_per_feature": 5})
    pipeline.stage_suggest(cfg)
    pipeline.stage_dataset(cfg)
    pipeline.stage_discover(cfg)
    feats = json.loads(read(tmp_path / "features.json"))["features"]
    rows = read(tmp_path / "sensitivity.csv").strip().splitlines()
    assert len(rows) - 1 == len(feats) * 5


def test_discover_rerun_is_bit_identical(tmp_path) -> None:
    cfg = make_cfg(tmp_path)
    pipeline.stage_suggest(cfg)
    pipeline.stage_dataset(cfg)
    pipeline.stage_discover(cfg)
    first = read(tmp_path / "causal_report.json")
    pipeline.stage_discover(cfg, jobs=3)
    assert read(tmp_path / "causal_report.json") == first


def test_missing_stage_inputs(tmp_path) -> None:
    cfg = make_cfg(tmp_path, [stick_target("a")])
    with pytest.raises(MissingStageInput, match="causal_report.json"):
        pipeline.stage_classify(cfg)
    with pytest.raises(MissingStageInput, match="dataset.json"):
        pipeline.stage_discover(cfg)
    with pytest.raises(MissingStageInput, match="features.json"):
        pipeline.stage_report(cfg)


TARGETS = [stick_target("default"), stick_target("long", shaft_length=1.6),
           stick_target("short", shaft_length=0.55),
           stick_target("straight", blade_shaft_angle=175.0),
           stick_target("thick", shaft_diameter=3.5),
           stick_target("stubby_blade", blade_length=0.5),
           {**stick_target("heavy", mass=4.2)}]


def test_staged_equals_end_to_end(tmp_path) -> None:
    a = make_cfg(tmp_path / "a", TARGETS[:3])
    doc, _ = pipeline.run_end_to_end(a)
    b = make_cfg(tmp_path / "b", TARGETS[:3])
    pipeline.stage_suggest(b)
    pipeline.stage_dataset(b)
    pipeline.stage_discover(b)
    pipeline.stage_classify(b)
    pipeline.stage_transfer(b)
    staged = pipeline.stage_report(b)
    assert staged == doc
    assert read(tmp_path / "a" / "run_report.json") == read(tmp_path / "b" / "run_report.json")


def test_parallel_run_is_byte_identical(tmp_path) -> None:
    one, _ = pipeline.run_end_to_end(make_cfg(tmp_path / "one", TARGETS[:4]), jobs=1)
    many, _ = pipeline.run_end_to_end(make_cfg(tmp_path / "many", TARGETS[:4]), jobs=4)
    assert one == many
    assert read(tmp_path / "one" / "run_report.json") == read(tmp_path / "many" / "run_report.json")


def test_verdicts_match_ground_truth(tmp_path) -> None:
    # every stick feature is examined, so mass is judged from the first pass
    feats = list(editor.family_features("stick"))
    cfg = make_cfg(tmp_path, TARGETS, suggester={"features": feats},
                   matcher={**FAST_MATCHER, "cloud_n": 1024, "samples_per_feature": 15})
    doc, _ = pipeline.run_end_to_end(cfg)
    truth = {t["id"]: t["execution_success_rate"] >= 0.8 for t in doc["targets"]}
    got = {t["id"]: t["verdict"]["suitable"] for t in doc["targets"]}
    assert got == truth
    assert truth == {"default": True, "long": True, "short": False, "straight": False,
                     "thick": False, "stubby_blade": False, "heavy": False}
    why = {t["id"]: t["verdict"]["explanation"] for t in doc["targets"]}
    assert "shaft_length" in why["short"] and "blade_shaft_angle" in why["straight"]
    assert "shaft_diameter" in why["thick"] and "blade_length" in why["stubby_blade"]
    assert "mass" in why["heavy"]
    assert doc["ranking"][:2] == sorted(["default", "long"],
                                        key=lambda i: next(t["match"]["residual"]
                                                           for t in doc["targets"]
                                                           if t["id"] == i))
    text = read(tmp_path / "report.txt")
    assert "target heavy: unsuitable" in text
    for tid in truth:
        kp = json.loads(read(tmp_path / "targets" / tid / "keypoints.json"))
        assert [k["name"] for k in kp["keypoints"]] == ["handle", "tip"]


def test_mass_recovery_by_expansion(tmp_path) -> None:
    cfg = make_cfg(tmp_path, [stick_target("crowbar", mass=4.2)])
    doc, _ = pipeline.run_end_to_end(cfg)
    assert "mass" not in doc["features"]["features"][:6]
    assert doc["expansion_iterations"] == 1
    assert doc["expansions"][0]["added"] == ["mass"]
    assert "failed on execution" in doc["expansions"][0]["reason"]
    [t] = doc["targets"]
    assert not t["verdict"]["suitable"]
    assert t["verdict"]["per_feature"]["mass"]["in_range"] is False


def test_mass_verdict_before_expansion(tmp_path) -> None:
    cfg = make_cfg(tmp_path, [stick_target("crowbar", mass=4.2)],
                   expansion={"max_iterations": 0})
    doc, _ = pipeline.run_end_to_end(cfg)
    assert doc["expansion_iterations"] == 0
    assert doc["targets"][0]["verdict"]["suitable"]


def test_target_from_cloud_file(tmp_path) -> None:
    src = editor.make_source_tool("stick", editor.default_dimensions("stick"))
    geometry.write_xyz(tmp_path / "t.xyz", editor.tool_to_cloud(src, 512, 3))
    doc = {"task": {"variant": "pull"}, "source_tool": {"family": "stick"},
           "matcher": FAST_MATCHER, "boundary": {"enabled": True},
           "targets": [{"id": "scan", "cloud": "t.xyz", "measured_mass_kg": 0.8}],
           "output_dir": "out"}
    (tmp_path / "cfg.json").write_text(json.dumps(doc))
    cfg = pipeline.load_config(tmp_path / "cfg.json")
    report, _ = pipeline.run_end_to_end(cfg)
    [t] = report["targets"]
    assert t["verdict"]["suitable"] and t["execution_success_rate"] is None
    assert os.path.exists(tmp_path / "out" / "targets" / "scan" / "boundary" /
                          "shaft_length_boundary.json")


def test_missing_mass_names_the_target(tmp_path) -> None:
    src = editor.make_source_tool("stick", editor.default_dimensions("stick"))
    geometry.write_xyz(tmp_path / "t.xyz", editor.tool_to_cloud(src, 256, 3))
    cfg = pipeline.PipelineConfig.from_dict(
        {"task": {"variant": "pull"}, "source_tool": {"family": "stick"},
         "matcher": FAST_MATCHER, "suggester": {"features": list(src.features)},
         "targets": [{"id": "scan", "cloud": "t.xyz"}]},
        base_dir=str(tmp_path), output_dir=str(tmp_path / "out"))
    with pytest.raises(StageError) as err:
        pipeline.run_end_to_end(cfg)
    assert err.value.stage == "classify" and err.value.target == "scan"
    assert "measured_mass_kg" in str(err.value)


@pytest.mark.parametrize("doc,msg", [
    ({"task": {"variant": "pull"}}, "source_tool"),
    ({"task": {"variant": "pull"}, "source_tool": {"family": "scoop"}}, "does not suit"),
    ({"task": {"variant": "pull"}, "source_tool": {"family": "stick"}, "colour": 1}, "unknown"),
    ({"task": {"variant": "pull"}, "source_tool": {"family": "stick"},
      "targets": [{"id": "a", "cloud": "nowhere.xyz"}]}, "does not exist"),
    ({"task": {"variant": "pull"}, "source_tool": {"family": "stick"},
      "targets": [{"id": "a", "generator": {}}, {"id": "a", "generator": {}}]}, "unique"),
    ({"task": {"variant": "pull"}, "source_tool": {"family": "stick"},
      "targets": [{"id": "a"}]}, "needs a 'cloud'"),
    ({"task": {"variant": "pull"}, "source_tool": {"family": "stick"},
      "discovery": {"seeds": 0}}, "discovery"),
    ({"task": {"variant": "dig"}, "source_tool": {"family": "stick"}}, "variant"),
])
def test_config_errors(tmp_path, doc, msg) -> None:
    with pytest.raises(ConfigError, match=msg):
        pipeline.PipelineConfig.from_dict(doc, base_dir=str(tmp_path), output_dir=str(tmp_path))


def test_seed_override_changes_sub_seeds(tmp_path) -> None:
    a = make_cfg(tmp_path)
    b = pipeline.PipelineConfig.from_dict({"task": {"variant": "pull"},
                                           "source_tool": {"family": "stick"}},
                                          output_dir=str(tmp_path), seed=8)
    assert a.master_seed == 7 and b.master_seed == 8
    assert a.discovery.master_seed != b.discovery.master_seed


def test_shipped_configs_load() -> None:
    here = os.path.join(os.path.dirname(pipeline.__file__), "configs")
    for name in ("pull.json", "scoop.json", "step_reach.json"):
        cfg = pipeline.load_config(os.path.join(here, name), output_dir="unused")
        assert cfg.targets
    assert pipeline.config_template("scoop")["source_tool"] == {"family": "scoop"}
