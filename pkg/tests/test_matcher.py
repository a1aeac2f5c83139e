import json
import math

import numpy as np
import pytest

from conftest import default_report, source
from toolforge import editor, geometry, matcher, targets, tasks
from toolforge.errors import (MatchError, MissingPhysicalMeasurement, MissingRange,
                              NoCausalFeatures, NoKeypoints)

STICK_GEO = ["shaft_length", "shaft_diameter", "blade_length", "blade_shaft_angle"]


def fit(tool, target, feats, **kw):
    kw = {"cloud_n": 1024, "passes": 2, **kw}
    return matcher.morph_match(tool, feats, target, **kw)


def test_self_match(stick) -> None:
    target = editor.tool_to_cloud(stick, 1024, 77)
    m = fit(stick, target, STICK_GEO, refine_passes=4)
    for f in STICK_GEO:
        assert matcher.within_one_step(m.assignment[f], stick.feature_assignment[f],
                                       stick.features[f], 15)
    # the defaults are off the 15-point grid, so allow the acceptance bound of 2x
    assert m.residual < 2 * matcher.self_noise_bound(stick, 1024)


def test_recovers_longer_shaft(stick) -> None:
    target, truth = targets.family_target("stick", {"shaft_length": 1.4}, 1024, 5,
                                          offset=(0.3, -1.0, 2.0))
    m = fit(stick, target, STICK_GEO)
    assert matcher.within_one_step(m.assignment["shaft_length"], 1.4,
                                   stick.features["shaft_length"], 15)
    np.testing.assert_allclose(m.offset, (0.3, -1.0, 2.0), atol=0.05)


def test_residuals_never_increase(scoop) -> None:
    target, _ = targets.family_target("scoop", {"head_width": 1.8, "handle_length": 0.7},
                                      1024, 3)
    m = fit(scoop, target, ["handle_length", "head_width", "head_length"], passes=3,
            refine_passes=2)
    r = m.pass_residuals
    assert all(b <= a for a, b in zip(r, r[1:]))
    assert m.residual == r[-1]


def test_physical_features_are_not_fitted(stick) -> None:
    target = editor.tool_to_cloud(stick, 512, 1)
    m = fit(stick, target, ["shaft_length", "mass"], cloud_n=512)
    assert set(m.assignment) == {"shaft_length"}


def test_match_is_deterministic_across_jobs(stick) -> None:
    target, _ = targets.family_target("stick", {"blade_shaft_angle": 90.0}, 512, 2)
    a = fit(stick, target, STICK_GEO, cloud_n=512)
    b = fit(stick, target, STICK_GEO, cloud_n=512, jobs=3)
    assert a.to_dict() == b.to_dict()


def test_match_errors(stick) -> None:
    target = editor.tool_to_cloud(stick, 64, 1)
    with pytest.raises(NoCausalFeatures):
        matcher.morph_match(stick, [], target)
    with pytest.raises(MatchError):
        matcher.morph_match(stick, ["shaft_length"], target, passes=0)
    with pytest.raises(MatchError):
        matcher.morph_match(stick, ["shaft_length"], target, samples_per_feature=2)
    with pytest.raises(MatchError):
        matcher.morph_match(stick, ["head_width"], target)


def test_open_box_height_is_underestimated() -> None:
    rep = default_report("step_reach")
    src = source("platform")
    cloud = targets.open_box_cloud(0.4, 0.4, 0.36, 2048, 5)
    m = matcher.morph_match(src, rep.causal_features, cloud, cloud_n=2048, passes=2,
                            refine_passes=2)
    fitted = m.matched_tool.part("body").shape.h
    assert fitted < 0.36 - 2 * geometry.sampling_resolution(5 * 0.4 * 0.36 + 0.16, 2048)


def matched(tool, feats):
    """A perfect match: the tool itself, fitted features at their values."""
    return matcher.MatchResult({f: tool.feature_assignment[f] for f in feats}, 0.0, [],
                               tool, (0.0, 0.0, 0.0), [0.0], 1)


def test_classify_suitable() -> None:
    rep = default_report("pull")
    geo = [f for f in rep.causal_features if f != "mass"]
    v = matcher.classify_target(matched(source("stick"), geo), rep, measured_mass_kg=0.8)
    assert v.suitable and v.failing == []
    assert all("within range" in p["reason"] for p in v.per_feature.values())


def test_classify_crowbar_rejected_for_mass() -> None:
    rep = default_report("pull")
    geo = [f for f in rep.causal_features if f != "mass"]
    v = matcher.classify_target(matched(source("stick"), geo), rep, measured_mass_kg=3.6)
    assert not v.suitable and v.failing == ["mass"]
    assert "mass" in v.explanation and "above working range" in v.explanation


def test_classify_one_geometric_failure() -> None:
    rep = default_report("pull")
    geo = [f for f in rep.causal_features if f != "mass"]
    lo = rep.working_ranges["blade_shaft_angle"][1]
    tool = editor.apply_edit(source("stick"), "blade_shaft_angle", lo + 7.5)
    v = matcher.classify_target(matched(tool, geo), rep, measured_mass_kg=0.8)
    assert v.failing == ["blade_shaft_angle"]


def test_classify_errors() -> None:
    rep = default_report("pull")
    geo = [f for f in rep.causal_features if f != "mass"]
    with pytest.raises(MissingPhysicalMeasurement):
        matcher.classify_target(matched(source("stick"), geo), rep)
    with pytest.raises(MissingRange):
        matcher.classify_target(matched(source("stick"), geo + ["blade_width"]), rep,
                                measured_mass_kg=0.8)


def test_open_range_end_accepts_coupled_values() -> None:
    rep = default_report("step_reach")
    src = source("platform")
    # area 2.25 with depth 2.0 measures depth 3.0, past the scale bound 2.5
    tool = editor.apply_edits(src, [("top_surface_area", 2.25), ("footprint_depth", 2.0),
                                    ("footprint_width", 0.5)])
    assert tool.measured_values()["footprint_depth"] > 2.5
    assert rep.working_ranges["footprint_depth"][1] == 2.5
    v = matcher.classify_target(matched(tool, rep.causal_features), rep)
    assert v.per_feature["footprint_depth"]["in_range"]
    assert "open end" in v.per_feature["footprint_depth"]["reason"]
    assert v.suitable == tasks.evaluate(tasks.default_task("step_reach"), tool).success


def test_judge_value_closed_range() -> None:
    assert matcher.judge_value("x", 1.0, (1.0, 2.0))[0]
    assert not matcher.judge_value("x", 0.99, (1.0, 2.0))[0]
    assert matcher.judge_value("x", 0.99, (1.0, 2.0), open_lo=True)[0]


def test_physical_values(stick) -> None:
    assert matcher.physical_values(stick, 1.6) == {"mass": 2.0}
    assert matcher.physical_values(stick, None, {"mass": 1.5}) == {"mass": 1.5}


def test_self_transfer(stick) -> None:
    cloud = editor.tool_to_cloud(stick, 2048, 4)
    res = matcher.sampling_resolution(stick, 2048)
    for name, point, dist in matcher.transfer_keypoints(stick, cloud, (0.0, 0.0, 0.0)):
        assert math.dist(point, stick.keypoint_position(name)) == dist
        assert dist <= res


def test_transfer_to_longer_stick(stick) -> None:
    target, truth = targets.family_target("stick", {"shaft_length": 1.6}, 2048, 6,
                                          offset=(1.0, 0.0, 0.0))
    m = fit(stick, target, STICK_GEO, cloud_n=2048, refine_passes=2)
    kp = dict((n, p) for n, p, _ in matcher.transfer_keypoints(m.matched_tool, target, m.offset))
    want = np.add(truth.keypoint_position("handle"), (1.0, 0.0, 0.0))
    assert math.dist(kp["handle"], want) <= 2 * matcher.sampling_resolution(truth, 2048)


def test_transfer_single_point_and_errors(stick, platform) -> None:
    one = geometry.PointCloud([(5.0, 5.0, 5.0)])
    out = matcher.transfer_keypoints(stick, one)
    assert [p for _, p, _ in out] == [(5.0, 5.0, 5.0)] * 2
    with pytest.raises(NoKeypoints):
        matcher.transfer_keypoints(platform, one)


def boundary_case(width_scale):
    rep = default_report("step_reach")
    src = source("platform")
    tool = editor.apply_edit(src, "footprint_width", width_scale)
    cloud = editor.tool_to_cloud(tool, 1024, 8)
    m = fit(src, cloud, rep.causal_features)
    return matcher.boundary_comparison(cloud, rep, src, "footprint_width", m, cloud_n=1024,
                                       judge=matcher.ExtentJudge())


def test_boundary_between_and_below() -> None:
    inside = boundary_case(1.0)
    assert inside.numeric_judgment and inside.judge_judgment and not inside.disagreement
    above = boundary_case(2.25)
    assert not above.numeric_judgment and above.judge_judgment is False


def test_boundary_disagreement_on_open_box(tmp_path) -> None:
    # 0.48 m is 1.6x nominal height, above the range; the solid fit sinks into the box
    rep = default_report("step_reach")
    src = source("platform")
    cloud = targets.open_box_cloud(0.4, 0.4, 0.48, 2048, 5)
    m = matcher.morph_match(src, rep.causal_features, cloud, cloud_n=2048, passes=2,
                            refine_passes=2)
    comp = matcher.boundary_comparison(cloud, rep, src, "overall_height", m, cloud_n=2048,
                                       judge=matcher.ExtentJudge())
    assert comp.numeric_judgment and comp.judge_judgment is False and comp.disagreement
    matcher.write_boundary_comparison(comp, tmp_path, image=True)
    doc = json.loads((tmp_path / "overall_height_boundary.json").read_text())
    assert doc["disagreement"] is True
    for tag in ("target", "lo", "hi"):
        assert len(geometry.read_xyz(tmp_path / f"overall_height_{tag}.xyz")) > 0
    assert (tmp_path / "overall_height.ppm").read_bytes().startswith(b"P6")


def test_extent_judge_abstains() -> None:
    rep = default_report("pull")
    src = source("stick")
    m = matched(src, ["blade_shaft_angle"])
    cloud = editor.tool_to_cloud(src, 256, 0)
    comp = matcher.boundary_comparison(cloud, rep, src, "blade_shaft_angle", m, cloud_n=256,
                                       judge=matcher.ExtentJudge())
    assert comp.judge_judgment is None and not comp.disagreement
