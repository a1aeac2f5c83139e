import math

import numpy as np
import pytest

from toolforge import editor
from toolforge.errors import (EditError, GridTooLarge, MissingDimension, NonPositiveDimension,
                              ScaleOutOfRange, UnknownFeature)


def interior_angle(tool, part_a, part_b) -> float:
    """Angle between part_a's axis pointing back to its start and part_b's long axis."""
    back = -tool.part(part_a).R[:, 0]
    ahead = tool.part(part_b).R[:, 0]
    return math.degrees(math.acos(np.clip(back @ ahead, -1, 1)))


def test_stick_defaults(stick) -> None:
    assert stick.part_names == ("shaft", "blade")
    assert [k.name for k in stick.keypoints] == ["handle", "tip"]
    assert stick.edited_features() == ()
    assert stick.features["blade_shaft_angle"].default == 120.0


def test_platform_defaults(platform) -> None:
    box = platform.part("body").shape
    assert (box.w, box.d, box.h) == (0.4, 0.4, 0.3)
    assert platform.keypoints == ()


def test_scoop_head_angle_from_poses(scoop) -> None:
    assert interior_angle(scoop, "handle", "head") == pytest.approx(160.0, abs=1e-9)


def test_missing_and_bad_dimensions() -> None:
    dims = editor.default_dimensions("stick")
    with pytest.raises(MissingDimension):
        editor.make_source_tool("stick", {k: v for k, v in dims.items() if k != "mass_kg"})
    with pytest.raises(NonPositiveDimension):
        editor.make_source_tool("stick", {**dims, "shaft_length": 0.0})
    with pytest.raises(EditError):
        editor.make_source_tool("stick", {**dims, "colour": 1.0})
    with pytest.raises(EditError):
        editor.get_family("spoon")


def test_shaft_length_doubles(stick) -> None:
    long = editor.apply_edit(stick, "shaft_length", 2.0)
    assert long.part("shaft").shape.length == pytest.approx(2 * stick.part("shaft").shape.length)
    # the shaft runs from the handle end at x=0; the blade moves with the far end
    assert long.keypoint_position("handle") == pytest.approx((0.0, 0.0, 0.0))
    shift = np.subtract(long.keypoint_position("tip"), stick.keypoint_position("tip"))
    np.testing.assert_allclose(shift, (0.6, 0.0, 0.0), atol=1e-12)


def test_default_edit_is_identity(stick, scoop, platform) -> None:
    for tool in (stick, scoop, platform):
        for name, f in tool.features.items():
            assert editor.apply_edit(tool, name, f.default) is tool


def test_angle_edit_geometry(stick) -> None:
    hook = editor.apply_edit(stick, "blade_shaft_angle", 90.0)
    assert interior_angle(hook, "shaft", "blade") == pytest.approx(90.0, abs=1e-9)
    straight = editor.apply_edit(stick, "blade_shaft_angle", 180.0)
    assert interior_angle(straight, "shaft", "blade") == pytest.approx(180.0, abs=1e-6)


def test_edit_errors(stick) -> None:
    with pytest.raises(UnknownFeature):
        editor.apply_edit(stick, "blade_color", 1.0)
    with pytest.raises(ScaleOutOfRange):
        editor.apply_edit(stick, "shaft_length", 3.0)
    with pytest.raises(ScaleOutOfRange):
        editor.apply_edit(stick, "shaft_length", float("nan"))


def test_range_round_off_snaps(stick) -> None:
    t = editor.apply_edit(stick, "shaft_length", 2.5 + 1e-12)
    assert t.feature_assignment["shaft_length"] == 2.5


def test_apply_edits_order_free(stick) -> None:
    a = editor.apply_edits(stick, [("shaft_length", 1.5), ("mass", 2.0)])
    b = editor.apply_edits(stick, [("mass", 2.0), ("shaft_length", 1.5)])
    assert a == b
    assert a.mass_kg == pytest.approx(1.6)
    assert a.part("shaft").shape.length == pytest.approx(0.9)
    assert editor.apply_edits(stick, []) is stick
    assert editor.with_defaults(a) == stick


def test_mass_edit_leaves_geometry(stick) -> None:
    heavy = editor.apply_edit(stick, "mass", 3.0)
    assert heavy.to_dict()["parts"] == stick.to_dict()["parts"]
    c1 = editor.tool_to_cloud(heavy, 300, 1)
    c2 = editor.tool_to_cloud(stick, 300, 1)
    assert c1 == c2


def test_intervention_dataset(stick) -> None:
    grid = {n: f.grid(9) for n, f in stick.features.items()}
    rows = editor.intervention_dataset(stick, list(stick.features), grid)
    assert len(rows) == 63
    for feature, scale, tool in rows:
        assert set(tool.edited_features()) <= {feature}
        assert tool.feature_assignment[feature] == scale
        assert tool.mass_kg > 0 and all(p.area() > 0 for _, p in tool.parts)


def test_combination_counts(stick) -> None:
    feats = ["shaft_length", "blade_length", "mass"]
    grid = {f: stick.features[f].grid(4) for f in feats}
    assert len(editor.combination_grid(stick, feats, grid, 100)) == 64
    five = ["shaft_length", "blade_length", "blade_width", "blade_thickness", "mass"]
    grid9 = {f: stick.features[f].grid(9) for f in five}
    with pytest.raises(GridTooLarge) as err:
        list(editor.combination_assignments(five, grid9, 10000))
    assert (err.value.actual, err.value.maximum) == (59049, 10000)


def test_uniform_grid_endpoints() -> None:
    g = editor.uniform_grid(0.5, 2.5, 9)
    assert g[0] == 0.5 and g[-1] == 2.5 and len(g) == 9
    assert np.all(np.diff(g) > 0)


def test_round_trip_dict(scoop) -> None:
    t = editor.apply_edits(scoop, [("head_width", 2.0), ("handle_to_head_angle", 130.0)])
    assert editor.ToolModel.from_dict(t.to_dict()) == t


def test_platform_area_coupling(platform) -> None:
    t = editor.apply_edit(platform, "top_surface_area", 2.25)
    box = t.part("body").shape
    assert box.w * box.d == pytest.approx(2.25 * 0.16)
    assert box.w / box.d == pytest.approx(1.0)
    m = t.measured_values()
    assert m["top_surface_area"] == pytest.approx(m["footprint_width"] * m["footprint_depth"])


def test_scoop_curvature_saturates(scoop) -> None:
    # nominal depth 0.012, half width 0.025: at head_width 0.5 the bowl is capped
    t = editor.apply_edits(scoop, [("head_width", 0.5), ("head_bowl_curvature", 2.0)])
    assert t.part("head").shape.curvature_depth == pytest.approx(0.0125)
    assert t.measured_values()["head_bowl_curvature"] == pytest.approx(0.0125 / 0.012)


def test_tool_cloud_labels_and_counts(stick) -> None:
    cloud = editor.tool_to_cloud(stick, 1000, 3)
    counts = {n: len(cloud.select(n)) for n in stick.part_names}
    areas = [p.area() for _, p in stick.parts]
    assert list(counts.values()) == editor.apportion(areas, 1000)


def test_apportion_sums() -> None:
    assert editor.apportion([1, 1, 1], 10) == [4, 3, 3]
    assert sum(editor.apportion([0.3, 2.0, 5.5], 997)) == 997
