"""Morph matching of the source tool onto a target cloud, and classification.

Coordinate descent over the causal geometric features: each feature's
range is line-searched on a uniform grid, the candidate whose cloud has
the lowest Chamfer distance to the target is kept, and the next feature
is searched from there. Candidate clouds are centroid-aligned onto the
target before every comparison.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geometry
from .editor import ToolModel, apply_edit, apply_edits, tool_to_cloud, uniform_grid
from .errors import (MatchError, MissingPhysicalMeasurement, MissingRange, NoCausalFeatures,
                     NoKeypoints)
from .seeding import ordered_map

IN_RANGE_TOL = 1e-12


@dataclass
class MatchResult:
    assignment: dict              # causal geometric feature -> fitted value
    residual: float
    trace: list
    matched_tool: ToolModel
    offset: tuple                 # add to tool-frame points to land in the target frame
    pass_residuals: list = field(default_factory=list)
    evaluations: int = 0

    @property
    def measured(self):
        """Fitted features as read back from the matched shape."""
        m = self.matched_tool.measured_values()
        return {f: float(m[f]) for f in self.assignment}

    def to_dict(self):
        return {"assignment": dict(self.assignment), "measured": self.measured,
                "residual": self.residual,
                "offset": list(self.offset), "pass_residuals": list(self.pass_residuals),
                "evaluations": self.evaluations, "trace": self.trace,
                "matched_tool": self.matched_tool.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(dict(d["assignment"]), d["residual"], list(d["trace"]),
                   ToolModel.from_dict(d["matched_tool"]), tuple(d["offset"]),
                   list(d.get("pass_residuals", [])), d.get("evaluations", 0))


class _Scorer:
    """Chamfer distance of a candidate assignment to the target, memoised."""

    def __init__(self, source, target, cloud_n, seed, view):
        self.source, self.target = source, target
        self.cloud_n, self.seed, self.view = cloud_n, seed, view
        self.centroid = target.centroid()
        self.cache = {}

    def __call__(self, assignment):
        key = tuple(sorted(assignment.items()))
        hit = self.cache.get(key)
        if hit is None:
            tool = apply_edits(self.source, key)
            cloud = tool_to_cloud(tool, self.cloud_n, self.seed, self.view)
            shift = self.centroid - cloud.centroid()
            aligned = cloud.translated(shift)
            hit = (geometry.chamfer_distance(aligned, self.target), tuple(float(v) for v in shift))
            self.cache[key] = hit
        return hit


def _line(spec, samples):
    return uniform_grid(spec.lo, spec.hi, samples)


def _refine_line(spec, centre, half, samples):
    lo, hi = max(spec.lo, centre - half), min(spec.hi, centre + half)
    pts = set(uniform_grid(lo, hi, samples | 1)) if hi > lo else set()
    pts.add(centre)
    return sorted(pts)


def _pattern_move(source, feats, start, current, score, trace, p):
    # try repeating the whole sweep's displacement once (Hooke-Jeeves step)
    trial = {}
    for f in feats:
        spec = source.features[f]
        trial[f] = min(spec.hi, max(spec.lo, 2 * current[f] - start[f]))
    if trial == current:
        return
    before, after = score(current)[0], score(trial)[0]
    trace.append({"pass": p, "mode": "pattern", "tried": dict(trial),
                  "chamfer": after, "accepted": after < before})
    if after < before:
        current.update(trial)


def morph_match(source, causal_features, target, samples_per_feature=15, passes=2,
                cloud_n=4096, seed=0, view=None, refine_passes=0, jobs=1,
                symmetry_plane=None, refine_samples=5, max_refine_sweeps=None,
                pattern_moves=True) -> MatchResult:
    """Fit the source's causal geometric features to ``target`` by coordinate descent.

    Up to ``passes`` sweeps try every feature over its full-range grid
    (stopping early once a sweep changes nothing). Refine sweeps then try
    ``refine_samples`` values in a window of one grid step around the
    current value; the window is halved after a sweep that changes nothing,
    ``refine_passes`` times in all, with at most ``max_refine_sweeps``
    refine sweeps (default three per halving). Physical features are
    skipped: they cannot be seen in a point cloud.
    """
    if not causal_features:
        raise NoCausalFeatures("morph matching needs at least one causal feature")
    if passes < 1:
        raise MatchError("passes must be >= 1")
    if samples_per_feature < 3 or refine_samples < 3:
        raise MatchError("samples_per_feature and refine_samples must be >= 3")
    target.require_points()
    if symmetry_plane is not None:
        target = geometry.mirror_complete(target, *symmetry_plane)
    feats = []
    for f in causal_features:
        if f not in source.features:
            raise MatchError(f"{f!r} is not a {source.family} feature")
        if source.features[f].kind == "geometric":
            feats.append(f)
    score = _Scorer(source, target, cloud_n, seed, view)
    current = {f: source.feature_assignment[f] for f in feats}
    trace, pass_residuals = [], []
    best_val, offset = score(current)

    def sweep(p, mode, level):
        nonlocal best_val, offset
        moved = False
        for f in feats:
            spec = source.features[f]
            if mode == "full":
                tried = _line(spec, samples_per_feature)
            else:
                step = (spec.hi - spec.lo) / (samples_per_feature - 1)
                tried = _refine_line(spec, current[f], step / 2 ** level, refine_samples)
            results = ordered_map(lambda s: score({**current, f: s}), tried, jobs)
            values = [v for v, _ in results]
            i = int(np.argmin(values))        # first minimum = lowest scale on ties
            moved |= tried[i] != current[f]
            current[f] = tried[i]
            best_val, offset = results[i]
            trace.append({"pass": p, "mode": mode, "feature": f, "tried": list(tried),
                          "chamfer": values, "chosen": tried[i]})
        pass_residuals.append(best_val)
        return moved

    p = 0
    for _ in range(passes if feats else 0):
        p += 1
        start = dict(current)
        if not sweep(p - 1, "full", None):
            if p > 1:
                break                         # a full sweep changed nothing
        elif pattern_moves and p > 1:
            _pattern_move(source, feats, start, current, score, trace, p - 1)
            best_val, offset = score(current)
            pass_residuals[-1] = best_val
    # refine: keep the window while sweeps still move, halve it when they stall
    level = 0
    budget = 3 * refine_passes if max_refine_sweeps is None else max_refine_sweeps
    while feats and level < refine_passes and budget > 0:
        start = dict(current)
        moved = sweep(p, "refine", level)
        p += 1
        budget -= 1
        if not moved:
            level += 1
        elif pattern_moves:
            _pattern_move(source, feats, start, current, score, trace, p - 1)
            best_val, offset = score(current)
            pass_residuals[-1] = best_val
    if not feats:
        pass_residuals.append(best_val)
    matched = apply_edits(source, sorted(current.items()))
    return MatchResult(dict(current), best_val, trace, matched, offset, pass_residuals,
                       len(score.cache))


# --- classification ----------------------------------------------------------


@dataclass
class Verdict:
    suitable: bool
    per_feature: dict            # feature -> {value, range, in_range, reason}
    explanation: str

    def to_dict(self):
        return {"suitable": self.suitable,
                "per_feature": {k: dict(v, range=list(v["range"])) for k, v in
                                self.per_feature.items()},
                "explanation": self.explanation}

    @property
    def failing(self):
        return [f for f, v in self.per_feature.items() if not v["in_range"]]


def _fmt(x):
    return f"{x:.4g}"


def judge_value(feature, value, value_range, open_lo=False, open_hi=False):
    lo, hi = value_range
    span = f"[{_fmt(lo)}, {_fmt(hi)}]"
    if value < lo - IN_RANGE_TOL:
        if open_lo:
            return True, f"{feature} = {_fmt(value)} below the scanned end of {span} (open end)"
        return False, f"{feature} = {_fmt(value)} below working range {span}"
    if value > hi + IN_RANGE_TOL:
        if open_hi:
            return True, f"{feature} = {_fmt(value)} above the scanned end of {span} (open end)"
        return False, f"{feature} = {_fmt(value)} above working range {span}"
    return True, f"{feature} = {_fmt(value)} within range {span}"


def physical_values(source, measured_mass_kg=None, measurements=None):
    """Translate external measurements into feature values of ``source``'s family."""
    out = dict(measurements or {})
    if measured_mass_kg is not None:
        out["mass"] = measured_mass_kg / (source.nominal["mass_kg"])
    return out


def classify_target(match, report, measured_mass_kg=None, measurements=None, features=None):
    """Check each causal feature's inferred value against its working range.

    ``features`` restricts the check to a subset (ablations); physical
    features need an external measurement, mass given in kilograms.
    """
    ranges = report.working_ranges
    for f in match.assignment:
        if f not in ranges:
            raise MissingRange(f"no working range for matched feature {f!r}")
    check = list(ranges) if features is None else list(features)
    tool = match.matched_tool
    physical = physical_values(tool, measured_mass_kg, measurements)
    # read back from the fitted shape so coupled features are judged by
    # what the geometry shows, not by how the fit happened to compose it
    geometric = tool.measured_values()
    per = {}
    for f in sorted(check, key=lambda n: list(tool.features).index(n)):
        if f not in ranges:
            raise MissingRange(f"no working range for feature {f!r}")
        spec = tool.features[f]
        if spec.kind == "physical":
            if f not in physical:
                what = "measured_mass_kg" if f == "mass" else f"measurement of {f!r}"
                raise MissingPhysicalMeasurement(f"{f} is causal; supply {what}")
            value = float(physical[f])
        else:
            if f not in match.assignment:
                raise MatchError(f"causal feature {f!r} was not fitted by the matcher")
            value = float(geometric[f])
        ok, reason = judge_value(f, value, ranges[f], *spec.open_ends(ranges[f]))
        per[f] = {"value": value, "range": tuple(ranges[f]), "in_range": ok, "reason": reason}
    suitable = all(v["in_range"] for v in per.values())
    bad = [v["reason"] for v in per.values() if not v["in_range"]]
    if suitable:
        explanation = f"suitable: all {len(per)} causal features within their working ranges"
    else:
        explanation = "unsuitable: " + "; ".join(bad)
    return Verdict(suitable, per, explanation)


# --- keypoints ---------------------------------------------------------------


def transfer_keypoints(matched_tool, target, offset=None, cloud_n=4096, seed=0):
    """Map each keypoint of ``matched_tool`` to its nearest point in ``target``.

    ``offset`` carries tool-frame points into the target frame (as stored
    on :class:`MatchResult`); without it the tool's sampled cloud is
    centroid-aligned onto the target.
    """
    if not matched_tool.keypoints:
        raise NoKeypoints(f"{matched_tool.family} tools have no keypoints")
    target.require_points()
    if offset is None:
        cloud = tool_to_cloud(matched_tool, cloud_n, seed)
        offset = tuple(target.centroid() - cloud.centroid())
    out = []
    for name, pos in matched_tool.keypoint_positions().items():
        q = np.asarray(pos) + np.asarray(offset)
        point, _, dist = geometry.nearest_point(q, target)
        out.append((name, point, dist))
    return out


# --- boundary comparison -----------------------------------------------------


@dataclass
class BoundaryComparison:
    feature: str
    target_cloud: geometry.PointCloud
    lo_cloud: geometry.PointCloud
    hi_cloud: geometry.PointCloud
    numeric_judgment: bool
    value_range: tuple
    fitted_value: float
    judge_judgment: bool | None = None
    judge_name: str | None = None

    @property
    def disagreement(self):
        return self.judge_judgment is not None and self.judge_judgment != self.numeric_judgment

    def to_dict(self):
        return {"feature": self.feature, "range": list(self.value_range),
                "fitted_value": self.fitted_value, "numeric_judgment": self.numeric_judgment,
                "judge": self.judge_name, "judge_judgment": self.judge_judgment,
                "disagreement": self.disagreement}


# which bounding-box extent a feature changes, for the extent-measuring judge
EXTENT_AXES = {
    "shaft_length": (0,), "handle_length": (0,), "overall_height": (2,),
    "footprint_width": (0,), "footprint_depth": (1,), "top_surface_area": (0, 1),
    "blade_length": (0, 1), "head_length": (0, 2), "head_width": (1,),
}


class ExtentJudge:
    """Stand-in external judge: compares bounding-box extents of the three clouds.

    It abstains (returns ``None``) for features with no extent mapping.
    """

    name = "extent"

    def measure(self, feature, cloud):
        axes = EXTENT_AXES.get(feature)
        if axes is None:
            return None
        ext = np.ptp(cloud.points, axis=0)
        return float(np.prod([ext[a] for a in axes]))

    def __call__(self, comparison):
        m = [self.measure(comparison.feature, c) for c in
             (comparison.target_cloud, comparison.lo_cloud, comparison.hi_cloud)]
        if m[0] is None:
            return None
        lo, hi = min(m[1], m[2]), max(m[1], m[2])
        return lo <= m[0] <= hi


def boundary_comparison(target, report, source, feature, match, cloud_n=4096, seed=0,
                        judge=None, view=None) -> BoundaryComparison:
    """Target cloud next to the two boundary tools of ``feature``'s working range.

    The boundary tools are the matched tool with ``feature`` set to either
    end of the range; the target is shifted into their frame.
    """
    if feature not in report.working_ranges:
        raise MissingRange(f"no working range for feature {feature!r}")
    lo, hi = report.working_ranges[feature]
    base = match.matched_tool if match is not None else source
    tool_lo, tool_hi = apply_edit(base, feature, lo), apply_edit(base, feature, hi)
    lo_cloud = tool_to_cloud(tool_lo, cloud_n, seed, view)
    hi_cloud = tool_to_cloud(tool_hi, cloud_n, seed, view)
    shift = -np.asarray(match.offset) if match is not None else np.zeros(3)
    tgt = target.translated(shift)
    value = match.measured.get(feature) if match is not None else None
    if value is None:
        raise MatchError(f"feature {feature!r} was not fitted by the matcher")
    ok, _ = judge_value(feature, value, (lo, hi), *base.features[feature].open_ends((lo, hi)))
    comp = BoundaryComparison(feature, tgt, lo_cloud, hi_cloud, ok, (lo, hi), value)
    if judge is not None:
        comp.judge_judgment = judge(comp)
        comp.judge_name = getattr(judge, "name", type(judge).__name__)
    return comp


def write_boundary_comparison(comp, out_dir, image=False, size=160):
    """Write ``<feature>_{target,lo,hi}.xyz`` (+ ``<feature>.ppm``) and a JSON record."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for tag, cloud in (("target", comp.target_cloud), ("lo", comp.lo_cloud),
                       ("hi", comp.hi_cloud)):
        geometry.write_xyz(out / f"{comp.feature}_{tag}.xyz", cloud)
    (out / f"{comp.feature}_boundary.json").write_text(
        json.dumps(comp.to_dict(), indent=2, sort_keys=True) + "\n")
    if image:
        write_ppm(out / f"{comp.feature}.ppm",
                  [comp.lo_cloud, comp.target_cloud, comp.hi_cloud], size)


def write_ppm(path, clouds, size=160, axes=(0, 2)):
    """Side-by-side orthographic projections of ``clouds`` as a binary PPM.

    All panels share one scale so extents are comparable by eye.
    """
    pts = [c.points[:, axes] for c in clouds]
    allp = np.concatenate(pts)
    lo = allp.min(axis=0)
    span = float(max(np.ptp(allp, axis=0).max(), 1e-12))
    colours = [(40, 90, 220), (220, 60, 40), (40, 90, 220)]
    img = np.full((size, size * len(pts), 3), 255, dtype=np.uint8)
    for k, p in enumerate(pts):
        uv = ((p - lo) / span * (size - 1)).astype(int)
        img[size - 1 - uv[:, 1], k * size + uv[:, 0]] = colours[k % len(colours)]
    header = f"P6 {img.shape[1]} {img.shape[0]} 255\n".encode()
    Path(path).write_bytes(header + img.tobytes())


def self_noise_bound(tool, cloud_n, seeds=(1, 2, 3, 4, 5), base_seed=0):
    """Largest Chamfer distance between two samplings of the same tool."""
    ref = tool_to_cloud(tool, cloud_n, base_seed)
    return max(geometry.chamfer_distance(ref, tool_to_cloud(tool, cloud_n, s)) for s in seeds)


def within_one_step(value, truth, spec, samples):
    step = (spec.hi - spec.lo) / (samples - 1)
    return abs(value - truth) <= step * (1 + 1e-9)


def sampling_resolution(tool, cloud_n):
    return math.sqrt(sum(p.area() for _, p in tool.parts) / cloud_n)
