"""Parametric tool families with named, bounded semantic features.

A :class:`ToolModel` is fully determined by its family, its nominal
dimensions and its current ``feature_assignment``; parts, mass, centre of
mass and keypoints are rebuilt from those three on every edit. Size
features are multiplicative scales of a nominal dimension, angle features
and ``com_height_fraction`` are absolute values.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from types import MappingProxyType

import numpy as np

from . import geometry
from .errors import (EditError, GridTooLarge, MissingDimension, NonPositiveDimension,
                     ScaleOutOfRange, UnknownFeature)
from .solids import (Box, CurvedPlate, Cylinder, IDENTITY, PartSolid, rotation_y,
                     rotation_z)

# values this close outside a range are snapped onto the bound (grid round-off)
RANGE_TOL = 1e-9


@dataclass(frozen=True)
class SemanticFeature:
    name: str
    kind: str                 # "geometric" | "physical"
    scale_range: tuple
    default: float
    absolute: bool = False    # absolute value (degrees, fraction) instead of a multiplier
    unit: str = "scale"

    def __post_init__(self):
        lo, hi = self.scale_range
        if not lo < hi:
            raise EditError(f"{self.name}: empty range [{lo}, {hi}]")
        if not lo <= self.default <= hi:
            raise EditError(f"{self.name}: default {self.default} outside [{lo}, {hi}]")
        if self.kind not in ("geometric", "physical"):
            raise EditError(f"{self.name}: unknown kind {self.kind!r}")

    @property
    def lo(self):
        return self.scale_range[0]

    @property
    def hi(self):
        return self.scale_range[1]

    def check(self, value) -> float:
        value = float(value)
        if not math.isfinite(value):
            raise ScaleOutOfRange(f"{self.name}={value} is not finite")
        span = RANGE_TOL * max(1.0, abs(self.lo), abs(self.hi))
        if value < self.lo - span or value > self.hi + span:
            raise ScaleOutOfRange(f"{self.name}={value} outside [{self.lo}, {self.hi}]")
        return min(max(value, self.lo), self.hi)

    def grid(self, k: int):
        return uniform_grid(self.lo, self.hi, k)

    def open_ends(self, value_range):
        """``(low_open, high_open)``: which ends of ``value_range`` lie on this
        feature's own bounds.

        A scan never goes past such an end, so no failure was seen beyond
        it. Coupled features can be measured outside the scale range (a
        platform's width after an area edit); values past an open end
        count as inside.
        """
        lo, hi = value_range
        tol = RANGE_TOL * max(1.0, abs(self.lo), abs(self.hi))
        return lo <= self.lo + tol, hi >= self.hi - tol

    def to_dict(self):
        return {"name": self.name, "kind": self.kind, "scale_range": list(self.scale_range),
                "default": self.default, "absolute": self.absolute, "unit": self.unit}


def uniform_grid(lo, hi, k):
    """``k`` evenly spaced values from ``lo`` to ``hi``, both endpoints exact."""
    if k < 2:
        raise ValueError("a grid needs at least 2 points")
    step = (hi - lo) / (k - 1)
    pts = [lo + i * step for i in range(k - 1)]
    return pts + [hi]


@dataclass(frozen=True)
class Keypoint:
    name: str
    part: str
    local_coords: tuple

    def to_dict(self):
        return {"name": self.name, "part": self.part, "local_coords": list(self.local_coords)}


# --- family definitions ------------------------------------------------------


class Family:
    name = ""
    dimensions: tuple = ()
    nominal: dict = {}
    keypoints: tuple = ()

    def features(self, nominal):
        raise NotImplementedError

    def build(self, nominal, values):
        """Return ``(parts, mass_kg, com)`` for the given feature values."""
        raise NotImplementedError

    def measured(self, tool):
        """Feature values as read back from the built geometry.

        Equal to the assignment unless a family's features are coupled or
        clamped; then it is the value an observer of the shape would infer.
        """
        return dict(tool.feature_assignment)


def _scale(name, lo, hi, kind="geometric"):
    return SemanticFeature(name, kind, (lo, hi), 1.0)


class StickFamily(Family):
    """Shaft cylinder along +x from the handle end, blade box hinged at the far end.

    ``blade_shaft_angle`` is the interior angle between the shaft (pointing
    back to the handle) and the blade's long axis: 180 is a straight stick,
    90 an L-shaped hook.
    """

    name = "stick"
    dimensions = ("shaft_length", "shaft_diameter", "blade_length", "blade_width",
                  "blade_thickness", "blade_shaft_angle", "mass_kg")
    nominal = {"shaft_length": 0.6, "shaft_diameter": 0.03, "blade_length": 0.15,
               "blade_width": 0.05, "blade_thickness": 0.01, "blade_shaft_angle": 120.0,
               "mass_kg": 0.8}
    keypoints = (Keypoint("handle", "shaft", (0.0, 0.5, 0.5)),
                 Keypoint("tip", "blade", (1.0, 0.5, 0.5)))

    def features(self, nominal):
        return (
            _scale("shaft_length", 0.5, 2.5),
            _scale("shaft_diameter", 0.5, 4.5),
            _scale("blade_length", 0.5, 2.5),
            _scale("blade_width", 0.5, 2.5),
            _scale("blade_thickness", 0.5, 2.5),
            SemanticFeature("blade_shaft_angle", "geometric", (60.0, 180.0),
                            nominal["blade_shaft_angle"], absolute=True, unit="deg"),
            _scale("mass", 0.5, 4.5, "physical"),
        )

    def build(self, nominal, v):
        shaft_len = nominal["shaft_length"] * v["shaft_length"]
        radius = nominal["shaft_diameter"] * v["shaft_diameter"] / 2
        blade_len = nominal["blade_length"] * v["blade_length"]
        theta = v["blade_shaft_angle"]
        b_angle = 180.0 - theta
        b = np.array([math.cos(math.radians(b_angle)), math.sin(math.radians(b_angle)), 0.0])
        centre = np.array([shaft_len, 0.0, 0.0]) + b * (blade_len / 2)
        parts = (
            ("shaft", PartSolid(Cylinder(radius, shaft_len, "x"), IDENTITY,
                                (shaft_len / 2, 0.0, 0.0))),
            ("blade", PartSolid(Box(blade_len,
                                    nominal["blade_thickness"] * v["blade_thickness"],
                                    nominal["blade_width"] * v["blade_width"]),
                                rotation_z(b_angle), tuple(float(c) for c in centre))),
        )
        mass = nominal["mass_kg"] * v["mass"]
        return parts, mass, _area_weighted_com(parts)


class ScoopFamily(Family):
    """Handle cylinder along +x, curved bowl plate hinged at its far end.

    ``handle_to_head_angle`` is the interior angle between the handle
    (pointing back to the grip) and the head's long axis; 180 is straight.
    """

    name = "scoop"
    dimensions = ("handle_length", "handle_cross_section_thickness", "handle_to_head_angle",
                  "head_length", "head_width", "head_bowl_curvature", "head_thickness",
                  "mass_kg")
    nominal = {"handle_length": 0.25, "handle_cross_section_thickness": 0.02,
               "handle_to_head_angle": 160.0, "head_length": 0.07, "head_width": 0.05,
               "head_bowl_curvature": 0.012, "head_thickness": 0.004, "mass_kg": 0.25}
    keypoints = (Keypoint("handle", "handle", (0.0, 0.5, 0.5)),
                 Keypoint("tip", "head", (0.5, 0.5, 0.0)))

    def features(self, nominal):
        return (
            _scale("handle_length", 0.25, 2.25),
            _scale("handle_cross_section_thickness", 0.5, 4.5),
            SemanticFeature("handle_to_head_angle", "geometric", (100.0, 180.0),
                            nominal["handle_to_head_angle"], absolute=True, unit="deg"),
            _scale("head_length", 0.25, 2.25),
            _scale("head_width", 0.5, 4.5),
            _scale("head_bowl_curvature", 0.0, 2.0),
            _scale("mass", 0.5, 4.5, "physical"),
        )

    def build(self, nominal, v):
        handle_len = nominal["handle_length"] * v["handle_length"]
        radius = nominal["handle_cross_section_thickness"] * v["handle_cross_section_thickness"] / 2
        head_len = nominal["head_length"] * v["head_length"]
        head_w = nominal["head_width"] * v["head_width"]
        depth = min(nominal["head_bowl_curvature"] * v["head_bowl_curvature"], head_w / 2)
        phi = v["handle_to_head_angle"]
        tilt = phi - 180.0
        # rotation_y(tilt) carries local +x onto the head axis (-cos phi, 0, sin phi)
        h = np.array([-math.cos(math.radians(phi)), 0.0, math.sin(math.radians(phi))])
        centre = np.array([handle_len, 0.0, 0.0]) + h * (head_len / 2)
        parts = (
            ("handle", PartSolid(Cylinder(radius, handle_len, "x"), IDENTITY,
                                 (handle_len / 2, 0.0, 0.0))),
            ("head", PartSolid(CurvedPlate(head_len, head_w, nominal["head_thickness"], depth),
                               rotation_y(tilt), tuple(float(c) for c in centre))),
        )
        mass = nominal["mass_kg"] * v["mass"]
        return parts, mass, _area_weighted_com(parts)

    def measured(self, tool):
        out = dict(tool.feature_assignment)
        # the bowl depth saturates at half the head width
        out["head_bowl_curvature"] = (tool.part("head").shape.curvature_depth
                                      / tool.nominal["head_bowl_curvature"])
        return out


class PlatformFamily(Family):
    """A single box standing on the floor, centred on the z axis."""

    name = "platform"
    dimensions = ("footprint_width", "footprint_depth", "overall_height", "mass_kg",
                  "com_height_fraction")
    nominal = {"footprint_width": 0.4, "footprint_depth": 0.4, "overall_height": 0.3,
               "mass_kg": 2.0, "com_height_fraction": 0.5}
    keypoints = ()

    def features(self, nominal):
        return (
            _scale("footprint_width", 0.5, 2.5),
            _scale("footprint_depth", 0.5, 2.5),
            _scale("overall_height", 0.5, 2.5),
            _scale("top_surface_area", 0.25, 2.25),
            SemanticFeature("com_height_fraction", "physical", (0.1, 0.9),
                            nominal["com_height_fraction"], absolute=True, unit="fraction"),
            _scale("mass", 0.5, 4.5, "physical"),
        )

    def build(self, nominal, v):
        root = math.sqrt(v["top_surface_area"])
        w = nominal["footprint_width"] * v["footprint_width"] * root
        d = nominal["footprint_depth"] * v["footprint_depth"] * root
        h = nominal["overall_height"] * v["overall_height"]
        parts = (("body", PartSolid(Box(w, d, h), IDENTITY, (0.0, 0.0, h / 2))),)
        mass = nominal["mass_kg"] * v["mass"]
        return parts, mass, (0.0, 0.0, v["com_height_fraction"] * h)

    def measured(self, tool):
        # top_surface_area only rescales width and depth, so a box shape
        # determines width, depth and area but not how they were composed
        box, nom = tool.part("body").shape, tool.nominal
        out = dict(tool.feature_assignment)
        out["footprint_width"] = box.w / nom["footprint_width"]
        out["footprint_depth"] = box.d / nom["footprint_depth"]
        out["overall_height"] = box.h / nom["overall_height"]
        out["top_surface_area"] = (box.w * box.d) / (nom["footprint_width"] * nom["footprint_depth"])
        return out


def _area_weighted_com(parts):
    # thin-walled approximation: mass spread in proportion to surface area
    areas = np.array([p.area() for _, p in parts])
    centres = np.array([p.local_point((0.5, 0.5, 0.5)) for _, p in parts])
    return tuple(float(c) for c in (areas @ centres) / areas.sum())


FAMILIES = {f.name: f for f in (StickFamily(), ScoopFamily(), PlatformFamily())}


def get_family(name) -> Family:
    try:
        return FAMILIES[name]
    except KeyError:
        raise EditError(f"unknown tool family {name!r}; choose from {sorted(FAMILIES)}") from None


def family_features(family):
    """Feature definitions of ``family`` at its built-in nominal dimensions."""
    fam = get_family(family)
    return {f.name: f for f in fam.features(fam.nominal)}


def default_dimensions(family):
    return dict(get_family(family).nominal)


# --- tool model --------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ToolModel:
    family: str
    nominal: MappingProxyType
    feature_assignment: MappingProxyType
    parts: tuple              # ((name, PartSolid), ...)
    mass_kg: float
    com: tuple
    keypoints: tuple = ()
    _features: MappingProxyType = field(default=None, repr=False)

    @property
    def features(self):
        return self._features

    def part(self, name) -> PartSolid:
        for pname, solid in self.parts:
            if pname == name:
                return solid
        raise KeyError(name)

    @property
    def part_names(self):
        return tuple(name for name, _ in self.parts)

    def keypoint_position(self, name):
        for kp in self.keypoints:
            if kp.name == name:
                return tuple(float(c) for c in self.part(kp.part).local_point(kp.local_coords))
        raise KeyError(name)

    def keypoint_positions(self):
        return {kp.name: self.keypoint_position(kp.name) for kp in self.keypoints}

    def measured_values(self):
        """Per-feature values inferred from the geometry (see ``Family.measured``)."""
        return get_family(self.family).measured(self)

    def edited_features(self):
        """Names of features whose value differs from the family default."""
        return tuple(n for n, f in self._features.items()
                     if self.feature_assignment[n] != f.default)

    def __eq__(self, other):
        if not isinstance(other, ToolModel):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    __hash__ = None

    def assignment_key(self):
        return tuple(self.feature_assignment[n] for n in self._features)

    def to_dict(self):
        return {
            "family": self.family,
            "nominal": dict(self.nominal),
            "feature_assignment": dict(self.feature_assignment),
            "mass_kg": self.mass_kg,
            "com": list(self.com),
            "parts": {name: solid.to_dict() for name, solid in self.parts},
            "keypoints": [kp.to_dict() for kp in self.keypoints],
        }

    @classmethod
    def from_dict(cls, doc):
        tool = make_source_tool(doc["family"], doc["nominal"])
        tool = _rebuild(tool, {k: float(v) for k, v in doc["feature_assignment"].items()})
        if "parts" in doc and tool.to_dict()["parts"] != doc["parts"]:
            raise EditError("serialized parts disagree with the family rebuild")
        return tool


def make_source_tool(family, nominal_dimensions) -> ToolModel:
    """Build an unedited tool of ``family`` from its nominal dimensions."""
    fam = get_family(family)
    nominal = {}
    for key in fam.dimensions:
        if key not in nominal_dimensions:
            raise MissingDimension(f"{family} needs dimension {key!r}")
        value = float(nominal_dimensions[key])
        if not math.isfinite(value) or value <= 0:
            raise NonPositiveDimension(f"{family}.{key} must be positive, got {value}")
        nominal[key] = value
    extra = set(nominal_dimensions) - set(fam.dimensions)
    if extra:
        raise EditError(f"unknown {family} dimensions: {sorted(extra)}")
    if family == "platform" and not nominal["com_height_fraction"] < 1:
        raise NonPositiveDimension("com_height_fraction must lie in (0, 1)")
    feats = {f.name: f for f in fam.features(nominal)}
    values = {name: f.default for name, f in feats.items()}
    return _assemble(fam, nominal, values, feats)


def _assemble(fam, nominal, values, feats):
    parts, mass, com = fam.build(nominal, values)
    return ToolModel(fam.name, MappingProxyType(dict(nominal)), MappingProxyType(dict(values)),
                     parts, float(mass), tuple(float(c) for c in com), fam.keypoints,
                     MappingProxyType(feats))


def _rebuild(tool, values):
    for name in values:
        if name not in tool.features:
            raise UnknownFeature(f"{name!r} is not a {tool.family} feature")
    merged = dict(tool.feature_assignment)
    merged.update(values)
    return _assemble(get_family(tool.family), tool.nominal, merged, dict(tool.features))


def apply_edit(tool: ToolModel, feature: str, scale) -> ToolModel:
    """Set ``feature`` to ``scale`` and rebuild the affected geometry or physics."""
    spec = tool.features.get(feature)
    if spec is None:
        raise UnknownFeature(f"{feature!r} is not a {tool.family} feature; "
                             f"choose from {sorted(tool.features)}")
    value = spec.check(scale)
    if tool.feature_assignment[feature] == value:
        return tool
    return _rebuild(tool, {feature: value})


def apply_edits(tool: ToolModel, assignments) -> ToolModel:
    """Apply ``(feature, scale)`` edits left to right.

    Every edit sets its feature's value and geometry is regenerated from the
    full assignment, so the result depends only on the final value of each
    feature; order matters only when the same feature is edited twice.
    """
    values = {}
    for feature, scale in assignments:
        spec = tool.features.get(feature)
        if spec is None:
            raise UnknownFeature(f"{feature!r} is not a {tool.family} feature; "
                                 f"choose from {sorted(tool.features)}")
        values[feature] = spec.check(scale)
    if all(tool.feature_assignment[f] == v for f, v in values.items()):
        return tool
    # a single rebuild gives the same tool as folding apply_edit
    return _rebuild(tool, values)


def with_defaults(tool: ToolModel) -> ToolModel:
    return apply_edits(tool, [(n, f.default) for n, f in tool.features.items()])


def intervention_dataset(tool, features, grid):
    """One-at-a-time edits: ``[(feature, scale, edited_tool), ...]`` in input order."""
    out = []
    for feature in features:
        if feature not in tool.features:
            raise UnknownFeature(f"{feature!r} is not a {tool.family} feature")
        for scale in grid[feature]:
            out.append((feature, scale, apply_edit(tool, feature, scale)))
    return out


def combination_size(features, grid):
    return math.prod(len(grid[f]) for f in features)


def combination_assignments(features, grid, max_size):
    """Cartesian product of the per-feature grids, features in alphabetical order."""
    names = sorted(features)
    size = combination_size(names, grid)
    if size > max_size:
        raise GridTooLarge(size, max_size)
    for combo in itertools.product(*(grid[n] for n in names)):
        yield tuple(zip(names, combo))


def combination_grid(tool, features, grid, max_size):
    return [apply_edits(tool, a) for a in combination_assignments(features, grid, max_size)]


# --- sampling ----------------------------------------------------------------


def apportion(weights, n):
    """Largest-remainder split of ``n`` into integer counts proportional to ``weights``."""
    w = np.asarray(weights, dtype=float)
    quota = w / w.sum() * n
    counts = np.floor(quota).astype(int)
    short = n - int(counts.sum())
    # ties in the remainder go to the earlier part
    order = sorted(range(len(w)), key=lambda i: (-(quota[i] - counts[i]), i))
    for i in order[:short]:
        counts[i] += 1
    return [int(c) for c in counts]


def tool_to_cloud(tool: ToolModel, n: int, seed, view=None) -> geometry.PointCloud:
    """Area-weighted surface samples over all parts, labelled by part name.

    Without a view, part counts are the largest-remainder apportionment of
    ``n`` by part area and part ``i`` draws from ``default_rng([seed, i])``.
    With a view, parts are mixed by area from a single stream and back faces
    are rejected, so counts follow the visible area.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    names = tool.part_names
    solids = [s for _, s in tool.parts]
    areas = [s.area() for s in solids]
    if view is None or not view.cull_backfaces:
        counts = apportion(areas, n)
        chunks, labels = [], []
        for i, (name, solid, k) in enumerate(zip(names, solids, counts)):
            if k == 0:
                continue
            rng = np.random.default_rng([_seed_word(seed), i])
            chunks.append(geometry.sample_points(solid, k, rng))
            labels.extend([name] * k)
        return geometry.PointCloud(np.concatenate(chunks), tuple(labels))

    rng = np.random.default_rng([_seed_word(seed), len(solids)])
    probs = np.asarray(areas) / sum(areas)
    pts_chunks, part_chunks = [], []
    have, empty_rounds = 0, 0
    while have < n:
        split = rng.multinomial(max(2 * (n - have), 64), probs)
        batch_pts, batch_part = [], []
        for i, (solid, k) in enumerate(zip(solids, split)):
            if k == 0:
                continue
            pts, nrm = solid.sample(rng, int(k))
            keep = pts[view.visible(nrm)]
            batch_pts.append(keep)
            batch_part.append(np.full(len(keep), i))
        got = sum(len(b) for b in batch_pts)
        if got == 0:
            empty_rounds += 1
            if empty_rounds >= geometry._MAX_EMPTY_ROUNDS:
                raise geometry.NoVisibleSurface("no part of the tool faces the camera")
            continue
        # shuffle so truncating the last batch does not favour early parts
        perm = rng.permutation(got)
        pts_chunks.append(np.concatenate(batch_pts)[perm])
        part_chunks.append(np.concatenate(batch_part)[perm])
        have += got
    pts = np.concatenate(pts_chunks)[:n]
    part = np.concatenate(part_chunks)[:n]
    order = np.argsort(part, kind="stable")
    return geometry.PointCloud(pts[order], [names[i] for i in part[order]])


def _seed_word(seed):
    seed = int(seed)
    if seed < 0:
        raise ValueError("seed must be non-negative")
    return seed
