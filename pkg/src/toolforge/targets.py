"""Synthetic target objects for classification experiments.

Besides clouds of family tools at arbitrary feature assignments, two
hollow shapes are provided that a solid box family cannot fit well: an
open-top box and a table (top slab on four legs).
"""
from __future__ import annotations

import numpy as np

from . import geometry
from .editor import apply_edits, apportion, default_dimensions, make_source_tool, tool_to_cloud
from .errors import ConfigError
from .solids import IDENTITY, Box, PartSolid


def _sample_faces(faces, n, seed):
    """Area-weighted samples over a list of ``(centre, u_vec, v_vec)`` rectangles."""
    rng = np.random.default_rng(seed)
    areas = np.array([np.linalg.norm(np.cross(u, v)) for _, u, v in faces])
    pick = rng.choice(len(faces), size=n, p=areas / areas.sum())
    st = rng.random((n, 2)) - 0.5
    c = np.array([f[0] for f in faces])[pick]
    u = np.array([f[1] for f in faces])[pick]
    v = np.array([f[2] for f in faces])[pick]
    return c + st[:, :1] * u + st[:, 1:] * v


def open_box_cloud(width, depth, height, n, seed):
    """Five faces of a ``width x depth x height`` box standing on z=0, top missing."""
    w, d, h = width, depth, height
    ex, ey, ez = np.eye(3)
    faces = [
        ((0, 0, 0), w * ex, d * ey),                   # floor
        ((-w / 2, 0, h / 2), d * ey, h * ez),
        ((w / 2, 0, h / 2), d * ey, h * ez),
        ((0, -d / 2, h / 2), w * ex, h * ez),
        ((0, d / 2, h / 2), w * ex, h * ez),
    ]
    faces = [(np.asarray(c, float), u, v) for c, u, v in faces]
    return geometry.PointCloud(_sample_faces(faces, n, seed), ["body"] * n)


def table_cloud(width, depth, height, n, seed, top_thickness=0.03, leg_size=0.04):
    """A table: solid top slab plus four square legs, empty underneath."""
    t, s = top_thickness, leg_size
    parts = [PartSolid(Box(width, depth, t), IDENTITY, (0.0, 0.0, height - t / 2))]
    leg_h = height - t
    for sx in (-1, 1):
        for sy in (-1, 1):
            parts.append(PartSolid(Box(s, s, leg_h), IDENTITY,
                                   (sx * (width - s) / 2, sy * (depth - s) / 2, leg_h / 2)))
    areas = [p.area() for p in parts]
    counts = apportion(areas, n)
    pts = [geometry.sample_points(p, k, np.random.default_rng([seed, i]))
           for i, (p, k) in enumerate(zip(parts, counts)) if k]
    return geometry.PointCloud(np.concatenate(pts), ["body"] * n)


def family_target(family, assignment, n, seed, nominal=None, view=None, offset=(0, 0, 0)):
    """Cloud of a family tool edited to ``assignment`` and shifted by ``offset``.

    Returns ``(cloud, tool)``; the tool is the ground truth generator.
    """
    tool = make_source_tool(family, nominal or default_dimensions(family))
    tool = apply_edits(tool, sorted(assignment.items()))
    cloud = tool_to_cloud(tool, n, seed, view)
    return cloud.translated(offset), tool


def from_spec(spec, n, seed):
    """Build a target from a config generator entry; returns ``(cloud, tool_or_None)``."""
    kind = spec.get("kind", "family")
    if kind == "family":
        return family_target(spec["family"], spec.get("assignment", {}), n, seed,
                             spec.get("nominal"), None, spec.get("offset", (0, 0, 0)))
    if kind == "open_box":
        cloud = open_box_cloud(spec["width"], spec["depth"], spec["height"], n, seed)
        return cloud.translated(spec.get("offset", (0, 0, 0))), None
    if kind == "table":
        cloud = table_cloud(spec["width"], spec["depth"], spec["height"], n, seed,
                            spec.get("top_thickness", 0.03), spec.get("leg_size", 0.04))
        return cloud.translated(spec.get("offset", (0, 0, 0))), None
    raise ConfigError(f"unknown target generator kind {kind!r}")
