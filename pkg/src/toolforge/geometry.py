"""Point clouds, surface sampling, nearest-neighbour search and Chamfer distance.

All distances are in metres, double precision. Clouds are immutable; the
nearest-neighbour index of a cloud is built lazily once and reused.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nn
from .errors import EmptyCloud, EmptySurface, GeometryError, NoVisibleSurface

# rejection rounds without a single visible sample before giving up
_MAX_EMPTY_ROUNDS = 64


class PointCloud:
    """An ordered, read-only ``(n, 3)`` array of points with optional part labels."""

    __slots__ = ("points", "labels", "_index")

    def __init__(self, points, labels=None):
        arr = np.array(points, dtype=np.float64).reshape(-1, 3)
        if not np.isfinite(arr).all():
            raise GeometryError("point coordinates must be finite")
        arr.setflags(write=False)
        self.points = arr
        if labels is not None:
            if type(labels) is not tuple:     # tuples are taken as already normalised
                labels = tuple(str(v) for v in labels)
            if len(labels) != len(arr):
                raise GeometryError(f"{len(labels)} part labels for {len(arr)} points")
        self.labels = labels
        self._index = None

    def __len__(self):
        return self.points.shape[0]

    def __repr__(self):
        return f"PointCloud(n={len(self)}, labelled={self.labels is not None})"

    def __eq__(self, other):
        if not isinstance(other, PointCloud):
            return NotImplemented
        return self.labels == other.labels and np.array_equal(self.points, other.points)

    __hash__ = None

    def require_points(self):
        if len(self) == 0:
            raise EmptyCloud("operation needs a non-empty point cloud")

    @property
    def index(self):
        """Lazily built nearest-neighbour index (see :mod:`toolforge.nn`)."""
        if self._index is None:
            self.require_points()
            self._index = nn.build_index(self.points)
        return self._index

    def centroid(self):
        self.require_points()
        return self.points.mean(axis=0)

    def translated(self, offset):
        return PointCloud(self.points + np.asarray(offset, dtype=float), self.labels)

    def select(self, label):
        """Sub-cloud of the points carrying part label ``label``."""
        if self.labels is None:
            raise GeometryError("cloud has no part labels")
        mask = np.array([v == label for v in self.labels], dtype=bool)
        return PointCloud(self.points[mask], [label] * int(mask.sum()))

    @classmethod
    def concat(cls, clouds):
        clouds = list(clouds)
        pts = np.concatenate([c.points for c in clouds]) if clouds else np.empty((0, 3))
        if clouds and all(c.labels is not None for c in clouds):
            labels = [v for c in clouds for v in c.labels]
        else:
            labels = None
        return cls(pts, labels)


@dataclass(frozen=True)
class ViewSpec:
    """Single camera direction used to cull back-facing surface samples."""

    camera_direction: tuple
    cull_backfaces: bool = True

    def __post_init__(self):
        d = tuple(float(v) for v in self.camera_direction)
        if len(d) != 3 or abs(math.sqrt(sum(v * v for v in d)) - 1.0) > 1e-9:
            raise GeometryError("camera_direction must be a unit 3-vector")
        object.__setattr__(self, "camera_direction", d)

    @classmethod
    def along(cls, direction, cull_backfaces=True):
        d = np.asarray(direction, dtype=float)
        return cls(tuple(d / np.linalg.norm(d)), cull_backfaces)

    def visible(self, normals):
        if not self.cull_backfaces:
            return np.ones(len(normals), dtype=bool)
        return normals @ np.array(self.camera_direction) < 0.0

    def to_dict(self):
        return {"camera_direction": list(self.camera_direction), "cull_backfaces": self.cull_backfaces}


def sample_points(solid, n, rng, view=None):
    """Draw ``n`` surface points of ``solid`` from ``rng``; returns an ``(n, 3)`` array."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not solid.area() > 0.0:
        raise EmptySurface(f"{solid.shape.kind} has zero surface area")
    if view is None or not view.cull_backfaces:
        return solid.sample(rng, n)[0]
    chunks, have, empty_rounds = [], 0, 0
    while have < n:
        pts, nrm = solid.sample(rng, max(2 * (n - have), 64))
        keep = pts[view.visible(nrm)]
        if len(keep) == 0:
            empty_rounds += 1
            if empty_rounds >= _MAX_EMPTY_ROUNDS:
                raise NoVisibleSurface("no surface of the solid faces the camera")
            continue
        chunks.append(keep)
        have += len(keep)
    return np.concatenate(chunks)[:n]


def sample_surface(solid, n, seed, view=None):
    """Sample ``n`` area-uniform points on ``solid`` (optionally single-view culled)."""
    rng = np.random.default_rng(seed)
    return PointCloud(sample_points(solid, n, rng, view))


def nearest_point(q, cloud):
    """Closest cloud point to ``q`` as ``(point, index, distance)``; ties go to the lowest index."""
    cloud.require_points()
    dist, idx = cloud.index.query(np.asarray(q, dtype=float).reshape(1, 3))
    i = int(idx[0])
    return tuple(float(v) for v in cloud.points[i]), i, float(dist[0])


def nn_distances(source, target):
    """Distance from every point of ``source`` to its nearest point in ``target``."""
    source.require_points()
    target.require_points()
    return target.index.query(source.points)[0]


def directed_mean(source, target):
    return float(np.sum(nn_distances(source, target))) / len(source)


def chamfer_distance(p1, p2):
    """Symmetric mean nearest-neighbour distance, each direction weighted by 1/2."""
    return 0.5 * directed_mean(p1, p2) + 0.5 * directed_mean(p2, p1)


def centroid_align(source, target):
    """Translate ``source`` onto the centroid of ``target``.

    Returns ``(aligned_source, translation)`` where ``translation`` is the
    shift that carries ``target``'s centroid onto ``source``'s, i.e.
    ``aligned_source = source - translation``.
    """
    shift = source.centroid() - target.centroid()
    return source.translated(-shift), tuple(float(v) for v in shift)


def mirror_complete(cloud, plane_point, plane_normal):
    """Union of ``cloud`` with its reflection across a symmetry plane."""
    cloud.require_points()
    n = np.asarray(plane_normal, dtype=float)
    n = n / np.linalg.norm(n)
    rel = cloud.points - np.asarray(plane_point, dtype=float)
    mirrored = cloud.points - 2.0 * np.outer(rel @ n, n)
    labels = None if cloud.labels is None else cloud.labels * 2
    return PointCloud(np.concatenate([cloud.points, mirrored]), labels)


def sampling_resolution(area, n):
    """Typical spacing of ``n`` area-uniform samples on a surface of ``area`` m^2."""
    return math.sqrt(area / n)


def write_xyz(path, cloud, comment=None):
    """Write ``x y z [label]`` lines; floats use ``repr`` so they round-trip exactly."""
    lines = []
    if comment:
        lines.extend(f"# {line}" for line in str(comment).splitlines())
    for i, p in enumerate(cloud.points):
        row = f"{float(p[0])!r} {float(p[1])!r} {float(p[2])!r}"
        if cloud.labels is not None:
            label = cloud.labels[i]
            if not label or any(ch.isspace() for ch in label):
                raise GeometryError(f"part label {label!r} cannot be written")
            row += f" {label}"
        lines.append(row)
    Path(path).write_text("\n".join(lines) + "\n")


def read_xyz(path):
    pts, labels = [], []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) not in (3, 4):
            raise GeometryError(f"{path}:{lineno}: expected 'x y z [label]'")
        try:
            pts.append([float(v) for v in fields[:3]])
        except ValueError as exc:
            raise GeometryError(f"{path}:{lineno}: {exc}") from None
        labels.append(fields[3] if len(fields) == 4 else None)
    has = [v is not None for v in labels]
    if any(has) and not all(has):
        raise GeometryError(f"{path}: part labels must be given on every line or none")
    return PointCloud(np.array(pts).reshape(-1, 3), labels if pts and all(has) else None)
