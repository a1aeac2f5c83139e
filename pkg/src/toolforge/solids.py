"""Parametric part solids and their exact surface samplers.

Every shape lives in its own local frame, centred on the origin, and knows
its surface area, its local bounding box and how to draw area-uniform
surface points together with outward unit normals. :class:`PartSolid`
places a shape in the tool frame with a rigid transform.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_AXES = {"x": 0, "y": 1, "z": 2}


# uniforms consumed per sample point; point j only ever uses row j, so the
# first k points of a stream do not depend on how many are drawn
U_COLS = 4


def _pick(u, areas):
    """Region index of each uniform in ``u``, with probability proportional to ``areas``."""
    cum = np.cumsum(areas)
    return np.minimum(np.searchsorted(cum, u * cum[-1], side="right"), len(areas) - 1)


class _Shape:
    def sample(self, rng, k):
        """``k`` area-uniform surface points and outward unit normals."""
        return self.sample_from(rng.random((k, U_COLS)))


@dataclass(frozen=True)
class Box(_Shape):
    w: float
    d: float
    h: float

    kind = "box"

    def area(self) -> float:
        return 2.0 * (self.w * self.d + self.w * self.h + self.d * self.h)

    def bbox(self):
        half = (self.w / 2, self.d / 2, self.h / 2)
        return tuple(-v for v in half), half

    def sample_from(self, u):
        w, d, h = self.w, self.d, self.h
        k = len(u)
        # faces: -x, +x, -y, +y, -z, +z
        areas = np.array([d * h, d * h, w * h, w * h, w * d, w * d])
        face = _pick(u[:, 0], areas)
        uv = u[:, 1:3] - 0.5
        pts = np.empty((k, 3))
        nrm = np.zeros((k, 3))
        axis = face // 2
        sign = np.where(face % 2 == 0, -1.0, 1.0)
        dims = np.array([w, d, h])
        for a in range(3):
            sel = axis == a
            others = [i for i in range(3) if i != a]
            pts[sel, a] = sign[sel] * dims[a] / 2
            pts[sel, others[0]] = uv[sel, 0] * dims[others[0]]
            pts[sel, others[1]] = uv[sel, 1] * dims[others[1]]
            nrm[sel, a] = sign[sel]
        return pts, nrm

    def to_dict(self):
        return {"kind": "box", "w": self.w, "d": self.d, "h": self.h}


@dataclass(frozen=True)
class Cylinder(_Shape):
    radius: float
    length: float
    axis: str = "x"

    kind = "cylinder"

    def __post_init__(self):
        if self.axis not in _AXES:
            raise ValueError(f"cylinder axis must be one of x, y, z, got {self.axis!r}")

    def area(self) -> float:
        r = self.radius
        return 2.0 * math.pi * r * self.length + 2.0 * math.pi * r * r

    def bbox(self):
        half = [self.radius] * 3
        half[_AXES[self.axis]] = self.length / 2
        return tuple(-v for v in half), tuple(half)

    def sample_from(self, uu):
        r, length = self.radius, self.length
        k = len(uu)
        lateral = 2.0 * math.pi * r * length
        cap = math.pi * r * r
        region = _pick(uu[:, 0], np.array([lateral, cap, cap]))
        theta = uu[:, 1] * (2.0 * math.pi)
        u = uu[:, 2]
        c, s = np.cos(theta), np.sin(theta)
        # canonical frame: axis along x
        pts = np.empty((k, 3))
        nrm = np.zeros((k, 3))
        lat = region == 0
        pts[lat, 0] = (u[lat] - 0.5) * length
        pts[lat, 1] = r * c[lat]
        pts[lat, 2] = r * s[lat]
        nrm[lat, 1] = c[lat]
        nrm[lat, 2] = s[lat]
        capm = ~lat
        rho = r * np.sqrt(u[capm])
        end = np.where(region[capm] == 1, -1.0, 1.0)
        pts[capm, 0] = end * (length / 2)
        pts[capm, 1] = rho * c[capm]
        pts[capm, 2] = rho * s[capm]
        nrm[capm, 0] = end
        shift = _AXES[self.axis]
        if shift:
            pts = np.roll(pts, shift, axis=1)
            nrm = np.roll(nrm, shift, axis=1)
        return pts, nrm

    def to_dict(self):
        return {"kind": "cylinder", "radius": self.radius, "length": self.length, "axis": self.axis}


@dataclass(frozen=True)
class CurvedPlate(_Shape):
    """A plate of constant vertical thickness bent into a parabolic trough.

    Local x runs along ``length`` and local y across ``width``. The
    mid-surface is ``z = c * ((2y / width)**2 - 1)``: rim at ``z = 0``,
    bottom of the bowl at ``z = -c`` where ``c = curvature_depth``.
    """

    length: float
    width: float
    thickness: float
    curvature_depth: float = 0.0

    kind = "curved_plate"

    def __post_init__(self):
        if self.curvature_depth < 0 or self.curvature_depth > self.width / 2 + 1e-15:
            raise ValueError("curvature_depth must lie in [0, width / 2]")

    @property
    def _a(self) -> float:
        return 4.0 * self.curvature_depth / (self.width * self.width)

    def arc_length(self) -> float:
        """Length of the mid-surface profile across the width."""
        a = self._a
        if a == 0.0:
            return self.width
        u = a * self.width
        return (u * math.sqrt(1.0 + u * u) + math.asinh(u)) / (2.0 * a)

    def area(self) -> float:
        sheet = self.length * self.arc_length()
        return 2.0 * sheet + 2.0 * self.width * self.thickness + 2.0 * self.length * self.thickness

    def mid_z(self, y):
        return self.curvature_depth * ((2.0 * np.asarray(y) / self.width) ** 2 - 1.0)

    def bbox(self):
        t = self.thickness
        return ((-self.length / 2, -self.width / 2, -self.curvature_depth - t / 2),
                (self.length / 2, self.width / 2, t / 2))

    def _profile_s(self, y):
        """Arc length of the mid-surface profile from its centre line to ``y``."""
        a = self._a
        g = 2.0 * a * y
        return y * np.sqrt(1.0 + g * g) / 2.0 + np.arcsinh(g) / (4.0 * a)

    def _sheet_y(self, u):
        # invert the arc-length CDF so sheet samples are uniform in area
        a, half = self._a, self.width / 2
        if a == 0.0:
            return (u - 0.5) * self.width
        s_half = float(self._profile_s(half))
        goal = (2.0 * u - 1.0) * s_half
        y = (u - 0.5) * self.width
        for _ in range(50):
            step = (self._profile_s(y) - goal) / np.sqrt(1.0 + (2.0 * a * y) ** 2)
            y = np.clip(y - step, -half, half)
            if np.max(np.abs(step)) < 1e-15 * max(half, 1e-300):
                break
        return y

    def sample_from(self, u):
        L, W, t = self.length, self.width, self.thickness
        k = len(u)
        sheet = L * self.arc_length()
        # regions: top, bottom, end -x, end +x, side -y, side +y
        areas = np.array([sheet, sheet, W * t, W * t, L * t, L * t])
        region = _pick(u[:, 0], areas)
        pts = np.empty((k, 3))
        nrm = np.zeros((k, 3))
        x = (u[:, 1] - 0.5) * L
        off = (u[:, 3] - 0.5) * t
        a = self._a

        sheets = region <= 1
        y = self._sheet_y(u[sheets, 2])
        top = region[sheets] == 0
        sgn = np.where(top, 1.0, -1.0)
        slope = 2.0 * a * y
        norm = np.sqrt(1.0 + slope * slope)
        pts[sheets, 0] = x[sheets]
        pts[sheets, 1] = y
        pts[sheets, 2] = self.mid_z(y) + sgn * (t / 2)
        nrm[sheets, 1] = -sgn * slope / norm
        nrm[sheets, 2] = sgn / norm

        ends = (region == 2) | (region == 3)
        ye = (u[ends, 2] - 0.5) * W
        ex = np.where(region[ends] == 2, -1.0, 1.0)
        pts[ends, 0] = ex * (L / 2)
        pts[ends, 1] = ye
        pts[ends, 2] = self.mid_z(ye) + off[ends]
        nrm[ends, 0] = ex

        sides = region >= 4
        sy = np.where(region[sides] == 4, -1.0, 1.0)
        pts[sides, 0] = x[sides]
        pts[sides, 1] = sy * (W / 2)
        pts[sides, 2] = self.mid_z(W / 2) + off[sides]
        nrm[sides, 1] = sy
        return pts, nrm

    def to_dict(self):
        return {"kind": "curved_plate", "length": self.length, "width": self.width,
                "thickness": self.thickness, "curvature_depth": self.curvature_depth}


@dataclass(frozen=True)
class Sphere(_Shape):
    radius: float

    kind = "sphere"

    def area(self) -> float:
        return 4.0 * math.pi * self.radius ** 2

    def bbox(self):
        r = self.radius
        return (-r, -r, -r), (r, r, r)

    def sample_from(self, u):
        # Archimedes: z uniform on [-1, 1] gives uniform area on the sphere
        z = 2.0 * u[:, 1] - 1.0
        phi = 2.0 * math.pi * u[:, 2]
        rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        v = np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])
        return v * self.radius, v

    def to_dict(self):
        return {"kind": "sphere", "radius": self.radius}


SHAPES = {cls.kind: cls for cls in (Box, Cylinder, CurvedPlate, Sphere)}

IDENTITY = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))


def shape_from_dict(doc):
    doc = dict(doc)
    cls = SHAPES[doc.pop("kind")]
    return cls(**doc)


def rotation_z(deg: float):
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return ((c, -s, 0.0), (s, c, 0.0), (0.0, 0.0, 1.0))


def rotation_y(deg: float):
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return ((c, 0.0, s), (0.0, 1.0, 0.0), (-s, 0.0, c))


@dataclass(frozen=True)
class PartSolid:
    """A shape placed in the tool frame: ``world = R @ local + t``."""

    shape: Box | Cylinder | CurvedPlate | Sphere
    rotation: tuple = IDENTITY
    translation: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        for key, value in vars(self.shape).items():
            if isinstance(value, (int, float)) and not (math.isfinite(value) and value >= 0):
                raise ValueError(f"{self.shape.kind}.{key} must be finite and non-negative")

    @property
    def R(self):
        return np.array(self.rotation, dtype=float)

    @property
    def t(self):
        return np.array(self.translation, dtype=float)

    def area(self) -> float:
        return self.shape.area()

    def to_world(self, local):
        return np.asarray(local, dtype=float) @ self.R.T + self.t

    def local_point(self, coords):
        """Map normalised bounding-box coordinates in ``[0, 1]^3`` to the tool frame."""
        lo, hi = (np.array(v) for v in self.shape.bbox())
        return self.to_world(lo + np.asarray(coords, dtype=float) * (hi - lo))

    def sample(self, rng, k):
        """``k`` area-uniform surface points and outward normals in the tool frame."""
        pts, nrm = self.shape.sample(rng, k)
        R = self.R
        return pts @ R.T + self.t, nrm @ R.T

    def to_dict(self):
        return {"shape": self.shape.to_dict(),
                "rotation": [list(r) for r in self.rotation],
                "translation": list(self.translation)}

    @classmethod
    def from_dict(cls, doc):
        return cls(shape=shape_from_dict(doc["shape"]),
                   rotation=tuple(tuple(float(v) for v in r) for r in doc["rotation"]),
                   translation=tuple(float(v) for v in doc["translation"]))
