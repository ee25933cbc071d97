"""
Constructive solid geometry: primitives, boolean combinations, JSON round-trip.

Every node answers two vectorized queries on an ``(n, d)`` array of points:
``contains`` (strict interior) and ``sdf`` (signed distance, negative inside;
exact for primitives, a min/max bound for combinations).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .errors import ConfigError


class Shape:
    def contains(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sdf(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    def scaled(self, s: float) -> "Shape":
        raise NotImplementedError


@dataclass(frozen=True)
class Box(Shape):
    lo: tuple
    hi: tuple

    def contains(self, x):
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        return np.all((x > lo) & (x < hi), axis=1)

    def sdf(self, x):
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        c, half = (lo + hi) / 2, (hi - lo) / 2
        q = np.abs(x - c) - half
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(q.max(axis=1), 0.0)
        return outside + inside

    def bounds(self):
        return np.asarray(self.lo, float), np.asarray(self.hi, float)

    def to_dict(self):
        return {"box": {"min": list(self.lo), "max": list(self.hi)}}

    def scaled(self, s):
        return Box(tuple(s * v for v in self.lo), tuple(s * v for v in self.hi))


@dataclass(frozen=True)
class Ball(Shape):
    center: tuple
    radius: float

    def contains(self, x):
        return np.linalg.norm(x - np.asarray(self.center), axis=1) < self.radius

    def sdf(self, x):
        return np.linalg.norm(x - np.asarray(self.center), axis=1) - self.radius

    def bounds(self):
        c = np.asarray(self.center, float)
        return c - self.radius, c + self.radius

    def to_dict(self):
        return {"ball": {"center": list(self.center), "radius": self.radius}}

    def scaled(self, s):
        return Ball(tuple(s * v for v in self.center), s * self.radius)


@dataclass(frozen=True)
class Shell(Shape):
    """Annulus / spherical shell ``inner < |x - center| < outer``."""

    center: tuple
    inner: float
    outer: float

    def contains(self, x):
        r = np.linalg.norm(x - np.asarray(self.center), axis=1)
        return (r > self.inner) & (r < self.outer)

    def sdf(self, x):
        r = np.linalg.norm(x - np.asarray(self.center), axis=1)
        mid, half = (self.inner + self.outer) / 2, (self.outer - self.inner) / 2
        return np.abs(r - mid) - half

    def bounds(self):
        c = np.asarray(self.center, float)
        return c - self.outer, c + self.outer

    def to_dict(self):
        return {"shell": {"center": list(self.center), "inner": self.inner, "outer": self.outer}}

    def scaled(self, s):
        return Shell(tuple(s * v for v in self.center), s * self.inner, s * self.outer)


def _segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    t = np.clip(((p - a) @ ab) / max(ab @ ab, 1e-300), 0.0, 1.0)
    return np.linalg.norm(p - (a + t[:, None] * ab), axis=1)


def point_in_polygon(p: np.ndarray, verts: np.ndarray) -> np.ndarray:
    """Even-odd rule for 2D points against a closed polygon."""
    x, y = p[:, 0], p[:, 1]
    inside = np.zeros(len(p), dtype=bool)
    n = len(verts)
    for i in range(n):
        x1, y1 = verts[i]
        x2, y2 = verts[(i + 1) % n]
        crosses = (y1 > y) != (y2 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (x < xc)
    return inside


@dataclass(frozen=True)
class ExtrudedPolygon(Shape):
    """Planar polygon (d=2) or its extrusion along the last axis (d=3)."""

    vertices: tuple
    z: tuple = None

    def _poly(self):
        return np.asarray(self.vertices, dtype=float)

    def contains(self, x):
        inside = point_in_polygon(x[:, :2], self._poly())
        if self.z is not None:
            inside &= (x[:, 2] > self.z[0]) & (x[:, 2] < self.z[1])
        return inside

    def sdf(self, x):
        v = self._poly()
        dist = np.min(
            [_segment_distance(x[:, :2], v[i], v[(i + 1) % len(v)]) for i in range(len(v))], axis=0
        )
        d2 = np.where(point_in_polygon(x[:, :2], v), -dist, dist)
        if self.z is None:
            return d2
        z0, z1 = self.z
        dz = np.abs(x[:, 2] - (z0 + z1) / 2) - (z1 - z0) / 2
        q = np.stack([d2, dz], axis=1)
        return np.linalg.norm(np.maximum(q, 0.0), axis=1) + np.minimum(q.max(axis=1), 0.0)

    def bounds(self):
        v = self._poly()
        lo, hi = v.min(axis=0), v.max(axis=0)
        if self.z is not None:
            lo, hi = np.append(lo, self.z[0]), np.append(hi, self.z[1])
        return lo, hi

    def to_dict(self):
        out = {"vertices": [list(v) for v in self.vertices]}
        if self.z is not None:
            out["z"] = list(self.z)
        return {"polygon": out}

    def scaled(self, s):
        z = None if self.z is None else tuple(s * v for v in self.z)
        return ExtrudedPolygon(tuple(tuple(s * c for c in v) for v in self.vertices), z)


@dataclass(frozen=True)
class Union(Shape):
    parts: tuple

    def contains(self, x):
        return np.logical_or.reduce([p.contains(x) for p in self.parts])

    def sdf(self, x):
        return np.min([p.sdf(x) for p in self.parts], axis=0)

    def bounds(self):
        b = [p.bounds() for p in self.parts]
        return np.min([l for l, _ in b], axis=0), np.max([h for _, h in b], axis=0)

    def to_dict(self):
        return {"union": [p.to_dict() for p in self.parts]}

    def scaled(self, s):
        return Union(tuple(p.scaled(s) for p in self.parts))


@dataclass(frozen=True)
class Intersection(Shape):
    parts: tuple

    def contains(self, x):
        return np.logical_and.reduce([p.contains(x) for p in self.parts])

    def sdf(self, x):
        return np.max([p.sdf(x) for p in self.parts], axis=0)

    def bounds(self):
        b = [p.bounds() for p in self.parts]
        return np.max([l for l, _ in b], axis=0), np.min([h for _, h in b], axis=0)

    def to_dict(self):
        return {"intersection": [p.to_dict() for p in self.parts]}

    def scaled(self, s):
        return Intersection(tuple(p.scaled(s) for p in self.parts))


@dataclass(frozen=True)
class Difference(Shape):
    """First part minus the union of the remaining parts."""

    parts: tuple

    def contains(self, x):
        out = self.parts[0].contains(x)
        for p in self.parts[1:]:
            out &= ~p.contains(x)
        return out

    def sdf(self, x):
        out = self.parts[0].sdf(x)
        for p in self.parts[1:]:
            out = np.maximum(out, -p.sdf(x))
        return out

    def bounds(self):
        return self.parts[0].bounds()

    def to_dict(self):
        return {"difference": [p.to_dict() for p in self.parts]}

    def scaled(self, s):
        return Difference(tuple(p.scaled(s) for p in self.parts))


def _tuple(v) -> tuple:
    return tuple(float(c) for c in v)


def parse_shape(node: dict) -> Shape:
    if not isinstance(node, dict) or len(node) != 1:
        raise ConfigError(f"CSG node must be a single-key object, got {node!r}")
    (kind, arg), = node.items()
    if kind == "box":
        return Box(_tuple(arg["min"]), _tuple(arg["max"]))
    if kind == "ball":
        return Ball(_tuple(arg["center"]), float(arg["radius"]))
    if kind == "shell":
        return Shell(_tuple(arg["center"]), float(arg["inner"]), float(arg["outer"]))
    if kind == "polygon":
        z = arg.get("z")
        return ExtrudedPolygon(tuple(_tuple(v) for v in arg["vertices"]), None if z is None else _tuple(z))
    if kind in ("union", "intersection", "difference"):
        if not isinstance(arg, Sequence) or len(arg) == 0:
            raise ConfigError(f"'{kind}' needs a nonempty list of operands")
        parts = tuple(parse_shape(a) for a in arg)
        return {"union": Union, "intersection": Intersection, "difference": Difference}[kind](parts)
    raise ConfigError(f"unknown CSG node '{kind}'")
