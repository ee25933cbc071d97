"""
Scenario definitions, rasterization and Dirichlet labelling.

A scenario is a JSON document (see ``docs/scenario_format.md``) describing a
domain through CSG, optional flat cracks, and a predicate that selects the
Dirichlet part of the boundary.  :func:`rasterize` turns it into a
:class:`~hardymix.grid.VoxelDomain`, :func:`label_boundary` splits the discrete
boundary into ``D`` and ``Gamma``, and :func:`distance_to_D` measures the
distance from every cell center to ``D``.
"""

from __future__ import annotations

import copy
import json
import math
import warnings as _warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from . import grid as G
from .csg import Shape, parse_shape
from .errors import BadDimension, ConfigError, CrackNotInterior, EmptyDomain

_TOL = 1e-9


# ----------------------------------------------------------------- predicates
@dataclass
class FaceContext:
    """What a predicate may look at: one row per candidate boundary face."""

    centroids: np.ndarray
    crack_id: np.ndarray
    h: float


class Predicate:
    def evaluate(self, ctx: FaceContext) -> np.ndarray:
        raise NotImplementedError

    def to_json(self):
        raise NotImplementedError

    def scaled(self, s: float) -> "Predicate":
        return self


@dataclass(frozen=True)
class Const(Predicate):
    value: bool

    def evaluate(self, ctx):
        return np.full(len(ctx.centroids), self.value, dtype=bool)

    def to_json(self):
        return "all" if self.value else "none"


@dataclass(frozen=True)
class InShape(Predicate):
    shape: Shape

    def evaluate(self, ctx):
        if len(ctx.centroids) == 0:
            return np.zeros(0, dtype=bool)
        return self.shape.sdf(ctx.centroids) <= _TOL

    def to_json(self):
        return {"in": self.shape.to_dict()}

    def scaled(self, s):
        return InShape(self.shape.scaled(s))


@dataclass(frozen=True)
class NearShape(Predicate):
    """Within ``tol`` cells of the shape's surface."""

    shape: Shape
    tol: float = 1.0

    def evaluate(self, ctx):
        if len(ctx.centroids) == 0:
            return np.zeros(0, dtype=bool)
        return np.abs(self.shape.sdf(ctx.centroids)) <= self.tol * ctx.h + _TOL

    def to_json(self):
        return {"near": {"shape": self.shape.to_dict(), "tol": self.tol}}

    def scaled(self, s):
        return NearShape(self.shape.scaled(s), self.tol)


@dataclass(frozen=True)
class HalfSpace(Predicate):
    """``normal . x >= offset``."""

    normal: tuple
    offset: float

    def evaluate(self, ctx):
        if len(ctx.centroids) == 0:
            return np.zeros(0, dtype=bool)
        return ctx.centroids @ np.asarray(self.normal, dtype=float) >= self.offset - _TOL

    def to_json(self):
        return {"halfspace": {"normal": list(self.normal), "offset": self.offset}}

    def scaled(self, s):
        return HalfSpace(self.normal, self.offset * s)


@dataclass(frozen=True)
class OnCrack(Predicate):
    ids: Optional[tuple] = None

    def evaluate(self, ctx):
        if self.ids is None:
            return ctx.crack_id >= 0
        return np.isin(ctx.crack_id, np.asarray(self.ids))

    def to_json(self):
        return "crack" if self.ids is None else {"crack": list(self.ids)}


@dataclass(frozen=True)
class Outer(Predicate):
    """Faces between an inside and an outside cell (not crack faces)."""

    def evaluate(self, ctx):
        return ctx.crack_id < 0

    def to_json(self):
        return "outer"


@dataclass(frozen=True)
class Combine(Predicate):
    op: str
    parts: tuple

    def evaluate(self, ctx):
        vals = [p.evaluate(ctx) for p in self.parts]
        if self.op == "and":
            return np.logical_and.reduce(vals)
        if self.op == "or":
            return np.logical_or.reduce(vals)
        return ~vals[0]

    def to_json(self):
        if self.op == "not":
            return {"not": self.parts[0].to_json()}
        return {self.op: [p.to_json() for p in self.parts]}

    def scaled(self, s):
        return Combine(self.op, tuple(p.scaled(s) for p in self.parts))


def parse_predicate(node) -> Predicate:
    if isinstance(node, bool):
        return Const(node)
    if isinstance(node, str):
        named = {"all": Const(True), "none": Const(False), "outer": Outer(), "crack": OnCrack()}
        if node not in named:
            raise ConfigError(f"unknown predicate '{node}'")
        return named[node]
    if not isinstance(node, dict) or len(node) != 1:
        raise ConfigError(f"predicate must be a name or single-key object, got {node!r}")
    (kind, arg), = node.items()
    if kind == "in":
        return InShape(parse_shape(arg))
    if kind == "near":
        return NearShape(parse_shape(arg["shape"]), float(arg.get("tol", 1.0)))
    if kind == "halfspace":
        return HalfSpace(tuple(float(c) for c in arg["normal"]), float(arg["offset"]))
    if kind == "crack":
        return OnCrack(None if arg is True else tuple(int(i) for i in arg))
    if kind in ("and", "or"):
        if not arg:
            raise ConfigError(f"'{kind}' needs operands")
        return Combine(kind, tuple(parse_predicate(a) for a in arg))
    if kind == "not":
        return Combine("not", (parse_predicate(arg),))
    raise ConfigError(f"unknown predicate '{kind}'")


# -------------------------------------------------------- scenario description
@dataclass(frozen=True)
class PatchSpec:
    """Axis-aligned chart used by the partition-of-unity extension.

    ``rule`` is ``"reflect"`` (even reflection across the boundary met when
    walking along ``axis`` in ``direction``) or ``"identity"`` (patch lies in
    the domain up to cracks; the local extension is plain zero padding).
    """

    lo: tuple
    hi: tuple
    axis: int = 0
    direction: int = 1
    rule: str = "reflect"

    def to_json(self):
        return {"min": list(self.lo), "max": list(self.hi), "axis": self.axis,
                "direction": self.direction, "rule": self.rule}

    def scaled(self, s):
        return replace(self, lo=tuple(s * v for v in self.lo), hi=tuple(s * v for v in self.hi))


@dataclass(frozen=True)
class PartitionSpec:
    eps: float = 0.05
    margin: float = 0.1

    def scaled(self, s):
        return PartitionSpec(self.eps * s, self.margin * s)


@dataclass(frozen=True)
class LocalizeSpec:
    U: Shape
    V: Shape
    width: float = 0.05

    def to_json(self):
        return {"U": self.U.to_dict(), "V": self.V.to_dict(), "width": self.width}

    def scaled(self, s):
        return LocalizeSpec(self.U.scaled(s), self.V.scaled(s), self.width * s)


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    dimension: int
    csg: Shape
    dirichlet: Predicate
    resolution: float = 16.0
    padding: int = 2
    padding_length: float = 0.0
    cracks: tuple = ()
    patches: tuple = ()
    partition: Optional[PartitionSpec] = None
    localize: Optional[LocalizeSpec] = None
    description: str = ""

    def __post_init__(self):
        if self.dimension not in (1, 2, 3):
            raise BadDimension(f"dimension must be 1, 2 or 3, got {self.dimension}")
        if self.padding < 1:
            raise ConfigError("padding must be at least one cell")
        if self.resolution <= 0:
            raise ConfigError("resolution must be positive")

    @property
    def h(self) -> float:
        return 1.0 / self.resolution

    def pad_cells(self) -> int:
        return max(self.padding, int(math.ceil(self.padding_length * self.resolution - _TOL)))

    def with_resolution(self, resolution: float) -> "ScenarioSpec":
        return replace(self, resolution=float(resolution))

    def scaled(self, s: float) -> "ScenarioSpec":
        """Dilate every length by ``s``; cell counts are preserved."""
        return replace(
            self,
            csg=self.csg.scaled(s),
            dirichlet=self.dirichlet.scaled(s),
            resolution=self.resolution / s,
            padding_length=self.padding_length * s,
            cracks=tuple(np.asarray(c, float) * s for c in self.cracks),
            patches=tuple(p.scaled(s) for p in self.patches),
            partition=None if self.partition is None else self.partition.scaled(s),
            localize=None if self.localize is None else self.localize.scaled(s),
        )

    # -------------------------------------------------------------- json
    @classmethod
    def from_dict(cls, doc: dict) -> "ScenarioSpec":
        try:
            d = int(doc["dimension"])
            csg = parse_shape(doc["csg"])
            pred = parse_predicate(doc.get("dirichlet", "none"))
        except KeyError as exc:
            raise ConfigError(f"scenario is missing key {exc}") from None
        cracks = []
        for c in doc.get("cracks", []):
            v = np.asarray(c["vertices"], dtype=float)
            if v.ndim != 2 or v.shape[1] != d or len(v) < d:
                raise ConfigError("crack vertices must be a list of at least d points in R^d")
            cracks.append(v)
        patches = tuple(
            PatchSpec(tuple(map(float, p["min"])), tuple(map(float, p["max"])), int(p.get("axis", 0)),
                      int(p.get("direction", 1)), str(p.get("rule", "reflect")))
            for p in doc.get("patches", [])
        )
        for p in patches:
            if p.rule not in ("reflect", "identity") or p.direction not in (-1, 1):
                raise ConfigError(f"bad patch {p}")
        part = doc.get("partition")
        loc = doc.get("localize")
        return cls(
            name=str(doc.get("name", "unnamed")),
            dimension=d,
            csg=csg,
            dirichlet=pred,
            resolution=float(doc.get("resolution", 16)),
            padding=int(doc.get("padding", 2)),
            padding_length=float(doc.get("padding_length", 0.0)),
            cracks=tuple(cracks),
            patches=patches,
            partition=None if part is None else PartitionSpec(float(part.get("eps", 0.05)), float(part.get("margin", 0.1))),
            localize=None if loc is None else LocalizeSpec(parse_shape(loc["U"]), parse_shape(loc["V"]), float(loc.get("width", 0.05))),
            description=str(doc.get("description", "")),
        )

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "description": self.description,
            "dimension": self.dimension,
            "resolution": self.resolution,
            "padding": self.padding,
            "padding_length": self.padding_length,
            "csg": self.csg.to_dict(),
            "dirichlet": self.dirichlet.to_json(),
            "cracks": [{"vertices": np.asarray(c).tolist()} for c in self.cracks],
            "patches": [p.to_json() for p in self.patches],
        }
        if self.partition is not None:
            out["partition"] = {"eps": self.partition.eps, "margin": self.partition.margin}
        if self.localize is not None:
            out["localize"] = self.localize.to_json()
        return out


def load_scenario(source) -> ScenarioSpec:
    """Built-in name, path to a JSON file, or an already parsed dict."""
    if isinstance(source, ScenarioSpec):
        return source
    if isinstance(source, dict):
        return ScenarioSpec.from_dict(source)
    if source in BUILTINS:
        return ScenarioSpec.from_dict(copy.deepcopy(BUILTINS[source]))
    path = Path(source)
    if not path.exists():
        raise ConfigError(f"no built-in scenario or file named '{source}'")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return ScenarioSpec.from_dict(doc)


def save_scenario(spec: ScenarioSpec, path) -> None:
    Path(path).write_text(json.dumps(spec.to_dict(), indent=2, sort_keys=True))


# ---------------------------------------------------------------- rasterize
def _grid_for(spec: ScenarioSpec):
    lo, hi = spec.csg.bounds()
    lo = np.asarray(lo, float)[: spec.dimension]
    hi = np.asarray(hi, float)[: spec.dimension]
    if lo.shape != (spec.dimension,):
        raise BadDimension("CSG dimension does not match the scenario dimension")
    h = spec.h
    pad = spec.pad_cells()
    k_lo = np.floor(lo / h + _TOL).astype(int)
    k_hi = np.ceil(hi / h - _TOL).astype(int)
    origin = (k_lo - pad) * h
    dims = tuple(int(n) for n in (k_hi - k_lo + 2 * pad))
    return h, origin, dims


def _crack_faces_2d(centers_lo: np.ndarray, a: int, h: float, poly: np.ndarray) -> np.ndarray:
    """Faces whose center-to-center segment meets the polyline ``poly``."""
    p = centers_lo
    r = np.zeros(2)
    r[a] = h
    hit = np.zeros(len(p), dtype=bool)
    for q0, q1 in zip(poly[:-1], poly[1:]):
        s = q1 - q0
        denom = r[0] * s[1] - r[1] * s[0]
        if abs(denom) < 1e-15:
            continue
        w = q0 - p
        t = (w[:, 0] * s[1] - w[:, 1] * s[0]) / denom
        u = (w[:, 0] * r[1] - w[:, 1] * r[0]) / denom
        hit |= (t >= -_TOL) & (t <= 1 + _TOL) & (u >= -_TOL) & (u <= 1 + _TOL)
    return hit


def _crack_faces_3d(centers_lo: np.ndarray, a: int, h: float, poly: np.ndarray) -> np.ndarray:
    """Faces whose center-to-center segment meets a planar convex polygon."""
    v0 = poly[0]
    n = np.cross(poly[1] - v0, poly[2] - v0)
    n /= np.linalg.norm(n)
    if abs(n[a]) < 1e-12:
        return np.zeros(len(centers_lo), dtype=bool)
    t = ((v0 - centers_lo) @ n) / (h * n[a])
    ok = (t >= -_TOL) & (t <= 1 + _TOL)
    x = centers_lo.copy()
    x[:, a] += t * h
    for i in range(len(poly)):
        e = poly[(i + 1) % len(poly)] - poly[i]
        side = np.cross(e, x - poly[i]) @ n
        ok &= side >= -_TOL * max(1.0, float(np.linalg.norm(e)))
    return ok


def rasterize(spec: ScenarioSpec) -> G.VoxelDomain:
    h, origin, dims = _grid_for(spec)
    d = spec.dimension
    probe = G.VoxelDomain(h=h, origin=origin, inside=np.zeros(dims, bool), blocked=G.empty_faces(dims))
    centers = probe.all_centers().reshape(-1, d)
    inside = spec.csg.contains(centers).reshape(dims)
    if not inside.any():
        raise EmptyDomain(f"scenario '{spec.name}' has no inside cell at resolution {spec.resolution}")

    blocked = list(G.empty_faces(dims))
    ids = [np.full(G.face_shape(dims, a), -1, dtype=np.int32) for a in range(d)]
    cell_centers = probe.all_centers()
    for cid, poly in enumerate(spec.cracks):
        if d == 1:
            raise BadDimension("cracks are not supported in one dimension")
        for a in range(d):
            lo_c = cell_centers[G.lower(a, d)].reshape(-1, d)
            hit = (_crack_faces_2d if d == 2 else _crack_faces_3d)(lo_c, a, h, poly)
            hit = hit.reshape(G.face_shape(dims, a))
            interior = inside[G.lower(a, d)] & inside[G.upper(a, d)]
            if np.any(hit & ~interior):
                raise CrackNotInterior(f"crack {cid} touches a face that is not between two inside cells")
            blocked[a] |= hit
            ids[a][hit] = cid

    dom = G.VoxelDomain(h=h, origin=origin, inside=inside, blocked=tuple(blocked), crack_id=tuple(ids))
    adj = dom.adjacency()
    flat = inside.ravel()
    sub = adj[flat][:, flat]
    ncomp, labels = connected_components(sub, directed=False)
    warns = ()
    if ncomp > 1:
        sizes = np.bincount(labels)
        keep = np.zeros_like(flat)
        keep[np.flatnonzero(flat)[labels == np.argmax(sizes)]] = True
        inside = keep.reshape(dims)
        msg = f"inside set had {ncomp} components; kept the largest ({sizes.max()} of {sizes.sum()} cells)"
        _warnings.warn(msg, RuntimeWarning, stacklevel=2)
        warns = (msg,)
        for a in range(d):
            ok = inside[G.lower(a, d)] & inside[G.upper(a, d)]
            blocked[a] &= ok
            ids[a][~blocked[a]] = -1
    return G.VoxelDomain(h=h, origin=origin, inside=inside, blocked=tuple(blocked), crack_id=tuple(ids), warnings=warns)


# ------------------------------------------------------------------ labelling
@dataclass(frozen=True, eq=False)
class BoundaryLabeling:
    """Split of the discrete boundary into Dirichlet part ``D`` and ``Gamma``.

    ``added`` counts faces pulled into ``D`` by the closure rule and
    ``junctions`` marks the Gamma faces touching ``D`` (the points where the
    two boundary parts meet).
    """

    dirichlet: G.Faces
    neumann: G.Faces
    d_points: np.ndarray
    added: int = 0
    junctions: G.Faces = None

    @property
    def empty(self) -> bool:
        return len(self.d_points) == 0

    @property
    def n_dirichlet(self) -> int:
        return G.faces_count(self.dirichlet)

    @property
    def n_neumann(self) -> int:
        return G.faces_count(self.neumann)

    @classmethod
    def from_faces(cls, domain: G.VoxelDomain, selected: G.Faces, close: bool = True) -> "BoundaryLabeling":
        base = domain.all_boundary()
        flags = G.face_values(base, selected)
        adj, _ = G.face_vertex_adjacency(domain.dims, base)
        added = 0
        if close and adj.shape[0]:
            deg = np.asarray(adj.sum(axis=1)).ravel()
            while True:
                nd = adj @ flags.astype(np.int64)
                grow = (~flags) & (deg > 0) & (nd == deg)
                if not grow.any():
                    break
                added += int(grow.sum())
                flags = flags | grow
        dirichlet = G.select_faces(domain.dims, base, flags)
        neumann = G.faces_minus(base, dirichlet)
        if adj.shape[0]:
            touch = (adj @ flags.astype(np.int64)) > 0
            junctions = G.select_faces(domain.dims, base, (~flags) & touch)
        else:
            junctions = G.empty_faces(domain.dims)
        return cls(dirichlet, neumann, domain.face_centroids(dirichlet), added, junctions)


def face_context(domain: G.VoxelDomain) -> Tuple[G.Faces, FaceContext]:
    base = domain.all_boundary()
    ctx = FaceContext(
        centroids=domain.face_centroids(base),
        crack_id=G.face_values(base, domain.crack_id).astype(np.int64),
        h=domain.h,
    )
    return base, ctx


def label_boundary(domain: G.VoxelDomain, spec_or_predicate) -> BoundaryLabeling:
    pred = spec_or_predicate.dirichlet if isinstance(spec_or_predicate, ScenarioSpec) else spec_or_predicate
    base, ctx = face_context(domain)
    flags = np.asarray(pred.evaluate(ctx), dtype=bool)
    selected = G.select_faces(domain.dims, base, flags)
    return BoundaryLabeling.from_faces(domain, selected)


# ------------------------------------------------------------------ distance
@dataclass(frozen=True, eq=False)
class DistanceField:
    values: np.ndarray
    infinite: bool = False

    def box(self, domain: G.VoxelDomain, fill: float = np.inf) -> np.ndarray:
        return domain.to_box(self.values, fill)


def nearest_distance(points: np.ndarray, queries: np.ndarray, workers: int = 1) -> np.ndarray:
    if len(points) == 0:
        return np.full(len(queries), np.inf)
    dist, _ = cKDTree(points).query(queries, workers=workers)
    return np.asarray(dist, dtype=float)


def distance_to_D(domain: G.VoxelDomain, labeling: BoundaryLabeling, workers: int = 1) -> DistanceField:
    if labeling.empty:
        return DistanceField(np.full(domain.n_inside, np.inf), infinite=True)
    return DistanceField(nearest_distance(labeling.d_points, domain.centers(), workers))


# ------------------------------------------------------------------ built-ins
def _patch(lo, hi, axis, direction, rule="reflect"):
    return {"min": lo, "max": hi, "axis": axis, "direction": direction, "rule": rule}


_CUBE = {"box": {"min": [0, 0, 0], "max": [1, 1, 1]}}

BUILTINS = {
    "interval": {
        "name": "interval",
        "description": "Unit interval, Dirichlet at x = 0 and Neumann at x = 1.",
        "dimension": 1,
        "resolution": 64,
        "csg": {"box": {"min": [0], "max": [1]}},
        "dirichlet": {"halfspace": {"normal": [-1], "offset": -0.5}},
    },
    "square-edge": {
        "name": "square-edge",
        "description": "Unit square, Dirichlet on the left edge.",
        "dimension": 2,
        "resolution": 16,
        "csg": {"box": {"min": [0, 0], "max": [1, 1]}},
        "dirichlet": {"halfspace": {"normal": [-1, 0], "offset": -0.01}},
    },
    "square-full": {
        "name": "square-full",
        "description": "Unit square, Dirichlet on the whole boundary.",
        "dimension": 2,
        "resolution": 16,
        "csg": {"box": {"min": [0, 0], "max": [1, 1]}},
        "dirichlet": "all",
    },
    "slit-square": {
        "name": "slit-square",
        "description": "Unit square with a horizontal slit that carries the Dirichlet condition.",
        "dimension": 2,
        "resolution": 16,
        "csg": {"box": {"min": [0, 0], "max": [1, 1]}},
        "cracks": [{"vertices": [[0.25, 0.5], [0.75, 0.5]]}],
        "dirichlet": "crack",
    },
    "annulus-mixed": {
        "name": "annulus-mixed",
        "description": "Annulus 1 < |x| < 2; Dirichlet on the inner circle and on the right half of the outer circle.",
        "dimension": 2,
        "resolution": 16,
        "padding_length": 0.5,
        "csg": {"shell": {"center": [0, 0], "inner": 1, "outer": 2}},
        "dirichlet": {"or": [
            {"in": {"ball": {"center": [0, 0], "radius": 1.5}}},
            {"halfspace": {"normal": [1, 0], "offset": 0.0}},
        ]},
        "patches": [
            _patch([-2.4, -1.6], [-1.1, 1.6], 0, -1),
            _patch([-1.8, 1.05], [0.8, 2.4], 1, 1),
            _patch([-1.8, -2.4], [0.8, -1.05], 1, -1),
        ],
        "partition": {"eps": 0.05, "margin": 0.125},
    },
    "cube-crack": {
        "name": "cube-crack",
        "description": "Unit cube with a square crack in the plane z = 1/2; Dirichlet on the crack and on the sides x = 0, x = 1.",
        "dimension": 3,
        "resolution": 16,
        "csg": _CUBE,
        "cracks": [{"vertices": [[0.25, 0.25, 0.5], [0.75, 0.25, 0.5], [0.75, 0.75, 0.5], [0.25, 0.75, 0.5]]}],
        "dirichlet": {"or": [
            "crack",
            {"halfspace": {"normal": [-1, 0, 0], "offset": -0.01}},
            {"halfspace": {"normal": [1, 0, 0], "offset": 0.99}},
        ]},
    },
    "cube-triangle": {
        "name": "cube-triangle",
        "description": "Unit cube with a triangular crack carrying the Neumann part; Dirichlet on the outer sides minus a disk on the top plate.",
        "dimension": 3,
        "resolution": 16,
        "padding_length": 0.3,
        "csg": _CUBE,
        "cracks": [{"vertices": [[0.3, 0.3, 0.5], [0.7, 0.3, 0.5], [0.5, 0.7, 0.5]]}],
        "dirichlet": {"and": [
            "outer",
            {"not": {"in": {"ball": {"center": [0.5, 0.5, 1.0], "radius": 0.2}}}},
        ]},
        "patches": [
            _patch([0.05, 0.05, 0.6], [0.95, 0.95, 1.25], 2, 1),
            _patch([0.0, 0.0, 0.2], [1.0, 1.0, 0.8], 2, 1, "identity"),
        ],
        "partition": {"eps": 0.05, "margin": 0.1},
        "localize": {
            "U": {"difference": [{"box": {"min": [-0.5, -0.5, -0.5], "max": [1.5, 1.5, 1.5]}},
                                 {"box": {"min": [0.22, 0.22, 0.22], "max": [0.78, 0.78, 0.78]}}]},
            "V": {"box": {"min": [0.15, 0.15, 0.15], "max": [0.85, 0.85, 0.85]}},
            "width": 0.05,
        },
    },
}


def builtin_names() -> List[str]:
    return sorted(BUILTINS)
