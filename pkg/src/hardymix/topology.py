"""
Component analysis, the completed domain (bullet) and crack removal (star).

The completed domain fills every complement component of ``Omega`` whose
shared boundary is not entirely Dirichlet, so that its boundary inside the
enclosing box consists of ``D`` only.  Crack removal unblocks a chosen set of
crack faces and keeps track of which boundary pieces survive.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.sparse.csgraph import connected_components

from . import grid as G
from .errors import ENotOnBoundary
from .scenario import BoundaryLabeling

DIRICHLET_ENCLOSED = "DirichletEnclosed"
ATTACHED = "Attached"
TYPE_D = "D"
TYPE_D_BOX = "D ∪ ∂B"


# -------------------------------------------------------------- components
@dataclass(frozen=True, eq=False)
class ComponentLabeling:
    """Labels ``0..count-1`` on mask cells (``-1`` elsewhere), numbered by first cell in C order."""

    labels: np.ndarray
    count: int
    sizes: np.ndarray
    blocked: Optional[G.Faces] = None

    def mask(self, k: int) -> np.ndarray:
        return self.labels == k

    def boundary_faces(self, k: int) -> G.Faces:
        """Faces between component ``k`` and any other cell, plus its blocked faces."""
        m = self.mask(k)
        d = m.ndim
        out = []
        for a in range(d):
            lo, hi = m[G.lower(a, d)], m[G.upper(a, d)]
            f = lo != hi
            if self.blocked is not None:
                f = f | (lo & hi & self.blocked[a])
            out.append(f)
        return tuple(out)

    def touches_box(self, k: int) -> bool:
        m = self.mask(k)
        for a in range(m.ndim):
            if m.take(0, axis=a).any() or m.take(-1, axis=a).any():
                return True
        return False


def components(mask: np.ndarray, blocked: Optional[G.Faces] = None) -> ComponentLabeling:
    """Face-connected components of ``mask``; ``blocked`` faces cut adjacency."""
    dims = mask.shape
    dom = G.VoxelDomain(
        h=1.0, origin=np.zeros(len(dims)), inside=mask,
        blocked=blocked if blocked is not None else G.empty_faces(dims),
    )
    adj = dom.adjacency(mask, respect_blocked=blocked is not None)
    flat = mask.ravel()
    cells = np.flatnonzero(flat)
    labels = np.full(flat.shape, -1, dtype=np.int64)
    if len(cells) == 0:
        return ComponentLabeling(labels.reshape(dims), 0, np.zeros(0, int), blocked)
    n, lab = connected_components(adj[cells][:, cells], directed=False)
    _, first = np.unique(lab, return_index=True)
    rank = np.empty(n, dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(n)
    labels[cells] = rank[lab]
    sizes = np.bincount(labels[cells], minlength=n)
    return ComponentLabeling(labels.reshape(dims), int(n), sizes, blocked)


def flood_fill_components(mask: np.ndarray, blocked: Optional[G.Faces] = None) -> np.ndarray:
    """Plain breadth-first labelling in scan order, kept as an independent reference."""
    from collections import deque

    d = mask.ndim
    labels = np.full(mask.shape, -1, dtype=np.int64)
    nxt = 0
    for start in zip(*np.nonzero(mask)):
        if labels[start] >= 0:
            continue
        labels[start] = nxt
        queue = deque([start])
        while queue:
            c = queue.popleft()
            for a in range(d):
                for step in (-1, 1):
                    q = list(c)
                    q[a] += step
                    if not 0 <= q[a] < mask.shape[a]:
                        continue
                    q = tuple(q)
                    if not mask[q] or labels[q] >= 0:
                        continue
                    if blocked is not None:
                        f = list(min(c, q, key=lambda t: t[a]))
                        if blocked[a][tuple(f)]:
                            continue
                    labels[q] = nxt
                    queue.append(q)
        nxt += 1
    return labels


# ------------------------------------------------------------------ bullet
@dataclass(frozen=True)
class Hole:
    label: int
    kind: str
    cells: int
    touches_box: bool
    shared_faces: int
    gamma_faces: int


@dataclass(frozen=True, eq=False)
class BulletDomain:
    """``Omega`` completed by its Attached holes; D faces inside stay blocked."""

    domain: G.VoxelDomain
    original: G.VoxelDomain
    dirichlet: G.Faces
    holes: Tuple[Hole, ...]
    boundary_type: str

    @property
    def mask(self) -> np.ndarray:
        return self.domain.inside

    def hole_counts(self) -> dict:
        out = {DIRICHLET_ENCLOSED: 0, ATTACHED: 0}
        for hole in self.holes:
            out[hole.kind] += 1
        return out

    def boundary_points(self) -> np.ndarray:
        """Centroids of the discrete boundary of the completed domain, box edge included."""
        dom = self.domain
        pts = [dom.face_centroids(dom.all_boundary())]
        pts.append(_box_edge_centroids(dom, dom.inside))
        return np.concatenate(pts, axis=0)

    def as_domain(self) -> Tuple[G.VoxelDomain, BoundaryLabeling]:
        """Completed domain padded by one cell, with its whole boundary Dirichlet."""
        dom = self.domain.padded(1)
        return dom, BoundaryLabeling.from_faces(dom, dom.all_boundary(), close=False)

    def to_dict(self) -> dict:
        return {
            "boundary_type": self.boundary_type,
            "holes": [h.__dict__ for h in self.holes],
            "hole_counts": self.hole_counts(),
            "cells_omega": self.original.n_inside,
            "cells_bullet": self.domain.n_inside,
        }


def _box_edge_centroids(dom: G.VoxelDomain, mask: np.ndarray) -> np.ndarray:
    pts = []
    for a, side, sl in G.box_edge_faces(dom.dims):
        m = np.zeros(dom.dims, dtype=bool)
        m[sl] = True
        m &= mask
        c = dom.centers(m)
        c[:, a] += (-0.5 if side == 0 else 0.5) * dom.h
        pts.append(c)
    return np.concatenate(pts, axis=0) if pts else np.zeros((0, dom.d))


def _face_mask_pair(inside: np.ndarray, other: np.ndarray) -> G.Faces:
    """Faces with one adjacent cell in ``inside`` and the other in ``other``."""
    d = inside.ndim
    return tuple(
        (inside[G.lower(a, d)] & other[G.upper(a, d)]) | (other[G.lower(a, d)] & inside[G.upper(a, d)])
        for a in range(d)
    )


def classify_hole(domain: G.VoxelDomain, hole_mask: np.ndarray, labeling: BoundaryLabeling) -> Tuple[str, int, int]:
    """``DirichletEnclosed`` iff every face the hole shares with Omega is in D."""
    shared = _face_mask_pair(domain.inside, hole_mask)
    gamma = G.faces_minus(shared, labeling.dirichlet)
    n_shared, n_gamma = G.faces_count(shared), G.faces_count(gamma)
    return (ATTACHED if n_gamma else DIRICHLET_ENCLOSED), n_shared, n_gamma


def build_bullet(domain: G.VoxelDomain, labeling: BoundaryLabeling) -> BulletDomain:
    d = domain.d
    comp = components(~domain.inside)
    mask = domain.inside.copy()
    holes = []
    for k in range(comp.count):
        hm = comp.mask(k)
        kind, n_shared, n_gamma = classify_hole(domain, hm, labeling)
        holes.append(Hole(k, kind, int(comp.sizes[k]), comp.touches_box(k), n_shared, n_gamma))
        if kind == ATTACHED:
            mask |= hm
    blocked = tuple(
        labeling.dirichlet[a] & mask[G.lower(a, d)] & mask[G.upper(a, d)] for a in range(d)
    )
    ids = tuple(np.where(blocked[a], np.maximum(domain.crack_id[a], 0), -1) for a in range(d))
    bdom = G.VoxelDomain(h=domain.h, origin=domain.origin, inside=mask, blocked=blocked, crack_id=ids)
    touches = any(h.touches_box and h.kind == ATTACHED for h in holes)
    return BulletDomain(bdom, domain, labeling.dirichlet, tuple(holes), TYPE_D_BOX if touches else TYPE_D)


# ------------------------------------------------------------ verification
@dataclass(frozen=True, eq=False)
class BulletCheck:
    passed: bool
    boundary_type: str
    discrepancies: List[dict]
    pinch_points: List[tuple]

    def to_dict(self):
        return {"pass": self.passed, "boundary_type": self.boundary_type,
                "discrepancies": self.discrepancies, "pinch_points": [list(p) for p in self.pinch_points]}


def pinch_points(mask: np.ndarray) -> List[tuple]:
    """Lower corners of 2x2 blocks (in any coordinate plane) filled like a checkerboard."""
    d = mask.ndim
    out = []
    for a in range(d):
        for b in range(a + 1, d):
            s00 = [slice(None)] * d
            s00[a], s00[b] = slice(None, -1), slice(None, -1)
            s10, s01, s11 = list(s00), list(s00), list(s00)
            s10[a] = slice(1, None)
            s01[b] = slice(1, None)
            s11[a], s11[b] = slice(1, None), slice(1, None)
            m00, m10, m01, m11 = (mask[tuple(s)] for s in (s00, s10, s01, s11))
            pinch = (m00 & m11 & ~m10 & ~m01) | (~m00 & ~m11 & m10 & m01)
            out.extend(tuple(int(i) for i in idx) for idx in np.argwhere(pinch))
    return sorted(set(out))


def _reverse(domain: G.VoxelDomain, labeling: BoundaryLabeling) -> Tuple[G.VoxelDomain, BoundaryLabeling]:
    axes = tuple(range(domain.d))
    flip = lambda f: tuple(np.flip(x, axis=axes) for x in f)
    rdom = G.VoxelDomain(
        h=domain.h, origin=domain.origin, inside=np.flip(domain.inside, axis=axes),
        blocked=flip(domain.blocked), crack_id=flip(domain.crack_id),
    )
    rlab = BoundaryLabeling(flip(labeling.dirichlet), flip(labeling.neumann), labeling.d_points)
    return rdom, rlab


def verify_bullet(bullet: BulletDomain, labeling: BoundaryLabeling) -> BulletCheck:
    """Face-level check of the boundary dichotomy plus the determinism surrogate."""
    dom = bullet.domain
    d = dom.d
    issues = []
    if not np.all(bullet.mask[bullet.original.inside]):
        issues.append({"check": "omega_subset", "cells": int(np.sum(bullet.original.inside & ~bullet.mask))})
    internal = dom.all_boundary()
    for name, extra in (("boundary_not_in_D", G.faces_minus(internal, labeling.dirichlet)),
                        ("D_not_on_boundary", G.faces_minus(labeling.dirichlet, internal))):
        if G.faces_count(extra):
            issues.append({"check": name, "faces": [[a, list(i)] for a, i in G.faces_list(extra)][:50],
                           "count": G.faces_count(extra)})
    on_edge = []
    for a, side, sl in G.box_edge_faces(dom.dims):
        on_edge.append(bullet.mask[sl].ravel())
    on_edge = np.concatenate(on_edge)
    if bullet.boundary_type == TYPE_D:
        if on_edge.any():
            issues.append({"check": "box_edge_in_type_D", "count": int(on_edge.sum())})
    else:
        if not on_edge.any():
            issues.append({"check": "type_D_box_without_box_faces"})
        elif d >= 2 and not on_edge.all():
            issues.append({"check": "box_edge_partial", "missing": int((~on_edge).sum())})
    comp = components(bullet.mask, dom.blocked)
    if comp.count != 1:
        issues.append({"check": "connected", "components": comp.count})
    rdom, rlab = _reverse(bullet.original, labeling)
    again = build_bullet(rdom, rlab)
    if not np.array_equal(np.flip(again.mask, axis=tuple(range(d))), bullet.mask):
        issues.append({"check": "scan_order"})
    return BulletCheck(not issues, bullet.boundary_type, issues, pinch_points(bullet.mask))


# -------------------------------------------------------------------- star
@dataclass(frozen=True, eq=False)
class StarDomain:
    domain: G.VoxelDomain
    original: G.VoxelDomain
    E: G.Faces
    E_star: G.Faces
    Xi: G.Faces
    unblocked: G.Faces

    def check(self) -> bool:
        """Face-level identity: boundary of the star domain is ``Xi`` plus ``E_star``."""
        return G.faces_equal(self.domain.all_boundary(), G.faces_or(self.Xi, self.E_star)) and bool(
            np.all(self.domain.inside[self.original.inside])
        )

    def restrict_labeling(self, labeling: BoundaryLabeling) -> BoundaryLabeling:
        """Dirichlet part carried over to the star domain (unblocked faces drop out)."""
        dirichlet = G.faces_minus(labeling.dirichlet, self.unblocked)
        return BoundaryLabeling.from_faces(self.domain, dirichlet, close=False)


def build_star(domain: G.VoxelDomain, E: G.Faces) -> StarDomain:
    bnd = domain.all_boundary()
    stray = G.faces_minus(E, bnd)
    if G.faces_count(stray):
        raise ENotOnBoundary(f"{G.faces_count(stray)} faces of E are not boundary or crack faces")
    unblock = G.faces_and(E, domain.blocked)
    blocked = G.faces_minus(domain.blocked, unblock)
    star = domain.with_blocked(blocked)
    e_star = G.faces_and(E, star.all_boundary())
    xi = G.faces_minus(bnd, E)
    return StarDomain(star, domain, E, e_star, xi, unblock)
