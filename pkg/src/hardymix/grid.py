"""
Cell-centered voxel grids with face adjacency.

A face set is stored as a tuple with one boolean array per axis.  The array for
axis ``a`` has the grid shape with ``dims[a] - 1`` entries along ``a``; entry
``idx`` is the face between cell ``idx`` and cell ``idx + e_a``.  Faces on the
outer surface of the enclosing box are not part of this layout and are handled
separately where needed (see :func:`box_edge_faces`).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

Faces = Tuple[np.ndarray, ...]


def lower(a: int, d: int) -> tuple:
    """Index selecting the lower cell of every axis-``a`` face."""
    s = [slice(None)] * d
    s[a] = slice(None, -1)
    return tuple(s)


def upper(a: int, d: int) -> tuple:
    s = [slice(None)] * d
    s[a] = slice(1, None)
    return tuple(s)


def face_shape(dims: Sequence[int], a: int) -> tuple:
    shape = list(dims)
    shape[a] -= 1
    return tuple(shape)


def empty_faces(dims: Sequence[int]) -> Faces:
    return tuple(np.zeros(face_shape(dims, a), dtype=bool) for a in range(len(dims)))


def faces_or(*fs: Faces) -> Faces:
    return tuple(np.logical_or.reduce([f[a] for f in fs]) for a in range(len(fs[0])))


def faces_and(f: Faces, g: Faces) -> Faces:
    return tuple(x & y for x, y in zip(f, g))


def faces_minus(f: Faces, g: Faces) -> Faces:
    return tuple(x & ~y for x, y in zip(f, g))


def faces_count(f: Faces) -> int:
    return int(sum(int(x.sum()) for x in f))


def faces_equal(f: Faces, g: Faces) -> bool:
    return all(np.array_equal(x, y) for x, y in zip(f, g))


def faces_subset(f: Faces, g: Faces) -> bool:
    return all(not np.any(x & ~y) for x, y in zip(f, g))


def faces_list(f: Faces) -> List[tuple]:
    """Explicit ``(axis, index)`` list of the faces in ``f`` (scan order)."""
    out = []
    for a, arr in enumerate(f):
        for idx in np.argwhere(arr):
            out.append((a, tuple(int(i) for i in idx)))
    return out


def pad_faces(f: Faces, width: int = 1) -> Faces:
    """Embed a face set into a grid padded by ``width`` cells on every side."""
    d = len(f)
    out = []
    for a, arr in enumerate(f):
        out.append(np.pad(arr, [(width, width)] * d, constant_values=False))
    return tuple(out)


def box_edge_faces(dims: Sequence[int]) -> List[tuple]:
    """Outer faces of the index box as ``(axis, side, cell_index_array)``."""
    d = len(dims)
    out = []
    for a in range(d):
        for side in (0, 1):
            s = [slice(None)] * d
            s[a] = slice(0, 1) if side == 0 else slice(dims[a] - 1, dims[a])
            out.append((a, side, tuple(s)))
    return out


@dataclass(frozen=True, eq=False)
class VoxelDomain:
    """Occupancy grid of a bounded domain inside its enclosing index box ``B``.

    ``origin`` is the coordinate of the lower corner of cell ``(0, ..., 0)``;
    cell ``idx`` has center ``origin + (idx + 1/2) h``.  ``blocked`` marks
    internal faces removed from adjacency (cracks); ``crack_id`` carries the
    index of the crack patch that produced each blocked face, -1 otherwise.
    """

    h: float
    origin: np.ndarray
    inside: np.ndarray
    blocked: Faces
    crack_id: Tuple[np.ndarray, ...] = None
    warnings: tuple = field(default=())

    def __post_init__(self):
        if self.crack_id is None:
            ids = tuple(np.where(b, 0, -1).astype(np.int32) for b in self.blocked)
            object.__setattr__(self, "crack_id", ids)
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float))

    @property
    def d(self) -> int:
        return self.inside.ndim

    @property
    def dims(self) -> tuple:
        return self.inside.shape

    @property
    def n_inside(self) -> int:
        return int(self.inside.sum())

    @property
    def cell_volume(self) -> float:
        return self.h ** self.d

    # ------------------------------------------------------------------ cells
    def index_map(self) -> np.ndarray:
        """Box-shaped array of compact cell indices (-1 outside)."""
        idx = np.full(self.dims, -1, dtype=np.int64)
        idx[self.inside] = np.arange(self.n_inside)
        return idx

    def centers(self, mask: np.ndarray = None) -> np.ndarray:
        """Centers of the cells selected by ``mask`` (default: inside), C order."""
        if mask is None:
            mask = self.inside
        idx = np.argwhere(mask)
        return self.origin + (idx + 0.5) * self.h

    def all_centers(self) -> np.ndarray:
        grids = np.meshgrid(*[np.arange(n) for n in self.dims], indexing="ij")
        return np.stack([self.origin[a] + (g + 0.5) * self.h for a, g in enumerate(grids)], axis=-1)

    def to_box(self, values: np.ndarray, fill: float = 0.0) -> np.ndarray:
        box = np.full(self.dims, fill, dtype=float)
        box[self.inside] = values
        return box

    # ------------------------------------------------------------------ faces
    def boundary_faces(self) -> Faces:
        """Faces separating an inside cell from an outside cell."""
        d = self.d
        return tuple(self.inside[lower(a, d)] != self.inside[upper(a, d)] for a in range(d))

    def interior_faces(self) -> Faces:
        """Unblocked faces between two inside cells."""
        d = self.d
        return tuple(
            self.inside[lower(a, d)] & self.inside[upper(a, d)] & ~self.blocked[a] for a in range(d)
        )

    def all_boundary(self) -> Faces:
        """Discrete boundary of the domain: boundary faces plus blocked faces."""
        return faces_or(self.boundary_faces(), self.blocked)

    def face_centroids(self, faces: Faces) -> np.ndarray:
        pts = []
        for a, arr in enumerate(faces):
            idx = np.argwhere(arr).astype(float)
            c = self.origin + (idx + 0.5) * self.h
            c[:, a] += 0.5 * self.h
            pts.append(c)
        if not pts:
            return np.zeros((0, self.d))
        return np.concatenate(pts, axis=0)

    def box_edge_centroids(self) -> np.ndarray:
        pts = []
        for a, side, sl in box_edge_faces(self.dims):
            mask = np.zeros(self.dims, dtype=bool)
            mask[sl] = True
            c = self.centers(mask)
            c[:, a] += (-0.5 if side == 0 else 0.5) * self.h
            pts.append(c)
        return np.concatenate(pts, axis=0)

    def adjacency(self, mask: np.ndarray = None, respect_blocked: bool = True) -> sp.csr_matrix:
        """Face-adjacency graph over all box cells restricted to ``mask``."""
        if mask is None:
            mask = self.inside
        d = self.d
        n = int(np.prod(self.dims))
        ids = np.arange(n).reshape(self.dims)
        rows, cols = [], []
        for a in range(d):
            ok = mask[lower(a, d)] & mask[upper(a, d)]
            if respect_blocked:
                ok = ok & ~self.blocked[a]
            rows.append(ids[lower(a, d)][ok])
            cols.append(ids[upper(a, d)][ok])
        r = np.concatenate(rows) if rows else np.zeros(0, int)
        c = np.concatenate(cols) if cols else np.zeros(0, int)
        data = np.ones(len(r), dtype=np.int8)
        g = sp.coo_matrix((data, (r, c)), shape=(n, n))
        return (g + g.T).tocsr()

    # ------------------------------------------------------------ transforms
    def scaled(self, s: float) -> "VoxelDomain":
        """Dilation ``x -> s x`` of the whole grid."""
        return VoxelDomain(
            h=self.h * s,
            origin=self.origin * s,
            inside=self.inside,
            blocked=self.blocked,
            crack_id=self.crack_id,
            warnings=self.warnings,
        )

    def with_blocked(self, blocked: Faces, inside: np.ndarray = None) -> "VoxelDomain":
        ids = tuple(np.where(b, np.maximum(c, 0), -1) for b, c in zip(blocked, self.crack_id))
        return VoxelDomain(
            h=self.h,
            origin=self.origin,
            inside=self.inside if inside is None else inside,
            blocked=tuple(b.copy() for b in blocked),
            crack_id=ids,
            warnings=self.warnings,
        )

    def padded(self, width: int = 1) -> "VoxelDomain":
        d = self.d
        return VoxelDomain(
            h=self.h,
            origin=self.origin - width * self.h,
            inside=np.pad(self.inside, [(width, width)] * d, constant_values=False),
            blocked=pad_faces(self.blocked, width),
            crack_id=tuple(np.pad(c, [(width, width)] * d, constant_values=-1) for c in self.crack_id),
            warnings=self.warnings,
        )

    @staticmethod
    def full_box(like: "VoxelDomain") -> "VoxelDomain":
        """All cells of ``like``'s box, no cracks: the host of extended fields."""
        return VoxelDomain(
            h=like.h,
            origin=like.origin,
            inside=np.ones(like.dims, dtype=bool),
            blocked=empty_faces(like.dims),
        )


def face_vertex_adjacency(dims: Sequence[int], faces: Faces) -> Tuple[sp.csr_matrix, List[np.ndarray]]:
    """Adjacency between the given faces when their closures share a grid vertex.

    Returns the (n_faces x n_faces) adjacency in the order of
    :func:`VoxelDomain.face_centroids` and the per-axis index arrays.
    """
    d = len(dims)
    vdims = tuple(n + 1 for n in dims)
    rows, cols = [], []
    start = 0
    index_arrays = []
    for a, arr in enumerate(faces):
        idx = np.argwhere(arr)
        index_arrays.append(idx)
        m = len(idx)
        if m == 0:
            continue
        others = [b for b in range(d) if b != a]
        for corner in range(2 ** (d - 1)):
            v = idx.copy()
            v[:, a] += 1
            for k, b in enumerate(others):
                if (corner >> k) & 1:
                    v[:, b] += 1
            vid = np.ravel_multi_index(tuple(v.T), vdims)
            rows.append(np.arange(start, start + m))
            cols.append(vid)
        start += m
    n = start
    if n == 0:
        return sp.csr_matrix((0, 0)), index_arrays
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    inc = sp.coo_matrix((np.ones(len(r)), (r, c)), shape=(n, int(np.prod(vdims)))).tocsr()
    adj = (inc @ inc.T).tocsr()
    adj.setdiag(0)
    adj.eliminate_zeros()
    adj.data[:] = 1
    return adj, index_arrays


def select_faces(dims: Sequence[int], base: Faces, flags: np.ndarray) -> Faces:
    """Inverse of flattening: mark the subset of ``base`` given by ``flags``."""
    out = []
    start = 0
    for a, arr in enumerate(base):
        m = int(arr.sum())
        sub = np.zeros_like(arr)
        sub[arr] = flags[start:start + m]
        out.append(sub)
        start += m
    return tuple(out)


def face_values(base: Faces, arrays: Sequence[np.ndarray]) -> np.ndarray:
    """Gather per-face values in flattened order of ``base``."""
    return np.concatenate([arr[b] for b, arr in zip(base, arrays)]) if base else np.zeros(0)
