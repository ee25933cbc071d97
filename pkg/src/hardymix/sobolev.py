"""
Discrete first-order Sobolev calculus on voxel domains.

Gradients live on faces.  An unblocked face between two inside cells carries
the difference quotient; a Dirichlet face carries a one-sided quotient against
a ghost value 0 placed on the face (distance ``h/2``); Neumann faces carry
nothing.  Every face entry is weighted by the cell volume ``h**d``.

The subspace of functions vanishing on ``D`` is realised strongly: such
functions are zero on every inside cell adjacent to a Dirichlet face.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from . import grid as G
from .errors import CoverGap, DEmpty, NonzeroNearE, PatchNotReflectable
from .scenario import BoundaryLabeling, DistanceField, PartitionSpec, PatchSpec, nearest_distance

FULL = "Full"
VANISHING = "VanishingOnD"

INTERIOR, GHOST_LO, GHOST_HI = 0, 1, 2


def smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


@dataclass(frozen=True, eq=False)
class GridFunction:
    values: np.ndarray
    domain: G.VoxelDomain
    tag: str = FULL

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.domain.n_inside,):
            raise ValueError(f"expected {self.domain.n_inside} values, got shape {v.shape}")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_callable(cls, domain: G.VoxelDomain, f, tag: str = FULL) -> "GridFunction":
        return cls(np.asarray(f(domain.centers()), dtype=float), domain, tag)

    def box(self, fill: float = 0.0) -> np.ndarray:
        return self.domain.to_box(self.values, fill)

    def with_values(self, values: np.ndarray) -> "GridFunction":
        return GridFunction(values, self.domain, self.tag)


# ---------------------------------------------------------------- gradient
@dataclass(frozen=True, eq=False)
class GradientOperator:
    """Sparse map from inside-cell values to face gradient entries."""

    matrix: sp.csr_matrix
    weight: float
    axis: np.ndarray
    kind: np.ndarray
    face: np.ndarray

    @property
    def n_entries(self) -> int:
        return self.matrix.shape[0]

    def restrict(self, cols: np.ndarray) -> sp.csr_matrix:
        return self.matrix[:, cols]

    def stiffness(self) -> sp.csr_matrix:
        """``G^T W G``: the quadratic form of the p = 2 energy."""
        return (self.matrix.T @ self.matrix).tocsr() * self.weight


def gradient_operator(domain: G.VoxelDomain, labeling: Optional[BoundaryLabeling] = None) -> GradientOperator:
    d, h = domain.d, domain.h
    idx = domain.index_map()
    rows, cols, vals, axis, kind, face = [], [], [], [], [], []
    n = 0

    def add(cells_a, coef_a, cells_b, coef_b, a, k, fidx):
        nonlocal n
        m = len(fidx)
        if m == 0:
            return
        r = np.arange(n, n + m)
        for cells, coef in ((cells_a, coef_a), (cells_b, coef_b)):
            if cells is not None:
                rows.append(r)
                cols.append(cells)
                vals.append(np.full(m, coef))
        axis.append(np.full(m, a))
        kind.append(np.full(m, k))
        face.append(fidx)
        n += m

    for a in range(d):
        lo, hi = idx[G.lower(a, d)], idx[G.upper(a, d)]
        flat = np.arange(lo.size).reshape(lo.shape)
        inter = (lo >= 0) & (hi >= 0) & ~domain.blocked[a]
        add(lo[inter], -1.0 / h, hi[inter], 1.0 / h, a, INTERIOR, flat[inter])
        if labeling is not None:
            dface = labeling.dirichlet[a]
            m_lo = dface & (lo >= 0)
            add(lo[m_lo], -2.0 / h, None, 0.0, a, GHOST_LO, flat[m_lo])
            m_hi = dface & (hi >= 0)
            add(hi[m_hi], 2.0 / h, None, 0.0, a, GHOST_HI, flat[m_hi])
    cat = lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dt)
    mat = sp.csr_matrix((cat(vals, float), (cat(rows, np.int64), cat(cols, np.int64))), shape=(n, domain.n_inside))
    return GradientOperator(mat, h ** d, cat(axis, np.int8), cat(kind, np.int8), cat(face, np.int64))


@dataclass(frozen=True, eq=False)
class GradientField:
    values: np.ndarray
    axis: np.ndarray
    kind: np.ndarray
    weight: float

    def sup(self) -> float:
        return float(np.max(np.abs(self.values))) if len(self.values) else 0.0

    def norm(self, p: float) -> float:
        return float((self.weight * np.sum(np.abs(self.values) ** p)) ** (1.0 / p))


def gradient(u: GridFunction, labeling: Optional[BoundaryLabeling] = None) -> GradientField:
    op = gradient_operator(u.domain, labeling)
    return GradientField(op.matrix @ u.values, op.axis, op.kind, op.weight)


# ------------------------------------------------------------------ norms
@dataclass(frozen=True)
class Norms:
    lp: float
    grad: float
    hardy: float

    def w1p(self, p: float) -> float:
        return (self.lp ** p + self.grad ** p) ** (1.0 / p)


def norms(
    u: GridFunction, p: float, labeling: Optional[BoundaryLabeling] = None, dist: Optional[DistanceField] = None,
) -> Norms:
    """``(||u||_p, ||grad u||_p, ||u / dist_D||_p)``; the last is NaN without a distance field."""
    vol = u.domain.cell_volume
    lp = float((vol * np.sum(np.abs(u.values) ** p)) ** (1.0 / p))
    gnorm = gradient(u, labeling).norm(p)
    hardy = math.nan
    if dist is not None:
        if dist.infinite:
            raise DEmpty("the Hardy weight needs a nonempty Dirichlet part")
        hardy = float((vol * np.sum(np.abs(u.values / dist.values) ** p)) ** (1.0 / p))
    return Norms(lp, gnorm, hardy)


def hardy_quotient(u: GridFunction, p: float, labeling: BoundaryLabeling, dist: DistanceField) -> float:
    n = norms(u, p, labeling, dist)
    return (n.hardy / n.grad) ** p


# ------------------------------------------------------ Dirichlet handling
def d_adjacent_cells(domain: G.VoxelDomain, faces: G.Faces, host: Optional[np.ndarray] = None) -> np.ndarray:
    """Box mask of ``host`` cells (default: inside) touching any face in ``faces``."""
    if host is None:
        host = domain.inside
    d = domain.d
    out = np.zeros(domain.dims, dtype=bool)
    for a in range(d):
        out[G.lower(a, d)] |= faces[a]
        out[G.upper(a, d)] |= faces[a]
    return out & host


def enforce_D(
    u: GridFunction, labeling: BoundaryLabeling, width: float = 2.0, dist: Optional[DistanceField] = None,
) -> GridFunction:
    """Damp ``u`` to zero at ``D`` with a smoothstep cutoff ``width`` cells wide.

    Cells touching a ``D`` face always become exactly 0; ``width = 0`` does
    only that.
    """
    dom = u.domain
    if labeling.empty:
        return GridFunction(u.values.copy(), dom, VANISHING)
    adj = d_adjacent_cells(dom, labeling.dirichlet)[dom.inside]
    if width <= 0:
        chi = np.where(adj, 0.0, 1.0)
    else:
        if dist is None:
            dist = DistanceField(nearest_distance(labeling.d_points, dom.centers()))
        chi = smoothstep((dist.values / dom.h - 0.5) / width)
        chi[adj] = 0.0
    return GridFunction(u.values * chi, dom, VANISHING)


def trace_sup(u: GridFunction, faces: G.Faces) -> float:
    """Largest ``|u|`` over cells of ``u``'s host adjacent to a face in ``faces``."""
    dom = u.domain
    adj = d_adjacent_cells(dom, faces)
    vals = u.box()[adj]
    return float(np.max(np.abs(vals))) if vals.size else 0.0


# ------------------------------------------------------- zero extension
def extend_by_zero(
    u: GridFunction, star, p: float = 2.0, labeling: Optional[BoundaryLabeling] = None, tol: float = 0.0,
) -> GridFunction:
    """Carry ``u`` from ``Lambda`` to the star domain, checking the support condition.

    Cells adjacent to an unblocked face must hold 0 (up to ``tol``); otherwise
    :class:`NonzeroNearE` reports them along with the norm discrepancy.
    """
    sdom = star.domain
    out_vals = np.zeros(sdom.n_inside)
    out_vals[np.flatnonzero(star.original.inside[sdom.inside])] = u.values
    out = GridFunction(out_vals, sdom, u.tag)
    near = d_adjacent_cells(sdom, star.unblocked)
    bad = near & (np.abs(out.box()) > tol)
    if bad.any():
        before = norms(u, p, labeling).w1p(p)
        after = norms(out, p, None if labeling is None else star.restrict_labeling(labeling)).w1p(p)
        raise NonzeroNearE(
            f"{int(bad.sum())} cells next to removed crack faces are nonzero",
            cells=[tuple(int(i) for i in c) for c in np.argwhere(bad)],
            discrepancy=abs(after - before),
        )
    return out


# ---------------------------------------------------- partition of unity
def _patch_depth(domain: G.VoxelDomain, patch: PatchSpec) -> Tuple[np.ndarray, tuple]:
    """Chebyshev depth (1 on the border ring) of box cells inside the patch's index box, 0 outside."""
    d, h = domain.d, domain.h
    lo = np.ceil((np.asarray(patch.lo) - domain.origin) / h - 0.5 - 1e-9).astype(int)
    hi = np.floor((np.asarray(patch.hi) - domain.origin) / h - 0.5 + 1e-9).astype(int)
    clo = np.maximum(lo, 0)
    chi = np.minimum(hi, np.asarray(domain.dims) - 1)
    depth = np.zeros(domain.dims, dtype=np.int64)
    if np.any(chi < clo):
        return depth, tuple(slice(0, 0) for _ in range(d))
    sl = tuple(slice(int(a), int(b) + 1) for a, b in zip(clo, chi))
    # depth is measured from the patch's own border even where the box clips it
    grids = np.meshgrid(*[np.arange(int(a), int(b) + 1) for a, b in zip(clo, chi)], indexing="ij")
    k = None
    for a, g in enumerate(grids):
        ka = np.minimum(g - lo[a], hi[a] - g) + 1
        k = ka if k is None else np.minimum(k, ka)
    depth[sl] = k
    return depth, sl


@dataclass(frozen=True, eq=False)
class PartitionOfUnity:
    """Weights on inside cells: far field ``eta`` plus one ``eta_j`` per patch.

    ``zeta`` are box-shaped cutoffs, equal to 1 on the support of the
    matching ``eta_j``.
    """

    domain: G.VoxelDomain
    eta: np.ndarray
    etas: List[np.ndarray]
    zetas: List[np.ndarray]
    patches: List[PatchSpec]
    margin_cells: int

    def total(self) -> np.ndarray:
        return self.eta + sum(self.etas) if self.etas else self.eta.copy()


def closure_cells(domain: G.VoxelDomain) -> np.ndarray:
    d = domain.d
    out = domain.inside.copy()
    for a in range(d):
        out[G.lower(a, d)] |= domain.inside[G.upper(a, d)]
        out[G.upper(a, d)] |= domain.inside[G.lower(a, d)]
    return out


def build_partition(
    domain: G.VoxelDomain,
    labeling: Optional[BoundaryLabeling],
    patches: Sequence[PatchSpec],
    spec: Optional[PartitionSpec] = None,
    far_field: bool = True,
) -> PartitionOfUnity:
    """Clip-and-normalise smoothstep bumps over patches plus a far-field bump.

    The far-field bump vanishes within ``eps`` of the Neumann faces, so the
    far-field share of a function can be extended by zero.
    """
    spec = spec or PartitionSpec()
    h = domain.h
    m = max(2, int(round(spec.margin / h)))
    bumps, zetas = [], []
    for patch in patches:
        depth, _ = _patch_depth(domain, patch)
        inside_patch = depth > 0
        b = np.where(inside_patch, smoothstep((depth - 1.0 - m) / m), 0.0)
        z = np.where(inside_patch, smoothstep((depth - 1.0) / m), 0.0)
        bumps.append(b)
        zetas.append(z)
    if far_field:
        gamma_pts = np.zeros((0, domain.d))
        if labeling is not None:
            gamma_pts = domain.face_centroids(labeling.neumann)
        if len(gamma_pts):
            dist = nearest_distance(gamma_pts, domain.all_centers().reshape(-1, domain.d)).reshape(domain.dims)
            b0 = smoothstep((dist - spec.eps) / (m * h))
        else:
            b0 = np.ones(domain.dims)
    else:
        b0 = np.zeros(domain.dims)
    total = b0 + sum(bumps) if bumps else b0
    cover = closure_cells(domain)
    gap = cover & (total <= 0)
    if gap.any():
        raise CoverGap(
            f"{int(gap.sum())} closure cells are not covered by any patch",
            cells=[tuple(int(i) for i in c) for c in np.argwhere(gap)[:50]],
        )
    ins = domain.inside
    tot = total[ins]
    eta = b0[ins] / tot
    etas = [b[ins] / tot for b in bumps]
    return PartitionOfUnity(domain, eta, etas, zetas, list(patches), m)


# ------------------------------------------------------- glued extension
def _reflect(domain: G.VoxelDomain, patch: PatchSpec, values_box: np.ndarray) -> np.ndarray:
    """Even reflection of ``values_box`` across the boundary met along the patch axis."""
    depth, sl = _patch_depth(domain, patch)
    out = np.zeros(domain.dims)
    if depth.sum() == 0:
        return out
    a = patch.axis
    ins = domain.inside[sl]
    for b in range(domain.d):
        fs = list(sl)
        fs[b] = slice(sl[b].start, max(sl[b].start, sl[b].stop - 1))
        if domain.blocked[b][tuple(fs)].any():
            raise PatchNotReflectable(f"patch {patch} contains crack faces")
    loc = np.moveaxis(ins, a, -1)
    vals = np.moveaxis(values_box[sl], a, -1)
    n = loc.shape[-1]
    k = np.arange(n)
    if patch.direction == 1:
        # inside prefix, outside suffix
        count = loc.sum(axis=-1)
        ok = np.all(loc == (k < count[..., None]), axis=-1)
        bnd = count[..., None] - 1
        partner = 2 * bnd + 1 - k
    else:
        count = loc.sum(axis=-1)
        ok = np.all(loc == (k >= (n - count)[..., None]), axis=-1)
        bnd = (n - count)[..., None]
        partner = 2 * bnd - 1 - k
    if not ok.all():
        bad = np.argwhere(~ok)[0]
        raise PatchNotReflectable(f"patch {patch} is not monotone along axis {a} (line {bad.tolist()})")
    has = (count > 0)[..., None]
    valid = has & ~loc & (partner >= 0) & (partner < n)
    src = np.clip(partner, 0, n - 1)
    refl = np.take_along_axis(vals, np.broadcast_to(src, vals.shape).copy(), axis=-1)
    res = np.where(loc, vals, np.where(valid, refl, 0.0))
    out[sl] = np.moveaxis(res, -1, a)
    return out


def _identity(domain: G.VoxelDomain, patch: PatchSpec, values_box: np.ndarray) -> np.ndarray:
    depth, sl = _patch_depth(domain, patch)
    if not np.all(domain.inside[sl]):
        raise PatchNotReflectable(f"identity patch {patch} leaves the domain")
    out = np.zeros(domain.dims)
    out[sl] = values_box[sl]
    return out


@dataclass(frozen=True, eq=False)
class Extension:
    u: GridFunction
    ratio: float
    host: G.VoxelDomain


def box_norm(values_box: np.ndarray, h: float, p: float) -> float:
    """``W^{1,p}`` norm on the full index box, all internal faces coupled."""
    d = values_box.ndim
    total = np.sum(np.abs(values_box) ** p)
    for a in range(d):
        total += np.sum(np.abs(np.diff(values_box, axis=a) / h) ** p)
    return float((total * h ** d) ** (1.0 / p))


def glue_extension(
    u: GridFunction, pou: PartitionOfUnity, p: float = 2.0, labeling: Optional[BoundaryLabeling] = None,
) -> Extension:
    """``E u = eta u`` (zero-extended) plus ``sum_j zeta_j R_j(eta_j u)`` on the full box."""
    dom = u.domain
    total = dom.to_box(pou.eta * u.values)
    for patch, eta_j, zeta in zip(pou.patches, pou.etas, pou.zetas):
        local = dom.to_box(eta_j * u.values)
        if patch.rule == "reflect":
            ext = _reflect(dom, patch, local)
        else:
            ext = _identity(dom, patch, local)
        total += zeta * ext
    # the weights sum to one on Omega, so E u = u there; copy it to avoid rounding
    total[dom.inside] = u.values
    host = G.VoxelDomain.full_box(dom)
    out = GridFunction(total.ravel(), host, u.tag)
    base = norms(u, p, labeling).w1p(p)
    ratio = box_norm(total, dom.h, p) / base if base > 0 else 0.0
    return Extension(out, ratio, host)


def smooth_bump(domain: G.VoxelDomain, seed: int, n_modes: int = 3) -> np.ndarray:
    """Seeded smooth test function: a sum of a few Gaussians over the domain's bounding box."""
    rng = np.random.default_rng(seed)
    c = domain.centers()
    lo, hi = c.min(axis=0), c.max(axis=0)
    span = float(np.max(hi - lo)) or 1.0
    out = np.zeros(len(c))
    for _ in range(n_modes):
        mu = lo + rng.uniform(0, 1, domain.d) * (hi - lo)
        s = span * rng.uniform(0.2, 0.5)
        out += rng.uniform(0.5, 1.5) * np.exp(-np.sum((c - mu) ** 2, axis=1) / (2 * s * s))
    return out


def battery_function(
    domain: G.VoxelDomain, labeling: BoundaryLabeling, seed: int, delta: float = 0.1, power: float = 1.0,
    dist: Optional[DistanceField] = None,
) -> GridFunction:
    """Smooth bump times a profile ``min(dist_D / delta, 1)**power``, then Dirichlet-enforced."""
    g = smooth_bump(domain, seed)
    if not labeling.empty:
        if dist is None:
            dist = DistanceField(nearest_distance(labeling.d_points, domain.centers()))
        g = g * smoothstep(np.minimum(dist.values / delta, 1.0)) ** power
    return enforce_D(GridFunction(g, domain), labeling, dist=dist)
