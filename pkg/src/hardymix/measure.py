"""
Hausdorff-content brackets and sampled checks of the geometric hypotheses.

Point clouds stand in for compact sets ``F``.  The cloud is assumed to be a
``sep``-net of ``F`` (every point of ``F`` lies within ``sep`` of a sample), so
a ball of radius ``r`` around a sample is inflated to ``r + sep`` before it is
charged to a cover; this keeps ``upper`` a genuine upper bound.  Lower bounds
come from a mass distribution carried by per-point weights.

All checks are sampled: they can falsify or support a hypothesis, never prove
it.  Sampling is deterministic for a given seed.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .errors import BadDimension, QuadratureUnderflow, ScaleTooFine
from .grid import VoxelDomain

# Centers used for the mass-distribution constant are subsampled above this size.
MAX_LOWER_CENTERS = 6000


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray
    sep: float
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        object.__setattr__(self, "points", pts)
        if not self.sep > 0:
            raise ValueError("sep must be positive")
        if self.weights is not None:
            object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))

    @classmethod
    def empty(cls, d: int, sep: float = 1.0) -> "PointCloud":
        return cls(np.zeros((0, d)), sep)

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def is_empty(self) -> bool:
        return self.n == 0

    def mass(self, l: float) -> np.ndarray:
        """Per-point surrogate measure; defaults to ``sep**l`` each."""
        if self.weights is not None:
            return self.weights
        return np.full(self.n, self.sep ** l)

    def scaled(self, s: float) -> "PointCloud":
        w = None if self.weights is None else self.weights
        return PointCloud(self.points * s, self.sep * s, w)

    def subset(self, mask: np.ndarray) -> "PointCloud":
        w = None if self.weights is None else self.weights[mask]
        return PointCloud(self.points[mask], self.sep, w)

    def diameter(self) -> float:
        if self.n < 2:
            return 0.0
        return float(np.linalg.norm(self.points.max(axis=0) - self.points.min(axis=0)))


@dataclass(frozen=True, eq=False)
class BallCover:
    centers: np.ndarray
    radii: np.ndarray

    def cost(self, l: float, inflate: float = 0.0) -> float:
        return float(np.sum((self.radii + inflate) ** l))

    def covers(self, points: np.ndarray, tol: float = 1e-12) -> bool:
        if len(points) == 0:
            return True
        tree = cKDTree(points)
        hit = np.zeros(len(points), dtype=bool)
        for c, r in zip(self.centers, self.radii):
            hit[tree.query_ball_point(c, r * (1 + tol) + tol)] = True
        return bool(hit.all())

    def __len__(self):
        return len(self.radii)


@dataclass(frozen=True, eq=False)
class ContentEstimate:
    l: float
    upper: Optional[float] = None
    lower: Optional[float] = None
    cover: Optional[BallCover] = None
    slack: float = 0.0
    constant: float = math.nan


def _check_l(l: float) -> None:
    if not l > 0:
        raise BadDimension(f"content dimension must be positive, got {l}")


# ------------------------------------------------------------------- upper
def _greedy_cover(tree: cKDTree, pts: np.ndarray, r: float, budget: int = 3_000_000) -> np.ndarray:
    """Indices of ball centers covering ``pts`` with closed balls of radius ``r``.

    Max-coverage greedy when the neighbour lists fit the budget, otherwise a
    scan-order net (every uncovered point becomes a center).
    """
    n = len(pts)
    counts = tree.query_ball_point(pts, r, return_length=True)
    if int(np.sum(counts)) > budget:
        covered = np.zeros(n, dtype=bool)
        centers = []
        for i in range(n):
            if not covered[i]:
                centers.append(i)
                covered[tree.query_ball_point(pts[i], r)] = True
        return np.asarray(centers, dtype=int)
    nbrs = tree.query_ball_point(pts, r)
    covered = np.zeros(n, dtype=bool)
    heap = [(-len(nb), i) for i, nb in enumerate(nbrs)]
    heapq.heapify(heap)
    centers = []
    left = n
    while left:
        neg, i = heapq.heappop(heap)
        gain = int(np.count_nonzero(~covered[nbrs[i]]))
        if gain == 0:
            continue
        if heap and gain < -heap[0][0]:
            heapq.heappush(heap, (-gain, i))
            continue
        centers.append(i)
        idx = np.asarray(nbrs[i])
        left -= int(np.count_nonzero(~covered[idx]))
        covered[idx] = True
    return np.asarray(centers, dtype=int)


def _one_center(pts: np.ndarray, chunk: int = 512) -> Tuple[int, float]:
    """Sample minimizing the distance to the farthest sample."""
    best, best_r = 0, math.inf
    for s in range(0, len(pts), chunk):
        block = pts[s:s + chunk]
        far = np.sqrt(((block[:, None, :] - pts[None, :, :]) ** 2).sum(-1)).max(axis=1)
        j = int(np.argmin(far))
        if far[j] < best_r:
            best, best_r = s + j, float(far[j])
    return best, best_r


def _dyadic_cover(pts: np.ndarray, sep: float, l: float) -> Tuple[float, np.ndarray, np.ndarray]:
    """Mixed-radius cover from a dyadic tree: each cell is either one ball or its children."""
    n, d = pts.shape
    base = pts.min(axis=0)
    key = np.floor((pts - base) / sep).astype(np.int64)
    # per level: group ids per point, per-group cost, center, radius, choice
    levels = []
    prev_gid = None
    prev_cost = None
    while True:
        uniq, gid = np.unique(key, axis=0, return_inverse=True)
        gid = gid.ravel()
        m = len(uniq)
        cnt = np.bincount(gid, minlength=m)
        centroid = np.stack([np.bincount(gid, weights=pts[:, a], minlength=m) for a in range(d)], 1) / cnt[:, None]
        dc = np.linalg.norm(pts - centroid[gid], axis=1)
        order = np.lexsort((dc, gid))
        first = np.ones(n, dtype=bool)
        first[1:] = gid[order][1:] != gid[order][:-1]
        center = np.empty(m, dtype=np.int64)
        center[gid[order][first]] = order[first]
        rad = np.zeros(m)
        np.maximum.at(rad, gid, np.linalg.norm(pts - pts[center[gid]], axis=1))
        rad = np.maximum(rad, sep)
        single = (rad + sep) ** l
        if prev_gid is None:
            cost = single
            split = np.zeros(m, dtype=bool)
        else:
            child_parent = np.zeros(len(prev_cost), dtype=np.int64)
            child_parent[prev_gid] = gid
            split_cost = np.bincount(child_parent, weights=prev_cost, minlength=m)
            split = split_cost < single
            cost = np.where(split, split_cost, single)
        levels.append((gid, center, rad, split))
        prev_gid, prev_cost = gid, cost
        if m == 1:
            break
        key = key // 2
    # unwind the choices from the root
    chosen_c, chosen_r = [], []
    active = np.array([0])
    for li in range(len(levels) - 1, -1, -1):
        gid, center, rad, split = levels[li]
        keep = active[~split[active]]
        chosen_c.append(center[keep])
        chosen_r.append(rad[keep])
        if li == 0:
            break
        go = set(active[split[active]].tolist())
        child_gid = levels[li - 1][0]
        parent_of_child = np.zeros(child_gid.max() + 1, dtype=np.int64)
        parent_of_child[child_gid] = gid
        active = np.flatnonzero(np.isin(parent_of_child, list(go))) if go else np.zeros(0, int)
    c = np.concatenate(chosen_c)
    r = np.concatenate(chosen_r)
    return float(np.sum((r + sep) ** l)), c, r


def content_upper(cloud: PointCloud, l: float, scales: Optional[Sequence[float]] = None) -> ContentEstimate:
    """Cheapest centered cover found; each radius is charged as ``r + sep``.

    Candidates: greedy covers on every rung of a dyadic ladder, a single ball
    around the best center, and a mixed-radius dyadic-tree cover.  ``slack``
    is the part of ``upper`` caused by the inflation.
    """
    _check_l(l)
    sep = cloud.sep
    if cloud.is_empty:
        return ContentEstimate(l, upper=0.0, cover=BallCover(np.zeros((0, cloud.d)), np.zeros(0)))
    pts = cloud.points
    diam = cloud.diameter()
    if scales is None:
        scales = []
        r = sep
        while True:
            scales.append(r)
            if r >= diam:
                break
            r *= 2
    tree = cKDTree(pts)
    candidates = []
    for r in scales:
        if r < sep:
            continue
        idx = _greedy_cover(tree, pts, r)
        candidates.append(((r + sep) ** l * len(idx), pts[idx], np.full(len(idx), r)))
    j, r1 = _one_center(pts)
    r1 = max(r1, sep)
    candidates.append(((r1 + sep) ** l, pts[[j]], np.array([r1])))
    cost, c, r = _dyadic_cover(pts, sep, l)
    candidates.append((cost, pts[c], r))
    best = min(candidates, key=lambda t: t[0])
    cover = BallCover(best[1], best[2])
    slack = float(np.sum((cover.radii + sep) ** l - cover.radii ** l))
    return ContentEstimate(l, upper=float(best[0]), cover=cover, slack=slack)


# ------------------------------------------------------------------- lower
def mass_constant(cloud: PointCloud, l: float, r_min: float) -> float:
    """Largest ball density ``mu(B(x,r)) / r**l`` over samples ``x``.

    Radii below ``r_min`` are only charged with the inflated denominator
    ``(r + sep)**l``, matching the cover cost used by :func:`content_upper`.
    """
    pts = cloud.points
    w = cloud.mass(l)
    n = len(pts)
    centers = np.arange(n)
    if n > MAX_LOWER_CENTERS:
        centers = np.linspace(0, n - 1, MAX_LOWER_CENTERS).astype(int)
    best = 0.0
    for s in range(0, len(centers), 256):
        idx = centers[s:s + 256]
        dist = np.sqrt(((pts[idx][:, None, :] - pts[None, :, :]) ** 2).sum(-1))
        order = np.argsort(dist, axis=1, kind="stable")
        ds = np.take_along_axis(dist, order, axis=1)
        cum = np.cumsum(w[order], axis=1)
        dens = cum / np.maximum(ds, r_min) ** l
        infl = cum / (ds + cloud.sep) ** l
        best = max(best, float(dens.max()), float(infl.max()))
    return best


def content_lower(cloud: PointCloud, l: float, r_min: Optional[float] = None) -> ContentEstimate:
    """Mass-distribution lower bound ``mu(F) / C``.

    Returns 0 for clouds with fewer than two samples or with a sample that has
    no neighbour within ``r_min`` (an isolated atom would make ``C`` blow up
    below the resolved scales).
    """
    _check_l(l)
    if r_min is None:
        r_min = 10 * cloud.sep
    if cloud.n < 2:
        return ContentEstimate(l, lower=0.0, constant=math.inf)
    tree = cKDTree(cloud.points)
    dist, _ = tree.query(cloud.points, k=2)
    if np.any(dist[:, 1] > r_min):
        return ContentEstimate(l, lower=0.0, constant=math.inf)
    c = mass_constant(cloud, l, r_min)
    return ContentEstimate(l, lower=float(cloud.mass(l).sum() / c), constant=c)


def estimate_content(cloud: PointCloud, l: float) -> ContentEstimate:
    up = content_upper(cloud, l)
    lo = content_lower(cloud, l)
    return ContentEstimate(l, upper=up.upper, lower=lo.lower, cover=up.cover, slack=up.slack, constant=lo.constant)


# --------------------------------------------------------------- thickness
@dataclass(frozen=True, eq=False)
class ThicknessReport:
    l: float
    R: float
    samples: List[Tuple[int, float, float]]
    gamma_min: float
    gamma: float
    passed: bool

    def to_dict(self):
        return {
            "l": self.l, "R": self.R, "gamma": self.gamma, "gamma_min": self.gamma_min,
            "pass": self.passed,
            "samples": [{"index": i, "r": r, "ratio": q} for i, r, q in self.samples],
            "note": "sampled check: supports or falsifies the hypothesis, does not prove it",
        }


def _sample_balls(cloud: PointCloud, lo: float, hi: float, n: int, seed: int):
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, cloud.n, size=n)
    r = np.exp(rng.uniform(math.log(lo), math.log(hi), size=n))
    return idx, r


def check_thickness(
    cloud: PointCloud, l: float, R: float, n_samples: int = 32, gamma: float = 0.0, seed: int = 0,
    balls: Optional[Tuple[np.ndarray, np.ndarray]] = None,
) -> ThicknessReport:
    """Ratios ``H_l(F cap B(x,r)) / r**l`` on sampled balls, lower content used."""
    _check_l(l)
    if R <= 4 * cloud.sep:
        raise ScaleTooFine(f"R = {R} does not exceed 4 sep = {4 * cloud.sep}")
    if cloud.is_empty:
        return ThicknessReport(l, R, [], 0.0, gamma, False)
    idx, radii = balls if balls is not None else _sample_balls(cloud, 4 * cloud.sep, R, n_samples, seed)
    tree = cKDTree(cloud.points)
    samples = []
    for i, r in zip(idx, radii):
        near = np.asarray(tree.query_ball_point(cloud.points[i], r), dtype=int)
        near = near[np.linalg.norm(cloud.points[near] - cloud.points[i], axis=1) < r]
        sub = cloud.subset(np.isin(np.arange(cloud.n), near))
        r_min = min(max(r / 4, 2 * cloud.sep), 10 * cloud.sep)
        low = content_lower(sub, l, r_min=r_min).lower
        samples.append((int(i), float(r), float(low / r ** l)))
    gmin = min(q for _, _, q in samples)
    return ThicknessReport(l, R, samples, gmin, gamma, bool(gmin >= gamma))


@dataclass(frozen=True, eq=False)
class LSetReport:
    l: float
    c0: float
    c1: float
    spread_max: float
    passed: bool
    samples: List[Tuple[int, float, float]]

    def to_dict(self):
        return {"l": self.l, "c0": self.c0, "c1": self.c1, "spread_max": self.spread_max, "pass": self.passed,
                "samples": [{"index": i, "r": r, "ratio": q} for i, r, q in self.samples]}


def check_l_set(
    cloud: PointCloud, l: float, n_samples: int = 64, r_max: float = 1.0, spread_max: float = 16.0, seed: int = 0,
) -> LSetReport:
    """Bracket ``c0 <= mu(F cap B(x,r)) / r**l <= c1`` on sampled balls.

    A finite sample always gives finite brackets, so the pass rule is
    ``c0 > 0`` and ``c1 / c0 <= spread_max``.
    """
    _check_l(l)
    r_lo = 10 * cloud.sep
    if r_max <= r_lo:
        raise ScaleTooFine(f"radius range ({r_lo}, {r_max}] is empty")
    if cloud.is_empty:
        return LSetReport(l, 0.0, math.inf, spread_max, False, [])
    idx, radii = _sample_balls(cloud, r_lo, r_max, n_samples, seed)
    tree = cKDTree(cloud.points)
    w = cloud.mass(l)
    samples = []
    for i, r in zip(idx, radii):
        near = tree.query_ball_point(cloud.points[i], r)
        samples.append((int(i), float(r), float(w[near].sum() / r ** l)))
    q = np.array([s[2] for s in samples])
    c0, c1 = float(q.min()), float(q.max())
    return LSetReport(l, c0, c1, spread_max, bool(c0 > 0 and c1 <= spread_max * c0), samples)


# ---------------------------------------------------------------- porosity
@dataclass(frozen=True, eq=False)
class PorosityReport:
    kappa_best: float
    kappas: List[float]
    passed: List[bool]
    witnesses: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "kappa_best": self.kappa_best,
            "per_kappa": [{"kappa": k, "pass": p} for k, p in zip(self.kappas, self.passed)],
            "failures": {str(k): v for k, v in self.witnesses.items()},
        }


def check_porosity(
    cloud: PointCloud,
    kappas: Sequence[float] = tuple(np.round(np.linspace(0.05, 0.5, 10), 10)),
    n_balls: int = 32,
    r_min: Optional[float] = None,
    r_max: float = 1.0,
    lattice: Optional[int] = None,
    seed: int = 0,
    balls: Optional[Tuple[np.ndarray, np.ndarray]] = None,
) -> PorosityReport:
    """Largest tested ``kappa`` such that every sampled ball holds a ``kappa r`` hole.

    Candidates ``y`` come from a fixed lattice over ``B(x, r)``; a candidate
    is accepted at ``kappa`` when ``|y - x| <= (1 - kappa) r`` and its
    distance to the cloud exceeds ``kappa r`` plus the sampling gap.  Both
    conditions weaken as ``kappa`` decreases, so the pass set is downward
    closed.
    """
    kap = sorted(float(k) for k in kappas)
    if cloud.is_empty:
        return PorosityReport(max(kap), kap, [True] * len(kap))
    d = cloud.d
    if r_min is None:
        r_min = 32 * cloud.sep
    r_min = min(r_min, r_max)
    if lattice is None:
        lattice = {1: 64, 2: 24, 3: 10}.get(d, 8)
    gap = cloud.sep * math.sqrt(d) / 2
    if balls is None:
        idx, radii = _sample_balls(cloud, r_min, r_max, n_balls, seed)
        centers = cloud.points[idx]
    else:
        centers, radii = np.atleast_2d(np.asarray(balls[0], float)), np.asarray(balls[1], float)
    tree = cKDTree(cloud.points)
    ticks = np.linspace(-1.0, 1.0, 2 * lattice + 1)
    unit = np.stack(np.meshgrid(*([ticks] * d), indexing="ij"), -1).reshape(-1, d)
    unit = unit[np.linalg.norm(unit, axis=1) <= 1.0]
    unit_norm = np.linalg.norm(unit, axis=1)
    ok = np.ones(len(kap), dtype=bool)
    witnesses = {}
    for x, r in zip(centers, radii):
        dist, _ = tree.query(x + r * unit)
        for j, k in enumerate(kap):
            good = (unit_norm <= 1 - k + 1e-12) & (dist >= k * r + gap)
            if not good.any():
                ok[j] = False
                witnesses.setdefault(k, []).append({"center": x.tolist(), "r": float(r)})
    passed = [bool(v) for v in ok]
    best = max([k for k, p in zip(kap, passed) if p], default=0.0)
    return PorosityReport(best, kap, passed, witnesses)


# ---------------------------------------------------------------- Aikawa
@dataclass(frozen=True, eq=False)
class AikawaResult:
    value: float
    ratio: float
    values: List[float]
    levels: List[int]


def aikawa_integral(
    cloud: PointCloud, t: float, x: Sequence[float], r: float, m0: int = 8, max_levels: int = 7,
    rtol: float = 1e-3, shrink: float = 0.99,
) -> AikawaResult:
    """Integral of ``dist(y, F)**(t - d)`` over ``B(x, r)`` by refined midpoint sums.

    Sums are taken on grids with ``m0, 2 m0, 4 m0, ...`` cells per axis and
    extrapolated geometrically.  If the increment fails to shrink (ratio above
    ``shrink``) on two consecutive refinements the integral is declared
    divergent and :class:`QuadratureUnderflow` is raised with the partial sums.
    """
    if not t > 0:
        raise QuadratureUnderflow(f"exponent t - d = {t} - d is not integrable for t <= 0", [])
    d = cloud.d
    x = np.asarray(x, dtype=float)
    tree = cKDTree(cloud.points)
    values, levels = [], []
    bad = 0
    m = m0
    estimate = math.nan
    for _ in range(max_levels):
        step = 2 * r / m
        ticks = -r + (np.arange(m) + 0.5) * step
        off = np.stack(np.meshgrid(*([ticks] * d), indexing="ij"), -1).reshape(-1, d)
        off = off[np.linalg.norm(off, axis=1) < r]
        dist, _ = tree.query(x + off)
        dist = np.maximum(dist, 1e-300)
        values.append(float(np.sum(dist ** (t - d)) * step ** d))
        levels.append(m)
        m *= 2
        if len(values) >= 3:
            d1 = values[-2] - values[-3]
            d2 = values[-1] - values[-2]
            q = abs(d2) / abs(d1) if d1 != 0 else (0.0 if d2 == 0 else math.inf)
            if q >= shrink:
                bad += 1
                if bad >= 2:
                    raise QuadratureUnderflow(
                        f"midpoint sums do not settle for t = {t} (increment ratio {q:.3g})", values
                    )
                continue
            bad = 0
            estimate = values[-1] + d2 * q / (1 - q)
            if abs(d2 * q / (1 - q)) <= rtol * abs(estimate):
                break
    if math.isnan(estimate):
        estimate = values[-1]
    return AikawaResult(float(estimate), float(estimate / r ** t), values, levels)


def aikawa_sweep(
    cloud: PointCloud, ts: Sequence[float], centers: np.ndarray, radii: Sequence[float], bound: float = 10.0, **kw
) -> dict:
    """Smallest ``t`` whose normalized integrals stay within a factor ``bound``."""
    rows = []
    found = None
    for t in sorted(ts):
        ratios, diverged = [], False
        for x in np.atleast_2d(centers):
            for r in radii:
                try:
                    ratios.append(aikawa_integral(cloud, t, x, r, **kw).ratio)
                except QuadratureUnderflow:
                    diverged = True
                    break
            if diverged:
                break
        bounded = (not diverged) and max(ratios) <= bound * min(ratios)
        rows.append({"t": t, "diverged": diverged, "ratios": ratios, "bounded": bounded})
        if bounded and found is None:
            found = t
    return {"estimate": found, "rows": rows}


# ------------------------------------------------------------ volume density
@dataclass(frozen=True, eq=False)
class DensityProfile:
    radii: List[float]
    values: List[float]
    liminf: float


def relative_volume_density(domain: VoxelDomain, y: Sequence[float], radii: Sequence[float]) -> DensityProfile:
    """``|B(y, r) cap Omega| / r**d`` by counting cell centers in the ball."""
    y = np.asarray(y, dtype=float)
    c = domain.centers()
    dist = np.linalg.norm(c - y, axis=1)
    vals = [float(np.count_nonzero(dist < r) * domain.cell_volume / r ** domain.d) for r in radii]
    return DensityProfile(list(map(float, radii)), vals, min(vals) if vals else math.nan)


def cloud_from_faces(points: np.ndarray, h: float) -> PointCloud:
    """Cloud of face centroids, each face weighted by its area ``h**(d-1)``."""
    points = np.asarray(points, dtype=float)
    d = points.shape[1] if points.ndim == 2 else 1
    return PointCloud(points, sep=h, weights=np.full(len(points), h ** (d - 1)))
