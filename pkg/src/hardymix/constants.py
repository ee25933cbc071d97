"""
Discrete best constants: Hardy, Poincare, the completed-domain chain and the
localized criterion.

Both constants are suprema of a quotient ``N(u) / E(u)`` over functions that
vanish on every cell touching ``D``, with ``E(u) = ||grad u||_p^p`` and
``N(u) = sum_i w_i |u_i|^p`` for cell weights ``w``
(``h^d / dist_D^p`` for Hardy, ``h^d`` for Poincare).  Reports call the
result the *discrete* best constant; it is tracked under refinement, not
identified with the continuum constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from . import grid as G
from . import sobolev as V
from .errors import ConditionFailed, ConfigError, CoverGap, DEmpty, HardyMixError, NoConvergence
from .scenario import (
    BoundaryLabeling, DistanceField, ScenarioSpec, distance_to_D, label_boundary, nearest_distance, rasterize,
)
from .topology import build_bullet

NOTE = "discrete best constant on the given grid; not the continuum constant"


@dataclass(frozen=True, eq=False)
class HardyReport:
    p: float
    constant: float
    witness: Optional[V.GridFunction]
    method: str
    iterations: int
    residual: float
    trace: List[dict] = field(default_factory=list)

    def to_dict(self):
        return {"p": self.p, "constant": self.constant, "method": self.method, "iterations": self.iterations,
                "residual": self.residual, "trace": self.trace, "note": NOTE}


@dataclass(frozen=True, eq=False)
class PoincareReport:
    p: float
    constant: float
    witness: Optional[V.GridFunction]
    method: str
    infinite: bool = False
    residual: float = 0.0
    iterations: int = 0

    def to_dict(self):
        return {"p": self.p, "constant": "inf" if self.infinite else self.constant, "method": self.method,
                "infinite": self.infinite, "residual": self.residual, "iterations": self.iterations, "note": NOTE}


# ------------------------------------------------------------------ engine
@dataclass
class _Problem:
    """Quotient ``sum w |u|^p / sum fw |G u|^p`` on the free cells."""

    G: sp.csr_matrix
    fw: float
    w: np.ndarray
    p: float

    def N(self, u):
        return float(np.sum(self.w * np.abs(u) ** self.p))

    def E(self, u):
        return float(self.fw * np.sum(np.abs(self.G @ u) ** self.p))

    def dN(self, u):
        return self.p * self.w * np.abs(u) ** (self.p - 2) * u

    def dE(self, u):
        g = self.G @ u
        return self.G.T @ (self.p * self.fw * np.abs(g) ** (self.p - 2) * g)

    def _pow(self, x):
        # |x|^(p-2), regularised at 0 for p < 2
        if self.p >= 2:
            return np.abs(x) ** (self.p - 2)
        scale = max(float(np.max(np.abs(x))), 1e-300)
        return (x * x + (1e-8 * scale) ** 2) ** ((self.p - 2) / 2)

    def HN(self, u):
        return sp.diags(self.p * (self.p - 1) * self.w * self._pow(u))

    def HE(self, u):
        g = self.G @ u
        return (self.G.T @ sp.diags(self.p * (self.p - 1) * self.fw * self._pow(g)) @ self.G).tocsc()

    def R(self, u):
        return self.N(u) / self.E(u)


def _residual(prob: _Problem, lu, u) -> float:
    r = prob.R(u)
    dn = prob.dN(u)
    g = dn - r * prob.dE(u)
    den = float(dn @ lu.solve(dn))
    return math.sqrt(max(float(g @ lu.solve(g)), 0.0) / den) if den > 0 else math.inf


def _normalize(prob: _Problem, u):
    return u / prob.N(u) ** (1.0 / prob.p)


def maximize_quotient(
    prob: _Problem, L: sp.spmatrix, u0: np.ndarray, tol: float = 1e-10, max_iter: int = 5000, switch: float = 1e-2,
):
    """Sobolev-preconditioned ascent to ``switch``, then Newton on the KKT system to ``tol``."""
    lu = sla.splu(sp.csc_matrix(L))
    u = _normalize(prob, np.abs(u0) if np.all(u0 >= 0) or np.all(u0 <= 0) else u0)
    res = _residual(prob, lu, u)
    it = 0
    step = 1.0
    while res > max(switch, tol) and it < max_iter:
        r = prob.R(u)
        g = (prob.dN(u) - r * prob.dE(u)) / prob.E(u)
        d = lu.solve(g)
        d *= np.linalg.norm(u) / max(np.linalg.norm(d), 1e-300)
        s = step
        while True:
            un = u + s * d
            if prob.R(un) > r or s < 1e-14:
                break
            s /= 2
        u = _normalize(prob, un)
        step = min(2 * s, 1.0)
        res = _residual(prob, lu, u)
        it += 1
    while res > tol and it < max_iter:
        mu = prob.E(u) / prob.N(u)
        dn = prob.dN(u)
        F1 = prob.dE(u) - mu * dn
        F2 = prob.N(u) - 1.0
        J = sp.bmat([[prob.HE(u) - mu * prob.HN(u), -dn[:, None]], [-dn[None, :], None]]).tocsc()
        try:
            sol = sla.spsolve(J, np.concatenate([-F1, [F2]]))
        except RuntimeError:
            break
        du = sol[:-1]
        if not np.all(np.isfinite(du)):
            break
        s = 1.0
        improved = False
        while s > 1e-6:
            un = _normalize(prob, u + s * du)
            rn = _residual(prob, lu, un)
            if rn < res:
                improved = True
                break
            s /= 2
        it += 1
        if not improved:
            break
        u, res = un, rn
    if res > tol:
        raise NoConvergence(f"quotient maximisation stopped at residual {res:.3g}", residual=res, iterate=u)
    return prob.R(u), u, res, it


# ---------------------------------------------------------- Hardy constant
def _free_cells(domain: G.VoxelDomain, labeling: BoundaryLabeling) -> np.ndarray:
    adj = V.d_adjacent_cells(domain, labeling.dirichlet)[domain.inside]
    return np.flatnonzero(~adj)


def _check_p(p: float) -> None:
    if not (p > 1 and math.isfinite(p)):
        raise ConfigError(f"Hardy and Poincare estimates need 1 < p < inf, got p = {p}")


def _eig_max(L: sp.spmatrix, wdiag: np.ndarray, tol: float = 1e-12):
    """Largest ``x^T W x / x^T L x`` via shift-invert on the symmetrised pencil."""
    n = L.shape[0]
    s = 1.0 / np.sqrt(wdiag)
    A = sp.diags(s) @ L @ sp.diags(s)
    if n <= 2:
        vals, vecs = np.linalg.eigh(A.toarray())
        mu, v = vals[0], vecs[:, 0]
    else:
        vals, vecs = sla.eigsh(sp.csc_matrix(A), k=1, sigma=0, which="LM", tol=tol)
        mu, v = vals[0], vecs[:, 0]
    x = s * v
    Lx = L @ x
    res = float(np.linalg.norm(Lx - mu * wdiag * x) / np.linalg.norm(Lx))
    return 1.0 / mu, x, res


def _solve_quotient(domain, labeling, p, w_all, w2_all, method, tol, max_iter):
    free = _free_cells(domain, labeling)
    if len(free) == 0:
        raise ConfigError("no free cells: every cell touches the Dirichlet part")
    op = V.gradient_operator(domain, labeling)
    Gf = op.restrict(free).tocsr()
    L = (Gf.T @ Gf).tocsr() * op.weight
    w = w_all[free]
    # the p = 2 witness also warm-starts the p != 2 ascent
    c2, x2, res2 = _eig_max(L, w2_all[free])
    if p == 2 and method in ("auto", "eig"):
        c, x, res, it, meth = c2, x2, res2, 1, "eig-p2"
    else:
        prob = _Problem(Gf, op.weight, w, p)
        c, x, res, it = maximize_quotient(prob, L, x2, tol=tol, max_iter=max_iter)
        meth = "ascent-p"
    vals = np.zeros(domain.n_inside)
    vals[free] = x / np.max(np.abs(x))
    if vals[np.argmax(np.abs(vals))] < 0:
        vals = -vals
    return c, V.GridFunction(vals, domain, V.VANISHING), meth, it, res


def hardy_constant(
    domain: G.VoxelDomain, labeling: BoundaryLabeling, p: float = 2.0, method: str = "auto",
    dist: Optional[DistanceField] = None, tol: float = 1e-10, max_iter: int = 5000,
) -> HardyReport:
    _check_p(p)
    if labeling.empty:
        raise DEmpty("Hardy's inequality needs a nonempty Dirichlet part")
    if dist is None:
        dist = distance_to_D(domain, labeling)
    w = domain.cell_volume / dist.values ** p
    w2 = domain.cell_volume / dist.values ** 2
    c, u, meth, it, res = _solve_quotient(domain, labeling, p, w, w2, method, tol, max_iter)
    return HardyReport(p, float(c), u, meth, it, float(res))


def poincare_constant(
    domain: G.VoxelDomain, labeling: BoundaryLabeling, p: float = 2.0, method: str = "auto",
    tol: float = 1e-10, max_iter: int = 5000,
) -> PoincareReport:
    """Largest ``||u||_p^p / ||grad u||_p^p``; infinite when ``D`` is empty."""
    _check_p(p)
    if labeling.empty:
        ones = V.GridFunction(np.ones(domain.n_inside), domain)
        return PoincareReport(p, math.inf, ones, "constant-function", infinite=True)
    w = np.full(domain.n_inside, domain.cell_volume)
    c, u, meth, it, res = _solve_quotient(domain, labeling, p, w, w, method, tol, max_iter)
    return PoincareReport(p, float(c), u, meth, residual=float(res), iterations=it)


def quotient(u: V.GridFunction, p: float, labeling: BoundaryLabeling, weights: np.ndarray) -> float:
    """``sum w |u|^p / ||grad u||_p^p`` for explicit cell weights."""
    num = float(np.sum(weights * np.abs(u.values) ** p))
    return num / V.gradient(u, labeling).norm(p) ** p


# ------------------------------------------------------------- refinement
@dataclass(frozen=True, eq=False)
class ConvergenceTable:
    resolutions: List[float]
    values: List[Optional[float]]
    errors: List[Optional[str]]
    increasing: Optional[bool]
    extrapolant: Optional[float]
    order: Optional[float]

    def to_dict(self):
        return {"resolutions": self.resolutions, "values": self.values, "errors": self.errors,
                "increasing": self.increasing, "extrapolant": self.extrapolant, "order": self.order}

    def to_csv(self) -> str:
        lines = ["resolution,value,error"]
        for r, v, e in zip(self.resolutions, self.values, self.errors):
            lines.append(f"{r:g},{'' if v is None else format(v, '.12g')},{e or ''}")
        return "\n".join(lines) + "\n"


def richardson(values: Sequence[float], factor: float = 2.0):
    """Extrapolate the last entries of a sequence at geometric refinement.

    With three or more values the order is estimated from the last two
    increments; with two values first order is assumed.
    """
    v = list(values)
    if len(v) < 2:
        return (v[-1] if v else None), None
    if len(v) == 2:
        q = 1.0
    else:
        d1, d2 = v[-2] - v[-3], v[-1] - v[-2]
        if d1 == 0 or d2 == 0 or d1 * d2 < 0:
            return v[-1], None
        q = math.log(d1 / d2, factor)
        if q <= 0:
            return v[-1], q
    d = v[-1] - v[-2]
    return v[-1] + d / (factor ** q - 1), q


def _task(name: str, p: float) -> Callable[[ScenarioSpec], float]:
    def run(spec):
        dom = rasterize(spec)
        lab = label_boundary(dom, spec)
        if name == "hardy":
            return hardy_constant(dom, lab, p).constant
        if name == "poincare":
            rep = poincare_constant(dom, lab, p)
            if rep.infinite:
                raise DEmpty("Poincare constant is infinite without a Dirichlet part")
            return rep.constant
        raise ConfigError(f"unknown refinement task '{name}'")

    return run


def refine_and_compare(spec: ScenarioSpec, levels: Sequence[float], task="hardy", p: float = 2.0) -> ConvergenceTable:
    if len(levels) < 2:
        raise ConfigError("refinement needs at least two levels")
    fn = _task(task, p) if isinstance(task, str) else task
    values, errors = [], []
    for n in levels:
        try:
            values.append(float(fn(spec.with_resolution(n))))
            errors.append(None)
        except HardyMixError as exc:
            values.append(None)
            errors.append(f"{type(exc).__name__}: {exc}")
    ok = [v for v in values if v is not None]
    increasing = None
    extrap, order = None, None
    if len(ok) == len(values):
        increasing = all(b > a for a, b in zip(values, values[1:]))
        extrap, order = richardson(values)
    return ConvergenceTable([float(n) for n in levels], values, errors, increasing, extrap, order)


# ------------------------------------------------------- completed domain
@dataclass(frozen=True, eq=False)
class BulletChainReport:
    p: float
    chained: float
    extension_factor: float
    bullet_constant: float
    direct: float
    dist_monotone: bool
    chain_holds: bool
    rows: List[dict]

    def to_dict(self):
        return {"p": self.p, "chained_quotient": self.chained, "extension_factor": self.extension_factor,
                "bullet_constant": self.bullet_constant, "direct_constant": self.direct,
                "dist_monotone": self.dist_monotone, "chain_holds": self.chain_holds, "battery": self.rows,
                "note": NOTE}


def box_cutoff(dims: Sequence[int], ramp: int) -> np.ndarray:
    """Smoothstep in the Chebyshev depth from the box border: 0 on the border ring, 1 from depth ``ramp + 1``."""
    grids = np.meshgrid(*[np.arange(n) for n in dims], indexing="ij")
    k = None
    for g, n in zip(grids, dims):
        ka = np.minimum(g, n - 1 - g) + 1
        k = ka if k is None else np.minimum(k, ka)
    return V.smoothstep((k - 1.0) / max(ramp, 1))


def hardy_via_bullet(
    domain: G.VoxelDomain, labeling: BoundaryLabeling, p: float = 2.0, patches=(), partition=None,
    n_battery: int = 12, powers: Sequence[float] = (0.6, 0.8, 1.0), seed: int = 0,
) -> BulletChainReport:
    """Evaluate the chain ``T1 <= T2 <= T3 <= c_bullet T4`` on a seeded battery.

    ``T1 = ||u/dist_D||``, ``T2 = ||u/dist_bd||`` on Omega, ``T3`` the same for
    the extension on the completed domain and ``T4 = ||grad ext u||``, all to
    the power ``p``.  ``chained`` is the largest ``T1 / T4``.
    """
    _check_p(p)
    if labeling.empty:
        raise DEmpty("the chain needs a nonempty Dirichlet part")
    bullet = build_bullet(domain, labeling)
    dist_D = distance_to_D(domain, labeling)
    bpts = bullet.boundary_points()
    dist_b = nearest_distance(bpts, domain.centers())
    monotone = bool(np.all(dist_D.values >= dist_b - 1e-12))
    pou = V.build_partition(domain, labeling, patches, partition)
    pad = int(min(min(np.argwhere(domain.inside).min(axis=0)), min(np.asarray(domain.dims) - 1 - np.argwhere(domain.inside).max(axis=0))))
    cut = box_cutoff(domain.dims, max(pad - 1, 1))
    bdom, blab = bullet.as_domain()
    bdist = distance_to_D(bdom, blab)
    c_bullet = hardy_constant(bdom, blab, p, dist=bdist).constant
    direct = hardy_constant(domain, labeling, p, dist=dist_D).constant
    vol = domain.cell_volume
    rows = []
    per_power = max(1, n_battery // len(powers))
    chain_ok = True
    for a in powers:
        for k in range(per_power):
            u = V.battery_function(domain, labeling, seed + k, power=a, dist=dist_D)
            ext = V.glue_extension(u, pou, p, labeling)
            ebox = ext.u.box() * cut
            ev = np.pad(ebox, 1)[bdom.inside]
            eu = V.GridFunction(ev, bdom, V.VANISHING)
            t1 = float(vol * np.sum(np.abs(u.values / dist_D.values) ** p))
            t2 = float(vol * np.sum(np.abs(u.values / dist_b) ** p))
            t3 = float(vol * np.sum(np.abs(ev / bdist.values) ** p))
            t4 = V.gradient(eu, blab).norm(p) ** p
            g = V.gradient(u, labeling).norm(p) ** p
            holds = t1 <= t2 * (1 + 1e-12) and t2 <= t3 * (1 + 1e-12) and t3 <= c_bullet * t4 * (1 + 1e-9)
            chain_ok &= holds
            rows.append({"power": a, "seed": seed + k, "T1": t1, "T2": t2, "T3": t3, "T4": t4, "grad": g,
                         "quotient": t1 / t4, "holds": holds})
    chained = max(r["quotient"] for r in rows)
    factor = max(r["T4"] / r["grad"] for r in rows)
    return BulletChainReport(p, chained, factor, c_bullet, direct, monotone, chain_ok, rows)


# ------------------------------------------------------------- localization
@dataclass(frozen=True, eq=False)
class LocalizedReport:
    p: float
    checks: dict
    eps: float
    c_lambda: float
    c_poincare: float
    grad_eta: float
    c_total: float
    direct: Optional[float] = None

    def to_dict(self):
        return {"p": self.p, "checks": self.checks, "eps": self.eps, "c_lambda": self.c_lambda,
                "c_poincare": self.c_poincare, "grad_eta_U": self.grad_eta, "c_total": self.c_total,
                "direct": self.direct, "note": NOTE}


COND_D_IN_U = "D ⊆ U"
COND_V_AWAY = "closure(V) ∩ D ≠ ∅"
COND_COVER = "closure(Ω) ⊆ U ∪ V"


def _shape_mask(shape, domain: G.VoxelDomain) -> np.ndarray:
    if shape is None:
        return np.zeros(domain.dims, dtype=bool)
    return shape.contains(domain.all_centers().reshape(-1, domain.d)).reshape(domain.dims)


def _shape_bump(shape, domain: G.VoxelDomain, width: float) -> np.ndarray:
    """Zero outside the shape, rising to one at depth ``width``."""
    if shape is None:
        return np.zeros(domain.dims)
    depth = -shape.sdf(domain.all_centers().reshape(-1, domain.d)).reshape(domain.dims)
    return V.smoothstep(depth / width)


def localized_hardy(
    domain: G.VoxelDomain, labeling: BoundaryLabeling, U, V_shape, p: float = 2.0, width: float = 0.05,
    with_direct: bool = False,
) -> LocalizedReport:
    """Assemble a global Hardy bound from a bound near ``D`` and the Poincare constant.

    ``U`` holds ``D``, ``V`` keeps away from it, and together they cover the
    closure of Omega.  Then
    ``c_total^(1/p) = c_L^(1/p) (1 + G c_P^(1/p)) + c_P^(1/p) / eps`` with
    ``c_L`` the Hardy constant of ``Omega cap U`` relative to its boundary
    minus the Neumann part, ``G = max |grad eta_U|`` and ``eps`` the distance
    from the support of ``eta_V`` to ``D``.
    """
    _check_p(p)
    if labeling.empty:
        raise DEmpty("localization needs a nonempty Dirichlet part")
    d = domain.d
    Um, Vm = _shape_mask(U, domain), _shape_mask(V_shape, domain)
    touchD = V.d_adjacent_cells(domain, labeling.dirichlet, host=np.ones(domain.dims, bool))
    checks = {
        COND_D_IN_U: bool(np.all(Um[touchD])),
        "closure(V) ∩ D = ∅": not bool(np.any(Vm[touchD])),
        COND_COVER: bool(np.all((Um | Vm)[V.closure_cells(domain)])),
    }
    if not checks[COND_D_IN_U]:
        raise ConditionFailed(COND_D_IN_U)
    if not checks["closure(V) ∩ D = ∅"]:
        raise ConditionFailed(COND_V_AWAY)
    if not checks[COND_COVER]:
        raise ConditionFailed(COND_COVER)
    bU, bV = _shape_bump(U, domain, width), _shape_bump(V_shape, domain, width)
    tot = bU + bV
    gap = V.closure_cells(domain) & (tot <= 0)
    if gap.any():
        raise CoverGap(f"{int(gap.sum())} closure cells lie in neither bump support",
                       cells=[tuple(int(i) for i in c) for c in np.argwhere(gap)[:50]])
    with np.errstate(invalid="ignore", divide="ignore"):
        etaU = np.where(tot > 0, bU / np.where(tot > 0, tot, 1.0), 0.0)
    etaV = 1.0 - etaU
    distD = distance_to_D(domain, labeling)
    suppV = (etaV[domain.inside] > 0) & (tot[domain.inside] > 0)
    eps = float(distD.values[suppV].min()) if suppV.any() else math.inf
    grad = 0.0
    for a in range(d):
        both = domain.inside[G.lower(a, d)] & domain.inside[G.upper(a, d)]
        diff = np.abs(np.diff(etaU, axis=a)) / domain.h
        if both.any():
            grad = max(grad, float(diff[both].max()))
    # Lambda = Omega cap U, Dirichlet on every boundary face that is not original Neumann
    lam_inside = domain.inside & Um
    lam_blocked = tuple(b & lam_inside[G.lower(a, d)] & lam_inside[G.upper(a, d)] for a, b in enumerate(domain.blocked))
    lam = domain.with_blocked(lam_blocked, inside=lam_inside)
    E = G.faces_minus(lam.all_boundary(), labeling.neumann)
    lam_lab = BoundaryLabeling.from_faces(lam, E, close=False)
    c_lam = hardy_constant(lam, lam_lab, p).constant
    c_P = poincare_constant(domain, labeling, p).constant
    root = c_lam ** (1 / p) * (1 + grad * c_P ** (1 / p)) + (c_P ** (1 / p) / eps if math.isfinite(eps) else 0.0)
    direct = hardy_constant(domain, labeling, p, dist=distD).constant if with_direct else None
    return LocalizedReport(p, checks, eps, c_lam, c_P, grad, root ** p, direct)
