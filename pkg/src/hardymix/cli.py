"""Command line entry point: ``hardymix <command> --scenario NAME [options]``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import constants as C
from .grid import faces_count
from . import io
from . import measure as M
from . import sobolev as V
from .errors import ConfigError, HardyMixError, HypothesisFailure, SolverError
from .scenario import (
    BUILTINS, ScenarioSpec, builtin_names, distance_to_D, label_boundary, load_scenario, rasterize,
)
from .topology import build_bullet, build_star, verify_bullet

log = logging.getLogger("hardymix")

COMMANDS = (
    "check-thickness", "porosity", "build-bullet", "build-star", "extend", "hardy", "poincare",
    "hardy-bullet", "hardy-local", "converge", "list-scenarios",
)
EXIT_OK, EXIT_HYPOTHESIS, EXIT_SOLVER, EXIT_CONFIG = 0, 1, 2, 3

# figure references shown by list-scenarios, prefixed to the scenario's own description
FIGURES = {"cube-crack": "Figure 1", "cube-triangle": "Figure 2"}


@dataclass
class RunConfig:
    command: str
    scenario: Optional[str] = None
    p: float = 2.0
    n: Optional[float] = None
    levels: List[float] = field(default_factory=list)
    l: float = 1.0
    R: float = 0.5
    gamma: float = 0.0
    kappa: Optional[float] = None
    samples: int = 32
    seed: int = 0
    threads: int = 1
    task: str = "hardy"
    battery: int = 12
    tol: float = 1e-10
    out: Optional[str] = None
    pgm: bool = False
    field_export: bool = False

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command '{self.command}'")
        if self.command != "list-scenarios" and not self.scenario:
            raise ConfigError("--scenario is required")
        if not (self.p > 1):
            raise ConfigError("--p must exceed 1")
        if self.n is not None and self.n <= 0:
            raise ConfigError("--n must be positive")
        if self.command == "converge" and len(self.levels) < 2:
            raise ConfigError("converge needs --levels with at least two entries")
        if self.threads < 1:
            raise ConfigError("--threads must be at least 1")
        if self.command == "converge" and self.task not in ("hardy", "poincare"):
            raise ConfigError("--task must be 'hardy' or 'poincare'")


@dataclass
class RunReport:
    config: dict
    result: dict
    passed: Optional[bool]
    status: str = "ok"
    exit_code: int = EXIT_OK
    wall_time: Optional[float] = None

    def to_dict(self):
        out = {"config": self.config, "result": self.result, "summary": {"pass": self.passed, "status": self.status},
               "exit_code": self.exit_code}
        if self.wall_time is not None:
            out["wall_time"] = self.wall_time
        return out


def list_scenarios() -> List[dict]:
    out = []
    for n in builtin_names():
        desc = BUILTINS[n].get("description", "")
        out.append({"name": n, "description": f"{FIGURES[n]}: {desc}" if n in FIGURES else desc})
    return out


def _spec(cfg: RunConfig) -> ScenarioSpec:
    spec = load_scenario(cfg.scenario)
    return spec.with_resolution(cfg.n) if cfg.n else spec


def _setup(cfg: RunConfig):
    spec = _spec(cfg)
    dom = rasterize(spec)
    lab = label_boundary(dom, spec)
    return spec, dom, lab


def _d_cloud(dom, lab) -> M.PointCloud:
    return M.cloud_from_faces(lab.d_points, dom.h)


def _export(cfg: RunConfig, name: str, u: V.GridFunction) -> List[str]:
    if cfg.out is None:
        return []
    written = []
    box = u.box()
    if cfg.pgm:
        written.append(str(io.write_pgm(box, Path(cfg.out) / f"{name}.pgm")))
    if cfg.field_export:
        written += [str(p) for p in io.write_field(box, u.domain.h, u.domain.origin, Path(cfg.out) / name)]
    return written


def _cmd_thickness(cfg):
    _, dom, lab = _setup(cfg)
    rep = M.check_thickness(_d_cloud(dom, lab), cfg.l, cfg.R, n_samples=cfg.samples, gamma=cfg.gamma, seed=cfg.seed)
    return rep.to_dict(), rep.passed


def _cmd_porosity(cfg):
    _, dom, lab = _setup(cfg)
    kw = {} if cfg.kappa is None else {"kappas": [cfg.kappa]}
    rep = M.check_porosity(_d_cloud(dom, lab), n_balls=cfg.samples, seed=cfg.seed, **kw)
    return rep.to_dict(), all(rep.passed) if cfg.kappa is not None else rep.kappa_best > 0


def _cmd_bullet(cfg):
    _, dom, lab = _setup(cfg)
    bullet = build_bullet(dom, lab)
    check = verify_bullet(bullet, lab)
    out = {"bullet": bullet.to_dict(), "verify": check.to_dict()}
    if cfg.out and cfg.pgm:
        out["files"] = [str(io.write_pgm(bullet.mask.astype(float), Path(cfg.out) / "bullet_mask.pgm"))]
    return out, check.passed


def _cmd_star(cfg):
    _, dom, lab = _setup(cfg)
    star = build_star(dom, dom.blocked)
    out = {"check": star.check(), "E_faces": faces_count(star.E), "E_star_faces": faces_count(star.E_star),
           "Xi_faces": faces_count(star.Xi), "cells": star.domain.n_inside}
    return out, out["check"]


def _cmd_extend(cfg):
    spec, dom, lab = _setup(cfg)
    pou = V.build_partition(dom, lab, spec.patches, spec.partition)
    u = V.battery_function(dom, lab, cfg.seed)
    ext = V.glue_extension(u, pou, cfg.p, lab)
    err = float(np.max(np.abs(ext.u.box()[dom.inside] - u.values)))
    out = {"identity_error": err, "ratio": ext.ratio, "trace_sup": V.trace_sup(ext.u, lab.dirichlet),
           "files": _export(cfg, "extension", ext.u)}
    return out, err <= 1e-12


def _cmd_hardy(cfg):
    _, dom, lab = _setup(cfg)
    dist = distance_to_D(dom, lab, workers=cfg.threads) if not lab.empty else None
    rep = C.hardy_constant(dom, lab, cfg.p, dist=dist, tol=cfg.tol)
    out = rep.to_dict()
    out["files"] = _export(cfg, "hardy_witness", rep.witness)
    return out, True


def _cmd_poincare(cfg):
    _, dom, lab = _setup(cfg)
    rep = C.poincare_constant(dom, lab, cfg.p, tol=cfg.tol)
    out = rep.to_dict()
    if not rep.infinite:
        out["files"] = _export(cfg, "poincare_witness", rep.witness)
    return out, not rep.infinite


def _cmd_hardy_bullet(cfg):
    spec, dom, lab = _setup(cfg)
    rep = C.hardy_via_bullet(dom, lab, cfg.p, spec.patches, spec.partition, n_battery=cfg.battery, seed=cfg.seed)
    return rep.to_dict(), rep.dist_monotone and rep.chain_holds


def _cmd_hardy_local(cfg):
    spec, dom, lab = _setup(cfg)
    if spec.localize is None:
        raise ConfigError(f"scenario '{spec.name}' declares no localize regions")
    loc = spec.localize
    rep = C.localized_hardy(dom, lab, loc.U, loc.V, cfg.p, width=loc.width, with_direct=True)
    return rep.to_dict(), all(rep.checks.values())


def _cmd_converge(cfg):
    spec = load_scenario(cfg.scenario)
    table = C.refine_and_compare(spec, cfg.levels, cfg.task, cfg.p)
    out = table.to_dict()
    if cfg.out:
        path = Path(cfg.out) / f"converge_{cfg.task}.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(table.to_csv(), encoding="utf-8")
        out["files"] = [str(path)]
    return out, all(e is None for e in table.errors)


def _cmd_list(cfg):
    return {"scenarios": list_scenarios()}, True


HANDLERS = {
    "check-thickness": _cmd_thickness, "porosity": _cmd_porosity, "build-bullet": _cmd_bullet,
    "build-star": _cmd_star, "extend": _cmd_extend, "hardy": _cmd_hardy, "poincare": _cmd_poincare,
    "hardy-bullet": _cmd_hardy_bullet, "hardy-local": _cmd_hardy_local, "converge": _cmd_converge,
    "list-scenarios": _cmd_list,
}


def run(cfg: RunConfig, timing: bool = False) -> RunReport:
    t0 = time.perf_counter()
    echo = asdict(cfg)
    try:
        cfg.validate()
        result, passed = HANDLERS[cfg.command](cfg)
        rep = RunReport(echo, result, passed)
    except ConfigError as exc:
        rep = RunReport(echo, {"error": type(exc).__name__, "message": str(exc)}, None, "config-error", EXIT_CONFIG)
    except HypothesisFailure as exc:
        rep = RunReport(echo, {"error": type(exc).__name__, "message": str(exc)}, False, "hypothesis-failure",
                        EXIT_HYPOTHESIS)
    except SolverError as exc:
        info = {"error": type(exc).__name__, "message": str(exc)}
        if getattr(exc, "residual", None) is not None:
            info["residual"] = exc.residual
        rep = RunReport(echo, info, False, "solver-failure", EXIT_SOLVER)
    except HardyMixError as exc:
        rep = RunReport(echo, {"error": type(exc).__name__, "message": str(exc)}, False, "error", EXIT_CONFIG)
    if timing:
        rep.wall_time = time.perf_counter() - t0
    return rep


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hardymix", description="Hardy inequalities for mixed boundary conditions "
                                 "on voxelized domains: hypothesis checks and constant estimates.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--scenario", help="built-in name or path to a scenario JSON file")
    ap.add_argument("--p", type=float, default=2.0)
    ap.add_argument("--n", type=float, default=None, help="resolution (cells per unit length)")
    ap.add_argument("--levels", type=float, nargs="+", default=[], help="resolutions for converge")
    ap.add_argument("--task", default="hardy", help="converge task: hardy or poincare")
    ap.add_argument("--l", type=float, default=1.0, help="thickness exponent")
    ap.add_argument("--R", type=float, default=0.5, help="largest ball radius for thickness")
    ap.add_argument("--gamma", type=float, default=0.0, help="required thickness ratio")
    ap.add_argument("--kappa", type=float, default=None, help="single porosity constant to test")
    ap.add_argument("--samples", type=int, default=32)
    ap.add_argument("--battery", type=int, default=12, help="test functions for hardy-bullet")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1, help="worker cap for distance queries")
    ap.add_argument("--tol", type=float, default=1e-10)
    ap.add_argument("--out", default=None, help="output directory for report.json and exports")
    ap.add_argument("--pgm", action="store_true", help="write PGM slices of witnesses and masks")
    ap.add_argument("--field", dest="field_export", action="store_true", help="write flat binary field exports")
    ap.add_argument("--timing", action="store_true", help="add wall time to the report (breaks byte stability)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    opts = vars(args)
    timing = opts.pop("timing")
    opts.pop("verbose")
    cfg = RunConfig(**opts)
    rep = run(cfg, timing=timing)
    text = io.dumps(rep)
    if cfg.out:
        path = io.write_json(rep, Path(cfg.out) / "report.json")
        log.info("wrote %s", path)
    sys.stdout.write(text)
    return rep.exit_code


if __name__ == "__main__":
    sys.exit(main())
