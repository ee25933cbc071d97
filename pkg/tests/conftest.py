import functools

import numpy as np
import pytest

from hardymix.scenario import label_boundary, load_scenario, rasterize


@functools.lru_cache(maxsize=None)
def built(name, n=None):
    """Cached (spec, domain, labeling) for a built-in scenario."""
    spec = load_scenario(name)
    if n is not None:
        spec = spec.with_resolution(n)
    dom = rasterize(spec)
    return spec, dom, label_boundary(dom, spec)


def scenario_from(doc, n=None):
    spec = load_scenario(doc)
    if n is not None:
        spec = spec.with_resolution(n)
    dom = rasterize(spec)
    return spec, dom, label_boundary(dom, spec)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def random_scenario_doc(seed):
    """Seeded random CSG scenario: boxes and balls combined, with a random Dirichlet predicate."""
    rng = np.random.default_rng(seed)
    d = 2 if rng.random() < 0.8 else 3
    res = 12 if d == 2 else 8

    def prim():
        if rng.random() < 0.5:
            lo = rng.uniform(0, 0.6, d)
            return {"box": {"min": lo.tolist(), "max": (lo + rng.uniform(0.3, 0.8, d)).tolist()}}
        return {"ball": {"center": rng.uniform(0.2, 0.8, d).tolist(), "radius": float(rng.uniform(0.2, 0.45))}}

    base = {"union": [prim() for _ in range(rng.integers(1, 4))]}
    if rng.random() < 0.6:
        hole = {"ball": {"center": rng.uniform(0.3, 0.7, d).tolist(), "radius": float(rng.uniform(0.08, 0.2))}}
        base = {"difference": [base, hole]}
    normal = rng.normal(size=d)
    normal /= np.linalg.norm(normal)
    options = [
        "all",
        "none",
        {"halfspace": {"normal": normal.tolist(), "offset": float(rng.uniform(-0.3, 0.8))}},
        {"in": {"ball": {"center": rng.uniform(0, 1, d).tolist(), "radius": float(rng.uniform(0.2, 0.7))}}},
        {"or": [{"in": {"ball": {"center": rng.uniform(0.3, 0.7, d).tolist(), "radius": 0.3}}},
                {"halfspace": {"normal": normal.tolist(), "offset": 0.5}}]},
    ]
    return {"name": f"random-{seed}", "dimension": d, "resolution": res, "padding": int(rng.integers(1, 4)),
            "csg": base, "dirichlet": options[int(rng.integers(len(options)))]}


def random_scenario(seed):
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return scenario_from(random_scenario_doc(seed))
