import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from hardymix import grid as G
from hardymix.errors import ENotOnBoundary
from hardymix.scenario import BoundaryLabeling
from hardymix.topology import (
    ATTACHED, DIRICHLET_ENCLOSED, TYPE_D, TYPE_D_BOX, build_bullet, build_star, classify_hole, components,
    flood_fill_components, pinch_points, verify_bullet,
)

from conftest import built, random_scenario, scenario_from

CAVITY = {"name": "cavity", "dimension": 2, "resolution": 16, "padding": 2,
          "csg": {"difference": [{"box": {"min": [0, 0], "max": [1, 1]}},
                                 {"box": {"min": [0.375, 0.375], "max": [0.625, 0.625]}}]},
          "dirichlet": {"not": {"in": {"box": {"min": [0.3, 0.3], "max": [0.7, 0.7]}}}}}


def test_components_match_flood_fill_on_annulus():
    _, dom, _ = built("annulus-mixed")
    comp = components(~dom.inside)
    assert comp.count == 2
    assert np.array_equal(comp.labels, flood_fill_components(~dom.inside))


def test_plain_box_has_one_collar():
    _, dom, _ = built("square-full")
    comp = components(~dom.inside)
    assert comp.count == 1 and comp.touches_box(0)


def test_cavity_component_faces():
    _, dom, lab = scenario_from(CAVITY)
    comp = components(~dom.inside)
    assert comp.count == 2
    cav = next(k for k in range(2) if not comp.touches_box(k))
    # a 4x4 cavity has 16 boundary faces, all shared with the domain
    assert comp.sizes[cav] == 16
    assert G.faces_count(comp.boundary_faces(cav)) == 16
    kind, shared, gamma = classify_hole(dom, comp.mask(cav), lab)
    assert (kind, shared, gamma) == (ATTACHED, 16, 16)


def test_annulus_hole_classification():
    _, dom, lab = built("annulus-mixed")
    bullet = build_bullet(dom, lab)
    kinds = {h.touches_box: h.kind for h in bullet.holes}
    assert kinds == {False: DIRICHLET_ENCLOSED, True: ATTACHED}
    assert bullet.hole_counts() == {DIRICHLET_ENCLOSED: 1, ATTACHED: 1}
    assert bullet.boundary_type == TYPE_D_BOX


def test_annulus_bullet_mask():
    _, dom, lab = built("annulus-mixed")
    bullet = build_bullet(dom, lab)
    disk = components(~dom.inside).mask(next(h.label for h in bullet.holes if h.kind == DIRICHLET_ENCLOSED))
    # everything except the inner disk; D faces between completed cells stay blocked
    assert np.array_equal(bullet.mask, ~disk)
    r = np.linalg.norm(dom.all_centers(), axis=-1)
    assert np.all(r[disk] < 1)
    assert G.faces_subset(bullet.domain.blocked, lab.dirichlet)
    assert G.faces_count(bullet.domain.blocked) > 0


def test_convex_full_dirichlet_gives_type_D():
    _, dom, lab = built("square-full")
    bullet = build_bullet(dom, lab)
    assert bullet.boundary_type == TYPE_D
    assert np.array_equal(bullet.mask, dom.inside)
    assert verify_bullet(bullet, lab).passed


def test_cube_crack_keeps_crack_blocked():
    _, dom, lab = built("cube-crack")
    bullet = build_bullet(dom, lab)
    assert G.faces_subset(dom.blocked, bullet.domain.blocked)
    assert bullet.boundary_type == TYPE_D_BOX
    assert verify_bullet(bullet, lab).passed


@pytest.mark.parametrize("name", ["annulus-mixed", "interval", "square-edge", "slit-square", "cube-triangle"])
def test_verify_builtins(name):
    _, dom, lab = built(name)
    bullet = build_bullet(dom, lab)
    check = verify_bullet(bullet, lab)
    assert check.passed, check.discrepancies
    assert check.boundary_type in (TYPE_D, TYPE_D_BOX)


def test_interval_bullet_reaches_box():
    _, dom, lab = built("interval")
    bullet = build_bullet(dom, lab)
    assert bullet.boundary_type == TYPE_D_BOX
    assert bullet.mask[-1] and not bullet.mask[0]


@pytest.mark.parametrize("seed", range(20))
def test_random_scenarios_chain_and_idempotence(seed):
    _, dom, lab = random_scenario(seed)
    bullet = build_bullet(dom, lab)
    assert np.all(bullet.mask[dom.inside])
    check = verify_bullet(bullet, lab)
    assert check.passed, check.discrepancies
    again_lab = BoundaryLabeling.from_faces(bullet.domain, G.faces_and(lab.dirichlet, bullet.domain.all_boundary()),
                                            close=False)
    again = build_bullet(bullet.domain, again_lab)
    assert np.array_equal(again.mask, bullet.mask)


def test_empty_D_completes_to_box():
    _, dom, lab = scenario_from({**CAVITY, "dirichlet": "none"})
    bullet = build_bullet(dom, lab)
    assert bullet.mask.all()
    assert bullet.boundary_type == TYPE_D_BOX


def test_pinch_point_reported():
    mask = np.zeros((4, 4), bool)
    mask[1, 1] = mask[2, 2] = True
    assert pinch_points(mask) == [(1, 1)]


@settings(max_examples=40, deadline=None)
@given(arrays(bool, st.tuples(st.integers(1, 7), st.integers(1, 7))))
def test_components_against_bfs(mask):
    comp = components(mask)
    assert np.array_equal(comp.labels, flood_fill_components(mask))
    assert comp.sizes.sum() == mask.sum()


# -------------------------------------------------------------------- star
def test_slit_star_is_full_square():
    _, dom, lab = built("slit-square")
    star = build_star(dom, dom.blocked)
    assert star.check()
    assert G.faces_count(star.domain.blocked) == 0
    assert G.faces_count(star.E_star) == 0
    assert np.array_equal(star.domain.inside, dom.inside)


def test_star_without_blocked_faces_is_identity():
    _, dom, lab = built("square-edge")
    star = build_star(dom, lab.dirichlet)
    assert star.check()
    assert G.faces_equal(star.domain.blocked, dom.blocked)
    assert G.faces_equal(star.E_star, lab.dirichlet)


def test_cube_triangle_star():
    _, dom, lab = built("cube-triangle")
    E = G.faces_or(lab.dirichlet, dom.blocked)
    star = build_star(dom, E)
    assert star.check()
    assert G.faces_count(star.domain.blocked) == 0
    assert G.faces_count(star.unblocked) == G.faces_count(dom.blocked)
    assert np.array_equal(star.domain.inside, dom.inside)


def test_star_rejects_interior_faces():
    _, dom, _ = built("square-edge")
    E = G.empty_faces(dom.dims)
    E[0][5, 5] = True
    with pytest.raises(ENotOnBoundary):
        build_star(dom, E)
