import json

import numpy as np
import pytest
import shapely.geometry as sg
from hypothesis import given, settings
from hypothesis import strategies as st

from coolopt.errors import ConfigError
from coolopt.geometry import (ComponentBounds, ComponentSet, FinComponent, ProjectionParameters, WallComponent,
                              count_summary, distance_to_wall_rectangle, fin_tdf, gamma_at, gamma_gradient_at,
                              initial_layout, pack_design, project_tdf, prune_fins_near_walls, prune_small_fins,
                              prune_walls, unpack_design, wall_tdf)

LX, LY = 10e-3, 7e-3
BOUNDS = ComponentBounds.defaults(LX, LY)

walls = st.builds(WallComponent, st.floats(1e-3, 9e-3), st.floats(1e-3, 6e-3), st.floats(0.3e-3, 3e-3),
                  st.floats(0.15e-3, 0.8e-3), st.floats(-1.5, 1.5))
fins = st.builds(FinComponent, st.floats(1e-3, 9e-3), st.floats(1e-3, 6e-3), st.floats(0.1e-3, 0.5e-3),
                 st.floats(0.25, 0.95), st.floats(-1.5, 1.5))


def test_worked_tdf_values():
    w = WallComponent(0.0, 0.0, 2.0, 1.0, 0.0)
    assert wall_tdf(w, (0.0, 0.0)) == 1.0
    assert wall_tdf(w, (2.0, 0.0)) == 0.0
    assert wall_tdf(WallComponent(0.0, 0.0, 2.0, 1.0, np.pi / 2), (0.0, 1.0)) == pytest.approx(0.984375, rel=1e-12)
    f = FinComponent(0.0, 0.0, 1.0, 0.5, 0.0)
    assert fin_tdf(f, (0.0, 0.5)) == pytest.approx(0.0, abs=1e-15)
    assert fin_tdf(f, (0.5, 0.25)) == pytest.approx(0.5, rel=1e-12)


def test_projection_values():
    assert project_tdf(0.0, 8.0) == 0.5
    assert project_tdf(0.25, ProjectionParameters(8.0)) == pytest.approx(0.5 * (1 - np.tanh(2.0)), rel=1e-12)


def test_gamma_is_product_of_factors():
    a = WallComponent(3e-3, 3e-3, 1e-3, 0.3e-3, 0.0)
    b = FinComponent(3.5e-3, 3.2e-3, 0.4e-3, 0.6, 0.4)
    pts = np.array([[3.2e-3, 3.1e-3], [6e-3, 1e-3]])
    both = gamma_at(ComponentSet((a,), (b,)), pts)
    prod = gamma_at(ComponentSet((a,), ()), pts) * gamma_at(ComponentSet((), (b,)), pts)
    assert np.allclose(both, prod, rtol=1e-14)


def test_inactive_fins_and_masks_are_excluded():
    fin = FinComponent(5e-3, 3e-3, 0.5e-3, 1.0, 0.0)
    wall = WallComponent(2e-3, 2e-3, 1e-3, 0.3e-3, 0.0)
    centre = np.array([[5e-3, 3e-3]])
    assert gamma_at(ComponentSet((wall,), (fin,)), centre, "walls")[0] > 0.999
    assert gamma_at(ComponentSet((), (FinComponent(5e-3, 3e-3, 0.5e-3, 1.0, 0.0, active=False),)), centre)[0] == 1.0


@given(st.lists(walls, max_size=3), st.lists(fins, max_size=3),
       st.lists(st.tuples(st.floats(0, LX), st.floats(0, LY)), min_size=1, max_size=20),
       st.sampled_from([None, 1e-4]))
def test_gamma_bounded(ws, fs, pts, width):
    g = gamma_at(ComponentSet(tuple(ws), tuple(fs)), np.array(pts), "both", width)
    assert np.all(g > 0.0) and np.all(g <= 1.0)


@settings(max_examples=25)
@given(walls, fins, st.sampled_from([None, 1e-4]), st.integers(0, 2**32 - 1))
def test_gamma_gradient_matches_finite_differences(w, f, width, seed):
    rng = np.random.default_rng(seed)
    cset = ComponentSet((w,), (f,))
    pts = np.column_stack([rng.uniform(0, LX, 30), rng.uniform(0, LY, 30)])
    dv = pack_design(cset, "both", BOUNDS)
    _, grad = gamma_gradient_at(cset, pts, dv.mapping, "both", width)
    floor = 1e-6 * max(np.max(np.abs(grad)), 1.0)
    for j in range(len(dv.mapping)):
        def central(h):
            vp, vm = dv.values.copy(), dv.values.copy()
            vp[j] += h
            vm[j] -= h
            gp = gamma_at(unpack_design(dv.with_values(vp), cset), pts, "both", width)
            gm = gamma_at(unpack_design(dv.with_values(vm), cset), pts, "both", width)
            return (gp - gm) / (2 * h * dv.scale[j])
        fd = (4 * central(5e-7) - central(1e-6)) / 3
        scale = max(np.max(np.abs(fd)), np.max(np.abs(grad[:, j])), floor)
        # round-off in gamma ~ 1 divided by the physical step, amplified by Richardson
        noise = 4 * np.finfo(float).eps / (5e-7 * dv.scale[j])
        assert np.max(np.abs(fd - grad[:, j])) < 1e-4 * scale + noise


@given(walls, st.lists(st.tuples(st.floats(-2e-3, 12e-3), st.floats(-2e-3, 9e-3)), min_size=1, max_size=10))
def test_rectangle_distance_matches_shapely(w, pts):
    c, s = np.cos(w.angle), np.sin(w.angle)
    corners = [(w.x0 + c * a - s * b, w.y0 + s * a + c * b)
               for a, b in ((-w.half_length, -w.half_thickness), (w.half_length, -w.half_thickness),
                            (w.half_length, w.half_thickness), (-w.half_length, w.half_thickness))]
    poly = sg.Polygon(corners)
    expected = [poly.distance(sg.Point(p)) for p in pts]
    assert np.allclose(distance_to_wall_rectangle(w, np.array(pts)), expected, rtol=1e-9, atol=1e-12)


def test_pruning_rules():
    cset = ComponentSet((WallComponent(5e-3, 3e-3, 0.9e-3, 0.2e-3, 0.0), WallComponent(2e-3, 5e-3, 2e-3, 0.2e-3, 0.0)),
                        (FinComponent(5e-3, 3.5e-3, 0.3e-3, 1.0, 0.0), FinComponent(8e-3, 1e-3, 0.1e-3, 1.0, 0.0)))
    pruned = prune_walls(cset, 0.2, LX)
    assert len(pruned.walls) == 1
    near = prune_fins_near_walls(cset, 0.5e-3)
    assert [f.active for f in near.fins] == [False, True]
    small = prune_small_fins(cset, 0.2e-3)
    assert [f.active for f in small.fins] == [True, False]
    assert count_summary(small) == (2, 1)
    with pytest.raises(ValueError):
        prune_walls(cset, 1.5, LX)


@given(st.lists(walls, min_size=1, max_size=3), st.lists(fins, max_size=3),
       st.sampled_from(["walls", "fins", "both"]))
def test_pack_unpack_round_trip(ws, fs, stage):
    cset = ComponentSet(tuple(ws), tuple(fs))
    dv = pack_design(cset, stage, BOUNDS)
    assert np.all((dv.values >= 0) & (dv.values <= 1))
    back = unpack_design(dv, cset)
    again = pack_design(back, stage, BOUNDS)
    assert np.allclose(again.values, dv.values, atol=1e-12)
    kinds = {r.kind for r, m in zip(dv.mapping, dv.stage_mask) if m}
    assert kinds <= ({"wall"} if stage == "walls" else {"fin"} if stage == "fins" else {"wall", "fin"})


def test_json_round_trip(tmp_path):
    cset = initial_layout(LX, LY)
    path = tmp_path / "c.json"
    cset.to_json(path)
    back = ComponentSet.from_json(path)
    assert back == cset
    assert json.loads(path.read_text())["projection"]["beta"] == 8.0


def test_initial_layout_counts():
    cset = initial_layout(LX, LY, walls_grid=(2, 3), fins_grid=(6, 4))
    assert count_summary(cset) == (6, 24)
    for w in cset.walls:
        assert BOUNDS.x0[0] <= w.x0 <= BOUNDS.x0[1]


def test_design_vector_length_mismatch():
    cset = initial_layout(LX, LY, (1, 1), (1, 1))
    dv = pack_design(cset, "both", BOUNDS)
    with pytest.raises(ConfigError):
        type(dv)(dv.values[:-1], dv.mapping, dv.stage_mask)
