import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import fractalbv as fb
from fractalbv.errors import AxiomViolation, CapExceeded, InvariantViolation, PreconditionError
from fractalbv.ifs import _touch_count


def test_preset_parameters_sierpinski(sg):
    assert abs(sg.L - 2.0) == 0
    assert sg.M == 3
    assert abs(sg.d_h - math.log(3) / math.log(2)) < 1e-12
    assert abs(sg.d_w - math.log(5) / math.log(2)) < 1e-12
    assert abs(sg.rho - 5.0 / 3.0) < 1e-12
    assert sg.diam == 1.0


def test_preset_parameters_vicsek(vs):
    assert abs(vs.L - 3.0) == 0
    assert vs.M == 5
    assert abs(vs.d_h - math.log(5) / math.log(3)) < 1e-12
    assert abs(vs.d_w - math.log(15) / math.log(3)) < 1e-12
    assert abs(vs.rho - 3.0) < 1e-12


def test_similitude_invariants(sg, vs):
    rng = np.random.default_rng(1)
    for sys in (sg, vs):
        for m in sys.maps:
            assert np.max(np.abs(m.rotation @ m.rotation.T - np.eye(2))) <= 1e-12
            for _ in range(5):
                x, y = rng.normal(size=2), rng.normal(size=2)
                d0 = np.linalg.norm(x - y)
                d1 = np.linalg.norm(m(x) - m(y))
                assert abs(d1 - m.contraction * d0) <= 1e-12 * max(1.0, d0)


def test_apply_word_identity_and_fixed_point(sg0):
    p = np.array([0.3, 0.2])
    assert np.allclose(fb.apply_word(sg0, (), p), p)
    q1 = np.array([0.0, 0.0])
    assert np.allclose(fb.apply_word(sg0, (1,), q1), q1)


def test_apply_word_composition_oracle(sg0):
    # independent oracle: multiply the affine maps directly
    q3 = np.array([0.5, math.sqrt(3) / 2])
    A1, b1 = sg0.maps_linear[0], sg0.maps_offset[0]
    A2, b2 = sg0.maps_linear[1], sg0.maps_offset[1]
    expected = A1 @ (A2 @ q3 + b2) + b1
    got = fb.apply_word(sg0, (1, 2), q3)
    assert np.allclose(got, expected, atol=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.data())
def test_word_contraction_rate(data):
    sys = fb.build_preset(data.draw(st.sampled_from(["sierpinski", "vicsek"])), window_level=0)
    n = data.draw(st.integers(1, 6))
    word = tuple(data.draw(st.integers(1, sys.M)) for _ in range(n))
    x = np.array([data.draw(st.floats(-1, 1)), data.draw(st.floats(-1, 1))])
    y = np.array([data.draw(st.floats(-1, 1)), data.draw(st.floats(-1, 1))])
    d0 = np.linalg.norm(x - y)
    d1 = np.linalg.norm(fb.apply_word(sys, word, x) - fb.apply_word(sys, word, y))
    assert abs(d1 - sys.L**-n * d0) <= 1e-10 * max(d0, 1.0)


def test_cells_at_level_counts(sg, sg0, vs0):
    assert len(fb.cells_at_level(sg0, 2)) == 9
    assert len(fb.cells_at_level(vs0, 1)) == 5
    assert len(fb.cells_at_level(sg, 1)) == 9
    with pytest.raises(CapExceeded):
        fb.cells_at_level(sg, 10, cap=1000)


def test_cell_measure_exact(sg):
    c = sg.cell((1, 2, 3))
    assert c.measure(sg.M) == Fraction(1, 9)
    u = fb.CellUnion((sg.cell((1, 2)), sg.cell((1, 3))))
    assert u.measure(sg.M) == Fraction(2, 3)


def test_cell_vertex_count(sg, vs):
    for sys in (sg, vs):
        c = sys.cell((1,) * (sys.window_level + 2))
        verts = sys.cell_vertices(c)
        assert len(verts) == len(sys.essential_vertices)
        d = np.linalg.norm(verts[:, None] - verts[None, :], axis=2)
        assert np.min(d[np.triu_indices(len(verts), 1)]) > 0


def test_shared_point_examples(sg0, vs0):
    p = fb.shared_point(sg0, sg0.cell((1,)), sg0.cell((2,)))
    assert np.allclose(p, [0.5, 0.0], atol=1e-12)
    assert fb.shared_point(vs0, vs0.cell((1,)), vs0.cell((4,))) is None
    with pytest.raises(PreconditionError):
        fb.shared_point(sg0, sg0.cell((1,)), sg0.cell((1,)))


def test_nesting_never_two_points(sg, vs0):
    for sys, n in ((sg, 1), (sg, 2), (vs0, 1), (vs0, 2)):
        cells = fb.cells_at_level(sys, n)
        for a, b in itertools.combinations(cells, 2):
            fb.shared_point(sys, a, b)  # raises InvariantViolation on >1 match


# ---------------------------------------------------------------- boundaries


def _refine_words(sys, words, level):
    out = []
    for w in words:
        extra = level - (len(w) - sys.window_level)
        if extra == 0:
            out.append(tuple(w))
        else:
            for suffix in itertools.product(range(1, sys.M + 1), repeat=extra):
                out.append(tuple(w) + suffix)
    return out


def _refined(sys, level):
    return itertools.product(range(1, sys.M + 1), repeat=sys.window_level + level)


def boundary_count_oracle(sys, cell_words):
    level = max(len(w) for w in cell_words) - sys.window_level
    inside = set(_refine_words(sys, cell_words, level))
    tol = 1e-9 * sys.L**-level
    seen = {}
    for w in _refined(sys, level):
        A = sys.L**sys.window_level * np.eye(2)
        b = np.zeros(2)
        for s in w:
            b = A @ sys.maps_offset[s - 1] + b
            A = A @ sys.maps_linear[s - 1]
        for q in sys.essential_vertices:
            p = A @ q + b
            key = (round(p[0] / tol / 4), round(p[1] / tol / 4))
            hit = None
            for nb in itertools.product((-1, 0, 1), repeat=2):
                k2 = (key[0] + nb[0], key[1] + nb[1])
                if k2 in seen and np.linalg.norm(seen[k2][0] - p) <= tol:
                    hit = k2
                    break
            if hit is None:
                seen[key] = (p, set())
                hit = key
            seen[hit][1].add(w in inside)
    return sum(1 for p, flags in seen.values() if flags == {True, False})


SG_UNIONS = {
    "single": (["1.2"], 3),
    "pair": (["1.2", "1.3"], 4),
    "staircase": (["1.2", "1.3", "2.1"], 5),
    "mixed": (["1.2", "1.1.2"], 4),
}
VS_UNIONS = {
    "single": (["5.5"], 4),
    "pair": (["5.5", "5.1"], 4),
    # the diagonal chain: side corners of Vicsek cells touch nothing, so the
    # boundary stays at 4 (interior gluing points cancel pairwise)
    "staircase": (["5.1", "5.5", "5.4"], 4),
    "mixed": (["5.5", "5.1.4"], 4),
}


def _union_from_specs(sys, specs):
    cells = [sys.cell(tuple(int(s) for s in w.split("."))) for w in specs]
    return fb.make_union(sys, cells)


@pytest.mark.parametrize("name", list(SG_UNIONS))
def test_boundary_points_sg_unions(sg, name):
    specs, frozen = SG_UNIONS[name]
    u = _union_from_specs(sg, specs)
    pts = fb.boundary_points(sg, u)
    oracle = boundary_count_oracle(sg, [tuple(int(s) for s in w.split(".")) for w in specs])
    assert len(pts) == oracle == frozen


@pytest.mark.parametrize("name", list(VS_UNIONS))
def test_boundary_points_vs_unions(vs, name):
    specs, frozen = VS_UNIONS[name]
    u = _union_from_specs(vs, specs)
    pts = fb.boundary_points(vs, u)
    oracle = boundary_count_oracle(vs, [tuple(int(s) for s in w.split(".")) for w in specs])
    assert len(pts) == oracle == frozen


def test_boundary_points_vicsek_central(vs0):
    u = fb.CellUnion((vs0.cell((5,)),))
    assert len(fb.boundary_points(vs0, u)) == 4


def test_boundary_points_window_errors(sg, sg0):
    whole = fb.CellUnion(tuple(fb.cells_at_level(sg0, 1)))
    with pytest.raises(PreconditionError):
        fb.boundary_points(sg0, whole)
    touches_corner = fb.CellUnion((sg0.cell((1,)),))  # contains the origin corner
    with pytest.raises(PreconditionError):
        fb.boundary_points(sg0, touches_corner)


def test_boundary_additivity(sg):
    u1 = fb.CellUnion((sg.cell((1, 2)),))
    u2 = fb.CellUnion((sg.cell((3, 1)),))
    both = fb.CellUnion(u1.cells + u2.cells)
    assert len(fb.boundary_points(sg, both)) == len(fb.boundary_points(sg, u1)) + len(
        fb.boundary_points(sg, u2)
    )


def test_neighbor_count_R(sg, vs):
    assert fb.neighbor_count_R(sg) == 2
    assert fb.neighbor_count_R(vs) == 1


def test_touch_count_smaller_at_window_corner(sg0, vs0):
    # total contact count drops for the cell at a window corner
    for sys, interior_count in ((sg0, 3), (vs0, 2)):
        corner_cell = sys.cell((1, 1))  # sits at the fixed point of map 1
        assert _touch_count(sys, corner_cell) < interior_count


def test_vertex_graph_counts(sg0, vs0):
    g = fb.vertex_graph(sg0, 1)
    assert (g.num_vertices, g.num_edges) == (6, 9)
    g0 = fb.vertex_graph(sg0, 0)
    assert g0.num_vertices == 3 and g0.num_edges == 3
    gv = fb.vertex_graph(vs0, 1)
    # value fixed by the deduplication oracle: 5 cells x 4 corners - 4 shared
    assert (gv.num_vertices, gv.num_edges) == (16, 30)
    with pytest.raises(CapExceeded):
        fb.vertex_graph(sg0, 9, cap=100)


def test_vertex_graph_matches_dedup_oracle(sg0, vs0):
    for sys, N in ((sg0, 2), (vs0, 2)):
        g = fb.vertex_graph(sys, N)
        # oracle: dedup vertex tuples rounded well below the minimum gap
        pts = set()
        for c in fb.cells_at_level(sys, N):
            for v in sys.cell_vertices(c):
                pts.add((round(v[0], 9), round(v[1], 9)))
        assert g.num_vertices == len(pts)


def _canon_vertex_set(verts):
    v = np.round(verts, 9) + 0.0
    return v[np.lexsort((v[:, 1], v[:, 0]))].tobytes()


def test_symmetry_group_preserves_cells(sg0, vs0):
    for sys in (sg0, vs0):
        cells = fb.cells_at_level(sys, 1)
        keys = {_canon_vertex_set(sys.cell_vertices(c)) for c in cells}
        for g, t in sys.symmetry_affines():
            for c in cells:
                img = sys.cell_vertices(c) @ g.T + t
                assert _canon_vertex_set(img) in keys


def test_window_rebase(sg):
    sys0 = sg.with_window(0)
    assert sys0.window_level == 0
    assert len(fb.cells_at_level(sys0, 1)) == 3
