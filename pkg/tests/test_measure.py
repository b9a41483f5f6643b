import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import fractalbv as fb
from fractalbv.errors import PreconditionError
from fractalbv.measure import MassInterval, adaptive_width_target, cell_bounding_ball


def test_bounding_ball_examples(sg0, vs0):
    ball = cell_bounding_ball(sg0, sg0.cell(()))
    assert abs(ball.radius - 1 / math.sqrt(3)) < 1e-12
    assert np.allclose(ball.center, [0.5, math.sqrt(3) / 6], atol=1e-12)
    vball = cell_bounding_ball(vs0, vs0.cell(()))
    assert abs(vball.radius - math.sqrt(2) / 2) < 1e-12
    deep = cell_bounding_ball(sg0, sg0.cell((1, 2, 3)))
    assert abs(deep.radius - 2.0**-3 / math.sqrt(3)) < 1e-12


def test_bounding_ball_contains_anchor_samples(sg0, vs0, rng):
    # 100 deep sub-cell anchors stay inside the level-0 ball
    for sys in (sg0, vs0):
        ball = cell_bounding_ball(sys, sys.cell(()))
        for _ in range(100):
            word = tuple(rng.integers(1, sys.M + 1, size=12))
            p = fb.apply_word(sys, word, sys.center)
            assert np.linalg.norm(p - ball.center) <= ball.radius + 1e-12


def test_pair_mass_separated_zero(sg0):
    iv = fb.pair_mass(sg0, sg0.cell((1, 1)), sg0.cell((2, 2)), r=0.2, depth_cap=8)
    assert (iv.lo, iv.hi) == (0.0, 0.0)


def test_pair_mass_full_cover_exact(sg0):
    K = sg0.cell(())
    iv = fb.pair_mass(sg0, K, K, r=1.0, depth_cap=8)
    assert (iv.lo, iv.hi) == (1.0, 1.0)
    iv2 = fb.pair_mass(sg0, K, K, r=1.5, depth_cap=8)
    assert (iv2.lo, iv2.hi) == (1.0, 1.0)


def test_pair_mass_against_mc(sg0):
    a, b = sg0.cell((1,)), sg0.cell((2,))
    r = 2.0**-4
    iv = fb.pair_mass(sg0, a, b, r, depth_cap=12)
    est, lo, hi = fb.mc_pair_mass(sg0, a, b, r, samples=10**6, seed=3)
    assert hi >= iv.lo and lo <= iv.hi


def test_ball_mass_vertex_subcell(sg0):
    # the depth-k subcell at a vertex lies inside the closed ball of its diameter
    K = sg0.cell(())
    p = np.array([0.0, 0.0])
    k = 3
    iv = fb.ball_mass(sg0, p, 2.0**-k, K, depth_cap=10)
    assert iv.lo >= 3.0**-k
    assert iv.hi >= iv.lo


def test_ball_mass_full_cover(sg0):
    K = sg0.cell(())
    iv = fb.ball_mass(sg0, np.array([0.5, 0.2]), 5.0, K, depth_cap=6)
    assert (iv.lo, iv.hi) == (1.0, 1.0)


def test_ball_mass_against_mc(sg0):
    K = sg0.cell(())
    p = sg0.center
    iv = fb.ball_mass(sg0, p, 0.3, K, depth_cap=12)
    est, lo, hi = fb.mc_ball_mass(sg0, p, 0.3, K, samples=10**6, seed=5)
    assert hi >= iv.lo and lo <= iv.hi


def test_monotonicity_in_r(sg0):
    a, b = sg0.cell((1,)), sg0.cell((2,))
    rs = np.geomspace(2.0**-6, 2.0**-2, 9)
    ivs = [fb.pair_mass(sg0, a, b, r, depth_cap=11) for r in rs]
    for i in range(len(rs) - 1):
        assert ivs[i].hi <= ivs[i + 1].hi + ivs[i].width
        assert ivs[i].lo <= ivs[i + 1].hi


@settings(max_examples=12, deadline=None)
@given(st.data())
def test_exact_mass_self_similarity(data):
    name = data.draw(st.sampled_from(["sierpinski", "vicsek"]))
    sys = fb.build_preset(name, window_level=0)
    la = data.draw(st.integers(1, 2))
    a = sys.cell(tuple(data.draw(st.integers(1, sys.M)) for _ in range(la)))
    b = sys.cell(tuple(data.draw(st.integers(1, sys.M)) for _ in range(la)))
    i = data.draw(st.integers(1, sys.M))
    r = data.draw(st.floats(0.05, 0.8))
    big = fb.pair_mass(sys, a, b, r, depth_cap=9)
    small = fb.pair_mass(
        sys, sys.cell((i,) + a.word), sys.cell((i,) + b.word), r / sys.L, depth_cap=10
    )
    scaled = big.scaled(float(sys.M) ** -2)
    # rtol absorbs float rounding of the otherwise exact identity
    assert small.intersects(scaled, rtol=1e-12)


@settings(max_examples=12, deadline=None)
@given(st.data())
def test_pair_mass_symmetric_bitwise(data):
    sys = fb.build_preset(data.draw(st.sampled_from(["sierpinski", "vicsek"])), window_level=0)
    la = data.draw(st.integers(1, 2))
    lb = data.draw(st.integers(1, 2))
    a = sys.cell(tuple(data.draw(st.integers(1, sys.M)) for _ in range(la)))
    b = sys.cell(tuple(data.draw(st.integers(1, sys.M)) for _ in range(lb)))
    r = data.draw(st.floats(0.02, 1.0))
    ab = fb.pair_mass(sys, a, b, r, depth_cap=9)
    ba = fb.pair_mass(sys, b, a, r, depth_cap=9)
    assert (ab.lo, ab.hi) == (ba.lo, ba.hi)


def test_width_shrinks_geometrically(sg0):
    a, b = sg0.cell((1,)), sg0.cell((2,))
    widths = [fb.pair_mass(sg0, a, b, 2.0**-3, depth_cap=d).width for d in range(7, 13)]
    ratios = [widths[i] / widths[i + 1] for i in range(len(widths) - 1)]
    assert all(w2 < w1 for w1, w2 in zip(widths, widths[1:]))
    assert np.mean(ratios) > 1.5  # measured contraction per extra level


def test_width_target_early_exit(sg0):
    a, b = sg0.cell((1,)), sg0.cell((2,))
    iv = fb.pair_mass(sg0, a, b, 2.0**-3, depth_cap=14, width_target=1e-5)
    assert iv.width <= 1e-5
    full = fb.pair_mass(sg0, a, b, 2.0**-3, depth_cap=14)
    assert full.pairs_visited > 3 * iv.pairs_visited  # deepening skips levels
    assert full.lo <= iv.hi and iv.lo <= full.hi


def test_width_target_best_effort_at_cap(sg0):
    # a target unattainable at the cap still returns the cap-limited interval
    a, b = sg0.cell((1,)), sg0.cell((2,))
    iv = fb.pair_mass(sg0, a, b, 2.0**-4, depth_cap=10, width_target=1e-12)
    assert iv.width > 1e-12
    assert iv.depth_reached == 10


def test_memo_reuses_congruent_pairs(sg0):
    memo = {}
    r = 2.0**-4
    first = fb.pair_mass(sg0, sg0.cell((1,)), sg0.cell((2,)), r, depth_cap=11, memo=memo)
    assert len(memo) == 1
    second = fb.pair_mass(sg0, sg0.cell((1,)), sg0.cell((3,)), r, depth_cap=11, memo=memo)
    assert len(memo) == 1  # congruent pair hits the cache
    assert (first.lo, first.hi) == (second.lo, second.hi)
    plain = fb.pair_mass(sg0, sg0.cell((1,)), sg0.cell((2,)), r, depth_cap=11)
    assert first.intersects(plain)
    assert abs(first.lo - plain.lo) <= 1e-12 * max(1.0, plain.lo)


def test_adaptive_width_target(sg0):
    a, b = sg0.cell((1,)), sg0.cell((2,))
    wt = adaptive_width_target(sg0, a, b, 2.0**-4, rel=1e-2)
    assert wt > 0
    iv = fb.pair_mass(sg0, a, b, 2.0**-4, depth_cap=14, width_target=wt)
    assert iv.width <= wt


def test_union_pair_mass(sg0):
    u = fb.CellUnion((sg0.cell((1,)), sg0.cell((2,))))
    K = sg0.cell(())
    iv = fb.pair_mass(sg0, u, K, r=2.0, depth_cap=6)
    # full cover: mu(U) * mu(K) = 2/3
    assert abs(iv.lo - 2.0 / 3.0) < 1e-12 and abs(iv.hi - 2.0 / 3.0) < 1e-12


def test_mass_interval_ops():
    a = MassInterval(1.0, 2.0)
    b = MassInterval(3.0, 4.0)
    assert (a + b).lo == 4.0 and (a + b).hi == 6.0
    assert a.gap(b) == 1.0 and b.gap(a) == 1.0
    assert a.intersects(MassInterval(1.5, 5.0))
    r = b.ratio(a)
    assert r.lo == 1.5 and r.hi == 4.0
    with pytest.raises(ValueError):
        MassInterval(2.0, 1.0)
    with pytest.raises(PreconditionError):
        a.ratio(MassInterval(0.0, 1.0))


def test_invalid_args(sg0):
    a = sg0.cell((1,))
    with pytest.raises(PreconditionError):
        fb.pair_mass(sg0, a, a, r=-1.0)
    with pytest.raises(PreconditionError):
        fb.pair_mass(sg0, a, a, r=0.1, depth_cap=15)
