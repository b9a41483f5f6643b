import math

import numpy as np
import pytest

import fractalbv as fb
from fractalbv import ks, renewal
from fractalbv.curves import Curve, geometric_grid
from fractalbv.errors import PreconditionError


def _power_law_curve(gamma, periodic=None, top=1.0, base=2.0, ppp=16, periods=4.0):
    # f(t) = t^gamma * periodic(-ln t): the log frame with the same gamma
    # recovers the periodic factor exactly
    t = geometric_grid(top, base, ppp, periods)
    z = -np.log(t)
    vals = t**gamma
    if periodic is not None:
        vals = vals * periodic(z)
    return Curve("radius", "synthetic", t, vals, vals)


def test_log_frame_pure_power_law():
    gamma = 1.3
    curve = _power_law_curve(gamma)
    g = renewal.to_log_frame(curve, gamma=gamma)
    assert np.allclose(g.mid, 1.0, rtol=1e-12)


def test_log_frame_recovers_periodic():
    gamma = 0.7
    P = 0.9

    def osc(z):
        return 2.0 + np.sin(2 * math.pi * z / P)

    curve = _power_law_curve(gamma, periodic=osc)
    g = renewal.to_log_frame(curve, alpha=2.0**gamma, beta=0.5)
    assert np.allclose(g.mid, osc(g.abscissa), rtol=1e-10)


def test_log_frame_gamma_zero_identity():
    curve = _power_law_curve(0.0, periodic=lambda z: 1.0 + 0.1 * np.cos(z))
    g = renewal.to_log_frame(curve, gamma=0.0)
    assert np.allclose(np.sort(g.mid), np.sort(curve.mid))


def test_log_frame_requires_parameters():
    curve = _power_law_curve(1.0)
    with pytest.raises(PreconditionError):
        renewal.to_log_frame(curve)


def test_fold_exactly_periodic_zero_drift():
    P = math.log(2.0)
    curve = _power_law_curve(0.0, periodic=lambda z: 3.0 + np.cos(2 * math.pi * z / P))
    prof = renewal.fold(curve, P)
    assert prof.drift < 1e-12
    assert prof.n_periods >= 4


def test_fold_linear_trend_drift():
    P = math.log(2.0)
    eps = 0.01
    curve = _power_law_curve(0.0, periodic=lambda z: 1.0 + eps * z)
    prof = renewal.fold(curve, P)
    assert abs(prof.drift - eps * P) < 1e-9


def test_fold_needs_two_periods():
    curve = _power_law_curve(0.0, periods=1.5)
    with pytest.raises(PreconditionError):
        renewal.fold(curve, math.log(2.0))


def test_fold_scale_invariance():
    P = math.log(2.0)
    base = _power_law_curve(0.0, periodic=lambda z: 2.0 + np.sin(2 * math.pi * z / P) + 0.003 * z)
    scaled = Curve("radius", "x", base.abscissa, 10 * base.lo, 10 * base.hi)
    p1 = renewal.fold(base, P)
    p2 = renewal.fold(scaled, P)
    assert abs(p2.drift - 10 * p1.drift) < 1e-9
    assert abs(p1.drift_rel - p2.drift_rel) < 1e-12


def test_fold_round_trip_amplitude():
    # injected periodic factor recovered within 1% at 64 bins x 4 periods
    P = 0.8

    def osc(z):
        return 2.0 + np.sin(2 * math.pi * z / P)

    curve = _power_law_curve(1.1, periodic=osc, ppp=64, periods=4.0, base=math.e**P)
    g = renewal.to_log_frame(curve, gamma=1.1)
    prof = renewal.fold(g, P)
    assert len(prof.phases) == 64
    assert abs(prof.amplitude - 2.0) < 0.02


def test_scaling_residual_exact_power_law():
    gamma = 1.7
    beta = 0.5
    curve = _power_law_curve(gamma, base=2.0)
    rep = renewal.scaling_residual(curve, alpha=beta**-gamma, beta=beta, c=1.0, C=0.1, d_w=2.3)
    assert np.max(rep.residuals) < 1e-12
    assert rep.passed


def test_scaling_residual_recursion_seeded():
    # f defined by f(t) = alpha f(beta t) on a geometric grid is exactly scaling
    alpha, beta = 3.0, 0.5
    ppp = 8
    t = geometric_grid(1.0, 2.0, ppp, 3.0)
    vals = np.empty(len(t))
    vals[:ppp] = 1.0 + 0.3 * np.sin(np.arange(ppp))
    for i in range(ppp, len(t)):
        vals[i] = vals[i - ppp] / alpha  # t_i = beta * t_{i-ppp}
    curve = Curve("radius", "seeded", t, vals, vals)
    rep = renewal.scaling_residual(curve, alpha=alpha, beta=beta, c=1.0, C=1e-6, d_w=2.3)
    assert np.max(rep.residuals) < 1e-14
    assert math.isinf(rep.min_passing_C) or rep.min_passing_C >= 0


def test_scaling_residual_misaligned_grid():
    t = np.array([1.0, 0.7, 0.49])
    curve = Curve("radius", "x", t, t, t)
    with pytest.raises(PreconditionError):
        renewal.scaling_residual(curve, alpha=2.0, beta=0.5, c=1.0, C=1.0, d_w=2.3)


def test_scaling_residual_envelope_flag():
    gamma = 1.0
    curve = _power_law_curve(gamma)
    noisy = Curve("radius", "x", curve.abscissa, curve.lo * (1 + 0.05), curve.hi * (1 + 0.05))
    # alpha slightly off: residuals positive, tiny envelope must fail
    rep = renewal.scaling_residual(noisy, alpha=2.2, beta=0.5, c=1e-12, C=5.0, d_w=2.3)
    assert not rep.passed and rep.violations


def test_engine_mass_curve_scaling_residual(sg0):
    # G(r) = M^2 G(r/L) below the threshold: residuals within interval widths
    a, b = sg0.cell((1,)), sg0.cell((2,))
    r0 = ks.pair_threshold(sg0, a, b)
    grid = geometric_grid(r0, sg0.L, 4, 2.0)
    ivs = [fb.pair_mass(sg0, a, b, float(r), depth_cap=11) for r in grid]
    curve = Curve(
        "radius",
        "pair-mass",
        grid,
        np.array([v.lo for v in ivs]),
        np.array([v.hi for v in ivs]),
    )
    rep = renewal.scaling_residual(curve, alpha=sg0.M**2, beta=1.0 / sg0.L, c=1.0, C=0.1, d_w=sg0.d_w)
    # residual of mids bounded by the (scaled) interval widths
    for t, res in zip(rep.t_values, rep.residuals):
        i = int(np.argmin(np.abs(grid - t)))
        j = int(np.argmin(np.abs(grid - t / sg0.L)))
        bound = curve.width[i] + sg0.M**2 * curve.width[j]
        assert res <= 0.5 * bound + 1e-15


def test_fold_engine_profile_drift_bounded(sg):
    a, b = ks.reference_pair(sg)
    r0 = ks.pair_threshold(sg, a, b)
    grid = geometric_grid(sg.L * r0, sg.L, 8, 2.0)
    curve = ks.normalized_profile(sg, (a, b), grid, depth_cap=11, width_rel=1e-3)
    prof = renewal.fold(curve, math.log(sg.L))
    assert prof.drift <= float(curve.width.max())
