"""Radius-normalized pair and union functionals and their log-periodic structure.

Quantities (for cells/unions A, B and radius r):

* ``ks_pair``:   r^(-d_h) * G_{A,B}(r), the radius-normalized pair functional
* ``normalized_pair``: N(r) = r^(-2 d_h) * G_{A,B}(r), the doubly normalized
  profile quantity; for touching cells N is exactly invariant under
  r -> L r once r is below the pair's localization threshold
* ``ks_union``:  the same functional for the indicator of a cell union,
  decomposed over touching boundary pairs (exact below the union's
  separation threshold) or evaluated directly

The normalization is applied twice deliberately: once inside the
functional definition and once more to expose the periodic profile; all
statements here are phrased in terms of the explicit N(r).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .curves import Curve, geometric_grid
from .errors import InvariantViolation, PreconditionError
from .ifs import Cell, CellUnion, FractalSystem, cells_at_level, shared_point
from .measure import MassInterval, adaptive_width_target, pair_mass

SetLike = Union[Cell, CellUnion]


# ------------------------------------------------------------------ thresholds


def _children_at(sys: FractalSystem, cell: Cell, p: np.ndarray) -> list[Cell]:
    tol = sys.vertex_tol(cell.level + 1)
    out = []
    for i in range(1, sys.M + 1):
        ch = cell.child(i)
        verts = sys.cell_vertices(ch)
        if np.min(np.linalg.norm(verts - p, axis=1)) <= tol:
            out.append(ch)
    return out


def pair_threshold(sys: FractalSystem, a: Cell, b: Cell) -> float:
    """Localization threshold r0 of a touching cell pair.

    Computed from the three separation distances between the sub-cells at
    the shared vertex and the remainders of the two cells, halved as a
    safety factor.  The doubly normalized N is exactly L-periodic in r on
    (0, L*r0].
    """
    p = shared_point(sys, a, b)
    if p is None:
        raise PreconditionError("pair_threshold requires touching cells")
    ca = _children_at(sys, a, p)[0]
    cb = _children_at(sys, b, p)[0]
    rest_a = [a.child(i) for i in range(1, sys.M + 1) if a.child(i).word != ca.word]
    rest_b = [b.child(i) for i in range(1, sys.M + 1) if b.child(i).word != cb.word]
    d1 = min(sys.cell_set_distance(ca, x) for x in rest_b)
    d2 = min(sys.cell_set_distance(cb, x) for x in rest_a)
    d3 = min(sys.cell_set_distance(x, y) for x in rest_a for y in rest_b)
    return 0.5 * min(d1, d2, d3)


def boundary_pairs(sys: FractalSystem, U: CellUnion) -> list[tuple[Cell, Cell]]:
    """Touching (inside, outside) same-level cell pairs of a union."""
    words = U.words()
    pairs = []
    for c in U.cells:
        for other in cells_at_level(sys, U.level):
            if other.word in words:
                continue
            if shared_point(sys, c, other) is not None:
                pairs.append((c, other))
    return pairs


def union_threshold(sys: FractalSystem, U: CellUnion) -> float:
    """Radius below which the boundary-pair decomposition is exact.

    The minimum positive separation between cells of U and non-touching
    same-level cells of the complement, capped by the distance from U to
    the window corners (where unseen blow-up material attaches).
    """
    words = U.words()
    best = math.inf
    for c in U.cells:
        for other in cells_at_level(sys, U.level):
            if other.word in words:
                continue
            if shared_point(sys, c, other) is not None:
                continue
            best = min(best, sys.cell_set_distance(c, other))
        for q in sys.window_corners():
            best = min(best, sys.point_cell_distance(q, c))
    if not (best > 0):
        raise PreconditionError("union touches its complement everywhere; no threshold")
    return best


def reference_pair(sys: FractalSystem) -> tuple[Cell, Cell]:
    """The lexicographically first touching pair of level-1 cells."""
    cells = cells_at_level(sys, 1)
    for i, a in enumerate(cells):
        for b in cells[i + 1 :]:
            if shared_point(sys, a, b) is not None:
                return a, b
    raise InvariantViolation("no touching level-1 pair found")


# ------------------------------------------------------------------ functionals


def ks_pair(
    sys: FractalSystem,
    A: SetLike,
    B: SetLike,
    r: float,
    depth_cap: int = 12,
    width_target: float = 0.0,
    memo: Optional[dict] = None,
) -> MassInterval:
    """Interval for the radius-normalized pair functional r^(-d_h) G_{A,B}(r)."""
    g = pair_mass(sys, A, B, r, depth_cap=depth_cap, width_target=width_target, memo=memo)
    return g.scaled(r**-sys.d_h)


def normalized_pair(
    sys: FractalSystem,
    A: SetLike,
    B: SetLike,
    r: float,
    depth_cap: int = 12,
    width_target: float = 0.0,
    memo: Optional[dict] = None,
) -> MassInterval:
    """Interval for the doubly normalized N(r) = r^(-2 d_h) G_{A,B}(r)."""
    g = pair_mass(sys, A, B, r, depth_cap=depth_cap, width_target=width_target, memo=memo)
    return g.scaled(r ** (-2 * sys.d_h))


def _union_complement(sys: FractalSystem, U: CellUnion) -> CellUnion:
    words = U.words()
    return CellUnion(tuple(c for c in cells_at_level(sys, U.level) if c.word not in words))


def ks_union(
    sys: FractalSystem,
    U: CellUnion,
    r: float,
    depth_cap: int = 12,
    width_target: float = 0.0,
    memo: Optional[dict] = None,
    direct: bool = False,
) -> MassInterval:
    """Interval for r^(-d_h) * (double integral of |1_U(x) - 1_U(y)| over d<=r).

    Default path sums the touching boundary pairs, which is exact for
    r below ``union_threshold``; ``direct=True`` sums every inside/outside
    cell pair instead (no threshold requirement).
    """
    if not U.cells:
        return MassInterval.zero()
    if direct:
        comp = _union_complement(sys, U)
        g = pair_mass(sys, U, comp, r, depth_cap=depth_cap, width_target=width_target, memo=memo)
        return g.scaled(2.0 * r**-sys.d_h)
    r0 = union_threshold(sys, U)
    if r >= r0:
        raise PreconditionError(
            f"r={r:g} is at or above the union separation threshold {r0:g}; "
            "evaluate with direct=True"
        )
    pairs = boundary_pairs(sys, U)
    total = MassInterval.zero()
    share = width_target / max(1, len(pairs))
    for cin, cout in pairs:
        total = total + pair_mass(sys, cin, cout, r, depth_cap=depth_cap, width_target=share, memo=memo)
    return total.scaled(2.0 * r**-sys.d_h)


def normalized_union(
    sys: FractalSystem,
    U: CellUnion,
    r: float,
    depth_cap: int = 12,
    width_target: float = 0.0,
    memo: Optional[dict] = None,
    direct: bool = False,
) -> MassInterval:
    """N_U(r) = r^(-d_h) * ks_union(r)."""
    return ks_union(
        sys, U, r, depth_cap=depth_cap, width_target=width_target, memo=memo, direct=direct
    ).scaled(r**-sys.d_h)


# ------------------------------------------------------------------ profiles


def _target_for(sys, A, B, r, depth_cap, width_rel):
    if width_rel <= 0:
        return 0.0
    return adaptive_width_target(sys, A, B, r, width_rel, probe_cap=min(depth_cap, 8))


def normalized_profile(
    sys: FractalSystem,
    target: Union[tuple[Cell, Cell], CellUnion],
    r_grid: Sequence[float],
    depth_cap: int = 12,
    width_rel: float = 1e-3,
    memo: Optional[dict] = None,
    threads: int = 1,
) -> Curve:
    """Curve of N(r) intervals over a decreasing radius grid.

    ``target`` is either a touching cell pair or a cell union.  Each grid
    point gets an adaptive absolute width target of roughly ``width_rel``
    relative to a shallow probe of the mass.
    """
    r_grid = np.asarray(sorted(set(float(r) for r in r_grid), reverse=True))
    if isinstance(target, CellUnion):

        def one(r):
            wt = _target_for(sys, target, _union_complement(sys, target), r, depth_cap, width_rel)
            return normalized_union(sys, target, r, depth_cap=depth_cap, width_target=wt, memo=memo)

        tag = "union-N"
    else:
        a, b = target

        def one(r):
            wt = _target_for(sys, a, b, r, depth_cap, width_rel)
            return normalized_pair(sys, a, b, r, depth_cap=depth_cap, width_target=wt, memo=memo)

        tag = "pair-N"

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            vals = list(ex.map(one, r_grid))
    else:
        vals = [one(r) for r in r_grid]
    return Curve(
        scale="radius",
        normalization=tag,
        abscissa=r_grid,
        lo=np.array([v.lo for v in vals]),
        hi=np.array([v.hi for v in vals]),
        meta={"depth_cap": depth_cap, "width_rel": width_rel},
    )


@dataclass
class PeriodicityReport:
    period_factor: float  # multiplicative period in r (the length scale L)
    max_residual: float  # largest gap between N(r) and N(L r) intervals
    checked: int
    offending_r: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.max_residual == 0.0


def periodicity_check(curve: Curve, sys: FractalSystem, rtol: float = 1e-9) -> PeriodicityReport:
    """Gap between N(r) and N(L r) across the grid; exactness means overlap.

    Samples are matched multiplicatively within ``rtol``; a strictly
    positive residual beyond interval widths signals an engine bug or a
    grid extending above the localization threshold.
    """
    L = sys.L
    r = curve.abscissa
    checked = 0
    max_res = 0.0
    offending = []
    for i in range(len(r)):
        target = L * r[i]
        j = np.argmin(np.abs(r - target))
        if abs(r[j] - target) > rtol * target:
            continue
        checked += 1
        raw = max(0.0, curve.lo[i] - curve.hi[j], curve.lo[j] - curve.hi[i])
        # allowance for float rounding of exactly equal quantities
        gap = max(0.0, raw - 1e-12 * max(curve.hi[i], curve.hi[j], 1e-300))
        if gap > max_res:
            max_res = gap
        if gap > 0:
            offending.append(float(r[i]))
    if checked == 0:
        raise PreconditionError("grid contains no (r, L r) sample pairs to compare")
    return PeriodicityReport(period_factor=L, max_residual=max_res, checked=checked, offending_r=offending)


@dataclass
class OscillationReport:
    period_log: float  # additive period of -ln r
    amplitude: float  # max over grid of N.lo minus min of N.hi, clamped at 0
    certified: bool  # True when the separation is strictly positive
    mean: float
    max_periodicity_residual: Optional[float]
    interval_width_max: float

    @property
    def significant(self) -> bool:
        return self.amplitude > 5.0 * self.interval_width_max


def oscillation_amplitude(curve: Curve, sys: FractalSystem) -> OscillationReport:
    """Certified oscillation statistics of a normalized profile.

    The amplitude is the separation between the best-resolved high and low
    phases; it is a lower bound on the true oscillation of N, so a positive
    value certifies non-constancy.  A clamped amplitude of 0 means the
    oscillation is unresolved at this precision, a legitimate outcome.
    """
    if len(curve) < 2:
        raise PreconditionError("need at least two samples")
    raw = float(curve.lo.max() - curve.hi.min())
    allowance = 1e-10 * float(np.abs(curve.hi).max())
    res = None
    try:
        res = periodicity_check(curve, sys).max_residual
    except PreconditionError:
        pass
    return OscillationReport(
        period_log=math.log(sys.L),
        amplitude=max(0.0, raw),
        certified=raw > allowance,
        mean=float(curve.mid.mean()),
        max_periodicity_residual=res,
        interval_width_max=float(curve.width.max()),
    )


# ----------------------------------------------------------- subsequence limits


@dataclass
class PhaseSequence:
    phase: float  # s in (1/L, 1]; radii are s * diam * L^-m
    radii: list
    intervals: list  # MassInterval per m
    max_gap: float  # worst pairwise interval gap along m (0 = consistent)


@dataclass
class SubsequenceReport:
    phases: list  # PhaseSequence per phase
    disjoint: bool  # certified: some two phases have disjoint N enclosures
    measured_ratio: tuple  # (lo, hi) enclosure of G(s2 r)/G(s1 r) at the first m
    predicted_ratio: float  # 1 + R/M, the gluing-count prediction
    matches_paper: bool


def subsequence_limits(
    sys: FractalSystem,
    a: Cell,
    b: Cell,
    phases: Optional[Sequence[float]] = None,
    m_count: int = 3,
    depth_cap: int = 12,
    width_rel: float = 1e-3,
    memo: Optional[dict] = None,
    R: Optional[int] = None,
) -> SubsequenceReport:
    """Per-phase limits of N along geometric subsequences r = s * diam * L^-m.

    Exact periodicity makes each phase's sequence constant within interval
    widths; distinct phases with disjoint enclosures certify that N(r) has
    no limit as r -> 0.  The reported mass ratio between the two phases is
    printed next to the gluing-count prediction 1 + R/M without being
    asserted (the prediction's derivation mixes product and plain measures).
    """
    L, M = sys.L, sys.M
    if phases is None:
        phases = [1.0, (1.0 + 1.0 / L) / L]
    for s in phases:
        if not (1.0 / L < s <= 1.0):
            raise PreconditionError(f"phase {s} outside (1/L, 1]")
    r0 = pair_threshold(sys, a, b)
    m_start = max(
        int(math.ceil(math.log(s * sys.diam / r0) / math.log(L))) for s in phases
    )
    ms = list(range(m_start, m_start + m_count))

    seqs = []
    for s in phases:
        radii = [s * sys.diam * L**-m for m in ms]
        ivs = []
        for r in radii:
            wt = _target_for(sys, a, b, r, depth_cap, width_rel)
            ivs.append(normalized_pair(sys, a, b, r, depth_cap=depth_cap, width_target=wt, memo=memo))
        gap = 0.0
        for i in range(len(ivs)):
            for j in range(i + 1, len(ivs)):
                gap = max(gap, ivs[i].certified_gap(ivs[j]))
        seqs.append(PhaseSequence(phase=s, radii=radii, intervals=ivs, max_gap=gap))

    disjoint = False
    for i in range(len(seqs)):
        for j in range(i + 1, len(seqs)):
            if seqs[i].intervals[0].certified_gap(seqs[j].intervals[0]) > 0:
                disjoint = True

    s1, s2 = phases[0], phases[1] if len(phases) > 1 else phases[0]
    n1, n2 = seqs[0].intervals[0], seqs[1].intervals[0] if len(seqs) > 1 else seqs[0].intervals[0]
    # mass ratio G(L s2 theta) / G(s1 theta) with theta = diam L^-m: for the
    # default phases this is the ratio at the radii diam L^-m (1 + 1/L) and
    # diam L^-m, the two geometric subsequences behind the prediction below.
    # G(L s2 theta) = M^2 G(s2 theta) exactly since s2 theta is below r0.
    factor = (M**2) * (s2 / s1) ** (2 * sys.d_h)
    ratio = (n2.ratio(n1).lo * factor, n2.ratio(n1).hi * factor)
    from .ifs import neighbor_count_R

    Rval = R if R is not None else neighbor_count_R(sys)
    predicted = 1.0 + Rval / M
    matches = ratio[0] <= predicted <= ratio[1]
    return SubsequenceReport(
        phases=seqs,
        disjoint=disjoint,
        measured_ratio=ratio,
        predicted_ratio=predicted,
        matches_paper=matches,
    )


# ----------------------------------------------------------- boundary recovery


@dataclass
class RecoveryReport:
    ratio: MassInterval  # enclosure of N_U / (2 N_ref)
    integers: list  # integers inside the enclosure
    boundary_count: int  # |dU| from direct vertex enumeration
    matched: bool  # exactly one integer enclosed and equal to boundary_count


def boundary_recovery(
    sys: FractalSystem,
    U: CellUnion,
    r: float,
    depth_cap: int = 12,
    width_rel: float = 1e-3,
    memo: Optional[dict] = None,
) -> RecoveryReport:
    """Recover the boundary point count from the normalized union functional.

    N_U(r) equals 2 |dU| N_ref(r) for r below the union threshold, because
    every touching pair is congruent to the reference pair; the enclosure
    of the ratio must contain the integer |dU|.
    """
    from .ifs import boundary_points

    n = U.level
    ra, rb = reference_pair(sys)
    wt = _target_for(sys, U, _union_complement(sys, U), r, depth_cap, width_rel)
    n_u = normalized_union(sys, U, r, depth_cap=depth_cap, width_target=wt, memo=memo)
    # a level-n pair is the reference pair scaled down (n-1) times
    r_ref = r * sys.L ** (n - 1)
    wt_ref = _target_for(sys, ra, rb, r_ref, depth_cap, width_rel)
    n_ref = normalized_pair(sys, ra, rb, r_ref, depth_cap=depth_cap, width_target=wt_ref, memo=memo)
    ratio = n_u.ratio(n_ref.scaled(2.0))
    lo_int = math.ceil(ratio.lo - 1e-12)
    hi_int = math.floor(ratio.hi + 1e-12)
    integers = list(range(lo_int, hi_int + 1))
    count = len(boundary_points(sys, U))
    if not integers:
        raise InvariantViolation(
            f"recovered ratio [{ratio.lo:.6f}, {ratio.hi:.6f}] excludes every integer"
        )
    matched = integers == [count]
    return RecoveryReport(ratio=ratio, integers=integers, boundary_count=count, matched=matched)


# ------------------------------------------------------------------- psi profile


def psi_profile(curve: Curve) -> Curve:
    """Profile of the compensating factor 1 / (2 N(r)) along the same grid.

    Requires the curve to be certified positive (lo > 0 everywhere).
    """
    if np.any(curve.lo <= 0):
        raise PreconditionError("profile has unresolved samples (lo = 0); cannot invert")
    return Curve(
        scale=curve.scale,
        normalization="psi",
        abscissa=curve.abscissa,
        lo=1.0 / (2.0 * curve.hi),
        hi=1.0 / (2.0 * curve.lo),
        meta=dict(curve.meta),
    )


def besov_seminorm_probe(sys: FractalSystem, U: CellUnion, t_grid, N: int) -> float:
    """sup over the grid of t^(-d_h/d_w) M_heat(t) for the union indicator."""
    from . import heat

    walk = heat.build_walk(sys, N)
    if not U.cells:
        return 0.0
    curve = heat.heat_union(walk, U, t_grid)
    return float(curve.mid.max())
