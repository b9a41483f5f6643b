"""Rigorous two-sided bounds on product-measure masses.

The central quantity is the pair mass

    G_{A,B}(r) = (mu x mu)({(x, y) in A x B : d(x, y) <= r}),

computed by recursive cell-pair subdivision.  A pair of cells is decided
whole (its full product mass enters both bounds) when every vertex-pair
distance is below r, discarded when the bounding-ball gap exceeds r, and
split otherwise; undecided mass at the depth cap widens only the upper
bound.  The returned interval always contains the true value; its width
is exactly the undecided mass, so narrow intervals are certificates.

All bounds hold up to floating-point rounding of coordinate arithmetic
(relative 1e-15 per operation); no exact rational geometry is attempted.
"""

from __future__ import annotations

import math
from collections import namedtuple
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from . import kernels
from .errors import PreconditionError
from .ifs import Cell, CellUnion, FractalSystem

SetLike = Union[Cell, CellUnion]

MAX_DEPTH_CAP = 14

GeomPack = namedtuple("GeomPack", "ml mo c0 v0 R0 linv mneg hull_tight")

_Z99 = 2.5758293035489004  # two-sided 99% normal quantile


@dataclass(frozen=True)
class MassInterval:
    """Certified enclosure [lo, hi] of a nonnegative mass."""

    lo: float
    hi: float
    depth_reached: int = 0
    pairs_visited: int = 0

    def __post_init__(self):
        if not (0.0 <= self.lo <= self.hi + 1e-300):
            raise ValueError(f"invalid interval [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def intersects(self, other: "MassInterval", rtol: float = 0.0) -> bool:
        """Overlap test; rtol grants a relative slack for the accumulated
        floating-point rounding of otherwise exact identities."""
        slack = rtol * max(self.hi, other.hi, 1e-300)
        return self.lo - slack <= other.hi and other.lo - slack <= self.hi

    def gap(self, other: "MassInterval") -> float:
        """Distance between the intervals (0 when they overlap)."""
        return max(0.0, self.lo - other.hi, other.lo - self.hi)

    def certified_gap(self, other: "MassInterval", rtol: float = 1e-12) -> float:
        """Gap reduced by the float-rounding allowance; positive values are
        safe to report as genuine separation."""
        slack = rtol * max(self.hi, other.hi, 1e-300)
        return max(0.0, self.gap(other) - slack)

    def scaled(self, factor: float) -> "MassInterval":
        if factor < 0:
            raise ValueError("negative scaling of a mass interval")
        return MassInterval(self.lo * factor, self.hi * factor, self.depth_reached, self.pairs_visited)

    def __add__(self, other: "MassInterval") -> "MassInterval":
        return MassInterval(
            self.lo + other.lo,
            self.hi + other.hi,
            max(self.depth_reached, other.depth_reached),
            self.pairs_visited + other.pairs_visited,
        )

    def ratio(self, other: "MassInterval") -> "MassInterval":
        """Enclosure of self/other; other must be certified positive."""
        if other.lo <= 0:
            raise PreconditionError("ratio denominator not certified positive")
        return MassInterval(
            self.lo / other.hi, self.hi / other.lo, max(self.depth_reached, other.depth_reached), 0
        )

    @staticmethod
    def zero() -> "MassInterval":
        return MassInterval(0.0, 0.0)


@dataclass(frozen=True)
class BoundingBall:
    center: np.ndarray
    radius: float


def geom_pack(sys: FractalSystem) -> GeomPack:
    """Flat array bundle handed to the kernels; cached per system."""
    gp = getattr(sys, "_geom_pack", None)
    if gp is not None:
        return gp
    npow = 40
    linv = sys.L ** (-np.arange(npow, dtype=np.float64))
    mneg = float(sys.M) ** (-np.arange(npow, dtype=np.float64))
    gp = GeomPack(
        ml=np.ascontiguousarray(sys.maps_linear),
        mo=np.ascontiguousarray(sys.maps_offset),
        c0=np.ascontiguousarray(sys.center),
        v0=np.ascontiguousarray(sys.essential_vertices),
        R0=float(sys.ball_radius),
        linv=linv,
        mneg=mneg,
        hull_tight=bool(sys.hull_tight),
    )
    sys._geom_pack = gp
    return gp


def cell_bounding_ball(sys: FractalSystem, cell: Cell) -> BoundingBall:
    """Ball certified to contain the cell: mapped center, scaled circumradius."""
    return BoundingBall(
        center=sys.cell_center(cell),
        radius=sys.ball_radius * sys.L ** (-cell.level),
    )


def _as_cells(x: SetLike) -> tuple[Cell, ...]:
    if isinstance(x, Cell):
        return (x,)
    if isinstance(x, CellUnion):
        return x.cells
    raise PreconditionError(f"expected Cell or CellUnion, got {type(x).__name__}")


def _check_args(r: float, depth_cap: int):
    if not (r > 0):
        raise PreconditionError("radius must be positive")
    if depth_cap > MAX_DEPTH_CAP:
        raise PreconditionError(f"depth_cap must be <= {MAX_DEPTH_CAP}")


# ------------------------------------------------------------------ memoization


def _canonical_pair_key(sys, Aa, ba, la, Ab, bb, lb, rhat, cap, wt_hat):
    """Congruence-class key: relative placement of B seen from A's frame,
    canonicalized over the system symmetry group acting on both sides."""
    invA = (sys.L ** (2 * la)) * Aa.T
    D = invA @ Ab
    d = invA @ (bb - ba)
    best = None
    for g, gt in sys.symmetry_affines():
        # left action: undo a symmetry of the ambient copy of K
        gi = g.T
        git = -gi @ gt
        DL = gi @ D
        dL = gi @ d + git
        for h, ht in sys.symmetry_affines():
            Dc = DL @ h
            dc = DL @ ht + dL
            key = ((np.round(Dc, 9) + 0.0).tobytes(), (np.round(dc, 9) + 0.0).tobytes())
            if best is None or key < best:
                best = key
    rkey = np.format_float_scientific(rhat, precision=11)
    wkey = np.format_float_scientific(wt_hat, precision=6) if wt_hat > 0 else "0"
    return (lb - la, cap - la, rkey, wkey, best)


def _deepening_pair_raw(gp, Aa, ba, la, Ab, bb, lb, r, depth_cap, width_target):
    """Kernel driver: iterative deepening toward the width target.

    A positive target is best-effort: refinement stops at the first depth
    whose undecided mass is below it, or at the cap.  The per-level work
    grows geometrically, so the shallow passes cost a small constant
    factor while saving every unneeded level.
    """
    if width_target <= 0.0:
        return kernels.pair_mass_raw(gp, Aa, ba, la, Ab, bb, lb, r, depth_cap, 0.0)
    start = min(depth_cap, max(la, lb) + 3)
    total_pairs = 0
    for cap in range(start, depth_cap + 1):
        lo, hi, depth, pairs = kernels.pair_mass_raw(
            gp, Aa, ba, la, Ab, bb, lb, r, cap, width_target
        )
        total_pairs += pairs
        if hi - lo <= width_target or cap == depth_cap:
            return lo, hi, depth, total_pairs
    return lo, hi, depth, total_pairs


def _pair_mass_cells(
    sys: FractalSystem,
    a: Cell,
    b: Cell,
    r: float,
    depth_cap: int,
    width_target: float,
    memo: Optional[dict],
) -> MassInterval:
    gp = geom_pack(sys)
    Aa, ba = sys.cell_affine(a.word)
    Ab, bb = sys.cell_affine(b.word)
    la, lb = a.level, b.level
    if la > lb:
        Aa, ba, la, Ab, bb, lb = Ab, bb, lb, Aa, ba, la

    if memo is None:
        lo, hi, depth, pairs = _deepening_pair_raw(
            gp, Aa, ba, la, Ab, bb, lb, r, depth_cap, width_target
        )
        return MassInterval(lo, max(lo, hi), depth, pairs)

    scale = float(sys.M) ** (la + lb)
    rhat = r * sys.L**la
    key = _canonical_pair_key(sys, Aa, ba, la, Ab, bb, lb, rhat, depth_cap, width_target * scale)
    hit = memo.get(key)
    if hit is None:
        # evaluate on the canonical representative in A's normalized frame
        invA = (sys.L ** (2 * la)) * Aa.T
        D = invA @ Ab
        d = invA @ (bb - ba)
        lo, hi, depth, pairs = _deepening_pair_raw(
            gp,
            np.eye(2),
            np.zeros(2),
            0,
            np.ascontiguousarray(D),
            np.ascontiguousarray(d),
            lb - la,
            rhat,
            depth_cap - la,
            width_target * scale,
        )
        hit = (lo, max(lo, hi), depth, pairs)
        memo[key] = hit
    lo, hi, depth, pairs = hit
    return MassInterval(lo / scale, hi / scale, depth + la, pairs)


def pair_mass(
    sys: FractalSystem,
    A: SetLike,
    B: SetLike,
    r: float,
    depth_cap: int = 12,
    width_target: float = 0.0,
    memo: Optional[dict] = None,
) -> MassInterval:
    """Certified bounds on G_{A,B}(r).

    ``width_target`` is an absolute early-exit threshold: refinement stops
    once the undecided mass drops below it.  ``depth_cap`` bounds the cell
    level on both sides; undecided mass at the cap inflates only ``hi``.
    ``memo`` (opt-in) caches results on congruence classes of cell pairs
    under the preset's symmetry group.
    """
    _check_args(r, depth_cap)
    cells_a, cells_b = _as_cells(A), _as_cells(B)
    if not cells_a or not cells_b:
        return MassInterval.zero()
    share = width_target / (len(cells_a) * len(cells_b))
    total = MassInterval.zero()
    for a in cells_a:
        for b in cells_b:
            total = total + _pair_mass_cells(sys, a, b, r, depth_cap, share, memo)
    return total


def ball_mass(
    sys: FractalSystem,
    p,
    r: float,
    A: SetLike,
    depth_cap: int = 12,
    width_target: float = 0.0,
) -> MassInterval:
    """Certified bounds on mu(B(p, r) ∩ A); single-cell recursion."""
    _check_args(r, depth_cap)
    gp = geom_pack(sys)
    p = np.asarray(p, dtype=float)
    cells = _as_cells(A)
    if not cells:
        return MassInterval.zero()
    share = width_target / len(cells)
    total = MassInterval.zero()
    for c in cells:
        Ac, bc = sys.cell_affine(c.word)
        lo, hi, depth, visited = kernels.ball_mass_raw(gp, Ac, bc, c.level, p, r, depth_cap, share)
        total = total + MassInterval(lo, max(lo, hi), depth, visited)
    return total


def adaptive_width_target(
    sys: FractalSystem,
    A: SetLike,
    B: SetLike,
    r: float,
    rel: float,
    probe_cap: int = 7,
) -> float:
    """Absolute width target achieving roughly ``rel`` relative width.

    Runs a shallow probe to estimate the magnitude of G and scales.
    """
    if rel <= 0:
        return 0.0
    probe = pair_mass(sys, A, B, r, depth_cap=probe_cap)
    return rel * max(probe.hi, 1e-300)


# ------------------------------------------------------------- Monte Carlo oracle


def _sample_depth(sys: FractalSystem, level: int, r: float) -> int:
    # word-sampling resolution well below both r and the cell size
    target = min(r * 1e-3, sys.diam * sys.L ** (-level))
    depth = int(math.ceil(math.log(sys.diam / max(target, 1e-300)) / math.log(sys.L))) + 2
    return max(8, min(34, depth))


def mc_pair_mass(
    sys: FractalSystem,
    A: SetLike,
    B: SetLike,
    r: float,
    samples: int = 10**6,
    seed: int = 0,
) -> tuple[float, float, float]:
    """Monte Carlo estimate of G_{A,B}(r) with a 99% CI: (est, lo, hi).

    Points are word-sampled: uniform symbols to a fixed depth, anchored at
    the cell center image, which samples the self-similar measure up to a
    spatial truncation far below r.
    """
    gp = geom_pack(sys)
    cells_a, cells_b = _as_cells(A), _as_cells(B)
    npairs = len(cells_a) * len(cells_b)
    per = max(1, samples // npairs)
    est = 0.0
    var = 0.0
    k = 0
    for a in cells_a:
        for b in cells_b:
            Aa, ba = sys.cell_affine(a.word)
            Ab, bb = sys.cell_affine(b.word)
            depth = _sample_depth(sys, max(a.level, b.level), r)
            cnt = kernels.mc_pair_count(gp, Aa, ba, Ab, bb, per, depth, seed + 7919 * k, r)
            k += 1
            w = float(sys.M) ** (-(a.level + b.level))
            phat = cnt / per
            est += w * phat
            var += (w**2) * phat * (1.0 - phat) / per
    half = _Z99 * math.sqrt(var)
    return est, max(0.0, est - half), est + half


def mc_ball_mass(
    sys: FractalSystem,
    p,
    r: float,
    A: SetLike,
    samples: int = 10**6,
    seed: int = 0,
) -> tuple[float, float, float]:
    """Monte Carlo estimate of mu(B(p,r) ∩ A) with a 99% CI."""
    gp = geom_pack(sys)
    p = np.asarray(p, dtype=float)
    cells = _as_cells(A)
    per = max(1, samples // len(cells))
    est = 0.0
    var = 0.0
    for k, c in enumerate(cells):
        Ac, bc = sys.cell_affine(c.word)
        depth = _sample_depth(sys, c.level, r)
        cnt = kernels.mc_ball_count(gp, Ac, bc, per, depth, seed + 104729 * k, p, r)
        w = float(sys.M) ** (-c.level)
        phat = cnt / per
        est += w * phat
        var += (w**2) * phat * (1.0 - phat) / per
    half = _Z99 * math.sqrt(var)
    return est, max(0.0, est - half), est + half
