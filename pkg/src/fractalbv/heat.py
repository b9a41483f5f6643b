"""Heat-semigroup functionals via lazy random walks on window vertex graphs.

The diffusion on the fractal is approximated by the lazy simple random
walk on the level-N vertex graph; one walk step corresponds to physical
time ``L^(-N d_w)`` (up to a resistance-dependent constant that every
rescaled quantity here cancels).  The discrete kernel is

    p_k(x, y) = P^k(x, y) / pi(y),

with pi splitting each N-cell's mass equally among its vertices.  The
walk is reversible for pi (degrees are proportional to incident-cell
counts), so p_k is symmetric and conservative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from . import kernels
from .curves import Curve
from .errors import PreconditionError
from .ifs import Cell, CellUnion, FractalSystem, Graph, vertex_graph
from .renewal import PhaseProfile, fold

SetLike = Union[Cell, CellUnion]


@dataclass
class WalkOperator:
    """Lazy walk (stay probability 1/2) on a window vertex graph."""

    sys: FractalSystem
    level: int
    graph: Graph
    time_unit: float  # physical time of one step: L^(-N d_w)
    pi: np.ndarray  # vertex measure, sums to the window mass
    half_invdeg: np.ndarray  # 0.5 / degree
    _csr: object = field(default=None, repr=False)

    @property
    def num_vertices(self) -> int:
        return self.graph.num_vertices

    def csr(self):
        """Transition matrix as scipy CSR (numpy lane)."""
        if self._csr is None:
            import scipy.sparse as sp

            g = self.graph
            n = g.num_vertices
            deg = g.degrees().astype(float)
            rows = np.repeat(np.arange(n), np.diff(g.indptr))
            data = np.repeat(0.5 / deg, np.diff(g.indptr))
            P = sp.csr_matrix((data, g.indices, g.indptr), shape=(n, n))
            self._csr = P + sp.identity(n, format="csr") * 0.5
        return self._csr


def build_walk(sys: FractalSystem, N: int, cap: int = 10**7) -> WalkOperator:
    """Construct the level-N walk operator on the system's window."""
    g = vertex_graph(sys, N, cap=cap)
    nv0 = len(sys.essential_vertices)
    pi = g.incident_counts * (float(sys.M) ** (-N) / nv0)
    deg = g.degrees().astype(float)
    if np.any(deg == 0):
        raise PreconditionError("graph has isolated vertices")
    return WalkOperator(
        sys=sys,
        level=N,
        graph=g,
        time_unit=sys.L ** (-N * sys.d_w),
        pi=pi,
        half_invdeg=0.5 / deg,
    )


def step_count(walk: WalkOperator, t: float) -> int:
    """Physical time to walk steps; errors below one step."""
    k = int(round(t / walk.time_unit))
    if k < 1:
        raise PreconditionError(
            f"t={t:g} is below one walk step ({walk.time_unit:g}); increase N"
        )
    return k


def apply_steps(
    walk: WalkOperator,
    v: np.ndarray,
    k: int,
    alive: Optional[np.ndarray] = None,
    snapshots: Optional[Sequence[int]] = None,
    weights: Optional[np.ndarray] = None,
):
    """Apply the walk operator k times; optionally kill outside ``alive``.

    With ``snapshots`` (sorted step counts) returns the list of
    ``weights . v`` values at those steps instead of the final vector.
    """
    v = v.astype(np.float64).copy()
    if alive is not None:
        v[~alive] = 0.0
    out = np.empty_like(v)
    snaps = list(snapshots) if snapshots is not None else None
    results = []
    use_numba = kernels.backend_name() == "numba"
    P = None if use_numba else walk.csr()
    g = walk.graph
    for step in range(1, k + 1):
        if use_numba:
            kernels.lazy_step(g.indptr, g.indices, walk.half_invdeg, v, out)
            v, out = out, v
        else:
            v = P @ v
        if alive is not None:
            v[~alive] = 0.0
        if snaps and step == snaps[0]:
            snaps.pop(0)
            results.append(float(weights @ v))
    if snapshots is not None:
        return results
    return v


def _level_cells_mask(walk: WalkOperator, S: SetLike) -> np.ndarray:
    """Boolean mask over graph cells: lies inside S (by word prefix)."""
    cells = S.cells if isinstance(S, CellUnion) else (S,)
    prefixes = {c.word for c in cells}
    lengths = {len(c.word) for c in cells}
    mask = np.zeros(len(walk.graph.cells), dtype=bool)
    for i, gc in enumerate(walk.graph.cells):
        for ln in lengths:
            if gc.word[:ln] in prefixes:
                mask[i] = True
                break
    return mask


def vertex_weights(walk: WalkOperator, S: SetLike) -> np.ndarray:
    """Quadrature weights of S: cell mass split over vertices, restricted to S."""
    nv0 = len(walk.sys.essential_vertices)
    w = np.zeros(walk.num_vertices)
    mask = _level_cells_mask(walk, S)
    share = float(walk.sys.M) ** (-walk.level) / nv0
    for i in np.flatnonzero(mask):
        for vid in walk.graph.cell_vertex_ids[i]:
            w[vid] += share
    return w


def vertex_mask(walk: WalkOperator, S: SetLike) -> np.ndarray:
    """Vertices belonging to (the closure of) S."""
    mask = np.zeros(walk.num_vertices, dtype=bool)
    cmask = _level_cells_mask(walk, S)
    for i in np.flatnonzero(cmask):
        mask[walk.graph.cell_vertex_ids[i]] = True
    return mask


def heat_pair(walk: WalkOperator, A: SetLike, B: SetLike, t: float) -> float:
    """Quadrature of the kernel mass between A and B at time t."""
    return heat_pair_series(walk, A, B, [t])[0]


def heat_pair_series(
    walk: WalkOperator,
    A: SetLike,
    B: SetLike,
    ts: Sequence[float],
    alive: Optional[np.ndarray] = None,
) -> list[float]:
    """Kernel mass between A and B at several times, one operator sweep.

    Computes pi_A . P^k (pi_B / pi) at k = round(t / time_unit); the inner
    vector is the B-indicator in the kernel normalization.
    """
    ks = [step_count(walk, t) for t in ts]
    order = np.argsort(ks, kind="stable")
    sorted_ks = []
    for i in order:
        if not sorted_ks or ks[i] != sorted_ks[-1]:
            sorted_ks.append(ks[i])
    wa = vertex_weights(walk, A)
    wb = vertex_weights(walk, B)
    v0 = np.zeros(walk.num_vertices)
    nz = walk.pi > 0
    v0[nz] = wb[nz] / walk.pi[nz]
    vals = apply_steps(walk, v0, sorted_ks[-1], alive=alive, snapshots=sorted_ks, weights=wa)
    by_k = dict(zip(sorted_ks, vals))
    return [by_k[k] for k in ks]


@dataclass
class KernelSlice:
    """Discrete kernel values between two vertex sets at one step count."""

    sources: np.ndarray
    targets: np.ndarray
    k: int
    matrix: np.ndarray  # p_k(x, y), shape (len(sources), len(targets))
    pi: np.ndarray


def kernel_slice(
    walk: WalkOperator,
    sources: Sequence[int],
    targets: Sequence[int],
    k: int,
    alive: Optional[np.ndarray] = None,
) -> KernelSlice:
    """p_k(x, y) for x in sources, y in targets.

    One operator sweep per source; p_k(x, y) is recovered from the
    reversed propagation as P^k(y, x)/pi(x).
    """
    sources = np.asarray(sources, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.int64)
    mat = np.empty((len(sources), len(targets)))
    for i, x in enumerate(sources):
        e = np.zeros(walk.num_vertices)
        e[x] = 1.0
        v = apply_steps(walk, e, k, alive=alive)
        mat[i] = v[targets] / walk.pi[x]
    return KernelSlice(sources=sources, targets=targets, k=k, matrix=mat, pi=walk.pi)


def union_t_max(sys: FractalSystem, U: CellUnion) -> float:
    """Localization-safe upper time for the boundary-pair decomposition."""
    from .ks import union_threshold

    sep = union_threshold(sys, U)
    return (0.5 * sep) ** sys.d_w


def heat_union(
    walk: WalkOperator,
    U: CellUnion,
    t_grid: Sequence[float],
    direct: bool = False,
) -> Curve:
    """Curve of t^(-d_h/d_w) * M_heat(t) for the union indicator.

    Default path evaluates 2 * sum over touching boundary pairs; with
    ``direct=True`` the full inside/outside quadrature is used instead.
    """
    from .ks import boundary_pairs

    sys = walk.sys
    t_grid = np.asarray(sorted(set(float(t) for t in t_grid), reverse=True))
    if not U.cells:
        return Curve("time", "union-heat", t_grid, np.zeros(len(t_grid)), np.zeros(len(t_grid)))
    tmax = union_t_max(sys, U)
    if t_grid[0] > tmax and not direct:
        raise PreconditionError(
            f"grid top {t_grid[0]:g} above the localization-safe bound {tmax:g}"
        )
    ts = list(t_grid)
    if direct:
        mask = _level_cells_mask(walk, U)
        comp = CellUnion(tuple(c for c, m in zip(walk.graph.cells, mask) if not m))
        total = np.array(heat_pair_series(walk, U, comp, ts)) * 2.0
    else:
        total = np.zeros(len(ts))
        for cin, cout in boundary_pairs(sys, U):
            total += np.array(heat_pair_series(walk, cin, cout, ts))
        total *= 2.0
    alpha = sys.d_h / sys.d_w
    vals = total * t_grid**-alpha
    return Curve(
        scale="time",
        normalization="union-heat-rescaled",
        abscissa=t_grid,
        lo=vals,
        hi=vals,
        meta={"N": walk.level, "direct": direct},
    )


def halo_mask(walk: WalkOperator, region: Sequence[Cell], r_halo: float) -> np.ndarray:
    """Vertices within r_halo of the union of the given cells."""
    from .geom import point_polygon_dist

    sys = walk.sys
    pos = walk.graph.positions
    mask = np.zeros(len(pos), dtype=bool)
    for c in region:
        hull = sys.cell_hull(c)
        for i in range(len(pos)):
            if not mask[i] and point_polygon_dist(pos[i], hull) <= r_halo:
                mask[i] = True
    return mask


def dirichlet_heat_pair(
    walk: WalkOperator, A: SetLike, B: SetLike, r_halo: float, t: float
) -> float:
    """Kernel mass with the walk killed on exiting the halo of A and B.

    A halo covering the whole window degenerates to the free kernel; a
    partial halo must stay clear of the window corners, where unseen
    blow-up material attaches.
    """
    sys = walk.sys
    cells = list(A.cells if isinstance(A, CellUnion) else (A,))
    cells += list(B.cells if isinstance(B, CellUnion) else (B,))
    alive = halo_mask(walk, cells, r_halo)
    if not alive.all():
        for c in cells:
            for q in sys.window_corners():
                if sys.point_cell_distance(q, c) <= r_halo:
                    raise PreconditionError("halo reaches the window boundary; enlarge window")
    return heat_pair_series(walk, A, B, [t], alive=alive)[0]


@dataclass
class ScalingCheckReport:
    lhs: float  # M_{A,B}(t) on the level-N walk
    rhs: float  # M^n * M_{psi(A),psi(B)}(L^(-n d_w) t) on the level-(N+n) walk
    residual: float  # |lhs - rhs| / lhs
    k: int
    k_sensitivity: float  # |value(k+1) - value(k-1)| / 2 on the left walk


def scaling_check_heat(
    sys: FractalSystem,
    A: SetLike,
    B: SetLike,
    t: float,
    N: int,
    n: int = 1,
) -> ScalingCheckReport:
    """Exact scaling identity across refinement levels.

    The right side lives on the window shrunk by n blow-up levels, where
    the level-(N+n) graph is isomorphic to the left side's level-N graph;
    matched step counts make the identity exact up to float summation.
    """
    if sys.window_level < n:
        raise PreconditionError("window_level must be >= n for the scaled copy")
    walk1 = build_walk(sys, N)
    sys2 = sys.with_window(sys.window_level - n)
    walk2 = build_walk(sys2, N + n)

    def rebase(S):
        if isinstance(S, CellUnion):
            return CellUnion(tuple(sys2.cell(c.word) for c in S.cells))
        return sys2.cell(S.word)

    t2 = t * sys.L ** (-n * sys.d_w)
    k1 = step_count(walk1, t)
    k2 = step_count(walk2, t2)
    if k1 != k2:
        raise PreconditionError("step counts failed to match; non-geometric t")
    lhs = heat_pair(walk1, A, B, t)
    rhs = (sys.M**n) * heat_pair(walk2, rebase(A), rebase(B), t2)

    ks = [max(1, k1 - 1), k1 + 1]
    lo_v, hi_v = heat_pair_series(walk1, A, B, [kk * walk1.time_unit for kk in ks])
    sens = abs(hi_v - lo_v) / 2.0
    return ScalingCheckReport(
        lhs=lhs,
        rhs=rhs,
        residual=abs(lhs - rhs) / abs(lhs) if lhs != 0 else math.inf,
        k=k1,
        k_sensitivity=sens,
    )


# -------------------------------------------------------------- hitting times


@dataclass
class HitTailReport:
    t_values: np.ndarray
    k_values: np.ndarray
    estimates: np.ndarray  # exit-probability estimates
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    exits: np.ndarray
    samples: int
    distance: float  # d(x, U^c)
    xi: np.ndarray  # (d^d_w / t)^(1/(d_w-1)) regressor
    slope: float  # fitted slope of ln(p) against xi
    r2: float


def _fit_line(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    if len(x) < 2:
        return math.nan, math.nan, math.nan
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    pred = A @ coef
    ss_res = float(((y - pred) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), float(coef[1]), r2


def hitting_tail_mc(
    walk: WalkOperator,
    U: SetLike,
    x,
    t_grid: Sequence[float],
    samples: int = 10**4,
    seed: int = 0,
) -> HitTailReport:
    """Monte Carlo tail of the exit time from U started at x.

    Simulates lazy walks until they leave U's vertex set and estimates
    P(exit before t) on the grid, with 95% binomial confidence intervals
    and the stretched-exponential regression of the spec'd tail shape.
    """
    if samples < 10**4:
        raise PreconditionError("need at least 1e4 samples")
    sys = walk.sys
    in_set = vertex_mask(walk, U)
    pos = walk.graph.positions
    x = np.asarray(x, dtype=float)
    start = int(np.argmin(((pos - x) ** 2).sum(axis=1)))
    if not in_set[start]:
        raise PreconditionError("start vertex lies outside U")

    cells = U.cells if isinstance(U, CellUnion) else (U,)
    words = {c.word for c in cells}
    level = cells[0].level
    from .ifs import cells_at_level

    dist = math.inf
    for c in cells_at_level(sys, level):
        if c.word in words:
            continue
        dist = min(dist, sys.point_cell_distance(pos[start], c))
    for q in sys.window_corners():
        dist = min(dist, float(np.linalg.norm(pos[start] - q)))
    if not (dist > 0):
        raise PreconditionError("start vertex touches the boundary of U")

    ks = np.array([step_count(walk, t) for t in t_grid], dtype=np.int64)
    kmax = int(ks.max())
    exit_steps = kernels.mc_exit_steps(
        walk.graph.indptr, walk.graph.indices, start, in_set, kmax, samples, seed
    )
    t_arr = np.asarray(list(t_grid), dtype=float)
    exits = np.array([(exit_steps <= k).sum() for k in ks], dtype=np.int64)
    phat = exits / samples
    z = 1.959963984540054  # two-sided 95%
    half = z * np.sqrt(np.maximum(phat * (1 - phat), 0.0) / samples)
    ci_lo = np.maximum(0.0, phat - half)
    ci_hi = np.minimum(1.0, phat + half)
    zero = exits == 0
    if zero.any():
        ci_hi[zero] = 1.0 - 0.05 ** (1.0 / samples)

    xi = (dist**sys.d_w / t_arr) ** (1.0 / (sys.d_w - 1.0))
    mask = phat > 0
    slope, _, r2 = _fit_line(xi[mask], np.log(phat[mask]))
    return HitTailReport(
        t_values=t_arr,
        k_values=ks,
        estimates=phat,
        ci_lo=ci_lo,
        ci_hi=ci_hi,
        exits=exits,
        samples=samples,
        distance=dist,
        xi=xi,
        slope=slope,
        r2=r2,
    )


def phi_profile(curve: Curve, n_boundary: int, sys: FractalSystem) -> tuple[Curve, PhaseProfile]:
    """Compensating heat profile |dU| / curve, folded on the walk period.

    Returns the profile curve and its phase fold; the fold's drift
    quantifies departure from exact log-periodicity at this resolution.
    """
    if np.any(curve.mid <= 0):
        raise PreconditionError("curve must be positive to invert")
    vals = n_boundary / curve.mid
    phi = Curve(
        scale=curve.scale,
        normalization="phi",
        abscissa=curve.abscissa,
        lo=vals,
        hi=vals,
        meta=dict(curve.meta),
    )
    period = sys.d_w * math.log(sys.L)
    return phi, fold(phi, period)
