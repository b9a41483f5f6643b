"""Nested fractals as iterated function systems with word-addressed cells.

A system is a finite family of contracting similitudes of the plane
together with its scaling data (length factor L, mass factor M, Hausdorff
dimension, walk dimension).  Computations live inside a finite window
obtained by blowing the base set up ``window_level`` times; a level-n
cell inside the window is addressed by a word of ``window_level + n``
symbols over ``{1..M}`` and carries exact measure ``M**-n`` relative to
the unit mass of the base set.

Two planar presets are built in: the Sierpinski gasket (L=2, M=3) and
the Vicsek set (L=3, M=5).  Custom systems come from TOML configs, see
:mod:`fractalbv.config`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import AxiomViolation, CapExceeded, InvariantViolation, PreconditionError
from .geom import convex_polygon_dist, is_orthogonal, order_ccw, point_polygon_dist

Word = tuple[int, ...]

DEFAULT_CELL_CAP = 10**7
MAX_LEVEL = 14  # vertex identity tolerance is calibrated for levels <= 14


@dataclass(frozen=True)
class Similitude:
    """An affine contraction x -> contraction * rotation @ x + translation."""

    contraction: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=float).reshape(2, 2)
        tra = np.asarray(self.translation, dtype=float).reshape(2)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", tra)
        if not (0.0 < self.contraction < 1.0):
            raise AxiomViolation(f"contraction must lie in (0,1), got {self.contraction}")
        if not is_orthogonal(rot):
            raise AxiomViolation("rotation matrix is not orthogonal within 1e-12")

    @property
    def linear(self) -> np.ndarray:
        return self.contraction * self.rotation

    def __call__(self, p) -> np.ndarray:
        return self.linear @ np.asarray(p, dtype=float) + self.translation

    def fixed_point(self) -> np.ndarray:
        return np.linalg.solve(np.eye(2) - self.linear, self.translation)


@dataclass(frozen=True)
class Cell:
    """A word-addressed complex inside the window.

    ``level`` counts refinement below the window's unit complexes, so the
    cell's measure is exactly ``M**-level`` with the base set normalized
    to mass one.
    """

    word: Word
    level: int

    def measure(self, M: int) -> Fraction:
        return Fraction(1, M**self.level)

    def child(self, symbol: int) -> "Cell":
        return Cell(self.word + (symbol,), self.level + 1)


@dataclass(frozen=True)
class CellUnion:
    """A finite union of distinct cells, all at one level."""

    cells: tuple[Cell, ...]

    def __post_init__(self):
        cells = tuple(sorted(self.cells, key=lambda c: c.word))
        object.__setattr__(self, "cells", cells)
        if not cells:
            return
        lv = cells[0].level
        if any(c.level != lv for c in cells):
            raise PreconditionError("all cells of a union must share one level")
        if len({c.word for c in cells}) != len(cells):
            raise PreconditionError("union cells must be distinct")

    @property
    def level(self) -> int:
        if not self.cells:
            raise PreconditionError("empty union has no level")
        return self.cells[0].level

    def measure(self, M: int) -> Fraction:
        if not self.cells:
            return Fraction(0)
        return len(self.cells) * Fraction(1, M**self.level)

    def words(self) -> frozenset[Word]:
        return frozenset(c.word for c in self.cells)


class FractalSystem:
    """A validated nested-fractal IFS together with a computation window."""

    def __init__(
        self,
        name: str,
        maps: Sequence[Similitude],
        essential_vertices: np.ndarray,
        L: float,
        M: int,
        d_w: float,
        diam: float,
        window_level: int = 1,
        symmetry_generators: Optional[Sequence[np.ndarray]] = None,
        validate: bool = True,
    ):
        self.name = name
        self.maps = tuple(maps)
        self.essential_vertices = np.asarray(essential_vertices, dtype=float).reshape(-1, 2)
        self.L = float(L)
        self.M = int(M)
        self.d_w = float(d_w)
        self.diam = float(diam)
        self.window_level = int(window_level)
        if self.window_level < 0:
            raise PreconditionError("window_level must be >= 0")
        if self.M != len(self.maps):
            raise AxiomViolation(f"M={M} does not match the number of maps {len(self.maps)}")

        self.d_h = math.log(self.M) / math.log(self.L)
        # resistance scaling backed out of d_w; not an independently stated input
        self.rho = self.L**self.d_w / self.M

        self.maps_linear = np.stack([m.linear for m in self.maps])  # (M,2,2)
        self.maps_offset = np.stack([m.translation for m in self.maps])  # (M,2)

        # bounding-ball data: K lies in B(center, ball_radius); the bound
        # max_i |psi_i(c)-c| / (1 - 1/L) is invariant under the IFS, hence valid.
        self.center = self.essential_vertices.mean(axis=0)
        shifts = [np.linalg.norm(m(self.center) - self.center) for m in self.maps]
        self.ball_radius = max(shifts) / (1.0 - 1.0 / self.L)

        self.hull = order_ccw(self.essential_vertices)
        self.hull_tight = self._check_hull_tight()

        self.symmetry_group = self._close_group(symmetry_generators or [])

        if validate:
            self._validate()

    # ------------------------------------------------------------------ geometry

    def window_word_length(self, level: int) -> int:
        return self.window_level + level

    def cell_count(self, level: int) -> int:
        return self.M ** self.window_word_length(level)

    def cell_affine(self, word: Word) -> tuple[np.ndarray, np.ndarray]:
        """Affine map (A, b) sending the base set onto the cell of ``word``.

        Includes the window lift: the map is x -> L^m * psi_word(x).
        """
        A = (self.L**self.window_level) * np.eye(2)
        b = np.zeros(2)
        for s in word:
            i = s - 1
            b = A @ self.maps_offset[i] + b
            A = A @ self.maps_linear[i]
        return A, b

    def cell_vertices(self, cell: Cell) -> np.ndarray:
        A, b = self.cell_affine(cell.word)
        return self.essential_vertices @ A.T + b

    def cell_center(self, cell: Cell) -> np.ndarray:
        A, b = self.cell_affine(cell.word)
        return A @ self.center + b

    def cell_hull(self, cell: Cell) -> np.ndarray:
        return order_ccw(self.cell_vertices(cell))

    def cell_diam(self, cell: Cell) -> float:
        return self.diam * self.L ** (-cell.level)

    def cell(self, word: Word) -> Cell:
        word = tuple(int(s) for s in word)
        if len(word) < self.window_level:
            raise PreconditionError("word shorter than the window prefix")
        if any(not 1 <= s <= self.M for s in word):
            raise PreconditionError(f"word symbols must lie in 1..{self.M}")
        return Cell(word, len(word) - self.window_level)

    def vertex_tol(self, level: int) -> float:
        return 1e-9 * self.L ** (-level)

    def window_corners(self) -> np.ndarray:
        return (self.L**self.window_level) * self.essential_vertices

    def cell_set_distance(self, a: Cell, b: Cell) -> float:
        """Lower bound on the distance between two cells (exact for presets)."""
        if self.hull_tight:
            return convex_polygon_dist(self.cell_hull(a), self.cell_hull(b))
        ca, cb = self.cell_center(a), self.cell_center(b)
        ra = self.ball_radius * self.L ** (-a.level)
        rb = self.ball_radius * self.L ** (-b.level)
        return max(0.0, float(np.linalg.norm(ca - cb)) - ra - rb)

    def point_cell_distance(self, p: np.ndarray, c: Cell) -> float:
        if self.hull_tight:
            return point_polygon_dist(np.asarray(p, float), self.cell_hull(c))
        cc = self.cell_center(c)
        rc = self.ball_radius * self.L ** (-c.level)
        return max(0.0, float(np.linalg.norm(np.asarray(p, float) - cc)) - rc)

    # ------------------------------------------------------------------ validation

    def _check_hull_tight(self) -> bool:
        # K sits inside hull(V0) iff every map sends the hull into itself
        from .geom import point_in_convex

        tol = 1e-9
        for m in self.maps:
            for q in self.hull:
                if not point_in_convex(m(q), self.hull, tol=tol):
                    return False
        return True

    def _close_group(self, generators: Sequence[np.ndarray]) -> list[np.ndarray]:
        group = [np.eye(2)]
        frontier = [np.asarray(g, dtype=float) for g in generators]
        seen = {self._mat_key(np.eye(2))}
        while frontier:
            g = frontier.pop()
            k = self._mat_key(g)
            if k in seen:
                continue
            seen.add(k)
            group.append(g)
            for h in list(group):
                frontier.append(g @ h)
                frontier.append(h @ g)
        return group

    @staticmethod
    def _mat_key(g: np.ndarray) -> bytes:
        return (np.round(g, 9) + 0.0).tobytes()  # +0.0 folds -0.0 into 0.0

    def symmetry_affines(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Group elements as affines about the center: x -> c + g @ (x - c)."""
        return [(g, self.center - g @ self.center) for g in self.symmetry_group]

    def _validate(self):
        if abs(self.d_h - math.log(self.M) / math.log(self.L)) > 1e-12:
            raise AxiomViolation("d_h inconsistent with log M / log L")
        if len(self.essential_vertices) < 2:
            raise AxiomViolation("need at least two essential vertices")

        fixed = np.array([m.fixed_point() for m in self.maps])
        tol = 1e-9
        for q in self.essential_vertices:
            owners = [i for i, f in enumerate(fixed) if np.linalg.norm(q - f) <= tol]
            if len(owners) != 1:
                raise AxiomViolation(
                    "essential vertex must be the fixed point of exactly one map"
                )
            # definitional check: psi_i(q) = psi_j(y) for some maps i != j and fixed point y
            hit = False
            for i, mi in enumerate(self.maps):
                img = mi(q)
                for j, mj in enumerate(self.maps):
                    if j == i:
                        continue
                    if any(np.linalg.norm(img - mj(y)) <= tol for y in fixed):
                        hit = True
                        break
                if hit:
                    break
            if not hit:
                raise AxiomViolation("listed vertex is not an essential fixed point")

        self._validate_connectivity()
        self._validate_nesting()

        vmax = float(
            max(
                np.linalg.norm(a - b)
                for a, b in itertools.combinations(self.essential_vertices, 2)
            )
        )
        if self.diam < vmax - 1e-12 or self.diam > 2 * self.ball_radius + 1e-12:
            raise AxiomViolation("declared diameter inconsistent with the vertex geometry")

        for g, t in self.symmetry_affines():
            if not is_orthogonal(g, tol=1e-9):
                raise AxiomViolation("symmetry group element is not orthogonal")

    def _validate_connectivity(self):
        cells = [self._base_cell_vertices((i,)) for i in range(1, self.M + 1)]
        tol = self.vertex_tol(1)
        adj = {i: set() for i in range(self.M)}
        for i, j in itertools.combinations(range(self.M), 2):
            if _shared_vertex_count(cells[i], cells[j], tol) >= 1:
                adj[i].add(j)
                adj[j].add(i)
        seen = {0}
        stack = [0]
        while stack:
            for j in adj[stack.pop()]:
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        if len(seen) != self.M:
            raise AxiomViolation("connectivity: level-1 cells do not form a connected family")

    def _validate_nesting(self):
        # nesting + one-point intersections, exhaustively at levels 1..3 of the base set
        for n in (1, 2, 3):
            tol = self.vertex_tol(n)
            words = list(itertools.product(range(1, self.M + 1), repeat=n))
            if len(words) > 200:
                words = words[:200]
            verts = [self._base_cell_vertices(w) for w in words]
            for a, b in itertools.combinations(range(len(words)), 2):
                k = _shared_vertex_count(verts[a], verts[b], tol)
                if k > 1:
                    raise AxiomViolation(
                        f"nesting: cells {words[a]} and {words[b]} share {k} vertices"
                    )

    def _base_cell_vertices(self, word: Word) -> np.ndarray:
        A = np.eye(2)
        b = np.zeros(2)
        for s in word:
            i = s - 1
            b = A @ self.maps_offset[i] + b
            A = A @ self.maps_linear[i]
        return self.essential_vertices @ A.T + b

    def with_window(self, window_level: int) -> "FractalSystem":
        """Same system rebased onto another window; skips revalidation."""
        return FractalSystem(
            name=self.name,
            maps=self.maps,
            essential_vertices=self.essential_vertices,
            L=self.L,
            M=self.M,
            d_w=self.d_w,
            diam=self.diam,
            window_level=window_level,
            symmetry_generators=self.symmetry_group,
            validate=False,
        )

    def __repr__(self):
        return (
            f"FractalSystem({self.name!r}, L={self.L}, M={self.M}, "
            f"d_h={self.d_h:.6f}, d_w={self.d_w:.6f}, window_level={self.window_level})"
        )


def _shared_vertex_count(va: np.ndarray, vb: np.ndarray, tol: float) -> int:
    d = np.linalg.norm(va[:, None, :] - vb[None, :, :], axis=2)
    return int(np.count_nonzero(d.min(axis=1) <= tol))


# ---------------------------------------------------------------------- presets


def _sierpinski(window_level: int) -> FractalSystem:
    q = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3.0) / 2.0]])
    maps = [Similitude(0.5, np.eye(2), 0.5 * qi) for qi in q]
    rot120 = np.array(
        [
            [math.cos(2 * math.pi / 3), -math.sin(2 * math.pi / 3)],
            [math.sin(2 * math.pi / 3), math.cos(2 * math.pi / 3)],
        ]
    )
    reflect_vert = np.array([[-1.0, 0.0], [0.0, 1.0]])  # across the vertical axis
    return FractalSystem(
        name="sierpinski",
        maps=maps,
        essential_vertices=q,
        L=2.0,
        M=3,
        d_w=math.log(5.0) / math.log(2.0),
        diam=1.0,
        window_level=window_level,
        symmetry_generators=[rot120, reflect_vert],
    )


def _vicsek(window_level: int) -> FractalSystem:
    q = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0], [0.5, 0.5]])
    maps = [Similitude(1.0 / 3.0, np.eye(2), (2.0 / 3.0) * qi) for qi in q]
    rot90 = np.array([[0.0, -1.0], [1.0, 0.0]])
    reflect_diag = np.array([[0.0, 1.0], [1.0, 0.0]])
    return FractalSystem(
        name="vicsek",
        maps=maps,
        essential_vertices=q[:4],
        L=3.0,
        M=5,
        d_w=math.log(15.0) / math.log(3.0),
        diam=math.sqrt(2.0),
        window_level=window_level,
        symmetry_generators=[rot90, reflect_diag],
    )


_PRESETS = {"sierpinski": _sierpinski, "vicsek": _vicsek}


def build_preset(name: str, window_level: int = 1) -> FractalSystem:
    """Build a named preset, or a custom system from a config file path."""
    if name in _PRESETS:
        return _PRESETS[name](window_level)
    from . import config

    return config.load_config(name, window_level=window_level)


# --------------------------------------------------------------------- operations


def apply_word(sys: FractalSystem, word: Iterable[int], p) -> np.ndarray:
    """Apply the composed similitude of ``word`` to a point of the base set.

    Composition is psi_{i1} o ... o psi_{in}; no window lift is applied.
    """
    word = tuple(int(s) for s in word)
    if any(not 1 <= s <= sys.M for s in word):
        raise PreconditionError(f"word symbols must lie in 1..{sys.M}")
    x = np.asarray(p, dtype=float)
    for s in reversed(word):
        x = sys.maps_linear[s - 1] @ x + sys.maps_offset[s - 1]
    return x


def cells_at_level(sys: FractalSystem, n: int, cap: int = DEFAULT_CELL_CAP) -> list[Cell]:
    """All level-n cells of the window, in lexicographic word order."""
    if n < 0:
        raise PreconditionError("level must be >= 0")
    count = sys.cell_count(n)
    if count > cap:
        raise CapExceeded(f"{count} cells at level {n} exceed the cap {cap}")
    length = sys.window_word_length(n)
    return [Cell(w, n) for w in itertools.product(range(1, sys.M + 1), repeat=length)]


def shared_point(sys: FractalSystem, a: Cell, b: Cell) -> Optional[np.ndarray]:
    """The unique vertex two same-level cells share, or None if they are apart."""
    if a.word == b.word:
        raise PreconditionError("shared_point requires two distinct cells")
    if a.level != b.level:
        raise PreconditionError("shared_point requires cells at the same level")
    va, vb = sys.cell_vertices(a), sys.cell_vertices(b)
    tol = sys.vertex_tol(a.level)
    d = np.linalg.norm(va[:, None, :] - vb[None, :, :], axis=2)
    hits = np.argwhere(d <= tol)
    if len(hits) == 0:
        return None
    if len(hits) > 1:
        raise InvariantViolation(
            f"cells {a.word} and {b.word} share {len(hits)} vertices; "
            "one-point intersection assumption violated"
        )
    i, j = hits[0]
    return 0.5 * (va[i] + vb[j])


class _PointRegistry:
    """Tolerance-based point deduplication on a quantization grid."""

    def __init__(self, tol: float):
        self.tol = tol
        self._buckets: dict[tuple[int, int], list[int]] = {}
        self.points: list[np.ndarray] = []

    def add(self, p: np.ndarray) -> int:
        bx, by = int(math.floor(p[0] / self.tol)), int(math.floor(p[1] / self.tol))
        for nb in itertools.product((bx - 1, bx, bx + 1), (by - 1, by, by + 1)):
            for idx in self._buckets.get(nb, ()):
                q = self.points[idx]
                if abs(q[0] - p[0]) <= self.tol and abs(q[1] - p[1]) <= self.tol:
                    return idx
        idx = len(self.points)
        self.points.append(np.asarray(p, dtype=float))
        self._buckets.setdefault((bx, by), []).append(idx)
        return idx


def boundary_points(
    sys: FractalSystem, U: CellUnion, cap: int = DEFAULT_CELL_CAP
) -> list[np.ndarray]:
    """Vertices shared between a cell of U and a same-level cell outside U."""
    if not U.cells:
        return []
    n = U.level
    words = U.words()
    all_cells = cells_at_level(sys, n, cap=cap)
    if len(words) >= len(all_cells):
        raise PreconditionError("union covers the window; complement not visible")

    corners = sys.window_corners()
    tol = sys.vertex_tol(n)
    for c in U.cells:
        verts = sys.cell_vertices(c)
        d = np.linalg.norm(verts[:, None, :] - corners[None, :, :], axis=2)
        if d.min() <= tol:
            raise PreconditionError(
                "union touches the window boundary; rebuild with a larger window_level"
            )

    reg = _PointRegistry(tol)
    inside: dict[int, bool] = {}
    outside: dict[int, bool] = {}
    for c in all_cells:
        is_in = c.word in words
        for v in sys.cell_vertices(c):
            idx = reg.add(v)
            if is_in:
                inside[idx] = True
            else:
                outside[idx] = True
    return [reg.points[i] for i in sorted(set(inside) & set(outside))]


def make_union(sys: FractalSystem, cells: Sequence[Cell]) -> CellUnion:
    """Union of cells, refined to the deepest level present."""
    if not cells:
        return CellUnion(())
    deepest = max(c.level for c in cells)
    out: list[Cell] = []
    for c in cells:
        if c.level == deepest:
            out.append(c)
            continue
        extra = deepest - c.level
        for suffix in itertools.product(range(1, sys.M + 1), repeat=extra):
            out.append(Cell(c.word + suffix, deepest))
    return CellUnion(tuple(out))


def _touch_count(sys: FractalSystem, cell: Cell, exclude_point=None) -> int:
    """Number of same-level cells touching ``cell``; optionally ignore the
    ones meeting it exactly at ``exclude_point``."""
    count = 0
    tol = sys.vertex_tol(cell.level)
    for other in cells_at_level(sys, cell.level):
        if other.word == cell.word:
            continue
        p = shared_point(sys, cell, other)
        if p is None:
            continue
        if exclude_point is not None and np.linalg.norm(p - exclude_point) <= tol:
            continue
        count += 1
    return count


def neighbor_count_R(sys: FractalSystem) -> int:
    """Count of same-level complexes glued to a complex away from a fixed
    interior vertex.

    Picks an interior vertex p shared by two level-1 cells, takes a level-2
    cell at p, and counts the level-2 cells touching it at vertices other
    than p.  By the symmetry axiom the count does not depend on the choice.
    """
    cells1 = cells_at_level(sys, 1)
    tol = sys.vertex_tol(1)
    reg = _PointRegistry(tol)
    incident: dict[int, list[Cell]] = {}
    for c in cells1:
        for v in sys.cell_vertices(c):
            incident.setdefault(reg.add(v), []).append(c)
    corners = sys.window_corners()
    p = None
    for idx, cs in sorted(incident.items()):
        if len(cs) < 2:
            continue
        q = reg.points[idx]
        if np.min(np.linalg.norm(corners - q, axis=1)) <= tol:
            continue
        p = q
        break
    if p is None:
        raise InvariantViolation("no interior vertex found; window too small")

    tol2 = sys.vertex_tol(2)
    at_p = [
        c
        for c in cells_at_level(sys, 2)
        if np.min(np.linalg.norm(sys.cell_vertices(c) - p, axis=1)) <= tol2
    ]
    cell = min(at_p, key=lambda c: c.word)
    return _touch_count(sys, cell, exclude_point=p)


@dataclass
class Graph:
    """Vertex graph of the window at one refinement level.

    Vertices are the deduplicated cell vertices; edges join vertices lying
    in one common cell.  ``cell_vertex_ids[k]`` lists the vertex ids of the
    k-th cell (cells in lexicographic word order).
    """

    level: int
    positions: np.ndarray  # (n, 2)
    indptr: np.ndarray  # CSR adjacency
    indices: np.ndarray
    incident_counts: np.ndarray  # (n,) number of cells containing each vertex
    cells: list[Cell]
    cell_vertex_ids: np.ndarray  # (num_cells, |V0|)

    @property
    def num_vertices(self) -> int:
        return len(self.positions)

    @property
    def num_edges(self) -> int:
        return len(self.indices) // 2

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)


def vertex_graph(sys: FractalSystem, N: int, cap: int = DEFAULT_CELL_CAP) -> Graph:
    """Build the level-N vertex graph of the window."""
    cells = cells_at_level(sys, N, cap=cap)
    nv0 = len(sys.essential_vertices)
    if len(cells) * nv0 > cap:
        raise CapExceeded("vertex count above cap")
    reg = _PointRegistry(sys.vertex_tol(N))
    cell_vertex_ids = np.empty((len(cells), nv0), dtype=np.int64)
    for k, c in enumerate(cells):
        for j, v in enumerate(sys.cell_vertices(c)):
            cell_vertex_ids[k, j] = reg.add(v)
    n = len(reg.points)
    incident = np.zeros(n, dtype=np.int64)
    edges = set()
    for k in range(len(cells)):
        ids = cell_vertex_ids[k]
        for j in ids:
            incident[j] += 1
        for a, b in itertools.combinations(sorted(ids), 2):
            edges.add((int(a), int(b)))
    adj: list[list[int]] = [[] for _ in range(n)]
    for a, b in sorted(edges):
        adj[a].append(b)
        adj[b].append(a)
    indptr = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        adj[i].sort()
        indptr[i + 1] = indptr[i] + len(adj[i])
    indices = np.fromiter(
        (x for row in adj for x in row), dtype=np.int64, count=int(indptr[-1])
    )
    g = Graph(
        level=N,
        positions=np.array(reg.points),
        indptr=indptr,
        indices=indices,
        incident_counts=incident,
        cells=cells,
        cell_vertex_ids=cell_vertex_ids,
    )
    if not _connected(g):
        raise InvariantViolation("vertex graph is not connected")
    return g


def _connected(g: Graph) -> bool:
    n = g.num_vertices
    if n == 0:
        return True
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        v = stack.pop()
        for u in g.indices[g.indptr[v] : g.indptr[v + 1]]:
            if not seen[u]:
                seen[u] = True
                stack.append(int(u))
    return bool(seen.all())
