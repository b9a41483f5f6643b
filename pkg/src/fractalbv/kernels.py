"""Hot numeric kernels, in two lanes.

The default lane compiles tight loops with numba (``@njit``).  A pure
numpy lane implements the same semantics with vectorized breadth-first
sweeps and scipy sparse matvecs; it is selected automatically when numba
is unavailable, or forced with::

    FRACTAL_BV_BACKEND=numpy   # or "numba"

``benchmarks/bench_backends.py`` times the two lanes against each other.

Kernels:

* pair/ball product-mass recursion (bounding-ball pruning, cell-vertex
  inclusion, split-larger policy, depth cap, early width exit)
* lazy random-walk operator application (CSR)
* Monte Carlo exit-time walks
* Monte Carlo word-sampled point pairs for measure oracles

The two lanes make identical include/exclude/split decisions; results
differ only in floating-point summation order.
"""

from __future__ import annotations

import os
from typing import Optional

import numpy as np

_ENV_VAR = "FRACTAL_BV_BACKEND"
_forced: Optional[str] = None
_resolved: Optional[str] = None
_numba_mods: dict = {}


def set_backend(name: Optional[str]) -> None:
    """Force a lane ('numba' or 'numpy'); None restores auto-resolution."""
    global _forced, _resolved
    if name is not None and name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    _forced = name
    _resolved = None


def backend_name() -> str:
    """The active lane, resolving the env flag and numba availability once."""
    global _resolved
    if _resolved is not None:
        return _resolved
    choice = _forced or os.environ.get(_ENV_VAR, "").strip().lower()
    if choice == "numpy":
        _resolved = "numpy"
    elif choice == "numba":
        _load_numba()  # raises if unusable
        _resolved = "numba"
    else:
        try:
            _load_numba()
            _resolved = "numba"
        except Exception:
            _resolved = "numpy"
    return _resolved


def _load_numba():
    """Import numba and compile the kernels lazily, once."""
    if _numba_mods:
        return _numba_mods
    from numba import njit

    jit = lambda f: njit(cache=True, nogil=True)(f)
    _numba_mods["pair"] = jit(_pair_dfs_py)
    _numba_mods["ball"] = jit(_ball_dfs_py)
    _numba_mods["step"] = jit(_lazy_step_py)
    _numba_mods["mc_exit"] = jit(_mc_exit_py)
    _numba_mods["mc_pair"] = jit(_mc_pair_count_py)
    _numba_mods["mc_ball"] = jit(_mc_ball_count_py)
    return _numba_mods


# --------------------------------------------------------------------------
# pair product-mass recursion
#
# State of one pair: the affine maps (A, b) of the two cells plus their
# levels.  Decisions, in order:
#   exclude  : center distance > r + ra + rb            (bounding balls)
#   include  : max vertex-pair distance <= r            (cells sit in the
#              convex hull of their vertices, presets)   -- or ball test
#   at cap   : both levels >= depth_cap -> undecided mass to hi
#   split    : the larger-measure cell; level ties break by center order
#              (symmetric in the two arguments, so pair_mass(A,B)=pair_mass(B,A))
# --------------------------------------------------------------------------


def _pair_dfs_py(
    ml,
    mo,
    c0,
    v0,
    R0,
    linv,
    mneg,
    Aa0,
    ba0,
    la0,
    Ab0,
    bb0,
    lb0,
    r,
    cap,
    width_target,
    hull_tight,
):
    M = ml.shape[0]
    nv = v0.shape[0]
    stack_cap = 8 + 2 * M * (2 * cap + 4)
    fs = np.empty((stack_cap, 12), dtype=np.float64)
    ls = np.empty((stack_cap, 2), dtype=np.int64)

    fs[0, 0] = Aa0[0, 0]
    fs[0, 1] = Aa0[0, 1]
    fs[0, 2] = Aa0[1, 0]
    fs[0, 3] = Aa0[1, 1]
    fs[0, 4] = ba0[0]
    fs[0, 5] = ba0[1]
    fs[0, 6] = Ab0[0, 0]
    fs[0, 7] = Ab0[0, 1]
    fs[0, 8] = Ab0[1, 0]
    fs[0, 9] = Ab0[1, 1]
    fs[0, 10] = bb0[0]
    fs[0, 11] = bb0[1]
    ls[0, 0] = la0
    ls[0, 1] = lb0
    top = 1

    lo = 0.0
    hi_extra = 0.0
    stack_mass = mneg[la0] * mneg[lb0]
    pairs = 0
    depth_reached = la0 if la0 > lb0 else lb0
    r2 = r * r
    c0x = c0[0]
    c0y = c0[1]

    while top > 0:
        if hi_extra + stack_mass <= width_target:
            break
        top -= 1
        # copy the popped pair into scalars; children reuse its stack slot
        e0 = fs[top, 0]
        e1 = fs[top, 1]
        e2 = fs[top, 2]
        e3 = fs[top, 3]
        e4 = fs[top, 4]
        e5 = fs[top, 5]
        e6 = fs[top, 6]
        e7 = fs[top, 7]
        e8 = fs[top, 8]
        e9 = fs[top, 9]
        e10 = fs[top, 10]
        e11 = fs[top, 11]
        la = ls[top, 0]
        lb = ls[top, 1]
        m = mneg[la] * mneg[lb]
        stack_mass -= m
        pairs += 1

        cax = e0 * c0x + e1 * c0y + e4
        cay = e2 * c0x + e3 * c0y + e5
        cbx = e6 * c0x + e7 * c0y + e10
        cby = e8 * c0x + e9 * c0y + e11
        dx = cax - cbx
        dy = cay - cby
        d2 = dx * dx + dy * dy
        ra = R0 * linv[la]
        rb = R0 * linv[lb]
        s = r + ra + rb
        if d2 > s * s:
            continue

        included = False
        if hull_tight:
            maxd2 = 0.0
            for i in range(nv):
                vax = e0 * v0[i, 0] + e1 * v0[i, 1] + e4
                vay = e2 * v0[i, 0] + e3 * v0[i, 1] + e5
                for j in range(nv):
                    vbx = e6 * v0[j, 0] + e7 * v0[j, 1] + e10
                    vby = e8 * v0[j, 0] + e9 * v0[j, 1] + e11
                    ddx = vax - vbx
                    ddy = vay - vby
                    dd = ddx * ddx + ddy * ddy
                    if dd > maxd2:
                        maxd2 = dd
            if maxd2 <= r2:
                included = True
        else:
            t = r - ra - rb
            if t >= 0.0 and d2 <= t * t:
                included = True
        if included:
            lo += m
            continue

        if la >= cap and lb >= cap:
            hi_extra += m
            continue

        if la < lb:
            split_a = True
        elif lb < la:
            split_a = False
        elif cax < cbx:
            split_a = True
        elif cbx < cax:
            split_a = False
        elif cay < cby:
            split_a = True
        elif cby < cay:
            split_a = False
        else:
            split_a = True

        child_level = (la if split_a else lb) + 1
        if child_level > depth_reached:
            depth_reached = child_level
        for i in range(M):
            if split_a:
                fs[top, 0] = e0 * ml[i, 0, 0] + e1 * ml[i, 1, 0]
                fs[top, 1] = e0 * ml[i, 0, 1] + e1 * ml[i, 1, 1]
                fs[top, 2] = e2 * ml[i, 0, 0] + e3 * ml[i, 1, 0]
                fs[top, 3] = e2 * ml[i, 0, 1] + e3 * ml[i, 1, 1]
                fs[top, 4] = e0 * mo[i, 0] + e1 * mo[i, 1] + e4
                fs[top, 5] = e2 * mo[i, 0] + e3 * mo[i, 1] + e5
                fs[top, 6] = e6
                fs[top, 7] = e7
                fs[top, 8] = e8
                fs[top, 9] = e9
                fs[top, 10] = e10
                fs[top, 11] = e11
                ls[top, 0] = la + 1
                ls[top, 1] = lb
                stack_mass += mneg[la + 1] * mneg[lb]
            else:
                fs[top, 0] = e0
                fs[top, 1] = e1
                fs[top, 2] = e2
                fs[top, 3] = e3
                fs[top, 4] = e4
                fs[top, 5] = e5
                fs[top, 6] = e6 * ml[i, 0, 0] + e7 * ml[i, 1, 0]
                fs[top, 7] = e6 * ml[i, 0, 1] + e7 * ml[i, 1, 1]
                fs[top, 8] = e8 * ml[i, 0, 0] + e9 * ml[i, 1, 0]
                fs[top, 9] = e8 * ml[i, 0, 1] + e9 * ml[i, 1, 1]
                fs[top, 10] = e6 * mo[i, 0] + e7 * mo[i, 1] + e10
                fs[top, 11] = e8 * mo[i, 0] + e9 * mo[i, 1] + e11
                ls[top, 0] = la
                ls[top, 1] = lb + 1
                stack_mass += mneg[la] * mneg[lb + 1]
            top += 1

    # recompute the remaining mass entry by entry for the upper bound
    rem = 0.0
    for q in range(top):
        rem += mneg[ls[q, 0]] * mneg[ls[q, 1]]
    return lo, lo + hi_extra + rem, depth_reached, pairs


def _ball_dfs_py(ml, mo, c0, v0, R0, linv, mneg, A0, b0, l0, px, py, r, cap, width_target, hull_tight):
    M = ml.shape[0]
    nv = v0.shape[0]
    stack_cap = 8 + M * (cap + 4)
    fs = np.empty((stack_cap, 6), dtype=np.float64)
    ls = np.empty(stack_cap, dtype=np.int64)
    fs[0, 0] = A0[0, 0]
    fs[0, 1] = A0[0, 1]
    fs[0, 2] = A0[1, 0]
    fs[0, 3] = A0[1, 1]
    fs[0, 4] = b0[0]
    fs[0, 5] = b0[1]
    ls[0] = l0
    top = 1

    lo = 0.0
    hi_extra = 0.0
    stack_mass = mneg[l0]
    cells = 0
    depth_reached = l0
    r2 = r * r
    c0x = c0[0]
    c0y = c0[1]

    while top > 0:
        if hi_extra + stack_mass <= width_target:
            break
        top -= 1
        e0 = fs[top, 0]
        e1 = fs[top, 1]
        e2 = fs[top, 2]
        e3 = fs[top, 3]
        e4 = fs[top, 4]
        e5 = fs[top, 5]
        lv = ls[top]
        m = mneg[lv]
        stack_mass -= m
        cells += 1

        cx = e0 * c0x + e1 * c0y + e4
        cy = e2 * c0x + e3 * c0y + e5
        dx = cx - px
        dy = cy - py
        d2 = dx * dx + dy * dy
        rad = R0 * linv[lv]
        s = r + rad
        if d2 > s * s:
            continue

        included = False
        if hull_tight:
            maxd2 = 0.0
            for i in range(nv):
                vx = e0 * v0[i, 0] + e1 * v0[i, 1] + e4
                vy = e2 * v0[i, 0] + e3 * v0[i, 1] + e5
                ddx = vx - px
                ddy = vy - py
                dd = ddx * ddx + ddy * ddy
                if dd > maxd2:
                    maxd2 = dd
            if maxd2 <= r2:
                included = True
        else:
            t = r - rad
            if t >= 0.0 and d2 <= t * t:
                included = True
        if included:
            lo += m
            continue

        if lv >= cap:
            hi_extra += m
            continue

        if lv + 1 > depth_reached:
            depth_reached = lv + 1
        for i in range(M):
            fs[top, 0] = e0 * ml[i, 0, 0] + e1 * ml[i, 1, 0]
            fs[top, 1] = e0 * ml[i, 0, 1] + e1 * ml[i, 1, 1]
            fs[top, 2] = e2 * ml[i, 0, 0] + e3 * ml[i, 1, 0]
            fs[top, 3] = e2 * ml[i, 0, 1] + e3 * ml[i, 1, 1]
            fs[top, 4] = e0 * mo[i, 0] + e1 * mo[i, 1] + e4
            fs[top, 5] = e2 * mo[i, 0] + e3 * mo[i, 1] + e5
            ls[top] = lv + 1
            stack_mass += mneg[lv + 1]
            top += 1

    rem = 0.0
    for q in range(top):
        rem += mneg[ls[q]]
    return lo, lo + hi_extra + rem, depth_reached, cells


# ------------------------------------------------------------------- walks


def _lazy_step_py(indptr, indices, half_invdeg, v, out):
    n = v.shape[0]
    for i in range(n):
        s = 0.0
        for jj in range(indptr[i], indptr[i + 1]):
            s += v[indices[jj]]
        out[i] = 0.5 * v[i] + half_invdeg[i] * s


def _mc_exit_py(indptr, indices, start, in_set, kmax, nsamples, seed):
    np.random.seed(seed)
    exit_steps = np.empty(nsamples, dtype=np.int64)
    for sidx in range(nsamples):
        v = start
        es = kmax + 1
        for step in range(1, kmax + 1):
            u = np.random.random()
            if u >= 0.5:
                deg = indptr[v + 1] - indptr[v]
                j = int((u - 0.5) * 2.0 * deg)
                if j >= deg:
                    j = deg - 1
                v = indices[indptr[v] + j]
            if not in_set[v]:
                es = step
                break
        exit_steps[sidx] = es
    return exit_steps


def _mc_pair_count_py(ml, mo, c0, Aa, ba, Ab, bb, nsamples, depth, seed, r2):
    M = ml.shape[0]
    np.random.seed(seed)
    count = 0
    for _ in range(nsamples):
        xx = c0[0]
        xy = c0[1]
        for _d in range(depth):
            i = int(np.random.random() * M)
            if i >= M:
                i = M - 1
            tx = ml[i, 0, 0] * xx + ml[i, 0, 1] * xy + mo[i, 0]
            xy = ml[i, 1, 0] * xx + ml[i, 1, 1] * xy + mo[i, 1]
            xx = tx
        px = Aa[0, 0] * xx + Aa[0, 1] * xy + ba[0]
        py = Aa[1, 0] * xx + Aa[1, 1] * xy + ba[1]

        yx = c0[0]
        yy = c0[1]
        for _d in range(depth):
            i = int(np.random.random() * M)
            if i >= M:
                i = M - 1
            ty = ml[i, 0, 0] * yx + ml[i, 0, 1] * yy + mo[i, 0]
            yy = ml[i, 1, 0] * yx + ml[i, 1, 1] * yy + mo[i, 1]
            yx = ty
        qx = Ab[0, 0] * yx + Ab[0, 1] * yy + bb[0]
        qy = Ab[1, 0] * yx + Ab[1, 1] * yy + bb[1]

        dx = px - qx
        dy = py - qy
        if dx * dx + dy * dy <= r2:
            count += 1
    return count


def _mc_ball_count_py(ml, mo, c0, A, b, nsamples, depth, seed, px, py, r2):
    M = ml.shape[0]
    np.random.seed(seed)
    count = 0
    for _ in range(nsamples):
        xx = c0[0]
        xy = c0[1]
        for _d in range(depth):
            i = int(np.random.random() * M)
            if i >= M:
                i = M - 1
            tx = ml[i, 0, 0] * xx + ml[i, 0, 1] * xy + mo[i, 0]
            xy = ml[i, 1, 0] * xx + ml[i, 1, 1] * xy + mo[i, 1]
            xx = tx
        qx = A[0, 0] * xx + A[0, 1] * xy + b[0]
        qy = A[1, 0] * xx + A[1, 1] * xy + b[1]
        dx = qx - px
        dy = qy - py
        if dx * dx + dy * dy <= r2:
            count += 1
    return count


# ----------------------------------------------------------- numpy BFS lane


_CHUNK = 1 << 17


def _pair_bfs_numpy(ml, mo, c0, v0, R0, linv, mneg, Aa0, ba0, la0, Ab0, bb0, lb0, r, cap, width_target, hull_tight):
    lo = 0.0
    hi_extra = 0.0
    pairs = 0
    depth_reached = max(la0, lb0)
    r2 = r * r
    M = ml.shape[0]

    root = (
        Aa0[None, :, :].copy(),
        ba0[None, :].copy(),
        np.array([la0]),
        Ab0[None, :, :].copy(),
        bb0[None, :].copy(),
        np.array([lb0]),
    )
    worklist = [root]
    remaining = float(mneg[la0] * mneg[lb0])

    while worklist:
        if hi_extra + remaining <= width_target:
            break
        Aa, ba, la, Ab, bb, lb = worklist.pop()
        n = len(la)
        pairs += n
        mass = mneg[la] * mneg[lb]
        remaining -= float(mass.sum())

        ca = np.einsum("nij,j->ni", Aa, c0) + ba
        cb = np.einsum("nij,j->ni", Ab, c0) + bb
        d2 = ((ca - cb) ** 2).sum(axis=1)
        ra = R0 * linv[la]
        rb = R0 * linv[lb]
        s = r + ra + rb
        keep = d2 <= s * s
        if not keep.any():
            continue

        Aa, ba, la, Ab, bb, lb = Aa[keep], ba[keep], la[keep], Ab[keep], bb[keep], lb[keep]
        ca, cb, d2, mass = ca[keep], cb[keep], d2[keep], mass[keep]
        ra, rb = ra[keep], rb[keep]

        if hull_tight:
            va = np.einsum("nij,vj->nvi", Aa, v0) + ba[:, None, :]
            vb = np.einsum("nij,vj->nvi", Ab, v0) + bb[:, None, :]
            dv = va[:, :, None, :] - vb[:, None, :, :]
            maxd2 = (dv**2).sum(axis=3).max(axis=(1, 2))
            incl = maxd2 <= r2
        else:
            t = r - ra - rb
            incl = (t >= 0) & (d2 <= t * t)
        if incl.any():
            lo += float(mass[incl].sum())
        und = ~incl
        if not und.any():
            continue
        Aa, ba, la, Ab, bb, lb = Aa[und], ba[und], la[und], Ab[und], bb[und], lb[und]
        ca, cb, mass = ca[und], cb[und], mass[und]

        capped = (la >= cap) & (lb >= cap)
        if capped.any():
            val = float(mass[capped].sum())
            hi_extra += val
            keep2 = ~capped
            Aa, ba, la, Ab, bb, lb = Aa[keep2], ba[keep2], la[keep2], Ab[keep2], bb[keep2], lb[keep2]
            ca, cb = ca[keep2], cb[keep2]
        if len(la) == 0:
            continue

        split_a = la < lb
        tie = la == lb
        if tie.any():
            cax, cay = ca[:, 0], ca[:, 1]
            cbx, cby = cb[:, 0], cb[:, 1]
            lex = (cax < cbx) | ((cax == cbx) & ((cay < cby) | (cay == cby)))
            split_a = np.where(tie, lex, split_a)

        child_lv = np.where(split_a, la, lb).max() + 1 if len(la) else 0
        depth_reached = max(depth_reached, int(child_lv))

        for side, mask in (("a", split_a), ("b", ~split_a)):
            if not mask.any():
                continue
            if side == "a":
                As, bs, lvs = Aa[mask], ba[mask], la[mask]
                Ao, bo, lvo = Ab[mask], bb[mask], lb[mask]
            else:
                As, bs, lvs = Ab[mask], bb[mask], lb[mask]
                Ao, bo, lvo = Aa[mask], ba[mask], la[mask]
            k = len(lvs)
            Ac = np.einsum("nij,mjk->nmik", As, ml).reshape(k * M, 2, 2)
            bc = (np.einsum("nij,mj->nmi", As, mo) + bs[:, None, :]).reshape(k * M, 2)
            lc = np.repeat(lvs + 1, M)
            Aot = np.repeat(Ao, M, axis=0)
            bot = np.repeat(bo, M, axis=0)
            lot = np.repeat(lvo, M)
            if side == "a":
                chunk = (Ac, bc, lc, Aot, bot, lot)
            else:
                chunk = (Aot, bot, lot, Ac, bc, lc)
            remaining += float((mneg[chunk[2]] * mneg[chunk[5]]).sum())
            for start in range(0, k * M, _CHUNK):
                sl = slice(start, min(start + _CHUNK, k * M))
                worklist.append(tuple(arr[sl] for arr in chunk))

    rem = 0.0
    for chunk in worklist:
        rem += float((mneg[chunk[2]] * mneg[chunk[5]]).sum())
    return lo, lo + hi_extra + rem, depth_reached, pairs


def _ball_bfs_numpy(ml, mo, c0, v0, R0, linv, mneg, A0, b0, l0, px, py, r, cap, width_target, hull_tight):
    lo = 0.0
    hi_extra = 0.0
    cells = 0
    depth_reached = l0
    r2 = r * r
    M = ml.shape[0]
    p = np.array([px, py])

    worklist = [(A0[None, :, :].copy(), b0[None, :].copy(), np.array([l0]))]
    remaining = float(mneg[l0])

    while worklist:
        if hi_extra + remaining <= width_target:
            break
        A, b, lv = worklist.pop()
        n = len(lv)
        cells += n
        mass = mneg[lv]
        remaining -= float(mass.sum())

        c = np.einsum("nij,j->ni", A, c0) + b
        d2 = ((c - p) ** 2).sum(axis=1)
        rad = R0 * linv[lv]
        s = r + rad
        keep = d2 <= s * s
        if not keep.any():
            continue
        A, b, lv, d2, rad, mass = A[keep], b[keep], lv[keep], d2[keep], rad[keep], mass[keep]

        if hull_tight:
            v = np.einsum("nij,vj->nvi", A, v0) + b[:, None, :]
            maxd2 = ((v - p) ** 2).sum(axis=2).max(axis=1)
            incl = maxd2 <= r2
        else:
            t = r - rad
            incl = (t >= 0) & (d2 <= t * t)
        if incl.any():
            lo += float(mass[incl].sum())
        und = ~incl
        if not und.any():
            continue
        A, b, lv, mass = A[und], b[und], lv[und], mass[und]

        capped = lv >= cap
        if capped.any():
            hi_extra += float(mass[capped].sum())
            A, b, lv = A[~capped], b[~capped], lv[~capped]
        if len(lv) == 0:
            continue

        depth_reached = max(depth_reached, int(lv.max()) + 1)
        k = len(lv)
        Ac = np.einsum("nij,mjk->nmik", A, ml).reshape(k * M, 2, 2)
        bc = (np.einsum("nij,mj->nmi", A, mo) + b[:, None, :]).reshape(k * M, 2)
        lc = np.repeat(lv + 1, M)
        remaining += float(mneg[lc].sum())
        for start in range(0, k * M, _CHUNK):
            sl = slice(start, min(start + _CHUNK, k * M))
            worklist.append((Ac[sl], bc[sl], lc[sl]))

    rem = 0.0
    for chunk in worklist:
        rem += float(mneg[chunk[2]].sum())
    return lo, lo + hi_extra + rem, depth_reached, cells


def _mc_pair_count_numpy(ml, mo, c0, Aa, ba, Ab, bb, nsamples, depth, seed, r2):
    rng = np.random.default_rng(seed)
    M = ml.shape[0]
    count = 0
    chunk = 1 << 19
    done = 0
    while done < nsamples:
        n = min(chunk, nsamples - done)
        x = np.tile(c0, (n, 1))
        y = np.tile(c0, (n, 1))
        for _ in range(depth):
            ix = rng.integers(0, M, size=n)
            x = np.einsum("nij,nj->ni", ml[ix], x) + mo[ix]
            iy = rng.integers(0, M, size=n)
            y = np.einsum("nij,nj->ni", ml[iy], y) + mo[iy]
        px = x @ Aa.T + ba
        qy = y @ Ab.T + bb
        d2 = ((px - qy) ** 2).sum(axis=1)
        count += int((d2 <= r2).sum())
        done += n
    return count


def _mc_ball_count_numpy(ml, mo, c0, A, b, nsamples, depth, seed, px, py, r2):
    rng = np.random.default_rng(seed)
    M = ml.shape[0]
    count = 0
    chunk = 1 << 19
    done = 0
    p = np.array([px, py])
    while done < nsamples:
        n = min(chunk, nsamples - done)
        x = np.tile(c0, (n, 1))
        for _ in range(depth):
            ix = rng.integers(0, M, size=n)
            x = np.einsum("nij,nj->ni", ml[ix], x) + mo[ix]
        q = x @ A.T + b
        d2 = ((q - p) ** 2).sum(axis=1)
        count += int((d2 <= r2).sum())
        done += n
    return count


def _mc_exit_numpy(indptr, indices, start, in_set, kmax, nsamples, seed):
    rng = np.random.default_rng(seed)
    v = np.full(nsamples, start, dtype=np.int64)
    exit_steps = np.full(nsamples, kmax + 1, dtype=np.int64)
    alive = np.ones(nsamples, dtype=bool)
    deg = np.diff(indptr)
    for step in range(1, kmax + 1):
        idx = np.flatnonzero(alive)
        if len(idx) == 0:
            break
        u = rng.random(len(idx))
        move = u >= 0.5
        mi = idx[move]
        if len(mi):
            dv = deg[v[mi]]
            j = ((u[move] - 0.5) * 2.0 * dv).astype(np.int64)
            j = np.minimum(j, dv - 1)
            v[mi] = indices[indptr[v[mi]] + j]
        exited = idx[~in_set[v[idx]]]
        if len(exited):
            exit_steps[exited] = step
            alive[exited] = False
    return exit_steps


# ------------------------------------------------------------- dispatchers


def pair_mass_raw(gp, Aa, ba, la, Ab, bb, lb, r, cap, width_target):
    """Dispatch the pair recursion; gp is a GeomPack tuple of system arrays."""
    args = (
        gp.ml,
        gp.mo,
        gp.c0,
        gp.v0,
        gp.R0,
        gp.linv,
        gp.mneg,
        Aa,
        ba,
        la,
        Ab,
        bb,
        lb,
        float(r),
        int(cap),
        float(width_target),
        gp.hull_tight,
    )
    if backend_name() == "numba":
        return _load_numba()["pair"](*args)
    return _pair_bfs_numpy(*args)


def ball_mass_raw(gp, A, b, lv, p, r, cap, width_target):
    args = (
        gp.ml,
        gp.mo,
        gp.c0,
        gp.v0,
        gp.R0,
        gp.linv,
        gp.mneg,
        A,
        b,
        int(lv),
        float(p[0]),
        float(p[1]),
        float(r),
        int(cap),
        float(width_target),
        gp.hull_tight,
    )
    if backend_name() == "numba":
        return _load_numba()["ball"](*args)
    return _ball_bfs_numpy(*args)


def mc_pair_count(gp, Aa, ba, Ab, bb, nsamples, depth, seed, r):
    args = (gp.ml, gp.mo, gp.c0, Aa, ba, Ab, bb, int(nsamples), int(depth), int(seed), float(r) ** 2)
    if backend_name() == "numba":
        return _load_numba()["mc_pair"](*args)
    return _mc_pair_count_numpy(*args)


def mc_ball_count(gp, A, b, nsamples, depth, seed, p, r):
    args = (
        gp.ml,
        gp.mo,
        gp.c0,
        A,
        b,
        int(nsamples),
        int(depth),
        int(seed),
        float(p[0]),
        float(p[1]),
        float(r) ** 2,
    )
    if backend_name() == "numba":
        return _load_numba()["mc_ball"](*args)
    return _mc_ball_count_numpy(*args)


def mc_exit_steps(indptr, indices, start, in_set, kmax, nsamples, seed):
    if backend_name() == "numba":
        return _load_numba()["mc_exit"](
            indptr, indices, int(start), in_set, int(kmax), int(nsamples), int(seed)
        )
    return _mc_exit_numpy(indptr, indices, int(start), in_set, int(kmax), int(nsamples), int(seed))


def lazy_step(indptr, indices, half_invdeg, v, out):
    """One application of the lazy walk operator, numba lane only.

    The numpy lane goes through scipy sparse in :mod:`fractalbv.heat`.
    """
    _load_numba()["step"](indptr, indices, half_invdeg, v, out)
