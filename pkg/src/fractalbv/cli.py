"""Command-line interface: analysis subcommands with CSV/SVG emission.

Every subcommand writes a CSV to the output directory and prints one
machine-readable ``key=value`` summary line to stdout.  Exit codes:
0 success, 1 usage/precondition errors, 2 invariant-violation reports.

Summary values print with 17 significant digits (parseable back to the
double); CSV cells use a fixed 9-significant-digit format pinned by
golden tests.
"""

from __future__ import annotations

import argparse
import math
import os
import sys as _sys
from pathlib import Path

import numpy as np

from . import heat, ks, renewal
from .curves import Curve, geometric_grid
from .errors import FractalBVError, InvariantViolation, PreconditionError
from .ifs import CellUnion, FractalSystem, build_preset, boundary_points, make_union, neighbor_count_R
from .measure import MassInterval
from .renewal import PhaseProfile

_NAMED_UNIONS = {
    "sierpinski": {
        "single": ["1.2"],
        "pair": ["1.2", "1.3"],
        "staircase": ["1.2", "1.3", "2.1"],
        "mixed": ["1.2", "1.1.2"],
    },
    "vicsek": {
        "single": ["5.5"],
        "pair": ["5.5", "5.1"],
        "staircase": ["5.1", "5.5", "5.4"],
        "mixed": ["5.5", "5.1.4"],
    },
}


def _fmt_csv(x: float) -> str:
    return f"{x:.9g}"


def _fmt_sum(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def _summary(pairs) -> str:
    return " ".join(f"{k}={_fmt_sum(v)}" for k, v in pairs)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; spec wants 1
        self.print_usage(_sys.stderr)
        _sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def _parse_word(txt: str) -> tuple[int, ...]:
    try:
        return tuple(int(s) for s in txt.strip().split("."))
    except ValueError:
        raise PreconditionError(f"bad cell word {txt!r}; expected e.g. '1.2'")


def _get_system(args) -> FractalSystem:
    if args.config:
        from .config import load_config

        return load_config(args.config, window_level=args.level)
    return build_preset(args.preset, window_level=args.level)


def _get_union(sys_: FractalSystem, spec: str) -> CellUnion:
    named = _NAMED_UNIONS.get(sys_.name, {})
    if spec in named:
        if sys_.window_level != 1:
            raise PreconditionError("named unions are defined on window level 1")
        words = named[spec]
    else:
        words = spec.split("+")
    return make_union(sys_, [sys_.cell(_parse_word(w)) for w in words])


def _get_pair(sys_: FractalSystem, spec):
    if not spec:
        return ks.reference_pair(sys_)
    a_txt, b_txt = spec.split(":")
    return sys_.cell(_parse_word(a_txt)), sys_.cell(_parse_word(b_txt))


def _outdir(args) -> Path:
    out = args.out or os.environ.get("FRACTAL_BV_OUT") or "."
    p = Path(out)
    p.mkdir(parents=True, exist_ok=True)
    return p


# -------------------------------------------------------------------- writers


def write_curve_csv(curve: Curve, path: Path) -> None:
    """Radius curves: r,neg_ln_r,phase,N_lo,N_hi,width.
    Time curves: t,neg_ln_t,k_steps,value,rescaled_value."""
    lines = []
    if curve.scale == "radius":
        period = curve.meta.get("period_log", math.nan)
        lines.append("r,neg_ln_r,phase,N_lo,N_hi,width")
        for r, lo, hi in zip(curve.abscissa, curve.lo, curve.hi):
            z = -math.log(r)
            phase = z % period if period and not math.isnan(period) else math.nan
            lines.append(
                ",".join(_fmt_csv(v) for v in (r, z, phase, lo, hi, hi - lo))
            )
    elif curve.scale == "time":
        unit = curve.meta.get("time_unit", math.nan)
        alpha = curve.meta.get("alpha", math.nan)
        lines.append("t,neg_ln_t,k_steps,value,rescaled_value")
        for t, v in zip(curve.abscissa, curve.mid):
            k = int(round(t / unit)) if unit and not math.isnan(unit) else -1
            raw = v * t**alpha if not math.isnan(alpha) else math.nan
            lines.append(
                ",".join([_fmt_csv(t), _fmt_csv(-math.log(t)), str(k), _fmt_csv(raw), _fmt_csv(v)])
            )
    else:
        lines.append("z,value_lo,value_hi")
        for z, lo, hi in zip(curve.abscissa, curve.lo, curve.hi):
            lines.append(",".join(_fmt_csv(v) for v in (z, lo, hi)))
    path.write_text("\n".join(lines) + "\n")


def write_profile_csv(profile: PhaseProfile, path: Path) -> None:
    lines = ["phase,mean,spread,n_samples"]
    for ph, mean, spread, n in zip(profile.phases, profile.means, profile.spreads, profile.counts):
        lines.append(",".join([_fmt_csv(ph), _fmt_csv(mean), _fmt_csv(spread), str(int(n))]))
    path.write_text("\n".join(lines) + "\n")


def write_mc_csv(report, path: Path) -> None:
    lines = ["t,neg_ln_t,k_steps,value,rescaled_value,exits,samples,ci_lo,ci_hi"]
    for t, k, est, lo, hi, ex in zip(
        report.t_values, report.k_values, report.estimates, report.ci_lo, report.ci_hi, report.exits
    ):
        lnv = math.log(est) if est > 0 else math.nan
        lines.append(
            ",".join(
                [
                    _fmt_csv(t),
                    _fmt_csv(-math.log(t)),
                    str(int(k)),
                    _fmt_csv(est),
                    _fmt_csv(lnv),
                    str(int(ex)),
                    str(int(report.samples)),
                    _fmt_csv(lo),
                    _fmt_csv(hi),
                ]
            )
        )
    path.write_text("\n".join(lines) + "\n")


def write_svg(curve: Curve, path: Path) -> None:
    """Minimal deterministic polyline plot with both interval envelopes."""
    W, H, pad = 800, 500, 50
    x = curve.neg_log_abscissa()
    if len(x) == 0:
        path.write_text(
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}"/>\n'
        )
        return
    xmin, xmax = float(x.min()), float(x.max())
    ymin, ymax = float(curve.lo.min()), float(curve.hi.max())
    xr = xmax - xmin or 1.0
    yr = ymax - ymin or 1.0

    def sx(v):
        return pad + (v - xmin) / xr * (W - 2 * pad)

    def sy(v):
        return H - pad - (v - ymin) / yr * (H - 2 * pad)

    def poly(ys, color):
        pts = " ".join(f"{sx(a):.3f},{sy(b):.3f}" for a, b in zip(x, ys))
        return f'<polyline fill="none" stroke="{color}" stroke-width="1" points="{pts}"/>'

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}">',
        f'<rect x="{pad}" y="{pad}" width="{W - 2 * pad}" height="{H - 2 * pad}" fill="none" stroke="black"/>',
        poly(curve.lo, "#1f77b4"),
    ]
    if curve.is_interval:
        parts.append(poly(curve.hi, "#d62728"))
    parts.append(
        f'<text x="{pad}" y="{H - pad / 3:.1f}" font-size="12">-ln(abscissa) in [{xmin:.6f}, {xmax:.6f}]; '
        f"value in [{ymin:.9g}, {ymax:.9g}]; {curve.normalization}</text>"
    )
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n")


# ----------------------------------------------------------------- subcommands


def _grid_for_pair(sys_, a, b, args):
    top = args.grid_start or sys_.L * ks.pair_threshold(sys_, a, b)
    periods = args.periods
    if args.grid_stop:
        periods = math.log(top / args.grid_stop) / math.log(sys_.L)
    return geometric_grid(top, sys_.L, args.phases, periods)


def _grid_for_union(sys_, U, args):
    if args.grid_start:
        top = args.grid_start
    else:
        top = 0.99 * min(
            ks.union_threshold(sys_, U),
            min(sys_.L * ks.pair_threshold(sys_, a, b) for a, b in ks.boundary_pairs(sys_, U)),
        )
    periods = args.periods
    if args.grid_stop:
        periods = math.log(top / args.grid_stop) / math.log(sys_.L)
    return geometric_grid(top, sys_.L, args.phases, periods)


def _memo(args):
    return {} if args.memo else None


def cmd_info(args) -> int:
    sys_ = _get_system(args)
    R = neighbor_count_R(sys_)
    pairs = [
        ("L", float(sys_.L)),
        ("M", sys_.M),
        ("d_h", sys_.d_h),
        ("d_w", sys_.d_w),
        ("R", R),
        ("diam", sys_.diam),
        ("rho", sys_.rho),
        ("window_level", sys_.window_level),
        ("preset", sys_.name),
    ]
    out = _outdir(args) / "info.csv"
    out.write_text("key,value\n" + "\n".join(f"{k},{_fmt_sum(v)}" for k, v in pairs) + "\n")
    print(_summary(pairs))
    return 0


def cmd_ks_profile(args) -> int:
    sys_ = _get_system(args)
    memo = _memo(args)
    if args.union:
        U = _get_union(sys_, args.union)
        grid = _grid_for_union(sys_, U, args)
        curve = ks.normalized_profile(
            sys_, U, grid, depth_cap=args.depth, width_rel=args.width_rel, memo=memo, threads=args.threads
        )
        target = f"union:{args.union}"
    else:
        a, b = _get_pair(sys_, args.pair)
        grid = _grid_for_pair(sys_, a, b, args)
        curve = ks.normalized_profile(
            sys_, (a, b), grid, depth_cap=args.depth, width_rel=args.width_rel, memo=memo, threads=args.threads
        )
        target = "pair"
    curve.meta["period_log"] = math.log(sys_.L)
    out = _outdir(args) / "ks-profile.csv"
    write_curve_csv(curve, out)
    if args.svg:
        write_svg(curve, out.with_suffix(".svg"))
    rep = ks.periodicity_check(curve, sys_)
    print(
        _summary(
            [
                ("preset", sys_.name),
                ("target", target),
                ("points", len(curve)),
                ("grid_top", float(curve.abscissa[0])),
                ("grid_bottom", float(curve.abscissa[-1])),
                ("max_width", float(curve.width.max())),
                ("periodicity_residual", rep.max_residual),
                ("periodicity_checked", rep.checked),
                ("csv", out),
            ]
        )
    )
    return 0 if rep.ok else 2


def cmd_ks_union(args) -> int:
    sys_ = _get_system(args)
    memo = _memo(args)
    U = _get_union(sys_, args.union or "single")
    grid = _grid_for_union(sys_, U, args)
    if args.direct:
        vals = [
            ks.normalized_union(sys_, U, r, depth_cap=args.depth, memo=memo, direct=True)
            for r in grid
        ]
        curve = Curve(
            "radius",
            "union-N-direct",
            np.asarray(grid),
            np.array([v.lo for v in vals]),
            np.array([v.hi for v in vals]),
        )
    else:
        curve = ks.normalized_profile(
            sys_, U, grid, depth_cap=args.depth, width_rel=args.width_rel, memo=memo, threads=args.threads
        )
    curve.meta["period_log"] = math.log(sys_.L)
    out = _outdir(args) / "ks-union.csv"
    write_curve_csv(curve, out)
    if args.svg:
        write_svg(curve, out.with_suffix(".svg"))
    rec = ks.boundary_recovery(
        sys_, U, float(curve.abscissa[0]), depth_cap=args.depth, width_rel=args.width_rel, memo=memo
    )
    print(
        _summary(
            [
                ("preset", sys_.name),
                ("cells", len(U.cells)),
                ("level", U.level),
                ("boundary_points", rec.boundary_count),
                ("ratio_lo", rec.ratio.lo),
                ("ratio_hi", rec.ratio.hi),
                ("recovered", rec.integers[0] if len(rec.integers) == 1 else -1),
                ("matched", rec.matched),
                ("csv", out),
            ]
        )
    )
    return 0 if rec.matched else 2


def cmd_ks_oscillation(args) -> int:
    sys_ = _get_system(args)
    memo = _memo(args)
    a, b = _get_pair(sys_, args.pair)
    grid = _grid_for_pair(sys_, a, b, args)
    curve = ks.normalized_profile(
        sys_, (a, b), grid, depth_cap=args.depth, width_rel=args.width_rel, memo=memo, threads=args.threads
    )
    curve.meta["period_log"] = math.log(sys_.L)
    rep = ks.oscillation_amplitude(curve, sys_)
    out = _outdir(args) / "ks-oscillation.csv"
    write_curve_csv(curve, out)
    if args.svg:
        write_svg(curve, out.with_suffix(".svg"))
    certified = rep.certified and rep.significant
    print(
        _summary(
            [
                ("preset", sys_.name),
                ("amplitude", rep.amplitude),
                ("amplitude_certified", certified),
                ("mean", rep.mean),
                ("max_width", rep.interval_width_max),
                ("period_log", rep.period_log),
                ("periodicity_residual", rep.max_periodicity_residual),
                ("csv", out),
            ]
        )
    )
    return 0


def cmd_ks_limits(args) -> int:
    sys_ = _get_system(args)
    memo = _memo(args)
    a, b = _get_pair(sys_, args.pair)
    rep = ks.subsequence_limits(
        sys_, a, b, m_count=args.m_count, depth_cap=args.depth, width_rel=args.width_rel, memo=memo
    )
    lines = ["r,neg_ln_r,phase,N_lo,N_hi,width"]
    for seq in rep.phases:
        for r, iv in zip(seq.radii, seq.intervals):
            lines.append(
                ",".join(
                    _fmt_csv(v)
                    for v in (r, -math.log(r), seq.phase, iv.lo, iv.hi, iv.width)
                )
            )
    out = _outdir(args) / "ks-limits.csv"
    out.write_text("\n".join(lines) + "\n")
    max_gap = max(seq.max_gap for seq in rep.phases)
    print(
        _summary(
            [
                ("preset", sys_.name),
                ("phases", len(rep.phases)),
                ("disjoint", rep.disjoint),
                ("constancy_gap", max_gap),
                ("measured_ratio_lo", rep.measured_ratio[0]),
                ("measured_ratio_hi", rep.measured_ratio[1]),
                ("predicted_ratio", rep.predicted_ratio),
                ("matches_paper", rep.matches_paper),
                ("csv", out),
            ]
        )
    )
    if max_gap > 0:
        return 2
    return 0


def cmd_heat_profile(args) -> int:
    sys_ = _get_system(args)
    U = _get_union(sys_, args.union or "single")
    walk = heat.build_walk(sys_, args.N)
    base = sys_.L**sys_.d_w
    top = args.grid_start or min(heat.union_t_max(sys_, U), base**-3.0)
    periods = args.periods
    if args.grid_stop:
        periods = math.log(top / args.grid_stop) / math.log(base)
    tgrid = geometric_grid(top, base, args.phases, periods)
    if tgrid[-1] < walk.time_unit * (1.0 - 1e-9):
        raise PreconditionError("grid bottom below one walk step; lower --periods or raise --N")
    curve = heat.heat_union(walk, U, tgrid, direct=args.direct)
    curve.meta.update(time_unit=walk.time_unit, alpha=sys_.d_h / sys_.d_w)
    nb = len(boundary_points(sys_, U))
    out = _outdir(args) / "heat-profile.csv"
    write_curve_csv(curve, out)
    if args.svg:
        write_svg(curve, out.with_suffix(".svg"))
    drift = drift_rel = amplitude = math.nan
    try:
        phi, prof = heat.phi_profile(curve, nb, sys_)
        write_profile_csv(prof, _outdir(args) / "heat-profile-fold.csv")
        drift, drift_rel, amplitude = prof.drift, prof.drift_rel, prof.amplitude
    except PreconditionError:
        pass  # folding needs two full periods; the curve is still reported
    band = float(curve.mid.max() / curve.mid.min()) if curve.mid.min() > 0 else math.inf
    print(
        _summary(
            [
                ("preset", sys_.name),
                ("N", args.N),
                ("boundary_points", nb),
                ("band_ratio", band),
                ("fold_drift", drift),
                ("fold_drift_rel", drift_rel),
                ("fold_amplitude", amplitude),
                ("csv", out),
            ]
        )
    )
    return 0


def cmd_heat_scalecheck(args) -> int:
    sys_ = _get_system(args)
    a, b = _get_pair(sys_, args.pair)
    t = args.grid_start or sys_.L ** (-sys_.d_w) * 0.2
    rep = heat.scaling_check_heat(sys_, a, b, t, N=args.N, n=1)
    out = _outdir(args) / "heat-scalecheck.csv"
    out.write_text(
        "side,t,k_steps,value\n"
        + f"lhs,{_fmt_csv(t)},{rep.k},{_fmt_csv(rep.lhs)}\n"
        + f"rhs,{_fmt_csv(t * sys_.L ** -sys_.d_w)},{rep.k},{_fmt_csv(rep.rhs)}\n"
    )
    print(
        _summary(
            [
                ("preset", sys_.name),
                ("N", args.N),
                ("t", t),
                ("k", rep.k),
                ("lhs", rep.lhs),
                ("rhs", rep.rhs),
                ("residual", rep.residual),
                ("k_sensitivity", rep.k_sensitivity),
                ("csv", out),
            ]
        )
    )
    return 0 if rep.residual < 1e-8 else 2


def cmd_hit_tail(args) -> int:
    sys_ = _get_system(args)
    U = _get_union(sys_, args.union or "single")
    walk = heat.build_walk(sys_, args.N)
    # start at the weighted center of U's first cell, snapped to a vertex
    x = sys_.cell_center(U.cells[0])
    base = sys_.L**sys_.d_w
    top = args.grid_start or float(base ** -(args.periods + 1))
    tgrid = geometric_grid(top, base, args.phases, args.periods)[::-1]
    rep = heat.hitting_tail_mc(walk, U, x, list(tgrid), samples=args.samples, seed=args.seed)
    out = _outdir(args) / "hit-tail.csv"
    write_mc_csv(rep, out)
    print(
        _summary(
            [
                ("preset", sys_.name),
                ("N", args.N),
                ("samples", rep.samples),
                ("distance", rep.distance),
                ("slope", rep.slope),
                ("r2", rep.r2),
                ("seed", args.seed),
                ("csv", out),
            ]
        )
    )
    return 0


def cmd_fold(args) -> int:
    if not args.input:
        raise PreconditionError("fold requires --input CSV")
    rows = Path(args.input).read_text().strip().splitlines()
    header = rows[0].split(",")
    data = np.array([[float(x) if x != "nan" else math.nan for x in ln.split(",")] for ln in rows[1:]])
    if header[:2] == ["r", "neg_ln_r"]:
        absc, lo, hi = data[:, 0], data[:, 3], data[:, 4]
    elif header[:2] == ["t", "neg_ln_t"]:
        absc, lo, hi = data[:, 0], data[:, 4], data[:, 4]
    else:
        raise PreconditionError(f"unrecognized CSV schema: {header}")
    order = np.argsort(-absc)
    curve = Curve("radius", "input", absc[order], lo[order], hi[order])
    frame = renewal.to_log_frame(curve, gamma=args.gamma)
    prof = renewal.fold(frame, args.period)
    out = _outdir(args) / "fold.csv"
    write_profile_csv(prof, out)
    print(
        _summary(
            [
                ("period", prof.period),
                ("bins", len(prof.phases)),
                ("amplitude", prof.amplitude),
                ("drift", prof.drift),
                ("drift_rel", prof.drift_rel),
                ("n_periods", prof.n_periods),
                ("csv", out),
            ]
        )
    )
    return 0


_COMMANDS = {
    "info": cmd_info,
    "ks-profile": cmd_ks_profile,
    "ks-union": cmd_ks_union,
    "ks-oscillation": cmd_ks_oscillation,
    "ks-limits": cmd_ks_limits,
    "heat-profile": cmd_heat_profile,
    "heat-scalecheck": cmd_heat_scalecheck,
    "hit-tail": cmd_hit_tail,
    "fold": cmd_fold,
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fractalbv", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in _COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--preset", default="sierpinski", help="sierpinski | vicsek")
        sp.add_argument("--config", default=None, help="custom system TOML path")
        sp.add_argument("--level", type=int, default=1, help="window level m (K^<m>)")
        sp.add_argument("--depth", type=int, default=12, help="cell-level depth cap (<= 14)")
        sp.add_argument("--width-target", type=float, default=0.0, help="absolute interval width target")
        sp.add_argument("--width-rel", type=float, default=1e-3, help="relative width target (adaptive)")
        sp.add_argument("--phases", type=int, default=16, help="grid points per period")
        sp.add_argument("--periods", type=float, default=3.0, help="periods covered by the grid")
        sp.add_argument("--grid-start", type=float, default=None, help="grid top (largest r or t)")
        sp.add_argument("--grid-stop", type=float, default=None, help="grid bottom")
        sp.add_argument("--N", type=int, default=6, help="walk refinement level (<= 9)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", type=int, default=os.cpu_count() or 1)
        sp.add_argument("--deterministic", action="store_true", help="single-threaded reductions")
        sp.add_argument("--direct", action="store_true", help="full double-sum evaluation")
        sp.add_argument("--svg", action="store_true")
        sp.add_argument("--out", default=None, help="output directory (or FRACTAL_BV_OUT)")
        sp.add_argument("--memo", action="store_true", help="memoize congruent cell pairs")
        sp.add_argument("--pair", default=None, help="cell pair 'w1:w2', e.g. '1.1:1.2'")
        sp.add_argument("--union", default=None, help="named union or 'w1+w2+...'")
        sp.add_argument("--m-count", type=int, default=3, help="subsequence length for ks-limits")
        sp.add_argument("--samples", type=int, default=10**4, help="MC sample count")
        sp.add_argument("--input", default=None, help="input CSV for fold")
        sp.add_argument("--period", type=float, default=None, help="fold period in the log variable")
        sp.add_argument("--gamma", type=float, default=0.0, help="log-frame exponent")
    return p


def _validate_common(args):
    if args.depth > 14:
        raise PreconditionError("--depth must be <= 14")
    if args.N > 9:
        raise PreconditionError("--N must be <= 9")
    if args.phases < 4:
        raise PreconditionError("--phases must be >= 4")
    if args.level < 0:
        raise PreconditionError("--level must be >= 0")
    if args.deterministic:
        args.threads = 1


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        _validate_common(args)
        return _COMMANDS[args.command](args)
    except InvariantViolation as e:
        print(f"invariant-violation: {e}", file=_sys.stderr)
        return 2
    except FractalBVError as e:
        print(f"error: {e}", file=_sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
