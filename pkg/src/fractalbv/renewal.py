"""Log-periodic analysis: log-frame change of variables, phase folding,
and residual checks against a stretched-exponential envelope.

A function with the approximate self-similarity f(t) ~ alpha f(beta t)
turns, after g(z) = e^(gamma z) f(e^-z) with gamma = -ln(alpha)/ln(beta),
into an approximately additive-periodic function of z with period
|ln beta|.  Folding onto one period quantifies the periodic profile and
the drift (failure of exact periodicity) observable at finite scales.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .curves import Curve
from .errors import PreconditionError


@dataclass
class PhaseProfile:
    period: float
    phases: np.ndarray  # bin phase representatives in [0, period)
    means: np.ndarray  # mean value per bin
    spreads: np.ndarray  # max - min per bin
    counts: np.ndarray  # samples per bin
    drift: float  # max |consecutive-period difference| over bins
    drift_rel: float  # drift / |mean of means|
    n_periods: int

    @property
    def amplitude(self) -> float:
        return float(self.means.max() - self.means.min())


def to_log_frame(
    curve: Curve,
    gamma: Optional[float] = None,
    alpha: Optional[float] = None,
    beta: Optional[float] = None,
) -> Curve:
    """Transform f(t) samples into g(z) = e^(gamma z) f(e^-z), z = -ln t.

    gamma may be given directly or derived as -ln(alpha)/ln(beta).
    """
    if gamma is None:
        if alpha is None or beta is None:
            raise PreconditionError("supply gamma or both alpha and beta")
        gamma = -math.log(alpha) / math.log(beta)
    if curve.scale == "log":
        raise PreconditionError("curve is already in the log frame")
    z = -np.log(curve.abscissa)
    factor = np.exp(gamma * z)
    order = np.argsort(z)
    return Curve(
        scale="log",
        normalization=f"logframe({curve.normalization})",
        abscissa=z[order],
        lo=(curve.lo * factor)[order],
        hi=(curve.hi * factor)[order],
        meta={**curve.meta, "gamma": gamma},
    )


def fold(curve: Curve, period: float) -> PhaseProfile:
    """Fold a log-frame (or radius/time) curve onto one additive period.

    Binning assigns each sample to the nearest phase of the aligned
    geometric grid; no interpolation is performed, so genuine oscillation
    is not smoothed away.  Requires at least two full periods of samples.
    """
    if period <= 0:
        raise PreconditionError("period must be positive")
    z = curve.neg_log_abscissa()
    v = curve.mid
    order = np.argsort(z)
    z, v = z[order], v[order]
    span = z[-1] - z[0]
    if span < 2 * period - 1e-9:
        raise PreconditionError(
            f"need >= 2 periods of samples (span {span:.4f}, period {period:.4f})"
        )
    step = np.median(np.diff(z))
    nbins = max(1, int(round(period / step)))
    rel = (z - z[0]) / period
    bin_idx = np.round((rel - np.floor(rel + 1e-9)) * nbins).astype(int) % nbins
    per_idx = np.floor(rel + 1e-9).astype(int)

    n_periods = int(per_idx.max()) + 1
    table = {}
    for bi, pi, val in zip(bin_idx, per_idx, v):
        table.setdefault(int(bi), {}).setdefault(int(pi), []).append(float(val))

    phases, means, spreads, counts = [], [], [], []
    drift = 0.0
    for bi in sorted(table):
        vals = [x for per in table[bi].values() for x in per]
        phases.append(bi * period / nbins)
        means.append(float(np.mean(vals)))
        spreads.append(float(np.max(vals) - np.min(vals)))
        counts.append(len(vals))
        per_means = {pi: float(np.mean(xs)) for pi, xs in table[bi].items()}
        for pi in sorted(per_means):
            if pi + 1 in per_means:
                drift = max(drift, abs(per_means[pi + 1] - per_means[pi]))
    means_arr = np.array(means)
    overall = float(np.abs(means_arr).mean())
    return PhaseProfile(
        period=period,
        phases=np.array(phases),
        means=means_arr,
        spreads=np.array(spreads),
        counts=np.array(counts, dtype=int),
        drift=drift,
        drift_rel=drift / overall if overall > 0 else math.inf,
        n_periods=n_periods,
    )


@dataclass
class ResidualReport:
    residuals: np.ndarray  # |f(t) - alpha f(beta t)| at matched samples
    t_values: np.ndarray
    envelope: np.ndarray  # c * exp(-C t^(-1/(d_w-1)))
    passed: bool  # all residuals below the supplied envelope
    violations: list = field(default_factory=list)
    min_passing_C: float = math.inf  # smallest C making all samples pass, c fixed


def scaling_residual(
    curve: Curve,
    alpha: float,
    beta: float,
    c: float,
    C: float,
    d_w: float,
    rtol: float = 1e-9,
) -> ResidualReport:
    """Check f(t) ~ alpha f(beta t) against the envelope c e^(-C t^(-1/(d_w-1))).

    The grid must be geometric and aligned to beta so that both t and
    beta*t are sampled.  Also reports the smallest C for which every
    residual passes with the supplied c.
    """
    if not (0 < beta < 1):
        raise PreconditionError("beta must lie in (0, 1)")
    t = curve.abscissa
    f = curve.mid
    exponent = 1.0 / (d_w - 1.0)
    res, ts = [], []
    for i in range(len(t)):
        target = beta * t[i]
        j = int(np.argmin(np.abs(t - target)))
        if abs(t[j] - target) > rtol * target:
            continue
        res.append(abs(f[i] - alpha * f[j]))
        ts.append(t[i])
    if not res:
        raise PreconditionError("grid is not aligned to beta; no (t, beta t) pairs")
    res = np.array(res)
    ts = np.array(ts)
    env = c * np.exp(-C * ts**-exponent)
    violations = [float(tv) for tv, rv, ev in zip(ts, res, env) if rv > ev]
    min_C = math.inf
    if np.all(res < c):
        with np.errstate(divide="ignore"):
            vals = np.log(c / res) * ts**exponent
        min_C = float(np.min(vals))
    return ResidualReport(
        residuals=res,
        t_values=ts,
        envelope=env,
        passed=not violations,
        violations=violations,
        min_passing_C=min_C,
    )
