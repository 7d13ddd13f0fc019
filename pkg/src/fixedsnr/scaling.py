"""Network-level throughput figures and how they scale with size.

A sweep runs the single-cluster Monte Carlo at several sizes, extends the
per-symbol rate to the whole network by symmetry, and fits log-log slopes.
The figures of merit are the aggregate rate (bits per channel use summed
over served sources), the per-node rate rho, and two references: the
isolation upper bound where every source-destination pair gets a clean
worst-case channel, and a nearest-neighbor multihop baseline whose per-node
rate decays like 1/sqrt(n).
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .analysis import (effective_gain_statistics, interference_breakdown,
                       sinr_beta2)
from .engine import build_context, calibrate, run_simulation
from .protocol import ledger_total
from .topology import NetworkParams


def isolation_capacity(n: int, snr0: float) -> float:
    """Aggregate bits per channel use if all n/4 worst-case pairs were clean."""
    return (n / 4.0) * math.log2(1.0 + snr0)


def multihop_baseline(n: int, c_mh: float = 1.0) -> float:
    """Capacity ratio of nearest-neighbor multihop relaying, c_mh / sqrt(n)."""
    return c_mh / math.sqrt(n)


def network_sum_rate(served: int, gamma2_bits: float, b: int, total_uses: int) -> float:
    """Aggregate rate: served sources x b symbols x gamma2 bits per round."""
    if total_uses < 1:
        raise ValueError("total channel uses must be positive")
    return served * gamma2_bits * b / total_uses


def rho(sum_rate: float, isolation: float) -> float:
    """Fraction of the isolation capacity the network achieves."""
    if isolation <= 0:
        raise ValueError("isolation capacity must be positive")
    return sum_rate / isolation


@dataclass(frozen=True)
class ScalingPoint:
    """One sweep size; field order matches the CSV column order."""

    m: int
    M: int
    n: int
    served: int
    c0_cluster: int
    c0_sub: int
    gamma2_bits: float
    sum_rate: float
    rho: float
    rho_multihop: float
    total_channel_uses_per_b: float


@dataclass(frozen=True)
class ExponentFit:
    slope: float
    intercept: float
    stderr: float
    r2: float


@dataclass
class ScalingReport:
    points: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    fit_sum_rate: ExponentFit | None = None
    fit_rho: ExponentFit | None = None


def fit_exponent(ns, values) -> ExponentFit:
    """Least-squares slope of log(values) against log(ns)."""
    ns = np.asarray(ns, dtype=float)
    values = np.asarray(values, dtype=float)
    if ns.size != values.size or ns.size < 3:
        raise ValueError("need at least three matching points to fit")
    if np.any(ns <= 0) or np.any(values <= 0):
        raise ValueError("log-log fit requires positive sizes and values")
    x = np.log(ns)
    y = np.log(values)
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    slope, intercept = float(coef[0]), float(coef[1])
    resid = y - A @ coef
    rss = float(resid @ resid)
    sxx = float(((x - x.mean()) ** 2).sum())
    dof = ns.size - 2
    stderr = math.sqrt(rss / dof / sxx) if dof > 0 and sxx > 0 else 0.0
    tss = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - rss / tss if tss > 0 else 1.0
    return ExponentFit(slope=slope, intercept=intercept, stderr=stderr, r2=r2)


def evaluate_point(params: NetworkParams, seed: int, case: int, mode: str,
                   trials: int, d_max_convention: str = "diagonal",
                   delta_zero: bool = False, backend: str | None = None,
                   workers: int | None = None) -> ScalingPoint:
    """Full pipeline at one size: simulate, rate, ledger, network figures."""
    ctx = build_context(params, seed=seed, d_max_convention=d_max_convention,
                        delta_zero=delta_zero)
    cal = calibrate(ctx, case, mode)
    result = run_simulation(ctx, case, mode, trials, backend=backend,
                            workers=workers, calibration=cal)
    rate = sinr_beta2(effective_gain_statistics(result),
                      interference_breakdown(result))
    ledger = ledger_total(ctx.M, params.b, ctx.c0_cluster, ctx.c0_sub)
    served = ctx.admissible.served_total
    sum_rate = network_sum_rate(served, rate.gamma2_bits, params.b, ledger.total)
    n = params.n
    r = rho(sum_rate, isolation_capacity(n, params.snr0))
    if not 0.0 <= r <= 1.0:
        warnings.warn(f"rho={r:.4g} outside [0, 1] at m={params.m}", stacklevel=2)
    return ScalingPoint(
        m=params.m, M=ctx.M, n=n, served=served,
        c0_cluster=ctx.c0_cluster, c0_sub=ctx.c0_sub,
        gamma2_bits=rate.gamma2_bits, sum_rate=sum_rate, rho=r,
        rho_multihop=multihop_baseline(n),
        total_channel_uses_per_b=ledger.total / params.b,
    )


def sweep(m_list, base: NetworkParams, seed: int, case: int, mode: str,
          trials: int, d_max_convention: str = "diagonal",
          delta_zero: bool = False, backend: str | None = None,
          workers: int | None = None) -> ScalingReport:
    """Evaluate every size, skipping (and recording) sizes that fail."""
    report = ScalingReport()
    for m in m_list:
        try:
            params = NetworkParams(m=m, alpha=base.alpha, snr0=base.snr0,
                                   k0=base.k0, b=base.b, c0_cap=base.c0_cap)
            point = evaluate_point(params, seed, case, mode, trials,
                                   d_max_convention=d_max_convention,
                                   delta_zero=delta_zero, backend=backend,
                                   workers=workers)
            report.points.append(point)
        except Exception as exc:  # keep sweeping; sizes fail independently
            report.errors.append(f"m={m}: {type(exc).__name__}: {exc}")
    pts = [p for p in report.points if p.sum_rate > 0]
    if len(pts) >= 3:
        ns = [p.n for p in pts]
        report.fit_sum_rate = fit_exponent(ns, [p.sum_rate for p in pts])
        report.fit_rho = fit_exponent(ns, [p.rho for p in pts])
    return report
