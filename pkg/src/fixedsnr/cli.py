"""Command-line front end: topology dumps, single-size runs, sweeps, bench.

Output is deterministic for a given configuration and seed: no timestamps,
sorted JSON keys, fixed float formatting.  Exit codes: 0 success, 2 invalid
configuration, 3 coloring overflow, 4 runtime invariant violation.
"""

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from .analysis import (
    audit_moments,
    effective_gain_statistics,
    error_prob_bound,
    gain_statistics,
    gmi_lower_bound,
    interference_breakdown,
    sinr_beta2,
)
from .channel import draw_batch, fill_exchange_interference, fill_other_cluster
from .engine import build_context, calibrate, run_simulation
from .errors import ColoringOverflowError, ConfigError, InvariantViolation
from .kernels import HAVE_NUMBA, target_scalars
from .protocol import ledger_total
from .scaling import (isolation_capacity, multihop_baseline, network_sum_rate,
                      rho, sweep)
from .topology import NetworkParams, plan_to_jsonable

CSV_HEADER = ("m,M,n,served,c0_cluster,c0_sub,gamma2_bits,sum_rate,rho,"
              "rho_multihop,total_channel_uses_per_b")

DEFAULTS = {
    "m": 2,
    "alpha": 3.0,
    "snr0_db": 10.0,
    "k0": 2,
    "b": 100,
    "trials": 10000,
    "seed": 1,
    "case": 2,
    "mode": "synthetic",
    "format": "json",
    "out": None,
    "parallel": None,
    "dmax": "diagonal",
    "delta_zero": False,
    "backend": "auto",
    "m_list": "2,3,4",
    "trace": None,
}


def _round12(x: float) -> float:
    return float(format(float(x), ".12g"))


def _jsonify(obj):
    """Plain JSON types with stable float formatting."""
    if isinstance(obj, dict):
        return {k: _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _round12(obj)
    return obj


def _emit(text: str, out_path: str | None) -> None:
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fixedsnr",
        description="Clustered amplify-and-forward grid-network simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("topology", "emit the grid, clusters, and coloring as JSON"),
        ("simulate", "single-size Monte Carlo analysis report (JSON)"),
        ("sweep", "multi-size scaling report (CSV or JSON)"),
        ("bench", "compare kernel backends on one batch"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="key=value file; explicit flags override it")
        p.add_argument("--m", type=int, help="grid parameter; n = m**6 nodes")
        p.add_argument("--alpha", type=float, help="path-loss exponent (> 2)")
        p.add_argument("--snr0-db", dest="snr0_db", type=float,
                       help="worst-case SNR in dB")
        p.add_argument("--k0", type=int, help="admissibility radius multiplier")
        p.add_argument("--b", type=int, help="symbols per transmission block")
        p.add_argument("--trials", type=int, help="Monte Carlo trials")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--case", type=int, choices=(1, 2),
                       help="exchange fading off (1) or on (2)")
        p.add_argument("--mode", choices=("full", "synthetic"),
                       help="exchange/other-cluster interference mode")
        p.add_argument("--format", choices=("csv", "json"),
                       help="sweep output format")
        p.add_argument("--out", help="write output to this path instead of stdout")
        p.add_argument("--parallel", type=int,
                       help="worker threads (default: available cores)")
        p.add_argument("--dmax", choices=("diagonal", "realized"),
                       help="reference-distance convention")
        p.add_argument("--delta-zero", dest="delta_zero", action="store_true",
                       default=None, help="force all power-control perturbations to 0")
        p.add_argument("--backend", choices=("auto", "numpy", "numba"),
                       help="kernel implementation")
        if name == "sweep":
            p.add_argument("--m-list", dest="m_list",
                           help="comma-separated grid parameters, e.g. 2,3,4")
        if name == "simulate":
            p.add_argument("--trace", help="write a one-trial tagged dump to this path")
    return parser


def load_config_file(path: str) -> dict:
    """key = value lines; blank lines and # comments ignored."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {stripped!r}")
            key, _, value = stripped.partition("=")
            values[key.strip().replace("-", "_")] = value.strip().strip("\"'")
    return values


def _coerce(key: str, value):
    if key in ("m", "k0", "b", "trials", "seed", "case", "parallel"):
        return int(value)
    if key in ("alpha", "snr0_db"):
        return float(value)
    if key == "delta_zero":
        if isinstance(value, bool):
            return value
        return str(value).lower() in ("1", "true", "yes", "on")
    return value


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        for key, value in load_config_file(args.config).items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown config key {key!r}")
            cfg[key] = _coerce(key, value)
    for key in DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            cfg[key] = _coerce(key, flag)
    cfg["snr0"] = 10.0 ** (cfg["snr0_db"] / 10.0)
    return cfg


def _params(cfg: dict) -> NetworkParams:
    return NetworkParams(m=cfg["m"], alpha=cfg["alpha"], snr0=cfg["snr0"],
                         k0=cfg["k0"], b=cfg["b"])


def cmd_topology(cfg: dict) -> str:
    params = _params(cfg)
    ctx = build_context(params, seed=cfg["seed"], d_max_convention=cfg["dmax"])
    doc = plan_to_jsonable(ctx.topology, ctx.plan, ctx.colorings)
    doc["positions"] = ctx.topology.positions.tolist()
    doc["seed"] = cfg["seed"]
    doc["served_total"] = ctx.admissible.served_total
    doc["k0"] = params.k0
    doc["relay_subs_cluster0"] = ctx.relays.local.tolist()
    return json.dumps(_jsonify(doc), sort_keys=True, indent=2) + "\n"


def _trace_dump(ctx, cal, cfg: dict) -> dict:
    """Tagged components of a single fresh trial, for inspection."""
    batch = draw_batch(cfg["seed"], "trace", 0, 1, ctx.S, ctx.M, ctx.V, cfg["case"])
    fill_exchange_interference(batch, ctx.geom, cfg["mode"], cfg["seed"], "trace",
                               0, ctx.params.snr0, ctx.M, cal.xi1, ctx.params.alpha)
    fill_other_cluster(batch, cal.oth_var, cfg["seed"], "trace", 0)
    out = target_scalars(batch, ctx.delta, ctx.params.snr0, cal.xi1, cal.xi,
                         cal.g, cfg["case"], backend=cfg["backend"])
    doc = {"x0": float(out.x0[0]), "a_raw": [out.a_raw[0].real, out.a_raw[0].imag],
           "z0": [out.z0[0].real, out.z0[0].imag]}
    for name, arr in out.as_dict().items():
        doc[name] = [arr[0].real, arr[0].imag]
    return doc


def cmd_simulate(cfg: dict) -> str:
    params = _params(cfg)
    ctx = build_context(params, seed=cfg["seed"], d_max_convention=cfg["dmax"],
                        delta_zero=cfg["delta_zero"])
    cal = calibrate(ctx, cfg["case"], cfg["mode"])
    result = run_simulation(ctx, cfg["case"], cfg["mode"], cfg["trials"],
                            backend=None if cfg["backend"] == "auto" else cfg["backend"],
                            workers=cfg["parallel"], calibration=cal)
    gain = gain_statistics(result)
    eff = effective_gain_statistics(result)
    breakdown = interference_breakdown(result)
    rate = sinr_beta2(eff, breakdown)
    ledger = ledger_total(ctx.M, params.b, ctx.c0_cluster, ctx.c0_sub)
    served = ctx.admissible.served_total
    sum_rate = network_sum_rate(served, rate.gamma2_bits, params.b, ledger.total)
    i_gmi = gmi_lower_bound(eff.mean_A_phys, eff.var_A_phys, breakdown.total)
    bound = error_prob_bound(i_gmi, rate.gamma2_bits, params.b)

    report = {
        "params": {
            "m": params.m, "M": ctx.M, "n": params.n, "alpha": params.alpha,
            "snr0_db": cfg["snr0_db"], "snr0": params.snr0, "k0": params.k0,
            "b": params.b, "case": cfg["case"], "mode": cfg["mode"],
            "seed": cfg["seed"], "trials": cfg["trials"],
            "delta_zero": cfg["delta_zero"], "d_max": ctx.topology.d_max,
            "d_max_convention": cfg["dmax"],
        },
        "calibration": {
            "xi1": cal.xi1, "xi": cal.xi, "c9": cal.c9, "c10": cal.c10,
            "detection_gain": cal.g, "power_exchange": cal.power_exchange,
            "power_detection": cal.power_detection, "power_ok": cal.power_ok,
            "other_cluster_variance": cal.oth_var,
        },
        "c0": {"cluster": ctx.c0_cluster, "sub": ctx.c0_sub},
        "served_total": served,
        "gain": {
            "mean_A_raw": gain.mean_A_raw, "mean_A_phys": gain.mean_A_phys,
            "var_A_raw": gain.var_A_raw, "var_A_phys": gain.var_A_phys,
            "second_moment_raw": gain.second_moment_raw,
            "trials": gain.trials, "std_error": gain.std_error,
        },
        "effective_gain": {
            "mean_A_raw": eff.mean_A_raw, "mean_A_phys": eff.mean_A_phys,
            "var_A_raw": eff.var_A_raw, "var_A_phys": eff.var_A_phys,
        },
        "breakdown": {
            "w_multiuser": breakdown.w_multiuser, "w_exchange": breakdown.w_exchange,
            "w_n2": breakdown.w_n2, "w_n3": breakdown.w_n3, "w_n4": breakdown.w_n4,
            "w_other": breakdown.w_other, "total": breakdown.total,
            "mode": breakdown.mode,
        },
        "rate": {"beta2": rate.beta2, "gamma2_bits": rate.gamma2_bits, "es": rate.es},
        "gmi_bits": i_gmi,
        "error_bound": {"bound": bound.bound, "vacuous": bound.vacuous},
        "audit": audit_moments(result),
        "ledger": {
            "transmission": ledger.transmission, "exchange": ledger.exchange,
            "detection": ledger.detection, "total": ledger.total,
            "per_b": ledger.total / params.b,
        },
        "network": {
            "sum_rate": sum_rate,
            "rho": rho(sum_rate, isolation_capacity(params.n, params.snr0)),
            "rho_multihop": multihop_baseline(params.n),
            "isolation_capacity": isolation_capacity(params.n, params.snr0),
        },
    }
    if cfg.get("trace"):
        with open(cfg["trace"], "w", encoding="utf-8") as fh:
            json.dump(_jsonify(_trace_dump(ctx, cal, cfg)), fh,
                      sort_keys=True, indent=2)
            fh.write("\n")
    return json.dumps(_jsonify(report), sort_keys=True, indent=2) + "\n"


def _point_row(p) -> str:
    cells = [str(p.m), str(p.M), str(p.n), str(p.served), str(p.c0_cluster),
             str(p.c0_sub)]
    cells += [format(v, ".12g") for v in (p.gamma2_bits, p.sum_rate, p.rho,
                                          p.rho_multihop)]
    cells.append(format(p.total_channel_uses_per_b, ".12g"))
    return ",".join(cells)


def cmd_sweep(cfg: dict) -> str:
    try:
        m_list = [int(tok) for tok in str(cfg["m_list"]).split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad m list {cfg['m_list']!r}") from exc
    if not m_list:
        raise ConfigError("m list is empty")
    base = _params(cfg)
    report = sweep(m_list, base, seed=cfg["seed"], case=cfg["case"],
                   mode=cfg["mode"], trials=cfg["trials"],
                   d_max_convention=cfg["dmax"], delta_zero=cfg["delta_zero"],
                   backend=None if cfg["backend"] == "auto" else cfg["backend"],
                   workers=cfg["parallel"])
    if cfg["format"] == "csv":
        lines = [CSV_HEADER] + [_point_row(p) for p in report.points]
        return "\n".join(lines) + "\n"
    doc = {
        "points": [vars(p) for p in report.points],
        "errors": report.errors,
        "fit_sum_rate": vars(report.fit_sum_rate) if report.fit_sum_rate else None,
        "fit_rho": vars(report.fit_rho) if report.fit_rho else None,
        "config": {k: cfg[k] for k in ("alpha", "snr0_db", "k0", "b", "trials",
                                       "seed", "case", "mode", "m_list")},
    }
    return json.dumps(_jsonify(doc), sort_keys=True, indent=2) + "\n"


def cmd_bench(cfg: dict) -> str:
    params = _params(cfg)
    ctx = build_context(params, seed=cfg["seed"], delta_zero=cfg["delta_zero"])
    cal = calibrate(ctx, cfg["case"], cfg["mode"])
    trials = min(cfg["trials"], 512)
    batch = draw_batch(cfg["seed"], "bench", 0, trials, ctx.S, ctx.M, ctx.V,
                       cfg["case"])
    fill_exchange_interference(batch, ctx.geom, cfg["mode"], cfg["seed"], "bench",
                               0, params.snr0, ctx.M, cal.xi1, params.alpha)
    fill_other_cluster(batch, cal.oth_var, cfg["seed"], "bench", 0)

    timings = {}
    outputs = {}
    backends = ["numpy"] + (["numba"] if HAVE_NUMBA else [])
    for backend in backends:
        args = (batch, ctx.delta, params.snr0, cal.xi1, cal.xi, cal.g, cfg["case"])
        target_scalars(*args, backend=backend)  # warm up (jit, caches)
        best = math.inf
        for _ in range(3):
            t0 = time.perf_counter()
            out = target_scalars(*args, backend=backend)
            best = min(best, time.perf_counter() - t0)
        timings[backend] = best
        outputs[backend] = out
    doc = {
        "m": params.m, "case": cfg["case"], "mode": cfg["mode"], "trials": trials,
        "numba_available": HAVE_NUMBA,
        "seconds": {k: _round12(v) for k, v in timings.items()},
    }
    if len(backends) == 2:
        doc["speedup_numba"] = _round12(timings["numpy"] / timings["numba"])
        dev = float(np.max(np.abs(outputs["numpy"].z0 - outputs["numba"].z0))
                    / max(float(np.max(np.abs(outputs["numpy"].z0))), 1e-300))
        doc["max_rel_deviation"] = _round12(dev)
    return json.dumps(_jsonify(doc), sort_keys=True, indent=2) + "\n"


COMMANDS = {
    "topology": cmd_topology,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.command == "simulate":
            cfg["trace"] = getattr(args, "trace", None)
        text = COMMANDS[args.command](cfg)
        _emit(text, cfg["out"])
        return 0
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ColoringOverflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except InvariantViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
