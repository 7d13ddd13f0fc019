"""Monte Carlo engine: scenario assembly, calibration, chunked estimation.

A scenario fixes the topology, the source pairing, one target cluster with
its relay sub-blocks, and the worst-case source layout: all M**2 cluster
observations are modeled as active unit-power columns.  Columns whose paired
source is admissible carry that source's power-control perturbations; the
rest (inadmissible, dropped, or when delta is forced off) are virtual
worst-case columns with zero perturbation.

Estimation runs in fixed-size chunks with one named substream per
(array kind, chunk), so results are reproducible to the byte for a given
seed and independent of worker scheduling.
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .channel import (
    delta_matrix,
    draw_batch,
    draw_fades,
    exchange_interference_geometry,
    exchange_variance_profile,
    fill_exchange_interference,
    fill_other_cluster,
    other_cluster_variance,
)
from .errors import ConfigError
from .kernels import (
    PART_KEYS,
    conditional_power_sums,
    target_scalars,
)
from .protocol import RelaySelection, detection_gain, select_relays
from .topology import (
    AdmissibleSources,
    ClusterPlan,
    GridTopology,
    NetworkParams,
    Pairing,
    admissible_sources,
    build_grid,
    color_groups,
    pair_sources,
    partition_clusters,
)

FULL_MODE_MAX_M = 9
CALIBRATION_TRIALS = 2000
POWER_CHECK_TRIALS = 4000


def chunk_size_for(M: int) -> int:
    if M <= 9:
        return 256
    if M <= 16:
        return 128
    return 32


@dataclass
class SimulationContext:
    """Everything deterministic about one scenario."""

    params: NetworkParams
    topology: GridTopology
    pairing: Pairing
    plan: ClusterPlan
    colorings: dict
    admissible: AdmissibleSources
    relays: RelaySelection
    source_ids: np.ndarray  # (V,) transmit node per column, -1 = virtual
    delta: np.ndarray  # (S, M, V) power-control perturbations at relay nodes
    geom: object
    seed: int
    target_cluster: int = 0
    target_local: int = 0

    @property
    def M(self) -> int:
        return self.params.M

    @property
    def S(self) -> int:
        return self.relays.subs.size

    @property
    def V(self) -> int:
        return self.M * self.M

    @property
    def c0_cluster(self) -> int:
        return self.colorings["cluster"].c0

    @property
    def c0_sub(self) -> int:
        return self.colorings["sub_cluster"].c0

    @property
    def nu(self) -> float:
        """Ideal-to-actual relay count ratio (M/2) / floor(M/2)."""
        return (self.M / 2.0) / (self.M // 2)


def build_context(params: NetworkParams, seed: int = 1,
                  d_max_convention: str = "diagonal",
                  delta_zero: bool = False) -> SimulationContext:
    """Assemble the full scenario for the first cluster's first sub-block."""
    topology = build_grid(params, d_max_convention)
    pairing = pair_sources(topology, seed)
    plan = partition_clusters(topology)
    colorings = {
        "cluster": color_groups(plan, "cluster"),
        "sub_cluster": color_groups(plan, "sub_cluster"),
    }
    admissible = admissible_sources(plan, pairing, params)
    relays = select_relays(plan, cluster=0, target_local=0)

    M, V = params.M, params.M * params.M
    target_sub_nodes = plan.sub_nodes[0]
    rest = [int(w) for w in plan.cluster_nodes[0] if w not in set(target_sub_nodes.tolist())]
    ordered_nodes = [int(w) for w in target_sub_nodes] + rest
    ok = set() if delta_zero else {int(v) for v in admissible.sources[0]}
    source_ids = np.full(V, -1, dtype=np.int64)
    for col, w in enumerate(ordered_nodes):
        v = pairing.src_of[w]
        if v in ok:
            source_ids[col] = v

    S = relays.subs.size
    delta = np.zeros((S, M, V))
    for si, rs in enumerate(relays.subs):
        delta[si] = delta_matrix(plan, 0, plan.sub_nodes[int(rs)], source_ids)

    geom = exchange_interference_geometry(
        plan, colorings["sub_cluster"].color_of, relays.subs
    )
    return SimulationContext(
        params=params, topology=topology, pairing=pairing, plan=plan,
        colorings=colorings, admissible=admissible, relays=relays,
        source_ids=source_ids, delta=delta, geom=geom, seed=seed,
    )


@dataclass
class Calibration:
    """Normalizers and gains shared by every chunk of a run."""

    xi1: float
    xi: float
    g: float
    c9: float   # xi1 / M
    c10: float  # xi / M**2
    power_exchange: float
    power_detection: float
    power_ok: bool
    oth_var: float


def _chunk_bounds(trials: int, size: int) -> list:
    return [(i, min(size, trials - i * size))
            for i in range((trials + size - 1) // size)]


def _fade_power_sums(ctx: SimulationContext, case: int, purpose: str,
                     trials: int, xivar0: np.ndarray):
    """Chunked conditional power sums over ``trials`` fade draws."""
    snr0, M = ctx.params.snr0, ctx.M
    fwd = np.zeros((ctx.S, M))
    A = np.zeros((ctx.S, M))
    C = np.zeros((ctx.S, M))
    for i, t in _chunk_bounds(trials, chunk_size_for(M)):
        H, F, Q = draw_fades(ctx.seed, purpose, i, t, ctx.S, M, ctx.V, case)
        df, dA, dC = conditional_power_sums(H, F, Q, ctx.delta, snr0, case, xivar0)
        fwd += df
        A += dA
        C += dC
    return fwd, A, C


def calibrate(ctx: SimulationContext, case: int, mode: str,
              trials: int = CALIBRATION_TRIALS, slack: float = 0.05) -> Calibration:
    """Measure the two transmit normalizers, then audit them on fresh draws.

    Always computed with the numpy reference path so both kernel backends
    share identical normalizers.  xi1 is the largest per-node forward
    observation power; xi the largest per-relay beamformed power (which
    includes the exchange-interference variance of the requested mode).
    Powers are noise-averaged conditional means over the fade draws, chunked
    so memory stays flat in the trial count.
    """
    _check_mode(ctx, mode)
    params = ctx.params
    snr0, alpha, M = params.snr0, params.alpha, ctx.M
    xivar0 = exchange_variance_profile(ctx.geom, mode, snr0, M, alpha)
    # base draws share a purpose across modes so xi1 (mode-independent by
    # construction) calibrates identically for both
    purpose = f"cal/c{case}"
    fwd, A, C = _fade_power_sums(ctx, case, purpose, trials, xivar0)
    xi1 = float(np.sqrt(fwd.max() / trials))
    xi = float(np.sqrt((A / xi1**2 + C).max() / trials))
    g = detection_gain(M, ctx.topology.d_max, snr0, alpha)

    fwd, A, C = _fade_power_sums(ctx, case, purpose + "/audit",
                                 POWER_CHECK_TRIALS, xivar0)
    p_ex = float(fwd.max() / POWER_CHECK_TRIALS / xi1**2)
    node_power = (A / xi1**2 + C) / POWER_CHECK_TRIALS / xi**2
    p_det = float(node_power.max())
    p_det_mean = float(node_power.mean())
    ok = p_ex <= 1.0 + slack and p_det <= 1.0 + slack

    relay_power_total = p_det_mean * ctx.S * M
    oth = other_cluster_variance(
        ctx.plan, ctx.colorings["cluster"].color_of, ctx.target_cluster,
        snr0, alpha, ctx.topology.d_max, relay_power_total,
    )
    return Calibration(
        xi1=xi1, xi=xi, g=g, c9=xi1 / M, c10=xi / (M * M),
        power_exchange=p_ex, power_detection=p_det, power_ok=ok, oth_var=oth,
    )


@dataclass
class MonteCarloResult:
    """Raw moment sums of one run, merged deterministically over chunks."""

    trials: int
    M: int
    nu: float
    kappa: float
    calibration: Calibration
    case: int
    mode: str
    sum_a: complex
    sum_abs2_a: float
    sum_c0: complex        # as-operated target coefficient (power control in)
    sum_abs2_c0: float
    part_power: dict       # name -> sum over trials of |part|^2
    sum_abs2_z: float
    sum_x2: float
    sum_zx: complex

    @property
    def mean_a(self) -> complex:
        return self.sum_a / self.trials

    @property
    def mean_abs2_a(self) -> float:
        return self.sum_abs2_a / self.trials


def _check_mode(ctx: SimulationContext, mode: str) -> None:
    if mode not in ("full", "synthetic"):
        raise ConfigError(f"unknown interference mode {mode!r}")
    if mode == "full" and ctx.M > FULL_MODE_MAX_M:
        raise ConfigError(
            f"full interference mode instantiates every partner block and is "
            f"limited to M <= {FULL_MODE_MAX_M}; M={ctx.M} needs mode=synthetic"
        )


def _chunk_sums(ctx: SimulationContext, cal: Calibration, case: int, mode: str,
                chunk: int, trials: int, backend: str | None) -> dict:
    params = ctx.params
    purpose = f"mc/c{case}/{mode}"
    batch = draw_batch(ctx.seed, purpose, chunk, trials, ctx.S, ctx.M, ctx.V, case)
    fill_exchange_interference(batch, ctx.geom, mode, ctx.seed, purpose, chunk,
                               params.snr0, ctx.M, cal.xi1, params.alpha)
    fill_other_cluster(batch, cal.oth_var, ctx.seed, purpose, chunk)
    out = target_scalars(batch, ctx.delta, params.snr0, cal.xi1, cal.xi, cal.g,
                         case, backend=backend)
    sums = {
        "sum_a": complex(out.a_raw.sum()),
        "sum_abs2_a": float((np.abs(out.a_raw) ** 2).sum()),
        "sum_c0": complex(out.c0_raw.sum()),
        "sum_abs2_c0": float((np.abs(out.c0_raw) ** 2).sum()),
        "sum_abs2_z": float((np.abs(out.z0) ** 2).sum()),
        "sum_x2": float((out.x0**2).sum()),
        "sum_zx": complex((out.z0 * out.x0).sum()),
    }
    for name, arr in out.as_dict().items():
        sums[name] = float((np.abs(arr) ** 2).sum())
    return sums


def run_simulation(ctx: SimulationContext, case: int, mode: str, trials: int,
                   backend: str | None = None, workers: int | None = None,
                   calibration: Calibration | None = None) -> MonteCarloResult:
    """Chunked Monte Carlo estimate of the target node's output moments.

    ``workers`` threads process chunks concurrently (default: available
    cores); results merge in chunk order, so the worker count never changes
    the output.
    """
    if case not in (1, 2):
        raise ConfigError(f"case must be 1 or 2, got {case}")
    if trials < 1:
        raise ConfigError("trials must be positive")
    _check_mode(ctx, mode)
    cal = calibration or calibrate(ctx, case, mode)

    size = chunk_size_for(ctx.M)
    bounds = [(i, min(size, trials - i * size))
              for i in range((trials + size - 1) // size)]

    nw = workers if workers is not None else (os.cpu_count() or 1)
    if nw > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=min(nw, len(bounds))) as pool:
            futures = [pool.submit(_chunk_sums, ctx, cal, case, mode, i, t, backend)
                       for i, t in bounds]
            per_chunk = [f.result() for f in futures]
    else:
        per_chunk = [_chunk_sums(ctx, cal, case, mode, i, t, backend)
                     for i, t in bounds]

    # merge in chunk order with exact summation, independent of scheduling
    def fsum_key(key):
        return math.fsum(c[key] for c in per_chunk)

    part_power = {name: fsum_key(name) for name in PART_KEYS}
    sum_a = complex(
        math.fsum(c["sum_a"].real for c in per_chunk),
        math.fsum(c["sum_a"].imag for c in per_chunk),
    )
    sum_zx = complex(
        math.fsum(c["sum_zx"].real for c in per_chunk),
        math.fsum(c["sum_zx"].imag for c in per_chunk),
    )
    sum_c0 = complex(
        math.fsum(c["sum_c0"].real for c in per_chunk),
        math.fsum(c["sum_c0"].imag for c in per_chunk),
    )
    kappa = cal.g * math.sqrt(ctx.params.snr0) / (cal.xi * cal.xi1)
    return MonteCarloResult(
        trials=trials, M=ctx.M, nu=ctx.nu, kappa=kappa,
        calibration=cal, case=case, mode=mode,
        sum_a=sum_a,
        sum_abs2_a=fsum_key("sum_abs2_a"),
        sum_c0=sum_c0,
        sum_abs2_c0=fsum_key("sum_abs2_c0"),
        part_power=part_power,
        sum_abs2_z=fsum_key("sum_abs2_z"),
        sum_x2=fsum_key("sum_x2"),
        sum_zx=sum_zx,
    )
