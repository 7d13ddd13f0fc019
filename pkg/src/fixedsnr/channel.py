"""Scale-invariant fading channel: path gains, power control, fading draws.

Amplitude model: a symbol sent over distance d arrives scaled by
``sqrt(snr0) * (d_max / d)**(alpha/2)`` times a unit-variance complex fade,
so the worst-case (distance d_max) receive SNR is snr0 regardless of network
size.  All distances are in grid units (minimum node spacing 1).
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .rng import draw_complex, substream
from .topology import ClusterPlan, Pairing, cluster_distance


def path_amplitude(d: float, d_max: float, snr0: float, alpha: float) -> float:
    """Deterministic amplitude gain over distance ``d``."""
    if d <= 0:
        raise ValueError(f"distance must be positive, got {d}")
    return math.sqrt(snr0) * (d_max / d) ** (alpha / 2.0)


def power_control_factor(plan: ClusterPlan, pairing_src: int, cluster: int):
    """Transmit power and per-receiver gain perturbations for one source.

    The source transmits with power ``(d(v, center)/d_max)**alpha`` so that
    every node w of the cluster sees amplitude ``sqrt(snr0) * (1 + delta_w)``
    with ``delta_w = (d(v,center)/d(v,w))**(alpha/2) - 1``.  Requires the
    admissibility condition d(v, center) >= k0*M; the perturbations then obey
    ``|delta| <= (1 - 2/k0)**(-alpha/2) - 1 <= alpha/(k0-2)`` once
    ``k0 >= 2 + alpha``.
    """
    params = plan.params
    topo = plan.topology
    center = plan.cluster_center(cluster)
    vpos = topo.positions[pairing_src].astype(float)
    d_c = float(np.linalg.norm(vpos - center))
    if d_c < params.k0 * plan.M:
        raise ValueError(
            f"source {pairing_src} is inadmissible for cluster {cluster}: "
            f"d(v, center)={d_c:.3f} < k0*M={params.k0 * plan.M}"
        )
    tx_power = (d_c / topo.d_max) ** params.alpha
    nodes = plan.cluster_nodes[cluster]
    d_w = np.linalg.norm(topo.positions[nodes] - vpos, axis=1)
    delta_row = (d_c / d_w) ** (params.alpha / 2.0) - 1.0
    return tx_power, delta_row


def delta_matrix(plan: ClusterPlan, cluster: int, rx_nodes: np.ndarray,
                 source_ids: np.ndarray) -> np.ndarray:
    """Perturbations delta[w, v] for given receive nodes and source columns.

    ``source_ids`` entries < 0 denote virtual padding sources, which transmit
    at the reference power and have delta identically 0.
    """
    topo = plan.topology
    alpha = plan.params.alpha
    center = plan.cluster_center(cluster)
    out = np.zeros((rx_nodes.size, source_ids.size))
    real = np.flatnonzero(source_ids >= 0)
    if real.size == 0:
        return out
    vpos = topo.positions[source_ids[real]].astype(float)
    d_c = np.linalg.norm(vpos - center, axis=1)  # (nreal,)
    wpos = topo.positions[rx_nodes].astype(float)
    d_w = np.linalg.norm(wpos[:, None, :] - vpos[None, :, :], axis=2)  # (nw, nreal)
    out[:, real] = (d_c[None, :] / d_w) ** (alpha / 2.0) - 1.0
    return out


def mac_output(H: np.ndarray, delta: np.ndarray, X: np.ndarray, snr0: float,
               noise: np.ndarray, symbol_power: float = 1.0) -> np.ndarray:
    """One multiple-access observation: sqrt(snr0) [H o (1+delta)] X + noise."""
    if symbol_power > 1.0 + 1e-12:
        raise ValueError(f"symbol power {symbol_power} exceeds the unit constraint")
    return math.sqrt(snr0) * ((H * (1.0 + delta)) @ X) + noise


# ---------------------------------------------------------------------------
# interference annuli around a sub-block


def annulus_index(plan: ClusterPlan, s: int, ref: int) -> int | None:
    """Ring index of sub-block ``s`` around ``ref``; None when too close.

    Ring k covers distances [2k*sqrt(2M), 2(k+1)*sqrt(2M)), so index 1 starts
    exactly at the sub-block group separation threshold.
    """
    if s == ref:
        raise ValueError("annulus index is undefined for a block and itself")
    unit = 2.0 * math.sqrt(2.0 * plan.M)
    d = cluster_distance(plan, s, ref, level="sub")
    k = int(d // unit)
    return k if k >= 1 else None


def ring_populations(plan: ClusterPlan, ref: int) -> dict:
    """Count of sub-blocks in each ring around ``ref``."""
    counts: dict = {}
    for s in range(len(plan.sub_nodes)):
        if s == ref:
            continue
        k = annulus_index(plan, s, ref)
        if k is not None:
            counts[k] = counts.get(k, 0) + 1
    return counts


def exchange_ring_bound(M: int, alpha: float, snr0: float, xi1: float,
                        n: int | None = None) -> float:
    """Analytic per-entry upper bound on exchange-interference variance.

    Ring k holds at most 8*pi*k sub-blocks at amplitude ratio at most
    (1/(2k))**(alpha/2) relative to the intra-block link, each forwarding
    power at most (snr0*M**2 + 1)/xi1**2.  Converges for alpha > 2; summed to
    the network-size ring limit when ``n`` is given, else to convergence.
    """
    if alpha <= 2:
        raise ConfigError("ring sum diverges for alpha <= 2")
    kmax = int(math.sqrt(n / (8.0 * M))) - 1 if n is not None else 10_000
    total = 0.0
    for k in range(1, max(kmax, 0) + 1):
        total += 8.0 * math.pi * k / (2.0 * k) ** alpha
    return (snr0 * M * M + 1.0) / (xi1 * xi1) * total


# ---------------------------------------------------------------------------
# exchange interference geometry (exact block positions, not the ring bound)


@dataclass(frozen=True)
class ExchangeInterference:
    """Same-colored sub-blocks that broadcast while a relay sub-block listens.

    ``partners[s]`` lists interfering global sub indices for relay slot s;
    ``ratio[s][j, k, i]`` is the amplitude ratio (d_own/d_other)**(alpha/2)
    at receiver j for broadcast entry k from partner i, after the receiver
    has normalized its own link gain away.
    """

    partners: list
    ratio: list
    ring_index: list

    def synthetic_variance(self, s_local: int, M: int, snr0: float, xi1: float,
                           alpha: float) -> float:
        """Ring-quantized per-entry interference variance for one relay slot.

        Each same-colored partner in ring k contributes at most
        ``(2k)**(-alpha)`` of the forwarded per-entry power (worst intra-block
        distance over the ring's inner radius), and a partner forwards at most
        ``snr0*M**2 + 1`` per entry before the 1/xi1 normalization.
        """
        ks = self.ring_index[s_local]
        fwd = (snr0 * M * M + 1.0) / (xi1 * xi1)
        return fwd * sum((2.0 * k) ** (-alpha) for k in ks)


def local_node_offsets(m: int) -> np.ndarray:
    """Row-major (col, row) offsets of the M nodes inside a sub-block."""
    cols = np.tile(np.arange(m), m)
    rows = np.repeat(np.arange(m), m)
    return np.column_stack([cols, rows])


def exchange_interference_geometry(plan: ClusterPlan, sub_colors: np.ndarray,
                                   relay_subs: np.ndarray) -> ExchangeInterference:
    """Exact geometry of exchange-phase interferers for each relay sub-block.

    During relay sub-block s's broadcast slots, the simultaneously active
    blocks are the same-colored sub-blocks in other clusters.  Entry k of
    the exchange is broadcast by the k-th node everywhere, so the interferer
    for (receiver j, entry k) is the k-th node of each partner block.
    """
    params = plan.params
    m, M, alpha = params.m, plan.M, params.alpha
    offs = local_node_offsets(m).astype(float)
    # intra-block distances d_own[j, k]; the j == k diagonal is unused
    d_own = np.linalg.norm(offs[:, None, :] - offs[None, :, :], axis=2)
    cluster_of_sub = np.repeat(np.arange(plan.n_clusters), M)

    partners, ratios, rings = [], [], []
    for s in relay_subs:
        same = np.flatnonzero(
            (sub_colors == sub_colors[s]) & (cluster_of_sub != cluster_of_sub[s])
        )
        partners.append(same)
        # same-colored blocks sit at least one ring unit away; exact-threshold
        # distances may quantize to ring 0 through fp jitter, so clamp to 1
        rings.append([max(annulus_index(plan, int(sp), int(s)) or 1, 1) for sp in same])
        if same.size == 0:
            ratios.append(np.zeros((M, M, 0)))
            continue
        rx = plan.sub_corners[s] + offs  # (M, 2) receiver positions
        r = np.empty((M, M, same.size))
        for idx, sp in enumerate(same):
            bpos = plan.sub_corners[sp] + offs  # broadcaster positions, entry k
            d_other = np.linalg.norm(rx[:, None, :] - bpos[None, :, :], axis=2)
            r[:, :, idx] = (d_own / d_other) ** (alpha / 2.0)
        # entry j is never broadcast to node j itself
        for j in range(M):
            r[j, j, :] = 0.0
        ratios.append(r)
    return ExchangeInterference(partners=partners, ratio=ratios, ring_index=rings)


def cluster_ring_index(plan: ClusterPlan, a: int, b: int) -> int:
    """Ring index of cluster ``b`` around cluster ``a``, unit 2*sqrt(2)*M."""
    unit = 2.0 * math.sqrt(2.0) * plan.M
    d = cluster_distance(plan, a, b, level="cluster")
    return max(int(d // unit), 0)


def other_cluster_variance(plan: ClusterPlan, cluster_colors: np.ndarray,
                           target_cluster: int, snr0: float, alpha: float,
                           d_max: float, relay_power_total: float) -> float:
    """Detection-phase interference power per dimension at a target node.

    Same-colored clusters run their detection slot simultaneously.  Each is
    charged at its ring's inner radius with its relays' total transmit power
    ``relay_power_total``, so the result upper-bounds the per-node
    interference and is zero exactly when the color class is a singleton.
    """
    M = plan.M
    same = np.flatnonzero(
        (cluster_colors == cluster_colors[target_cluster])
        & (np.arange(plan.n_clusters) != target_cluster)
    )
    var = 0.0
    for cp in same:
        k = max(cluster_ring_index(plan, target_cluster, int(cp)), 1)
        d_inner = 2.0 * math.sqrt(2.0) * k * M
        var += snr0 * (d_max / d_inner) ** alpha * relay_power_total
    return var


def other_cluster_ring_bound(M: int, snr0: float, alpha: float, d_max: float,
                             relay_power_total: float) -> float:
    """Analytic cap on the detection-phase interference power.

    Population of ring k is at most 8*pi*k clusters; rings extend to the
    network edge.  Always at least ``other_cluster_variance`` since that uses
    the true (smaller) populations at the same inner radii.
    """
    if alpha <= 2:
        raise ConfigError("ring sum diverges for alpha <= 2")
    kmax = max(int(math.ceil(d_max / (2.0 * math.sqrt(2.0) * M))), 1)
    total = 0.0
    for k in range(1, kmax + 1):
        d_inner = 2.0 * math.sqrt(2.0) * k * M
        total += 8.0 * math.pi * k * snr0 * (d_max / d_inner) ** alpha
    return total * relay_power_total


# ---------------------------------------------------------------------------
# batched fading draws


@dataclass
class RealizationBatch:
    """All random inputs for a chunk of Monte Carlo trials.

    Leading axis is the trial (one independent channel use per trial).  The
    exchange-interference term ``XI`` is filled in separately because it
    depends on the interference mode.
    """

    X: np.ndarray  # (T, V) real symbols
    H: np.ndarray  # (T, S, M, V) forward fades to relay sub-block nodes
    F: np.ndarray  # (T, S, M, M) exchange fades, diag 1 (case 2) or all 1 (case 1)
    Q: np.ndarray  # (T, S, M, M) detection fades, Q[t,s,i,j]: relay j -> target i
    N1: np.ndarray  # (T, S, M) forward receiver noise
    N2: np.ndarray  # (T, S, M, M) exchange receiver noise, zero diagonal
    XI: np.ndarray  # (T, S, M, M) exchange interference, zero diagonal
    N4: np.ndarray  # (T, M) detection receiver noise
    OTH: np.ndarray  # (T, M) other-cluster interference


def draw_batch(seed: int, purpose: str, chunk: int, trials: int, S: int, M: int,
               V: int, case: int) -> RealizationBatch:
    """Draw one chunk of realizations from named substreams.

    Each array kind has its own stream keyed by (purpose, chunk), so adding
    new draw kinds leaves existing ones untouched.
    """
    def stream(name):
        return substream(seed, f"{purpose}/{name}", chunk)

    X = stream("X").standard_normal((trials, V))
    H = draw_complex(stream("H"), (trials, S, M, V))
    Q = draw_complex(stream("Q"), (trials, S, M, M))
    N1 = draw_complex(stream("N1"), (trials, S, M))
    N2 = draw_complex(stream("N2"), (trials, S, M, M))
    N4 = draw_complex(stream("N4"), (trials, M))
    idx = np.arange(M)
    N2[:, :, idx, idx] = 0.0  # nodes do not re-receive their own observation
    if case == 2:
        F = draw_complex(stream("F"), (trials, S, M, M))
        F[:, :, idx, idx] = 1.0  # a node's own entry is not faded
    else:
        F = np.ones((trials, S, M, M), dtype=complex)
    XI = np.zeros((trials, S, M, M), dtype=complex)
    OTH = np.zeros((trials, M), dtype=complex)
    return RealizationBatch(X=X, H=H, F=F, Q=Q, N1=N1, N2=N2, XI=XI, N4=N4, OTH=OTH)


def draw_fades(seed: int, purpose: str, chunk: int, trials: int, S: int, M: int,
               V: int, case: int):
    """The (H, F, Q) arrays of :func:`draw_batch`, without the noise draws.

    Reads the same named substreams, so values match draw_batch's exactly.
    Used by calibration, which averages over symbols and noise analytically.
    """
    def stream(name):
        return substream(seed, f"{purpose}/{name}", chunk)

    H = draw_complex(stream("H"), (trials, S, M, V))
    Q = draw_complex(stream("Q"), (trials, S, M, M))
    idx = np.arange(M)
    if case == 2:
        F = draw_complex(stream("F"), (trials, S, M, M))
        F[:, :, idx, idx] = 1.0
    else:
        F = np.ones((trials, S, M, M), dtype=complex)
    return H, F, Q


def exchange_variance_profile(geom: ExchangeInterference, mode: str, snr0: float,
                              M: int, alpha: float) -> np.ndarray:
    """Per-entry exchange-interference variance times xi1**2, shape (S, M, M).

    Pure geometry (the 1/xi1**2 of the forwarded power is factored out):
    synthetic mode charges each partner at its ring's inner radius, full mode
    uses the exact per-entry distance ratios; both scale the partner's mean
    forwarded power snr0*M**2 + 1.  Diagonals are zero (no broadcast slot for
    a node's own entry).
    """
    if mode not in ("synthetic", "full"):
        raise ConfigError(f"unknown interference mode {mode!r}")
    S = len(geom.partners)
    fwd = snr0 * M * M + 1.0
    out = np.zeros((S, M, M))
    idx = np.arange(M)
    for s in range(S):
        if mode == "synthetic":
            out[s] = fwd * sum((2.0 * k) ** (-alpha) for k in geom.ring_index[s])
            out[s, idx, idx] = 0.0
        else:
            out[s] = fwd * (geom.ratio[s] ** 2).sum(axis=2)
    return out


def fill_exchange_interference(batch: RealizationBatch, geom: ExchangeInterference,
                               mode: str, seed: int, purpose: str, chunk: int,
                               snr0: float, M: int, xi1: float, alpha: float) -> None:
    """Populate ``batch.XI`` for the requested interference mode.

    full: instantiate every partner block's forward observations (their own
    sources, fades and receiver noise) and propagate them with fresh
    broadcast fades and the exact distance ratios.

    synthetic: independent complex Gaussians with the ring-quantized variance
    (actual partner populations, worst-case forwarded power snr0*M**2 + 1),
    an upper bound on the full-mode term by construction.
    """
    T, S = batch.X.shape[0], batch.H.shape[1]
    if mode == "synthetic":
        rng = substream(seed, f"{purpose}/XIsyn", chunk)
        idx = np.arange(M)
        for s in range(S):
            var = geom.synthetic_variance(s, M, snr0, xi1, alpha)
            if var == 0.0:
                continue
            g = draw_complex(rng, (T, M, M))
            g[:, idx, idx] = 0.0  # a node's own entry sees no broadcast slot
            batch.XI[:, s] = g * math.sqrt(var)
        return
    if mode != "full":
        raise ConfigError(f"unknown interference mode {mode!r}")

    # full mode: partner observations are forward-phase outputs of their own
    # clusters, built from independent worst-case source symbols per cluster
    V = M * M
    all_partners = sorted({int(p) for ps in geom.partners for p in ps})
    if not all_partners:
        return
    cluster_of = {p: p // M for p in all_partners}
    clusters = sorted(set(cluster_of.values()))
    rngX = substream(seed, f"{purpose}/XIsrc", chunk)
    Xp = {c: rngX.standard_normal((T, V)) for c in clusters}
    rngH = substream(seed, f"{purpose}/XIfade", chunk)
    rngN = substream(seed, f"{purpose}/XInoise", chunk)
    Yp = {}
    for p in all_partners:
        Hp = draw_complex(rngH, (T, M, V))
        Np = draw_complex(rngN, (T, M))
        Yp[p] = math.sqrt(snr0) * np.einsum("tkv,tv->tk", Hp, Xp[cluster_of[p]]) + Np
    rngB = substream(seed, f"{purpose}/XIbcast", chunk)
    for s in range(S):
        same = geom.partners[s]
        if same.size == 0:
            continue
        fades = draw_complex(rngB, (T, M, M, same.size))
        acc = np.zeros((T, M, M), dtype=complex)
        for idx, sp in enumerate(same):
            # ratio[j, k, idx] * fade * Y_partner[t, k] / xi1
            acc += geom.ratio[s][None, :, :, idx] * fades[:, :, :, idx] * Yp[int(sp)][:, None, :]
        batch.XI[:, s] = acc / xi1


def fill_other_cluster(batch: RealizationBatch, var: float,
                       seed: int, purpose: str, chunk: int) -> None:
    """Populate ``batch.OTH`` with synthetic other-cluster interference."""
    if var == 0.0:
        return
    T, M = batch.OTH.shape
    g = draw_complex(substream(seed, f"{purpose}/OTH", chunk), (T, M))
    batch.OTH[:] = g * math.sqrt(var)
