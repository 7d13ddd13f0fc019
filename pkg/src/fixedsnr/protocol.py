"""Three-phase relaying protocol: forward, local exchange, coherent detection.

A cluster round serves one source symbol per relay sub-block slot.  Phase
timings are accounted in channel uses per source symbol block of length b:

* forward:    ``b * floor(M/2)`` uses (one slot per relay sub-block),
* exchange:   ``c0_sub * M * b`` uses (M broadcast slots per color group),
* detection:  ``c0_cluster * M * b`` uses.

The reference chain in this module mirrors the three phases with explicit
per-phase arrays.  It is deliberately unfused and is used as the oracle the
optimized kernels are checked against.
"""

import math
from dataclasses import dataclass

import numpy as np

from .channel import RealizationBatch
from .errors import InvariantViolation
from .topology import ClusterPlan


@dataclass(frozen=True)
class ChannelUseLedger:
    """Channel uses consumed by one cluster round at block length b."""

    transmission: int
    exchange: int
    detection: int

    @property
    def total(self) -> int:
        return self.transmission + self.exchange + self.detection


def ledger_total(M: int, b: int, c0_cluster: int, c0_sub: int) -> ChannelUseLedger:
    """Channel-use accounting for one round serving floor(M/2) symbols."""
    if M < 1 or b < 1 or c0_cluster < 1 or c0_sub < 1:
        raise ValueError("ledger arguments must be positive")
    return ChannelUseLedger(
        transmission=b * (M // 2),
        exchange=c0_sub * M * b,
        detection=c0_cluster * M * b,
    )


# ---------------------------------------------------------------------------
# relay sub-block selection


@dataclass(frozen=True)
class RelaySelection:
    """Relay sub-blocks chosen inside one cluster.

    ``subs`` are global sub-block indices, ``local`` their cluster-local
    indices, ascending.  ``r_fixed`` is the common nominal detection distance
    all relays use for their transmit gain.
    """

    subs: np.ndarray
    local: np.ndarray
    eligible_count: int
    r_fixed: float


def select_relays(plan: ClusterPlan, cluster: int, target_local: int = 0) -> RelaySelection:
    """Pick floor(M/2) relay sub-blocks at center distance >= M/3 from the target.

    Eligibility uses sub-block center distance; at least ceil(M/2) sub-blocks
    of every cluster satisfy it, so the truncation to the floor(M/2) lowest
    local indices always succeeds.
    """
    M = plan.M
    target_global = cluster * M + target_local
    tc = plan.sub_center(target_global)
    eligible = []
    for sl in range(M):
        if sl == target_local:
            continue
        d = float(np.linalg.norm(plan.sub_center(cluster * M + sl) - tc))
        if d >= M / 3.0:
            eligible.append(sl)
    need = M // 2
    if len(eligible) < math.ceil(M / 2):
        raise InvariantViolation(
            f"cluster {cluster}: only {len(eligible)} sub-blocks at center "
            f"distance >= M/3 from target {target_local}; expected >= {math.ceil(M / 2)}"
        )
    local = np.array(eligible[:need], dtype=np.int64)
    return RelaySelection(
        subs=cluster * M + local,
        local=local,
        eligible_count=len(eligible),
        r_fixed=float(M),
    )


def detection_gain(M: int, d_max: float, snr0: float, alpha: float) -> float:
    """Common relay transmit amplitude for the detection hop at distance M."""
    return math.sqrt(snr0) * (d_max / M) ** (alpha / 2.0)


# ---------------------------------------------------------------------------
# reference per-phase chain (oracle for the fused kernels)


@dataclass
class CoherentOutput:
    """Full detection output and its additive decomposition.

    Every array is (trials, M) complex over the target sub-block's nodes.
    ``parts`` holds the seven additive contributions; their sum equals
    ``z_coh`` to floating-point accuracy.
    """

    z_coh: np.ndarray
    parts: dict


PART_NAMES = ("signal", "multiuser", "mac_noise", "exch_noise",
              "exch_intf", "det_noise", "other")


def run_transmission(batch: RealizationBatch, delta: np.ndarray, snr0: float,
                     X: np.ndarray | None = None, use_n1: bool = True) -> np.ndarray:
    """Forward-phase observations Y[t, s, k] at the relay sub-block nodes."""
    X = batch.X if X is None else X
    Heff = batch.H * (1.0 + delta)[None, :, :, :]
    Y = math.sqrt(snr0) * np.einsum("tskv,tv->tsk", Heff, X)
    if use_n1:
        Y = Y + batch.N1
    return Y


def run_exchange(batch: RealizationBatch, Y: np.ndarray, xi1: float, case: int,
                 use_n2: bool = True, use_xi: bool = True) -> np.ndarray:
    """Exchange-phase vectors Z[t, s, j, k] held at relay node j after slot k.

    Node j receives every other node's normalized observation over the
    exchange link and keeps its own entry unfaded and noiseless.  In case 2
    each receiver multiplies entry k by the conjugate of its own link fade,
    which keeps the forwarded term's weight real and nonnegative.
    """
    Z = batch.F * Y[:, :, None, :] / xi1
    if use_n2:
        Z = Z + batch.N2
    if use_xi:
        Z = Z + batch.XI
    if case == 2:
        Z = np.conj(batch.F) * Z
    return Z


def coherent_detect(batch: RealizationBatch, Z: np.ndarray, xi: float, g: float,
                    use_n4: bool = True, use_oth: bool = True) -> np.ndarray:
    """Detection-phase output Z_coh[t, i] at the target sub-block's nodes.

    Relay node j beamforms its exchanged vector with the conjugate product
    of its detection fades and the target sub-block's forward fades, then
    all relays transmit simultaneously with common amplitude g.
    """
    M = Z.shape[-1]
    # P[t,s,j,k] = sum_i conj(Q[t,s,i,j]) * conj(H[t,s,k,i]) over target columns
    P = np.einsum("tsij,tski->tsjk", np.conj(batch.Q), np.conj(batch.H[:, :, :, :M]))
    U = np.einsum("tsjk,tsjk->tsj", P, Z) / xi
    Zc = g * np.einsum("tsij,tsj->ti", batch.Q, U)
    if use_n4:
        Zc = Zc + batch.N4
    if use_oth:
        Zc = Zc + batch.OTH
    return Zc


def run_chain(batch: RealizationBatch, delta: np.ndarray, snr0: float,
              xi1: float, xi: float, g: float, case: int) -> np.ndarray:
    """All three phases end to end."""
    Y = run_transmission(batch, delta, snr0)
    Z = run_exchange(batch, Y, xi1, case)
    return coherent_detect(batch, Z, xi, g)


def tagged_chain(batch: RealizationBatch, delta: np.ndarray, snr0: float,
                 xi1: float, xi: float, g: float, case: int) -> CoherentOutput:
    """Chain output split into its seven additive parts.

    The chain is linear in the symbols and in every noise input once the
    fades are fixed, so each part is obtained by running the chain with all
    other inputs zeroed.
    """
    T, V = batch.X.shape
    M = batch.H.shape[2]

    def piece(X=None, n1=False, n2=False, xi_=False, n4=False, oth=False):
        Xz = np.zeros((T, V)) if X is None else X
        Y = run_transmission(batch, delta, snr0, X=Xz, use_n1=False)
        if n1:
            Y = Y + batch.N1
        Z = run_exchange(batch, Y, xi1, case, use_n2=n2, use_xi=xi_)
        return coherent_detect(batch, Z, xi, g, use_n4=n4, use_oth=oth)

    Xs = np.zeros_like(batch.X)
    Xs[:, 0] = batch.X[:, 0]
    Xm = batch.X.copy()
    Xm[:, 0] = 0.0
    parts = {
        "signal": piece(X=Xs),
        "multiuser": piece(X=Xm),
        "mac_noise": piece(n1=True),
        "exch_noise": piece(n2=True),
        "exch_intf": piece(xi_=True),
        "det_noise": np.broadcast_to(batch.N4, (T, M)).copy(),
        "other": np.broadcast_to(batch.OTH, (T, M)).copy(),
    }
    z = np.zeros((T, M), dtype=complex)
    for name in PART_NAMES:
        z = z + parts[name]
    return CoherentOutput(z_coh=z, parts=parts)


def raw_gain(batch: RealizationBatch, snr0: float, xi1: float, xi: float,
             g: float, case: int, delta: np.ndarray | None = None) -> np.ndarray:
    """Per-trial end-to-end gain on the target symbol, fade units.

    Computed by pushing a unit target symbol through the noiseless chain and
    stripping the deterministic scale g * sqrt(snr0) / (xi * xi1).  By
    default the power-control perturbation is zeroed (the probe convention,
    expectation floor(M/2) * M**2); pass ``delta`` for the as-operated
    coefficient instead.
    """
    T, V = batch.X.shape
    S, M = batch.H.shape[1], batch.H.shape[2]
    X1 = np.zeros((T, V))
    X1[:, 0] = 1.0
    delta0 = np.zeros((S, M, V)) if delta is None else delta
    Y = run_transmission(batch, delta0, snr0, X=X1, use_n1=False)
    Z = run_exchange(batch, Y, xi1, case, use_n2=False, use_xi=False)
    Zc = coherent_detect(batch, Z, xi, g, use_n4=False, use_oth=False)
    kappa = g * math.sqrt(snr0) / (xi * xi1)
    return Zc[:, 0] / kappa
