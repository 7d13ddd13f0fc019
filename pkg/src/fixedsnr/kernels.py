"""Fused per-trial kernels for the target node's detection output.

The reference chain in :mod:`fixedsnr.protocol` materializes every phase for
all M target nodes; these kernels compute only the quantities the Monte
Carlo estimators need (node 0 of the target sub-block), fused across phases.
Two interchangeable implementations exist: a vectorized numpy one and a
compiled twin.  Selection order: the ``FIXEDSNR_BACKEND`` environment
variable (``auto``, ``numpy``, ``numba``), else ``auto``, which prefers the
compiled twin when importable.
"""

import math
import os
from dataclasses import dataclass

import numpy as np

from .channel import RealizationBatch
from .errors import ConfigError

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    njit = None
    HAVE_NUMBA = False


PART_KEYS = ("signal", "multiuser", "mac_noise", "exch_noise",
             "exch_intf", "det_noise", "other")


@dataclass
class TrialScalars:
    """Per-trial scalars at the target node (all arrays of length T)."""

    a_raw: np.ndarray        # end-to-end target gain, fade units, delta = 0
    c0_raw: np.ndarray       # as-operated target coefficient (power control in)
    signal: np.ndarray       # target-symbol component of z0
    multiuser: np.ndarray    # other-symbol component
    mac_noise: np.ndarray    # forwarded forward-phase receiver noise
    exch_noise: np.ndarray   # forwarded exchange receiver noise
    exch_intf: np.ndarray    # forwarded exchange interference
    det_noise: np.ndarray    # detection receiver noise
    other: np.ndarray        # other-cluster detection interference
    x0: np.ndarray           # transmitted target symbol
    z0: np.ndarray           # full detection output, sum of the six + noise

    def as_dict(self) -> dict:
        return {
            "signal": self.signal, "multiuser": self.multiuser,
            "mac_noise": self.mac_noise, "exch_noise": self.exch_noise,
            "exch_intf": self.exch_intf, "det_noise": self.det_noise,
            "other": self.other,
        }


def resolve_backend(requested: str | None = None) -> str:
    """Pick the kernel implementation: explicit arg, env var, then auto."""
    choice = requested or os.environ.get("FIXEDSNR_BACKEND", "auto")
    if choice not in ("auto", "numpy", "numba"):
        raise ConfigError(f"unknown backend {choice!r}; use auto, numpy or numba")
    if choice == "auto":
        return "numba" if HAVE_NUMBA else "numpy"
    if choice == "numba" and not HAVE_NUMBA:
        raise ConfigError("backend 'numba' requested but numba is not importable")
    return choice


def target_scalars(batch: RealizationBatch, delta: np.ndarray, snr0: float,
                   xi1: float, xi: float, g: float, case: int,
                   backend: str | None = None) -> TrialScalars:
    """Fused chain for node 0: decomposed output plus the raw gain."""
    which = resolve_backend(backend)
    if which == "numba":
        out = _target_scalars_numba(
            batch.X, batch.H, batch.F, batch.Q, batch.N1, batch.N2, batch.XI,
            batch.N4, batch.OTH, delta, snr0, xi1, xi, g, case,
        )
    else:
        out = _target_scalars_numpy(
            batch.X, batch.H, batch.F, batch.Q, batch.N1, batch.N2, batch.XI,
            batch.N4, batch.OTH, delta, snr0, xi1, xi, g, case,
        )
    a, c0, sig, mu, macn, exn, exi, detn, oth = out
    z0 = sig + mu + macn + exn + exi + detn + oth
    return TrialScalars(
        a_raw=a, c0_raw=c0, signal=sig, multiuser=mu, mac_noise=macn,
        exch_noise=exn, exch_intf=exi, det_noise=detn, other=oth,
        x0=batch.X[:, 0].copy(), z0=z0,
    )


def _target_scalars_numpy(X, H, F, Q, N1, N2, XI, N4, OTH, delta,
                          snr0, xi1, xi, g, case):
    M = H.shape[2]
    # beamforming weights: conj detection fades x conj target forward fades
    P = np.einsum("tsij,tski->tsjk", np.conj(Q), np.conj(H[:, :, :, :M]))
    W = Q[:, :, 0, :][:, :, :, None] * P
    if case == 2:
        G = (F * np.conj(F)).real
        NM = np.conj(F)
        R = np.einsum("tsjk,tsjk->tsk", W, G.astype(complex))
    else:
        NM = None
        R = W.sum(axis=2)
    a = np.einsum("tsk,tsk->t", R, H[:, :, :, 0])
    Heff = H * (1.0 + delta)[None]
    C = np.einsum("tsk,tskv->tv", R, Heff)
    c0 = C[:, 0].copy()
    kappa = g * math.sqrt(snr0) / (xi * xi1)
    sig = kappa * c0 * X[:, 0]
    mu = kappa * np.einsum("tv,tv->t", C[:, 1:], X[:, 1:].astype(complex))
    macn = (g / (xi * xi1)) * np.einsum("tsk,tsk->t", R, N1)
    if case == 2:
        exn = (g / xi) * np.einsum("tsjk,tsjk,tsjk->t", W, NM, N2)
        exi = (g / xi) * np.einsum("tsjk,tsjk,tsjk->t", W, NM, XI)
    else:
        exn = (g / xi) * np.einsum("tsjk,tsjk->t", W, N2)
        exi = (g / xi) * np.einsum("tsjk,tsjk->t", W, XI)
    return a, c0, sig, mu, macn, exn, exi, N4[:, 0].copy(), OTH[:, 0].copy()


def _build_numba_kernel():
    @njit(cache=True, nogil=True)
    def kernel(X, H, F, Q, N1, N2, XI, delta, snr0, xi1, xi, g, case):
        T, S, M, V = H.shape
        a = np.zeros(T, dtype=np.complex128)
        c0 = np.zeros(T, dtype=np.complex128)
        sig = np.zeros(T, dtype=np.complex128)
        mu = np.zeros(T, dtype=np.complex128)
        macn = np.zeros(T, dtype=np.complex128)
        exn = np.zeros(T, dtype=np.complex128)
        exi = np.zeros(T, dtype=np.complex128)
        kappa = g * math.sqrt(snr0) / (xi * xi1)
        P = np.empty((M, M), dtype=np.complex128)
        R = np.empty(M, dtype=np.complex128)
        C = np.empty(V, dtype=np.complex128)
        for t in range(T):
            for v in range(V):
                C[v] = 0.0
            for s in range(S):
                for j in range(M):
                    for k in range(M):
                        acc = 0.0 + 0.0j
                        for i in range(M):
                            acc += np.conj(Q[t, s, i, j]) * np.conj(H[t, s, k, i])
                        P[j, k] = acc
                for k in range(M):
                    r = 0.0 + 0.0j
                    for j in range(M):
                        w = Q[t, s, 0, j] * P[j, k]
                        if case == 2:
                            f = F[t, s, j, k]
                            gain = (f.real * f.real + f.imag * f.imag)
                            r += w * gain
                            fc = np.conj(f)
                            exn[t] += w * fc * N2[t, s, j, k]
                            exi[t] += w * fc * XI[t, s, j, k]
                        else:
                            r += w
                            exn[t] += w * N2[t, s, j, k]
                            exi[t] += w * XI[t, s, j, k]
                    R[k] = r
                    a[t] += r * H[t, s, k, 0]
                    macn[t] += r * N1[t, s, k]
                for v in range(V):
                    cv = 0.0 + 0.0j
                    for k in range(M):
                        cv += R[k] * H[t, s, k, v] * (1.0 + delta[s, k, v])
                    C[v] += cv
            c0[t] = C[0]
            sig[t] = kappa * C[0] * X[t, 0]
            acc2 = 0.0 + 0.0j
            for v in range(1, V):
                acc2 += C[v] * X[t, v]
            mu[t] = kappa * acc2
            macn[t] *= g / (xi * xi1)
            exn[t] *= g / xi
            exi[t] *= g / xi
        return a, c0, sig, mu, macn, exn, exi

    return kernel


_NUMBA_KERNEL = _build_numba_kernel() if HAVE_NUMBA else None


def _target_scalars_numba(X, H, F, Q, N1, N2, XI, N4, OTH, delta,
                          snr0, xi1, xi, g, case):
    a, c0, sig, mu, macn, exn, exi = _NUMBA_KERNEL(
        np.ascontiguousarray(X), np.ascontiguousarray(H),
        np.ascontiguousarray(F), np.ascontiguousarray(Q),
        np.ascontiguousarray(N1), np.ascontiguousarray(N2),
        np.ascontiguousarray(XI), np.ascontiguousarray(delta),
        float(snr0), float(xi1), float(xi), float(g), int(case),
    )
    return a, c0, sig, mu, macn, exn, exi, N4[:, 0].copy(), OTH[:, 0].copy()


# ---------------------------------------------------------------------------
# calibration (always numpy so both backends share the same normalizers)


def conditional_power_sums(H: np.ndarray, F: np.ndarray, Q: np.ndarray,
                           delta: np.ndarray, snr0: float, case: int,
                           xivar0: np.ndarray):
    """Noise-and-symbol-averaged transmit powers, conditioned on the fades.

    For each trial the mean forwarded power E|Y|**2 and the mean beamformed
    power E|U|**2 over the symbol/noise draws have closed forms in (H, F, Q);
    summing those over trials gives the same expectations as the empirical
    |Y|**2 / |U|**2 means but without the heavy per-trial power fluctuation,
    so calibration and the power audit converge orders of magnitude faster.

    ``xivar0`` is the per-entry exchange-interference variance times xi1**2
    (see :func:`fixedsnr.channel.exchange_variance_profile`).  Returns sums
    over the chunk's trials of

    * ``fwd[s, k]``: E|Y|**2, equal to snr0 * sum_v |Heff|**2 + 1,
    * ``A[s, j]``: the part of E|U_pre|**2 * xi1**2 that carries the 1/xi1
      normalization (forwarded signal + forwarded MAC noise + interference),
    * ``C[s, j]``: the exchange receiver-noise part, which does not,

    so E|U_pre|**2 = (A / xi1**2 + C) / trials for any xi1.
    """
    M = H.shape[2]
    Heff = H * (1.0 + delta)[None]
    fwd = snr0 * np.sum(np.abs(Heff) ** 2, axis=(0, 3)) + H.shape[0]
    P = np.einsum("tsij,tski->tsjk", np.conj(Q), np.conj(H[:, :, :, :M]))
    if case == 2:
        gamma = (F * np.conj(F)).real
        Pt = P * gamma
        W2 = (np.abs(P) ** 2) * gamma
    else:
        Pt = P
        W2 = np.abs(P) ** 2
    BH = np.einsum("tsjk,tskv->tsjv", Pt, Heff)
    A = snr0 * np.sum(np.abs(BH) ** 2, axis=(0, 3))
    A += np.sum(np.abs(Pt) ** 2, axis=(0, 3))
    A += np.einsum("tsjk,sjk->sj", W2, xivar0)
    offdiag = 1.0 - np.eye(M)
    C = np.einsum("tsjk,jk->sj", W2, offdiag)
    return fwd, A, C


def forward_power_sums(batch: RealizationBatch, delta: np.ndarray,
                       snr0: float) -> np.ndarray:
    """Sums over trials of |Y[t,s,k]|**2, shape (S, M); accumulable by chunk."""
    from .protocol import run_transmission

    Y = run_transmission(batch, delta, snr0)
    return np.sum(np.abs(Y) ** 2, axis=0)


def beamform_power_sums(batch: RealizationBatch, delta: np.ndarray, snr0: float,
                        xi1: float, case: int) -> np.ndarray:
    """Sums over trials of the pre-normalizer beamformed power |U[t,s,j]|**2."""
    from .protocol import run_exchange, run_transmission

    Y = run_transmission(batch, delta, snr0)
    Z = run_exchange(batch, Y, xi1, case)
    M = Z.shape[-1]
    P = np.einsum("tsij,tski->tsjk", np.conj(batch.Q), np.conj(batch.H[:, :, :, :M]))
    U = np.einsum("tsjk,tsjk->tsj", P, Z)
    return np.sum(np.abs(U) ** 2, axis=0)


def calibrate_xi1(batch: RealizationBatch, delta: np.ndarray, snr0: float) -> float:
    """Largest per-node rms forward observation; relays divide by it."""
    pwr = forward_power_sums(batch, delta, snr0) / batch.X.shape[0]
    return float(np.sqrt(pwr.max()))


def calibrate_xi(batch: RealizationBatch, delta: np.ndarray, snr0: float,
                 xi1: float, case: int) -> float:
    """Largest per-relay rms beamformed sum before the detection normalizer."""
    pwr = beamform_power_sums(batch, delta, snr0, xi1, case) / batch.X.shape[0]
    return float(np.sqrt(pwr.max()))


def transmit_power_check(batch: RealizationBatch, delta: np.ndarray, snr0: float,
                         xi1: float, xi: float, case: int, slack: float = 0.05):
    """Mean transmit powers of relays on fresh draws, with the allowed slack.

    Returns (exchange_power, detection_power, ok, detection_power_mean): the
    worst per-node mean powers of the two normalized transmissions, whether
    both respect the unit constraint up to ``slack`` of estimation noise, and
    the across-nodes average detection power (total interfering-cluster power
    estimates scale from it).
    """
    from .protocol import run_exchange, run_transmission

    Y = run_transmission(batch, delta, snr0)
    p_ex = float(np.max(np.mean(np.abs(Y / xi1) ** 2, axis=0)))
    Z = run_exchange(batch, Y, xi1, case)
    M = Z.shape[-1]
    P = np.einsum("tsij,tski->tsjk", np.conj(batch.Q), np.conj(batch.H[:, :, :, :M]))
    U = np.einsum("tsjk,tsjk->tsj", P, Z) / xi
    node_power = np.mean(np.abs(U) ** 2, axis=0)
    p_det = float(node_power.max())
    ok = p_ex <= 1.0 + slack and p_det <= 1.0 + slack
    return p_ex, p_det, ok, float(node_power.mean())
