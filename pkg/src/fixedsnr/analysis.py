"""Estimators on top of the Monte Carlo sums: gains, powers, rates.

Two normalizations coexist.  ``*_raw`` gain figures are in fade units and
idealized to exactly M/2 relay sub-blocks (factor nu = (M/2)/floor(M/2) on
amplitudes), so their expectations take closed forms like E(A) = M**3/2 at
zero perturbation.  ``*_phys`` figures keep the measured floor(M/2)-relay
amplitudes and include the deterministic gain prefactors, and are the ones
the SINR and rate computations use together with the (unscaled, empirical)
interference breakdown.
"""

import math
from dataclasses import dataclass

from .engine import MonteCarloResult
from .errors import InvariantViolation


@dataclass(frozen=True)
class GainStatistics:
    """Moments of the end-to-end coherent gain on the target symbol."""

    mean_A_raw: float
    mean_A_phys: float
    var_A_raw: float
    var_A_phys: float
    second_moment_raw: float
    trials: int
    std_error: float  # of mean_A_raw

    def __post_init__(self):
        if self.var_A_raw < 0 or self.var_A_phys < 0:
            raise InvariantViolation("gain variance must be nonnegative")


@dataclass(frozen=True)
class InterferenceBreakdown:
    """Per-dimension empirical powers at the target node, by origin.

    w_n2 is the forwarded forward-phase receiver noise, w_n3 the forwarded
    exchange receiver noise, w_n4 the unamplified detection receiver noise
    (unit variance by construction), w_other the other-cluster detection
    interference.  ``total`` sums all six.
    """

    w_multiuser: float
    w_exchange: float
    w_n2: float
    w_n3: float
    w_n4: float
    w_other: float
    mode: str

    @property
    def total(self) -> float:
        return (self.w_multiuser + self.w_exchange + self.w_n2
                + self.w_n3 + self.w_n4 + self.w_other)


@dataclass(frozen=True)
class RateResult:
    beta2: float
    gamma2_bits: float
    es: float


@dataclass(frozen=True)
class ErrorBound:
    bound: float
    vacuous: bool


def _moments_to_stats(result: MonteCarloResult, sum_c: complex,
                      sum_abs2: float) -> GainStatistics:
    T = result.trials
    mean_c = sum_c / T
    e2 = sum_abs2 / T
    var = max(e2 - abs(mean_c) ** 2, 0.0)
    if T > 1:
        var *= T / (T - 1)
    nu2 = result.nu * result.nu
    return GainStatistics(
        mean_A_raw=result.nu * mean_c.real,
        mean_A_phys=result.kappa * mean_c.real,
        var_A_raw=nu2 * var,
        var_A_phys=result.kappa * result.kappa * var,
        second_moment_raw=nu2 * e2,
        trials=T,
        std_error=result.nu * math.sqrt(var / T),
    )


def gain_statistics(result: MonteCarloResult) -> GainStatistics:
    """Moments of the unperturbed probe gain (power control stripped).

    This is the figure with the closed-form expectation M**3/2 in raw units;
    it matches the as-operated gain whenever power control is off.
    """
    return _moments_to_stats(result, result.sum_a, result.sum_abs2_a)


def effective_gain_statistics(result: MonteCarloResult) -> GainStatistics:
    """Moments of the as-operated target coefficient.

    Unlike the probe gain this includes the power-control perturbations on
    the target column, so it is the gain the detector actually sees; rate
    and SINR figures must use it.
    """
    return _moments_to_stats(result, result.sum_c0, result.sum_abs2_c0)


def interference_breakdown(result: MonteCarloResult) -> InterferenceBreakdown:
    T = result.trials
    p = result.part_power
    return InterferenceBreakdown(
        w_multiuser=p["multiuser"] / T,
        w_exchange=p["exch_intf"] / T,
        w_n2=p["mac_noise"] / T,
        w_n3=p["exch_noise"] / T,
        w_n4=p["det_noise"] / T,
        w_other=p["other"] / T,
        mode=result.mode,
    )


def gmi_lower_bound(a_hat: float, gain_var: float, noise_power: float,
                    es: float = 1.0) -> float:
    """Achievable rate treating gain fluctuation as extra Gaussian noise.

    Exact AWGN capacity log2(1 + a^2 es / N) when ``gain_var`` is zero.
    """
    if es <= 0 or es > 1.0 + 1e-12:
        raise ValueError(f"symbol energy must be in (0, 1], got {es}")
    if gain_var < 0:
        raise ValueError("gain variance must be nonnegative")
    den = noise_power + es * gain_var
    if den <= 0:
        raise ValueError("noise plus fluctuation power must be positive")
    return math.log2(1.0 + a_hat * a_hat * es / den)


def sinr_beta2(gain: GainStatistics, breakdown: InterferenceBreakdown,
               es: float = 1.0) -> RateResult:
    """Operating SINR and per-symbol rate of the detection output.

    Uses the physical-gain moments with the empirical breakdown; the rate
    takes the half factor because the symbols are real in a complex channel.
    """
    den = breakdown.total + es * gain.var_A_phys
    if den <= 0:
        raise ValueError("total noise power must be positive")
    beta2 = gain.mean_A_phys**2 * es / den
    return RateResult(beta2=beta2, gamma2_bits=0.5 * math.log2(1.0 + beta2), es=es)


def error_prob_bound(i_bits: float, gamma_bits: float, b: int) -> ErrorBound:
    """Block error bound min(1, 2**(-b (I - gamma))), flagged when vacuous."""
    if b < 1:
        raise ValueError("block length must be positive")
    margin = i_bits - gamma_bits
    if margin <= 0:
        return ErrorBound(bound=1.0, vacuous=True)
    return ErrorBound(bound=min(1.0, 2.0 ** (-b * margin)), vacuous=False)


def audit_moments(result: MonteCarloResult) -> dict:
    """Tagging consistency: beta2 two ways, plus power closure.

    ``beta2_breakdown`` uses the decomposed quantities (as-operated gain
    moments and per-part powers); ``beta2_raw`` uses only the undecomposed
    output: a regression gain estimate E(z x)/E(x^2) and the residual power
    E|z|^2 - a^2 E(x^2).  Both estimate the same population SINR, so their
    relative gap measures the correctness of the tagging (shrinking with
    trials as pure estimator noise).
    """
    T = result.trials
    gain = effective_gain_statistics(result)
    breakdown = interference_breakdown(result)
    beta2_breakdown = sinr_beta2(gain, breakdown).beta2

    es_hat = result.sum_x2 / T
    a_reg = (result.sum_zx / result.sum_x2).real
    z2 = result.sum_abs2_z / T
    den_raw = z2 - a_reg * a_reg * es_hat
    beta2_raw = a_reg * a_reg * es_hat / den_raw if den_raw > 0 else math.inf

    parts2 = sum(result.part_power.values()) / T
    return {
        "beta2_breakdown": beta2_breakdown,
        "beta2_raw": beta2_raw,
        "beta2_gap": abs(beta2_breakdown - beta2_raw) / beta2_breakdown,
        "power_closure": abs(z2 - parts2) / max(z2, 1e-300),
        "a_phys_regression": a_reg,
        "a_phys_direct": gain.mean_A_phys,
    }
