import math

import numpy as np
import pytest

from conftest import context_for, run_for
from fixedsnr.analysis import (
    GainStatistics,
    InterferenceBreakdown,
    audit_moments,
    effective_gain_statistics,
    error_prob_bound,
    gain_statistics,
    gmi_lower_bound,
    interference_breakdown,
    sinr_beta2,
)
from fixedsnr.engine import MonteCarloResult
from fixedsnr.errors import InvariantViolation


def fake_result(**overrides):
    base = dict(
        trials=4, M=4, nu=1.0, kappa=2.0, calibration=None, case=1,
        mode="synthetic",
        sum_a=4 * (3.0 + 0.0j), sum_abs2_a=4 * 10.0,
        sum_c0=4 * (3.0 + 0.0j), sum_abs2_c0=4 * 10.0,
        part_power={"signal": 4.0, "multiuser": 8.0, "mac_noise": 2.0,
                    "exch_noise": 1.0, "exch_intf": 0.5, "det_noise": 4.0,
                    "other": 0.25},
        sum_abs2_z=80.0, sum_x2=4.0, sum_zx=24.0 + 0.0j,
    )
    base.update(overrides)
    return MonteCarloResult(**base)


def test_gain_statistics_arithmetic():
    g = gain_statistics(fake_result())
    # mean 3, E|a|^2 = 10 -> var = (10-9) * 4/3 with the small-sample factor
    assert g.mean_A_raw == pytest.approx(3.0)
    assert g.mean_A_phys == pytest.approx(6.0)
    assert g.var_A_raw == pytest.approx(4.0 / 3.0)
    assert g.var_A_phys == pytest.approx(4.0 * 4.0 / 3.0)
    assert g.second_moment_raw == pytest.approx(10.0)
    assert g.std_error == pytest.approx(math.sqrt((4.0 / 3.0) / 4))
    assert g.trials == 4


def test_gain_statistics_nu_rescaling():
    g = gain_statistics(fake_result(nu=1.125))
    assert g.mean_A_raw == pytest.approx(3.0 * 1.125)
    assert g.var_A_raw == pytest.approx(1.125**2 * 4.0 / 3.0)
    assert g.second_moment_raw == pytest.approx(1.125**2 * 10.0)
    # physical figures never carry the idealization factor
    assert g.mean_A_phys == pytest.approx(6.0)


def test_effective_stats_read_the_other_sums():
    r = fake_result(sum_c0=4 * (4.0 + 0.0j), sum_abs2_c0=4 * 17.0)
    e = effective_gain_statistics(r)
    assert e.mean_A_raw == pytest.approx(4.0)
    assert e.var_A_raw == pytest.approx(4.0 / 3.0)
    assert gain_statistics(r).mean_A_raw == pytest.approx(3.0)


def test_gain_statistics_rejects_negative_variance():
    with pytest.raises(InvariantViolation):
        GainStatistics(mean_A_raw=1.0, mean_A_phys=1.0, var_A_raw=-1.0,
                       var_A_phys=1.0, second_moment_raw=1.0, trials=10,
                       std_error=0.1)


def test_breakdown_field_mapping():
    w = interference_breakdown(fake_result())
    assert w.w_multiuser == pytest.approx(2.0)
    assert w.w_exchange == pytest.approx(0.125)
    assert w.w_n2 == pytest.approx(0.5)
    assert w.w_n3 == pytest.approx(0.25)
    assert w.w_n4 == pytest.approx(1.0)
    assert w.w_other == pytest.approx(0.0625)
    assert w.total == pytest.approx(2.0 + 0.125 + 0.5 + 0.25 + 1.0 + 0.0625)
    assert w.mode == "synthetic"


def test_gmi_examples():
    assert gmi_lower_bound(1.0, 0.0, 1.0, 1.0) == pytest.approx(1.0)
    assert gmi_lower_bound(2.0, 1.0, 3.0, 1.0) == pytest.approx(1.0)
    huge = gmi_lower_bound(1.0, 1e6, 1.0, 1.0)
    assert huge == pytest.approx(math.log2(1 + 1e-6), rel=1e-6)


def test_gmi_awgn_exact_and_monotone():
    for a, es, n in [(1.0, 1.0, 1.0), (2.5, 0.5, 3.0), (0.3, 1.0, 0.2)]:
        assert gmi_lower_bound(a, 0.0, n, es) == math.log2(1 + a * a * es / n)
    grid = [gmi_lower_bound(2.0, v, 1.0) for v in (0.0, 0.5, 1.0, 5.0, 50.0)]
    assert all(x > y for x, y in zip(grid, grid[1:]))
    grid = [gmi_lower_bound(2.0, 1.0, n) for n in (0.5, 1.0, 2.0, 10.0)]
    assert all(x > y for x, y in zip(grid, grid[1:]))


def test_gmi_argument_validation():
    with pytest.raises(ValueError):
        gmi_lower_bound(1.0, 0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        gmi_lower_bound(1.0, 0.0, 1.0, 1.5)
    with pytest.raises(ValueError):
        gmi_lower_bound(1.0, -0.1, 1.0)
    with pytest.raises(ValueError):
        gmi_lower_bound(1.0, 0.0, 0.0)  # zero noise and zero fluctuation


def test_sinr_beta2_hand_values():
    gain = GainStatistics(mean_A_raw=1.0, mean_A_phys=2.0, var_A_raw=0.0,
                          var_A_phys=0.0, second_moment_raw=1.0, trials=100,
                          std_error=0.0)
    w = InterferenceBreakdown(w_multiuser=0.5, w_exchange=0.25, w_n2=0.125,
                              w_n3=0.0625, w_n4=0.03125, w_other=0.03125,
                              mode="synthetic")
    rate = sinr_beta2(gain, w)
    assert rate.beta2 == pytest.approx(4.0)
    assert rate.gamma2_bits == pytest.approx(0.5 * math.log2(5.0))
    assert rate.es == 1.0
    # the gain fluctuation loads the denominator
    gain2 = GainStatistics(mean_A_raw=1.0, mean_A_phys=2.0, var_A_raw=0.0,
                           var_A_phys=3.0, second_moment_raw=1.0, trials=100,
                           std_error=0.0)
    assert sinr_beta2(gain2, w).beta2 == pytest.approx(1.0)


def test_sinr_beta2_rejects_empty_denominator():
    gain = GainStatistics(mean_A_raw=1.0, mean_A_phys=1.0, var_A_raw=0.0,
                          var_A_phys=0.0, second_moment_raw=1.0, trials=100,
                          std_error=0.0)
    w = InterferenceBreakdown(w_multiuser=0.0, w_exchange=0.0, w_n2=0.0,
                              w_n3=0.0, w_n4=0.0, w_other=0.0, mode="synthetic")
    with pytest.raises(ValueError):
        sinr_beta2(gain, w)


def test_error_bound_examples():
    vac = error_prob_bound(1.0, 1.0, 100)
    assert vac.bound == 1.0 and vac.vacuous
    got = error_prob_bound(0.6, 0.5, 100)
    assert got.bound == pytest.approx(2.0**-10)
    assert not got.vacuous
    with pytest.raises(ValueError):
        error_prob_bound(1.0, 0.5, 0)


def test_error_bound_halves_per_extra_bit():
    # margin exactly 1 bit: every extra block symbol halves the bound
    prev = error_prob_bound(1.5, 0.5, 1).bound
    for b in range(2, 60):
        cur = error_prob_bound(1.5, 0.5, b).bound
        assert cur == prev * 0.5  # bit-exact in binary floating point
        prev = cur


def test_probe_and_effective_agree_without_power_control():
    r = run_for(2, 2, "synthetic", 700, delta_zero=True)
    g, e = gain_statistics(r), effective_gain_statistics(r)
    assert e.mean_A_raw == pytest.approx(g.mean_A_raw, rel=1e-12)
    assert e.var_A_raw == pytest.approx(g.var_A_raw, rel=1e-9)


def test_power_control_shifts_the_operating_gain():
    # at m=2, k0=1 the admissible sources sit close to the cluster, so the
    # perturbed coefficient runs well above the unperturbed probe
    r = run_for(2, 2, "synthetic", 10000)
    ratio = effective_gain_statistics(r).mean_A_raw / gain_statistics(r).mean_A_raw
    assert 1.0 < ratio < 1.3


def test_unit_detection_noise_power():
    r = run_for(2, 2, "synthetic", 10000, delta_zero=True)
    w = interference_breakdown(r)
    assert w.w_n4 == pytest.approx(1.0, rel=0.05)


def test_audit_keys_and_closure():
    a = audit_moments(run_for(2, 2, "synthetic", 10000, delta_zero=True))
    assert set(a.keys()) == {"beta2_breakdown", "beta2_raw", "beta2_gap",
                             "power_closure", "a_phys_regression",
                             "a_phys_direct"}
    assert a["power_closure"] < 0.02
    assert a["beta2_breakdown"] > 0.0


def test_audit_gap_is_estimator_noise():
    """The two SINR estimates converge on each other as trials grow."""
    near = audit_moments(run_for(2, 2, "synthetic", 25000))
    far = audit_moments(run_for(2, 2, "synthetic", 400000))
    assert far["beta2_gap"] < near["beta2_gap"]
    assert far["beta2_gap"] < 0.01
    assert far["a_phys_regression"] == pytest.approx(far["a_phys_direct"],
                                                     rel=0.01)


def test_variance_against_independent_chain_oracle():
    """Engine variance vs a from-scratch re-simulation on fresh streams."""
    from fixedsnr.channel import draw_batch
    from fixedsnr.protocol import raw_gain

    r = run_for(2, 1, "synthetic", 10000, delta_zero=True)
    ctx = context_for(2, delta_zero=True)
    cal = r.calibration
    vals = []
    for chunk in range(10):
        batch = draw_batch(ctx.seed, "var-oracle", chunk, 1000, ctx.S, ctx.M,
                           ctx.V, 1)
        vals.append(raw_gain(batch, 10.0, cal.xi1, cal.xi, cal.g, 1))
    a = ctx.nu * np.concatenate(vals)
    # complex variance: both quadratures count
    var_oracle = float((np.abs(a - a.mean()) ** 2).sum()) / (len(a) - 1)
    assert gain_statistics(r).var_A_raw == pytest.approx(var_oracle, rel=0.05)
