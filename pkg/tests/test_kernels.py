import numpy as np
import pytest

from conftest import calibration_for, context_for
from fixedsnr.channel import (
    draw_batch,
    exchange_variance_profile,
    fill_exchange_interference,
    fill_other_cluster,
)
from fixedsnr.errors import ConfigError
from fixedsnr.kernels import (
    HAVE_NUMBA,
    PART_KEYS,
    beamform_power_sums,
    calibrate_xi,
    calibrate_xi1,
    conditional_power_sums,
    forward_power_sums,
    resolve_backend,
    target_scalars,
    transmit_power_check,
)
from fixedsnr.protocol import PART_NAMES, raw_gain, tagged_chain


def make_inputs(m, case, mode, trials=48):
    ctx = context_for(m)
    cal = calibration_for(m, case, mode)
    batch = draw_batch(ctx.seed, f"kt/{case}/{mode}", 0, trials, ctx.S, ctx.M,
                       ctx.V, case)
    fill_exchange_interference(batch, ctx.geom, mode, ctx.seed,
                               f"kt/{case}/{mode}", 0, 10.0, ctx.M, cal.xi1, 3.0)
    fill_other_cluster(batch, cal.oth_var, ctx.seed, f"kt/{case}/{mode}", 0)
    return ctx, cal, batch


def test_part_keys_match_reference_names():
    assert PART_KEYS == PART_NAMES


def test_resolve_backend(monkeypatch):
    monkeypatch.delenv("FIXEDSNR_BACKEND", raising=False)
    assert resolve_backend() == ("numba" if HAVE_NUMBA else "numpy")
    assert resolve_backend("numpy") == "numpy"
    monkeypatch.setenv("FIXEDSNR_BACKEND", "numpy")
    assert resolve_backend() == "numpy"
    monkeypatch.setenv("FIXEDSNR_BACKEND", "numba")
    if HAVE_NUMBA:
        assert resolve_backend() == "numba"
    monkeypatch.setenv("FIXEDSNR_BACKEND", "cuda")
    with pytest.raises(ConfigError):
        resolve_backend()
    # explicit argument beats the environment
    monkeypatch.setenv("FIXEDSNR_BACKEND", "numpy")
    with pytest.raises(ConfigError):
        resolve_backend("tpu")


@pytest.mark.skipif(not HAVE_NUMBA, reason="compiled twin unavailable")
@pytest.mark.parametrize("case", [1, 2])
@pytest.mark.parametrize("mode", ["synthetic", "full"])
@pytest.mark.parametrize("m", [2, 3])
def test_backend_equivalence(m, case, mode):
    """The compiled kernel reproduces the numpy kernel to rounding error."""
    ctx, cal, batch = make_inputs(m, case, mode)
    o_np = target_scalars(batch, ctx.delta, 10.0, cal.xi1, cal.xi, cal.g, case,
                          backend="numpy")
    o_nb = target_scalars(batch, ctx.delta, 10.0, cal.xi1, cal.xi, cal.g, case,
                          backend="numba")
    for f in ("a_raw", "c0_raw", "signal", "multiuser", "mac_noise",
              "exch_noise", "exch_intf", "det_noise", "other", "x0", "z0"):
        x, y = getattr(o_np, f), getattr(o_nb, f)
        scale = float(np.abs(x).max()) or 1.0
        assert np.allclose(x, y, atol=1e-10 * scale), f


@pytest.mark.parametrize("case", [1, 2])
def test_kernel_against_reference_chain(case):
    """Node-0 scalars equal the unfused per-phase reference."""
    ctx, cal, batch = make_inputs(3, case, "synthetic")
    out = target_scalars(batch, ctx.delta, 10.0, cal.xi1, cal.xi, cal.g, case,
                         backend="numpy")
    co = tagged_chain(batch, ctx.delta, 10.0, cal.xi1, cal.xi, cal.g, case)
    for key in PART_KEYS:
        x = co.parts[key][:, 0]
        y = getattr(out, {"signal": "signal", "multiuser": "multiuser",
                          "mac_noise": "mac_noise", "exch_noise": "exch_noise",
                          "exch_intf": "exch_intf", "det_noise": "det_noise",
                          "other": "other"}[key])
        scale = float(np.abs(x).max()) or 1.0
        assert np.allclose(x, y, atol=1e-10 * scale), key
    assert np.allclose(co.z_coh[:, 0], out.z0,
                       atol=1e-10 * float(np.abs(out.z0).max()))
    probe = raw_gain(batch, 10.0, cal.xi1, cal.xi, cal.g, case)
    assert np.allclose(probe, out.a_raw, atol=1e-10 * float(np.abs(probe).max()))
    eff = raw_gain(batch, 10.0, cal.xi1, cal.xi, cal.g, case, delta=ctx.delta)
    assert np.allclose(eff, out.c0_raw, atol=1e-10 * float(np.abs(eff).max()))


def test_signal_consistent_with_effective_coefficient():
    ctx, cal, batch = make_inputs(2, 2, "synthetic")
    out = target_scalars(batch, ctx.delta, 10.0, cal.xi1, cal.xi, cal.g, 2)
    kappa = cal.g * np.sqrt(10.0) / (cal.xi * cal.xi1)
    assert np.allclose(out.signal, kappa * out.c0_raw * out.x0)


def test_as_dict_covers_the_six_noise_parts():
    ctx, cal, batch = make_inputs(2, 1, "synthetic")
    out = target_scalars(batch, ctx.delta, 10.0, cal.xi1, cal.xi, cal.g, 1)
    d = out.as_dict()
    assert set(d.keys()) == set(PART_KEYS)
    total = sum(d.values())
    assert np.allclose(total, out.z0)


def test_conditional_power_sums_match_empirical():
    """Closed-form noise/symbol averages agree with brute-force batch powers."""
    ctx = context_for(2)
    cal = calibration_for(2, 2, "synthetic")
    prof = exchange_variance_profile(ctx.geom, "synthetic", 10.0, ctx.M, 3.0)
    trials = 20000
    fwd_sum = np.zeros((ctx.S, ctx.M))
    A_sum = np.zeros((ctx.S, ctx.M))
    C_sum = np.zeros((ctx.S, ctx.M))
    emp_fwd = np.zeros((ctx.S, ctx.M))
    emp_det = np.zeros((ctx.S, ctx.M))
    for chunk in range(trials // 2000):
        batch = draw_batch(ctx.seed, "cps", chunk, 2000, ctx.S, ctx.M, ctx.V, 2)
        fill_exchange_interference(batch, ctx.geom, "synthetic", ctx.seed, "cps",
                                   chunk, 10.0, ctx.M, cal.xi1, 3.0)
        f, A, C = conditional_power_sums(batch.H, batch.F, batch.Q, ctx.delta,
                                         10.0, 2, prof)
        fwd_sum += f
        A_sum += A
        C_sum += C
        emp_fwd += forward_power_sums(batch, ctx.delta, 10.0)
        emp_det += beamform_power_sums(batch, ctx.delta, 10.0, cal.xi1, 2)
    cond_det = A_sum / cal.xi1**2 + C_sum
    assert np.allclose(fwd_sum / trials, emp_fwd / trials, rtol=0.05)
    assert np.allclose(cond_det / trials, emp_det / trials, rtol=0.08)


def test_calibrators_take_the_worst_node():
    ctx = context_for(2)
    batch = draw_batch(ctx.seed, "cw", 0, 500, ctx.S, ctx.M, ctx.V, 1)
    xi1 = calibrate_xi1(batch, ctx.delta, 10.0)
    pwr = forward_power_sums(batch, ctx.delta, 10.0) / 500
    assert xi1 == pytest.approx(float(np.sqrt(pwr.max())))
    xi = calibrate_xi(batch, ctx.delta, 10.0, xi1, 1)
    pw2 = beamform_power_sums(batch, ctx.delta, 10.0, xi1, 1) / 500
    assert xi == pytest.approx(float(np.sqrt(pw2.max())))


def test_transmit_power_check_on_calibrating_batch():
    # audited on the very draws that set the normalizers, the worst node
    # hits the constraint exactly
    ctx = context_for(2)
    batch = draw_batch(ctx.seed, "cw", 0, 500, ctx.S, ctx.M, ctx.V, 1)
    xi1 = calibrate_xi1(batch, ctx.delta, 10.0)
    xi = calibrate_xi(batch, ctx.delta, 10.0, xi1, 1)
    p_ex, p_det, ok, p_mean = transmit_power_check(batch, ctx.delta, 10.0,
                                                   xi1, xi, 1)
    assert p_ex == pytest.approx(1.0)
    assert p_det == pytest.approx(1.0)
    assert ok
    assert 0.0 < p_mean <= p_det
