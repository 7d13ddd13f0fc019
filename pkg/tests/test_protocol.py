import math

import numpy as np
import pytest

from conftest import calibration_for, context_for
from fixedsnr.channel import draw_batch, fill_exchange_interference, fill_other_cluster
from fixedsnr.errors import InvariantViolation
from fixedsnr.protocol import (
    PART_NAMES,
    coherent_detect,
    detection_gain,
    ledger_total,
    raw_gain,
    run_chain,
    run_exchange,
    run_transmission,
    select_relays,
    tagged_chain,
)
from fixedsnr.topology import NetworkParams, build_grid, partition_clusters


def test_ledger_worked_example():
    led = ledger_total(M=4, b=100, c0_cluster=3, c0_sub=3)
    assert led.transmission == 200
    assert led.exchange == 1200
    assert led.detection == 1200
    assert led.total == 2600


def test_ledger_small_block():
    assert ledger_total(M=9, b=10, c0_cluster=2, c0_sub=5).transmission == 40


def test_ledger_single_color_closed_form():
    # with one shared color count c0, total collapses to b*floor(M/2) + 2*c0*M*b
    for M, b, c0 in ((4, 1, 3), (9, 100, 2), (16, 7, 5)):
        led = ledger_total(M, b, c0, c0)
        assert led.total == b * (M // 2) + 2 * c0 * M * b


def test_ledger_rejects_nonpositive():
    with pytest.raises(ValueError):
        ledger_total(0, 100, 1, 1)
    with pytest.raises(ValueError):
        ledger_total(4, 0, 1, 1)
    with pytest.raises(ValueError):
        ledger_total(4, 100, 0, 1)


@pytest.mark.parametrize("m", [2, 3, 4, 5])
def test_select_relays_brute_force(m):
    plan = partition_clusters(build_grid(NetworkParams(m=m, k0=1)))
    sel = select_relays(plan, cluster=0, target_local=0)
    M = plan.M
    tc = plan.sub_center(0)
    want = [sl for sl in range(1, M)
            if np.hypot(*(plan.sub_center(sl) - tc)) >= M / 3.0]
    assert sel.eligible_count == len(want)
    assert sel.local.tolist() == want[: M // 2]
    assert sel.subs.tolist() == [sl for sl in sel.local]
    assert sel.r_fixed == float(M)
    assert 0 not in sel.local.tolist()
    assert len(want) >= math.ceil(M / 2)


def test_select_relays_other_cluster_and_target():
    plan = partition_clusters(build_grid(NetworkParams(m=3, k0=1)))
    sel = select_relays(plan, cluster=2, target_local=5)
    assert np.all(sel.subs == 2 * plan.M + sel.local)
    assert 5 not in sel.local.tolist()
    assert sel.local.size == plan.M // 2


def test_select_relays_invariant_violation(monkeypatch):
    plan = partition_clusters(build_grid(NetworkParams(m=2, k0=1)))
    # collapse every sub-block center: nothing can be M/3 away
    monkeypatch.setattr(type(plan), "sub_center",
                        lambda self, s: np.array([0.0, 0.0]))
    with pytest.raises(InvariantViolation):
        select_relays(plan, cluster=0)


def test_detection_gain_formula():
    assert detection_gain(4, 8.0, 9.0, 3.0) == pytest.approx(3.0 * 2**1.5)
    assert detection_gain(4, 4.0, 9.0, 3.0) == pytest.approx(3.0)


def test_run_transmission_manual():
    batch = draw_batch(3, "p", 0, 5, 2, 4, 16, 1)
    delta = np.zeros((2, 4, 16))
    delta[0, 1, 2] = 0.5
    Y = run_transmission(batch, delta, 4.0)
    want = 2.0 * np.einsum("tskv,tv->tsk", batch.H * (1 + delta)[None], batch.X) + batch.N1
    assert np.allclose(Y, want)
    # noiseless variant drops N1
    Y0 = run_transmission(batch, delta, 4.0, use_n1=False)
    assert np.allclose(Y, Y0 + batch.N1)


def test_run_exchange_own_entry_passthrough():
    """A node's own entry is neither faded nor hit by receiver noise."""
    batch = draw_batch(3, "p", 0, 5, 2, 4, 16, 2)
    Y = run_transmission(batch, np.zeros((2, 4, 16)), 4.0)
    Z = run_exchange(batch, Y, 2.0, case=2)
    diag = np.arange(4)
    assert np.allclose(Z[:, :, diag, diag], Y / 2.0)
    # case 2 post-multiplies by conj(F): off-diagonal weights |F|^2 are real
    Zn = run_exchange(batch, Y, 2.0, case=2, use_n2=False, use_xi=False)
    want = np.conj(batch.F) * batch.F * Y[:, :, None, :] / 2.0
    assert np.allclose(Zn, want)
    # case 1 leaves the raw faded copies
    Z1 = run_exchange(batch, Y, 2.0, case=1, use_n2=False, use_xi=False)
    assert np.allclose(Z1, batch.F * Y[:, :, None, :] / 2.0)


def test_coherent_detect_all_ones():
    """With every fade pinned to 1 the output is a closed-form multiple of sum(Y)."""
    T, S, M, V = 3, 2, 4, 16
    batch = draw_batch(3, "p", 0, T, S, M, V, 1)
    batch.H[:] = 1.0
    batch.Q[:] = 1.0
    batch.N1[:] = 0.0
    X = batch.X
    xi1, xi, g, snr0 = 2.0, 3.0, 5.0, 4.0
    Y = run_transmission(batch, np.zeros((S, M, V)), snr0)
    Z = run_exchange(batch, Y, xi1, case=1, use_n2=False, use_xi=False)
    out = coherent_detect(batch, Z, xi, g, use_n4=False, use_oth=False)
    # P = M (all ones), U_j = M * sum_k Z_jk / xi, Zc_i = g * sum_sj U_j
    sym = X.sum(axis=1)  # sum over columns of X
    want = g * S * M * M * M * math.sqrt(snr0) * sym / (xi * xi1)
    assert np.allclose(out, want[:, None] * np.ones((1, M)))


@pytest.mark.parametrize("case", [1, 2])
def test_tagged_chain_completeness(case):
    ctx = context_for(2)
    cal = calibration_for(2, case, "synthetic")
    batch = draw_batch(ctx.seed, "tag", 0, 64, ctx.S, ctx.M, ctx.V, case)
    fill_exchange_interference(batch, ctx.geom, "synthetic", ctx.seed, "tag", 0,
                               10.0, ctx.M, cal.xi1, 3.0)
    fill_other_cluster(batch, cal.oth_var, ctx.seed, "tag", 0)
    co = tagged_chain(batch, ctx.delta, 10.0, cal.xi1, cal.xi, cal.g, case)
    assert set(co.parts.keys()) == set(PART_NAMES)
    direct = run_chain(batch, ctx.delta, 10.0, cal.xi1, cal.xi, cal.g, case)
    scale = float(np.abs(direct).max())
    assert np.allclose(co.z_coh, direct, atol=1e-10 * scale)
    total = sum(co.parts[name] for name in PART_NAMES)
    assert np.allclose(total, co.z_coh)


def test_case_equivalence_with_unit_exchange_fades():
    """With F pinned to 1, the two detection cases run the same numbers."""
    ctx = context_for(2)
    cal = calibration_for(2, 1, "synthetic")
    batch1 = draw_batch(ctx.seed, "ceq", 0, 32, ctx.S, ctx.M, ctx.V, 1)
    batch2 = draw_batch(ctx.seed, "ceq", 0, 32, ctx.S, ctx.M, ctx.V, 1)
    z1 = run_chain(batch1, ctx.delta, 10.0, cal.xi1, cal.xi, cal.g, 1)
    z2 = run_chain(batch2, ctx.delta, 10.0, cal.xi1, cal.xi, cal.g, 2)
    assert np.array_equal(z1, z2)


def test_raw_gain_mean_and_conventions():
    ctx = context_for(2, delta_zero=True)
    cal = calibration_for(2, 1, "synthetic", delta_zero=True)
    batch = draw_batch(ctx.seed, "rg", 0, 4000, ctx.S, ctx.M, ctx.V, 1)
    a = raw_gain(batch, 10.0, cal.xi1, cal.xi, cal.g, 1)
    M = ctx.M
    want = (M // 2) * M * M
    se = float(np.std(a.real, ddof=1) / math.sqrt(a.size))
    assert abs(float(a.real.mean()) - want) <= 3 * se
    # with delta supplied and delta == 0 the two conventions coincide
    a2 = raw_gain(batch, 10.0, cal.xi1, cal.xi, cal.g, 1, delta=ctx.delta)
    assert np.allclose(a, a2)
