import numpy as np
import pytest

from fixedsnr.engine import build_context, calibrate, run_simulation
from fixedsnr.topology import NetworkParams

# Heavy objects are memoized for the whole session so the acceptance tests
# and the unit tests share contexts, calibrations and Monte Carlo runs.
_CTX = {}
_CAL = {}
_RUN = {}


def params_for(m, k0=1, alpha=3.0, snr0=10.0, b=100):
    return NetworkParams(m=m, alpha=alpha, snr0=snr0, k0=k0, b=b)


def context_for(m, k0=1, delta_zero=False, seed=1):
    key = (m, k0, delta_zero, seed)
    if key not in _CTX:
        _CTX[key] = build_context(params_for(m, k0=k0), seed=seed,
                                  delta_zero=delta_zero)
    return _CTX[key]


def calibration_for(m, case, mode, k0=1, delta_zero=False, seed=1):
    key = (m, k0, delta_zero, seed, case, mode)
    if key not in _CAL:
        ctx = context_for(m, k0=k0, delta_zero=delta_zero, seed=seed)
        _CAL[key] = calibrate(ctx, case, mode)
    return _CAL[key]


def run_for(m, case, mode, trials, k0=1, delta_zero=False, seed=1):
    key = (m, k0, delta_zero, seed, case, mode, trials)
    if key not in _RUN:
        ctx = context_for(m, k0=k0, delta_zero=delta_zero, seed=seed)
        cal = calibration_for(m, case, mode, k0=k0, delta_zero=delta_zero,
                              seed=seed)
        _RUN[key] = run_simulation(ctx, case, mode, trials, calibration=cal)
    return _RUN[key]


@pytest.fixture(scope="session")
def shared():
    """Accessors for the memoized heavy objects."""
    return {
        "params": params_for,
        "context": context_for,
        "calibration": calibration_for,
        "run": run_for,
    }


def brute_force_block_gap(corner_a, corner_b, side):
    """Distance between the closest node pair of two side x side blocks."""
    best = np.inf
    for ax in range(side):
        for ay in range(side):
            for bx in range(side):
                for by in range(side):
                    d = np.hypot(corner_a[0] + ax - corner_b[0] - bx,
                                 corner_a[1] + ay - corner_b[1] - by)
                    best = min(best, d)
    return best
