import math

import numpy as np
import pytest

from aqec_sim.dynamics import FitError
from aqec_sim.metrology import (
    Overheads,
    fisher,
    fisher_from_samples,
    fisher_value,
    fit_fringe,
    gain_db,
    phi_grid,
    probe_idle,
    ramsey,
    sweep_interrogation,
    total_time,
)

KHZ = 1000.0  # µs per kHz^-1


@pytest.mark.parametrize(
    "a,b,sep,t_int,t_tot,expect",
    [
        (0.296, 0.516, 3, 450.0, (150 + 2.71) * 3 + 6.08, 1.38),
        (0.246, 0.482, 3, 300.0, 306.08, 0.644),
        (0.261, 0.525, 1, 1200.0, 1205.08, 0.327),
    ],
)
def test_fisher_worked_values(a, b, sep, t_int, t_tot, expect):
    assert fisher_value(a, b, sep, t_int, t_tot) / KHZ == pytest.approx(expect, rel=0.01)


@pytest.mark.parametrize("fa,fb,db", [(1.38, 0.644, 3.31), (1.38, 0.327, 6.25), (0.7, 0.7, 0.0)])
def test_gain_db(fa, fb, db):
    assert gain_db(fa, fb) == pytest.approx(db, abs=0.01)


def test_gain_needs_positive_inputs():
    with pytest.raises(ValueError):
        gain_db(1.0, 0.0)


def test_fisher_scales_with_separation_squared():
    base = fisher_value(0.3, 0.5, 1, 100.0, 120.0)
    for sep in (2, 3, 5):
        assert fisher_value(0.3, 0.5, sep, 100.0, 120.0) == pytest.approx(sep**2 * base, rel=1e-14)


def test_fisher_degenerate_offset():
    with pytest.raises(ValueError):
        fisher_value(0.3, 1.0, 3, 100.0, 120.0)


def test_fit_fringe_recovers_sinusoid():
    phis = phi_grid()
    p = 0.31 * np.cos(phis + 0.7) + 0.47
    a, b, phase, sa, sb = fit_fringe(phis, p)
    assert (a, b, phase) == pytest.approx((0.31, 0.47, 0.7), abs=1e-12)
    assert sa < 1e-10 and sb < 1e-10


def test_zero_cycles_gives_ideal_fringe(device):
    run = ramsey(1, 4, 0, device)
    assert run.amplitude == pytest.approx(0.5, abs=1e-12)
    assert run.offset == pytest.approx(0.5, abs=1e-12)


def test_fringe_is_periodic(device):
    phis = phi_grid(9)
    a = ramsey(1, 4, 2, device, phis=phis).p_g
    b = ramsey(1, 4, 2, device, phis=phis + 2 * math.pi).p_g
    assert np.abs(a - b).max() < 1e-12


def test_fringe_bounded_and_contrast_below_limit(device):
    run = ramsey(1, 4, 2, device)
    assert np.all((run.p_g >= 0) & (run.p_g <= 1))
    assert run.amplitude <= min(run.offset, 1 - run.offset) + 1e-9


@pytest.mark.parametrize("corrected", [False, True])
def test_virtual_and_physical_detuning_agree(device, corrected):
    delta = 2 * math.pi * 1e-4  # rad/µs
    cycles = 2 if corrected else 1
    v = ramsey(1, 4, cycles, device, delta=delta, mode="virtual", corrected=corrected)
    p = ramsey(1, 4, cycles, device, delta=delta, mode="physical", corrected=corrected)
    assert np.abs(v.p_g - p.p_g).max() < 1e-8


def test_detuning_shifts_fringe_phase(device):
    delta = 2 * math.pi * 2e-4
    ref = ramsey(0, 1, 1, device, tau_int=300.0)
    moved = ramsey(0, 1, 1, device, tau_int=300.0, delta=delta)
    shift = (moved.phase - ref.phase + math.pi) % (2 * math.pi) - math.pi
    assert shift == pytest.approx(-delta * 300.0, abs=1e-6)


def test_sampled_fisher_matches_closed_form(device):
    run = ramsey(1, 4, 2, device)
    closed = fisher(run).fisher
    assert fisher_from_samples(run) == pytest.approx(closed, rel=1e-3)


def test_total_time_accounting(device):
    run = ramsey(1, 4, 3, device, corrected=True)
    assert total_time(run) == pytest.approx((150 + 2.71) * 3 + 6.08)
    unc = ramsey(0, 1, 2, device, tau_int=600.0)
    assert total_time(unc, Overheads()) == pytest.approx(1200 + 5.08)


def test_noiseless_sweep_has_no_interior_optimum(device):
    quiet = device.replace(t1_c=math.inf, tphi_c=math.inf, t1_q=math.inf, tphi_q=math.inf, nth_c=0.0, nth_q=0.0)
    spec = probe_idle(0, 1).replace(tphi_eff=math.inf)
    sweep = sweep_interrogation(0, 1, quiet, range(1, 6), cycle=spec, corrected=False)
    assert not sweep.interior_optimum
    assert sweep.note == "no optimum in range"
    assert np.all(np.diff(sweep.fisher) > 0)


def test_washed_out_fringe_raises(device):
    spec = probe_idle(1, 4).replace(tphi_eff=1.0)
    with pytest.raises(FitError):
        ramsey(1, 4, 1, device, cycle=spec, corrected=False)


def test_bad_mode_rejected(device):
    with pytest.raises(ValueError):
        ramsey(1, 4, 1, device, mode="analog")
