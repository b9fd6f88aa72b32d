import warnings

import numpy as np
import pytest
from scipy.linalg import eig

from polartcl.bath import BathSpec, DensitySpec, Mode
from polartcl.markov import (PoleSet, RateTensorSet, build_rates,
                             markov_propagate, markov_spectrum)
from polartcl.observables import dipole_kick, spectrum, find_peaks
from polartcl.oracle import exact_cis
from polartcl.propagator import PhAmplitude, PropagationConfig, compile_generator
from polartcl.system import ModelBuilder, build_model


@pytest.fixture
def weak_bath():
    dens = DensitySpec(shape="super-ohmic", eta=np.array([0.004, 0.001, 0.006, 0.002]),
                       omega_c=0.05, n_points=64)
    return BathSpec(densities=[dens], beta=80.0)


def test_zero_coupling_effective_generator(rng):
    system = build_model(ModelBuilder(seed=2, n_occ=2, n_virt=2, scale=0.0))
    cfg = PropagationConfig(t_final=10.0, mode="adiabatic")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rates = build_rates(system, None, cfg, t_c=200.0)
    gaps = system.ph_gaps().reshape(-1)
    np.testing.assert_allclose(np.diag(rates.g_eff), -1j * gaps, atol=1e-12)
    assert np.abs(rates.g_eff - np.diag(np.diag(rates.g_eff))).max() < 1e-12


def test_rates_match_live_kernels_at_long_time(sys22, weak_bath):
    cfg = PropagationConfig(t_final=10.0, mode="untransformed",
                            subtract_reorganization=False)
    comp = compile_generator(sys22, weak_bath, cfg)
    t_corr = 1.0 / 0.05
    t_long = 5 * t_corr
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rates = build_rates(sys22, weak_bath, cfg, t_c=t_long, compiled=comp)
    kern = comp.kernels_from_scratch(t_long)
    g_live = np.tensordot(kern.mode_f, comp.mode_f_stack.gmat, axes=(0, 0))
    g_rate = np.tensordot(rates.rates_mode_f, comp.mode_f_stack.gmat, axes=(0, 0))
    scale = np.abs(g_rate).max()
    assert np.abs(g_live - g_rate).max() < 0.01 * scale


def test_anti_hermitian_generator_conserves_norm(rng):
    h = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
    h = 0.5 * (h + h.conj().T)
    g = -1j * h
    amp0 = PhAmplitude(rng.standard_normal((2, 3)) + 0j)
    traj = markov_propagate(g, amp0, t_final=50.0, output_dt=5.0)
    assert np.abs(traj.norms - traj.norms[0]).max() < 1e-10


def test_spectral_propagation_matches_stepping(sys22, weak_bath):
    cfg = PropagationConfig(t_final=10.0, mode="untransformed")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rates = build_rates(sys22, weak_bath, cfg, t_c=100.0)
    amp0 = dipole_kick(sys22, "x")
    traj = markov_propagate(rates, amp0, t_final=200.0, output_dt=20.0)
    vals, right = eig(rates.g_eff)
    coef = np.linalg.solve(right, amp0.data.reshape(-1))
    for k, t in enumerate(traj.times):
        ref = (right @ (coef * np.exp(vals * t))).reshape(2, 2)
        assert np.abs(ref - traj.amps[k]).max() < 1e-8


def test_rates_zeroed_reduce_to_first_order(sys22):
    cfg = PropagationConfig(t_final=10.0, mode="adiabatic", correlation_terms=False)
    comp = compile_generator(sys22, None, cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rates = build_rates(sys22, None, cfg, t_c=100.0, compiled=comp)
    np.testing.assert_allclose(rates.g_eff, comp.g1, atol=1e-14)


def test_pole_count_and_no_sidebands(sys22, weak_bath):
    cfg = PropagationConfig(t_final=10.0, mode="untransformed")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rates = build_rates(sys22, weak_bath, cfg, t_c=100.0)
    poles = markov_spectrum(rates, dipole_kick(sys22, "x").data)
    assert poles.poles.size == sys22.n_occ * sys22.n_virt


def test_weak_coupling_width_scaling(sys22):
    # Lorentzian widths scale with the squared coupling (eta here)
    def widths_for(scale):
        dens = DensitySpec(shape="super-ohmic",
                           eta=scale * np.array([0.004, 0.001, 0.006, 0.002]),
                           omega_c=0.05, n_points=64)
        bath = BathSpec(densities=[dens], beta=80.0)
        cfg = PropagationConfig(t_final=10.0, mode="untransformed")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rates = build_rates(sys22, bath, cfg, t_c=400.0)
        poles = markov_spectrum(rates, dipole_kick(sys22, "x").data)
        order = np.argsort(poles.poles)
        return poles.widths[order]

    w1 = widths_for(1.0)
    w4 = widths_for(4.0)
    mask = w1 > 1e-8
    ratios = w4[mask] / w1[mask]
    assert np.all(np.abs(ratios - 4.0) < 0.4)


def test_markov_spectrum_matches_time_domain(sys22, weak_bath):
    cfg = PropagationConfig(t_final=10.0, mode="untransformed")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rates = build_rates(sys22, weak_bath, cfg, t_c=100.0)
    amp0 = dipole_kick(sys22, "x")
    t_total = 3000.0
    traj = markov_propagate(rates, amp0, t_final=t_total, output_dt=0.5)
    mu = amp0.data.reshape(-1)
    corr = (traj.amps.reshape(len(traj.times), -1) * mu[None, :]).sum(axis=1) \
        * mu.sum()
    spec = spectrum(traj.times, corr)
    pf, _ = find_peaks(spec.freqs, spec.averaged, threshold_frac=0.1)
    poles = markov_spectrum(rates, amp0.data).sorted_by_strength()
    bright = poles.poles[np.abs(poles.strengths) > 0.1 * np.abs(poles.strengths).max()]
    for peak in pf:
        assert np.min(np.abs(bright - peak)) <= spec.resolution
