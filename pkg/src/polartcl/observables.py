"""Dipole-kick initialization, dipole correlation functions with the bath
dressing factor, Fourier-transform spectra and state-population traces."""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .bath import coth_half_beta_omega, f_kernel
from .oracle import exact_cis
from .propagator import PhAmplitude

_DIRS = {"x": 0, "y": 1, "z": 2}


class DarkDirectionWarning(UserWarning):
    pass


def dipole_kick(system, direction):
    """Instantaneous dipole kick: o_ia(0) = mu_ia along the chosen axis."""
    d = _DIRS[direction] if isinstance(direction, str) else int(direction)
    block = system.mu[d][np.ix_(system.occ, system.virt)]
    if np.abs(block).max() == 0:
        warnings.warn(f"dipole block along {direction!r} vanishes (dark direction)",
                      DarkDirectionWarning)
    return PhAmplitude(np.array(block, dtype=complex), 0.0)


def _pair_signature_sums(system, mtilde):
    """Signed coupling sums of the dressed dipole factor per (i, a) pair:
    returns (ph, n_modes) array of mtilde[a] - mtilde[i].

    The readout side of the correlation function carries the de-excitation
    dressing (the conjugate signature), so its signed sum enters with the
    opposite sign; with that pairing the equal-time factor of a diagonal pair
    is exactly 1 and the vibronic progression has thermal weights, matching
    the exact displaced-oscillator limit.
    """
    no, nv = system.n_occ, system.n_virt
    out = np.zeros((no * nv, mtilde.shape[0]))
    for i in range(no):
        for a in range(nv):
            out[i * nv + a] = mtilde[:, system.virt[a]] - mtilde[:, system.occ[i]]
    return out


def dipole_correlation(traj, system, readout, kick=None, bath=None, dressed=False):
    """Correlation of the readout dipole at t with the kick dipole at 0.

    C(t) = sum_{ia,jb} mu^beta_ia o_ia(t) mu^alpha_jb o_jb(0) T_B[(ia),(jb)](t)
    where the bath factor T_B is the two-time expectation of the displacement
    operators carried by the dressed dipole; ``dressed=False`` sets it to 1.
    """
    beta_dir = _DIRS[readout] if isinstance(readout, str) else int(readout)
    alpha_dir = kick if kick is not None else traj.kick
    if alpha_dir is None:
        raise ValueError("kick direction unknown; pass kick=")
    alpha_dir = _DIRS[alpha_dir] if isinstance(alpha_dir, str) else int(alpha_dir)

    mu_beta = system.mu[beta_dir][np.ix_(system.occ, system.virt)].reshape(-1)
    mu_alpha = system.mu[alpha_dir][np.ix_(system.occ, system.virt)].reshape(-1)
    amps = traj.amps.reshape(len(traj.times), -1)
    left = amps * mu_beta[None, :]          # (T, ph)
    right = mu_alpha * amps[0]              # (ph,)

    if not dressed:
        return left.sum(axis=1) * right.sum()

    if bath is None:
        raise ValueError("dressed correlation needs the bath")
    omegas, mtilde = bath.tables(system.n_orb)
    if omegas.size == 0:
        return left.sum(axis=1) * right.sum()
    sig = _pair_signature_sums(system, mtilde)   # (ph, M)
    coth = coth_half_beta_omega(omegas, bath.beta)
    eq = np.exp(-0.5 * ((sig ** 2) @ coth))      # (ph,)
    f = f_kernel(omegas[:, None], bath.beta, traj.times[None, :])  # (M, T)
    # readout side is conjugate-dressed: u = -sig[p], v = +sig[q]
    coupling = np.einsum("pm,qm,mt->pqt", -sig, sig, f, optimize=True)
    bath_factor = eq[:, None, None] * eq[None, :, None] * np.exp(-coupling)
    return np.einsum("tp,q,pqt->t", left, right, bath_factor, optimize=True)


@dataclass
class SpectrumResult:
    freqs: np.ndarray
    amplitude: np.ndarray   # complex transform, trailing dims as input
    averaged: np.ndarray    # real spherically averaged absorption

    @property
    def resolution(self):
        return self.freqs[1] - self.freqs[0]


def spectrum(times, corr, window=None, normalize=False):
    """Discrete Fourier transform A(w) = dt sum C(t) e^{i w t}.

    ``corr`` is (T,) for one direction pair or (T, 3, 3) for the full tensor;
    the spherical average is the real part of the diagonal mean.  ``window``
    is an optional exponential damping rate gamma (a.u.).
    """
    times = np.asarray(times)
    corr = np.asarray(corr, dtype=complex)
    dt = times[1] - times[0]
    if not np.allclose(np.diff(times), dt, rtol=0, atol=1e-9 * dt):
        raise ValueError("spectrum needs a uniform time grid")
    if window:
        corr = corr * np.exp(-window * times).reshape((-1,) + (1,) * (corr.ndim - 1))
    n = len(times)
    amp = n * dt * np.fft.ifft(corr, axis=0)
    freqs = 2 * np.pi * np.fft.fftfreq(n, d=dt)
    order = np.argsort(freqs)
    freqs, amp = freqs[order], amp[order]
    if corr.ndim == 3:
        averaged = amp[:, (0, 1, 2), (0, 1, 2)].mean(axis=1).real
    else:
        averaged = amp.real
    if normalize and np.abs(averaged).max() > 0:
        averaged = averaged / np.abs(averaged).max()
    return SpectrumResult(freqs=freqs, amplitude=amp, averaged=averaged)


def find_peaks(freqs, signal, threshold_frac=0.05, positive_only=True):
    """Local maxima above a fraction of the global maximum."""
    sig = np.asarray(signal)
    mask = np.zeros(len(sig), dtype=bool)
    mask[1:-1] = (sig[1:-1] > sig[:-2]) & (sig[1:-1] >= sig[2:])
    mask &= sig > threshold_frac * sig.max()
    if positive_only:
        mask &= freqs > 0
    return freqs[mask], sig[mask]


@dataclass
class PopulationTrace:
    times: np.ndarray
    populations: np.ndarray   # (T, n_states)
    norms: np.ndarray
    energies: np.ndarray
    vectors: np.ndarray = field(repr=False, default=None)


def cis_populations(traj, system):
    """Projections |<state_k | o(t)>|^2 onto the adiabatic single-excitation
    eigenstates, plus the total norm."""
    vals, vecs = exact_cis(system)
    flat = traj.amps.reshape(len(traj.times), -1)
    proj = flat @ vecs.conj()
    pops = np.abs(proj) ** 2
    return PopulationTrace(times=traj.times, populations=pops,
                           norms=traj.norms, energies=vals, vectors=vecs)


def cis_superposition(system, indices, weights=None):
    """Particle-hole amplitude prepared as a superposition of eigenstates."""
    vals, vecs = exact_cis(system)
    indices = list(indices)
    if weights is None:
        weights = np.ones(len(indices))
    weights = np.asarray(weights, dtype=complex)
    weights = weights / np.linalg.norm(weights)
    data = (vecs[:, indices] @ weights).reshape(system.n_occ, system.n_virt)
    return PhAmplitude(data, 0.0)
