"""Markovian limit: time-independent rate tensors from the infinite-time
memory integrals, an effective generator at fourth-order propagation cost,
and Lorentzian pole spectra.

Each pooled kernel key gets one rate R = int_0^inf B(tau) e^{i delta tau}
d tau, evaluated as a finite integral up to t_c plus the analytic tail of the
equilibrium value (i0+ regularization).  The effective generator is the
first-order matrix plus the rate-weighted sum of the pooled coefficient
matrices.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eig, expm

from .bath import MarkovCutoffWarning, markov_cutoff_ok
from .propagator import PhAmplitude, Trajectory, compile_generator


class UnstableGeneratorWarning(UserWarning):
    pass


@dataclass
class RateTensorSet:
    """Effective generator and per-key rates of the Markovian theory."""

    g_eff: np.ndarray
    n_occ: int
    n_virt: int
    rates_two_time: np.ndarray
    rates_mode_f: np.ndarray
    rates_const: np.ndarray
    t_c: float
    meta: dict = field(default_factory=dict)

    @property
    def ph_dim(self):
        return self.n_occ * self.n_virt

    def growth_rate(self):
        """Largest real part of the generator spectrum (positive = growth)."""
        return float(np.max(eig(self.g_eff, right=False).real))


def _tail_regularized(delta, b_eq, t_c):
    """int_{t_c}^inf b_eq e^{i delta tau} d tau with delta -> delta + i0+."""
    out = np.zeros_like(delta, dtype=complex)
    nz = delta != 0.0
    out[nz] = -b_eq[nz] * np.exp(1j * delta[nz] * t_c) / (1j * delta[nz])
    zero = ~nz
    if np.any(zero & (np.abs(b_eq) > 1e-14)):
        warnings.warn("rate with delta = 0 and non-decaying kernel is only "
                      "conditionally convergent; tail dropped",
                      MarkovCutoffWarning)
    return out


def _stack_rates(stack, t_c, panels_per_period=12):
    """Half-Fourier of every pooled kernel of one quadrature stack."""
    if stack is None or stack.delta.size == 0:
        return np.zeros(0, dtype=complex)
    om = stack.omegas if hasattr(stack, "omegas") else stack.omega
    om_max = float(np.max(om)) if np.size(om) else 0.0
    freq = float(np.max(np.abs(stack.delta))) + 3.0 * om_max
    n = max(512, int(np.ceil(t_c * freq * panels_per_period / (2 * np.pi))))
    tau, dt = np.linspace(0.0, t_c, n + 1, retstep=True)
    b = stack.b_values(tau)
    b_eq = getattr(stack, "beq", np.zeros(stack.delta.size))
    if hasattr(stack, "beq"):
        b_eq = np.where(stack.conj, stack.beq, stack.beq)  # beq is real
    integrand = (b - b_eq[:, None]) * np.exp(1j * stack.delta[:, None] * tau[None, :])
    head = np.trapezoid(integrand, dx=dt, axis=1)
    head += np.where(stack.delta == 0.0, b_eq * t_c, 0.0)
    return head + _tail_regularized(stack.delta, b_eq, t_c)


def build_rates(source, bath, cfg, t_c, compiled=None):
    """Rate tensors and effective generator for the compiled catalog.

    ``cfg`` selects the theory variant exactly as for live propagation; the
    memory integrals are replaced by their infinite-time limits.
    """
    if compiled is None:
        compiled = compile_generator(source, bath, cfg)
    if bath is not None:
        for dens in bath.densities:
            if not markov_cutoff_ok(bath.beta, dens.omega_c, t_c):
                suggestion = np.sqrt(20.0 / (bath.beta * dens.omega_c))
                warnings.warn(f"decay criterion not met; suggest t_c >= "
                              f"{suggestion:.1f}", MarkovCutoffWarning)

    g_eff = compiled.g1.copy()
    r_const = np.zeros(0, dtype=complex)
    if compiled.const_stack is not None:
        st = compiled.const_stack
        r_const = np.empty(st.delta.size, dtype=complex)
        nz = st.delta != 0.0
        r_const[nz] = 1j * st.bfac[nz] / st.delta[nz]
        if np.any(~nz):
            if np.any(np.abs(st.bfac[~nz]) > 1e-14):
                warnings.warn("constant kernel with delta = 0: rate grows "
                              "linearly; using t_c as its value",
                              MarkovCutoffWarning)
            r_const[~nz] = st.bfac[~nz] * t_c
        g_eff += np.tensordot(r_const, st.gmat, axes=(0, 0))
    r_tt = _stack_rates(compiled.two_time_stack, t_c)
    if r_tt.size:
        g_eff += np.tensordot(r_tt, compiled.two_time_stack.gmat, axes=(0, 0))
    r_mf = _stack_rates(compiled.mode_f_stack, t_c)
    if r_mf.size:
        g_eff += np.tensordot(r_mf, compiled.mode_f_stack.gmat, axes=(0, 0))

    rates = RateTensorSet(g_eff=g_eff, n_occ=compiled.n_occ, n_virt=compiled.n_virt,
                          rates_two_time=r_tt, rates_mode_f=r_mf,
                          rates_const=r_const, t_c=t_c,
                          meta=dict(compiled.meta))
    growth = rates.growth_rate()
    if growth > 1e-10:
        warnings.warn(f"effective generator has eigenvalues with positive real "
                      f"part (max {growth:.3e}); per-state couplings and phase "
                      f"signs can produce exponential growth in this limit",
                      UnstableGeneratorWarning)
    return rates


def markov_propagate(rates_or_g, initial, t_final, output_dt=0.5):
    """Propagate under the constant effective generator by exponential
    stepping (scaling-and-squaring once per output stride)."""
    g_eff = rates_or_g.g_eff if isinstance(rates_or_g, RateTensorSet) else rates_or_g
    n_out = int(round(t_final / output_dt)) + 1
    times = np.arange(n_out) * output_dt
    shape = initial.data.shape
    prop = expm(g_eff * output_dt)
    amps = np.zeros((n_out,) + shape, dtype=complex)
    norms = np.zeros(n_out)
    y = initial.data.reshape(-1).copy()
    for k in range(n_out):
        amps[k] = y.reshape(shape)
        norms[k] = float(np.sum(np.abs(y) ** 2))
        y = prop @ y
    return Trajectory(times=times, amps=amps, norms=norms,
                      meta={"mode": "markovian", "t_final": t_final})


@dataclass
class PoleSet:
    poles: np.ndarray      # transition frequencies
    widths: np.ndarray     # Lorentzian half-widths (decay rates)
    strengths: np.ndarray  # complex residues of the kick correlation function

    def sorted_by_strength(self):
        order = np.argsort(-np.abs(self.strengths))
        return PoleSet(self.poles[order], self.widths[order], self.strengths[order])


def markov_spectrum(rates_or_g, mu_ph):
    """Poles, widths and strengths of the Lorentzian spectrum.

    Solutions evolve as e^{lambda t}; a pole at frequency -Im(lambda) has
    half-width -Re(lambda).  Strengths are the dipole residues for a kick
    prepared and read out with ``mu_ph`` (an (n_occ, n_virt) block).
    """
    g_eff = rates_or_g.g_eff if isinstance(rates_or_g, RateTensorSet) else rates_or_g
    vals, right = eig(g_eff)
    cond = np.linalg.cond(right)
    if cond > 1e10:
        warnings.warn(f"effective generator close to defective "
                      f"(eigenvector condition {cond:.2e}); falling back on a "
                      f"time-domain spectrum is recommended", UnstableGeneratorWarning)
    left = np.linalg.inv(right)
    mu_flat = np.asarray(mu_ph).reshape(-1)
    strengths = (mu_flat @ right) * (left @ mu_flat)
    return PoleSet(poles=-vals.imag, widths=-vals.real, strengths=strengths)
