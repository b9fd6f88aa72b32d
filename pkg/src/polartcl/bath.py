"""Harmonic bath: mode lists, spectral densities and every correlation
function the equation of motion needs.

The dressed two-time correlation of displacement operators factorizes over
modes.  With u_m the signed coupling sum of the later-time group and v_m of
the earlier-time group (dagger +, no dagger -, dimensionless couplings
mtilde = M / omega),

    B(tau) = exp{-1/2 sum_m coth(beta w_m/2) (u_m^2 + v_m^2)}
             * exp{- sum_m u_m v_m F_m(tau)},
    F_m(tau) = coth(beta w_m / 2) cos(w_m tau) - i sin(w_m tau).

The factor in front is the equilibrium value B(inf) once the F-coupling has
dephased.  All functions accept beta = inf (coth -> 1).
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

MARKOV_CUTOFF_FACTOR = 10.0  # ">>" threshold for beta * w_c * t_c^2 >= 2 * this


class BathDomainError(ValueError):
    pass


class MarkovCutoffWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Mode:
    """One discrete oscillator: frequency and per-orbital coupling M (Hartree).

    ``coupling[p]`` multiplies n_p (b+ + b); the dimensionless displacement is
    mtilde[p] = coupling[p] / omega.
    """

    omega: float
    coupling: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coupling", np.asarray(self.coupling, dtype=float))
        if self.omega <= 0:
            raise BathDomainError("mode frequency must be positive")

    @property
    def mtilde(self):
        return self.coupling / self.omega


@dataclass(frozen=True)
class DensitySpec:
    """Continuous spectral density; discretized into n_points modes.

    shape 'super-ohmic': J_p(w) = (eta_p / 6) w^3 / w_c^2 exp(-w / w_c)
    shape 'ohmic':       J_p(w) = eta_p w exp(-w / w_c)
    """

    shape: str
    eta: np.ndarray
    omega_c: float
    n_points: int
    omega_min_factor: float = 1e-4

    def __post_init__(self):
        object.__setattr__(self, "eta", np.asarray(self.eta, dtype=float))
        if self.shape not in ("ohmic", "super-ohmic"):
            raise BathDomainError(f"unknown density shape {self.shape!r}")
        if self.omega_c <= 0:
            raise BathDomainError("cutoff frequency must be positive")
        if self.n_points < 8:
            raise BathDomainError("need at least 8 discretization points")

    def j_of(self, omega):
        """Per-orbital spectral density J_p(omega), shape (n_omega, n_orb)."""
        omega = np.atleast_1d(np.asarray(omega, dtype=float))
        if self.shape == "super-ohmic":
            shape = omega ** 3 / (6.0 * self.omega_c ** 2) * np.exp(-omega / self.omega_c)
        else:
            shape = omega * np.exp(-omega / self.omega_c)
        return shape[:, None] * self.eta[None, :]


@dataclass(frozen=True)
class BathSpec:
    """Discrete modes plus continuous densities at inverse temperature beta."""

    modes: tuple = ()
    densities: tuple = ()
    beta: float = np.inf

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        object.__setattr__(self, "densities", tuple(self.densities))
        if not (self.beta > 0):
            raise BathDomainError("beta must be positive (inf allowed)")

    def all_modes(self):
        """Discrete modes plus discretized densities, as one tuple."""
        modes = list(self.modes)
        for dens in self.densities:
            modes.extend(discretize_density(dens))
        return tuple(modes)

    def tables(self, n_orb):
        """(omegas (M,), mtilde (M, n_orb)) over every effective mode."""
        modes = self.all_modes()
        if not modes:
            return np.zeros(0), np.zeros((0, n_orb))
        omegas = np.array([m.omega for m in modes])
        mt = np.zeros((len(modes), n_orb))
        for k, mode in enumerate(modes):
            c = mode.mtilde
            if c.shape[0] != n_orb:
                raise BathDomainError(
                    f"mode coupling has {c.shape[0]} entries, system has {n_orb} orbitals")
            mt[k] = c
        return omegas, mt


def coth_half_beta_omega(omega, beta):
    """coth(beta omega / 2) with the beta = inf limit handled analytically."""
    omega = np.asarray(omega, dtype=float)
    if np.isinf(beta):
        return np.ones_like(omega)
    x = 0.5 * beta * omega
    return 1.0 / np.tanh(x)


def f_kernel(omega, beta, t):
    """F(t) = coth(beta omega/2) cos(omega t) - i sin(omega t); vectorized."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0):
        raise BathDomainError("f_kernel needs omega > 0")
    t = np.asarray(t, dtype=float)
    return coth_half_beta_omega(omega, beta) * np.cos(omega * t) - 1j * np.sin(omega * t)


# --- signatures -----------------------------------------------------------------

@dataclass(frozen=True)
class BathSignature:
    """Signed orbital slots of a correlation function of displacement operators.

    ``t_slots`` belong to the later time, ``s_slots`` to the earlier one; each
    slot is (sign, orbital) with sign +1 for a daggered operator.  An equal-time
    factor has empty ``s_slots``.
    """

    t_slots: tuple
    s_slots: tuple = ()

    def signed_sums(self, mtilde):
        """Per-mode (u, v) from an (n_modes, n_orb) mtilde table."""
        n_modes = mtilde.shape[0]
        u = np.zeros(n_modes)
        v = np.zeros(n_modes)
        for sign, orb in self.t_slots:
            u += sign * mtilde[:, orb]
        for sign, orb in self.s_slots:
            v += sign * mtilde[:, orb]
        return u, v

    def swapped_conjugate(self):
        """Groups exchanged and all signs flipped; used by the conjugation test."""
        flip = lambda slots: tuple((-sg, orb) for sg, orb in slots)
        return BathSignature(t_slots=flip(self.s_slots), s_slots=flip(self.t_slots))


def bcf_from_sums(u, v, omegas, beta, tau, conj=False, equilibrium_only=False):
    """Core evaluation of B(tau) from per-mode signed sums; tau may be an array."""
    tau_arr = np.atleast_1d(np.asarray(tau, dtype=float))
    coth = coth_half_beta_omega(omegas, beta)
    eq_exponent = -0.5 * np.sum(coth * (u ** 2 + v ** 2))
    if equilibrium_only or omegas.size == 0:
        out = np.full(tau_arr.shape, np.exp(eq_exponent), dtype=complex)
    else:
        f = f_kernel(omegas[:, None], beta, tau_arr[None, :])
        if conj:
            f = f.conj()
        out = np.exp(eq_exponent - (u * v) @ f)
    return out if np.ndim(tau) else complex(out[0])


def bcf_two_time(sig, bath, tau, n_orb=None, conj=False):
    """Dressed two-time correlation for a signature; depends on t - s only."""
    if n_orb is None:
        n_orb = 1 + max(orb for _, orb in sig.t_slots + sig.s_slots)
    omegas, mtilde = bath.tables(n_orb)
    u, v = sig.signed_sums(mtilde)
    return bcf_from_sums(u, v, omegas, bath.beta, tau, conj=conj)


def bcf_equal_time(sig, bath, n_orb=None):
    """Equal-time factor: the four-operator expectation; real, in (0, 1]."""
    if sig.s_slots:
        raise ValueError("equal-time signature must have empty s_slots")
    if n_orb is None:
        n_orb = 1 + max(orb for _, orb in sig.t_slots)
    omegas, mtilde = bath.tables(n_orb)
    u, _ = sig.signed_sums(mtilde)
    coth = coth_half_beta_omega(omegas, bath.beta)
    return float(np.exp(-0.5 * np.sum(coth * u ** 2)))


def classical_corr(bath, tau, p=None, q=None, n_orb=None):
    """Untransformed bath correlation sum_k w_k F_k(tau).

    With orbitals (p, q) given the weights are M_k^p M_k^q; otherwise each
    mode enters with unit weight.
    """
    if n_orb is None:
        n_orb = 1 if p is None else 1 + max(p, p if q is None else q)
    omegas, mtilde = bath.tables(n_orb)
    tau_arr = np.atleast_1d(np.asarray(tau, dtype=float))
    if omegas.size == 0:
        out = np.zeros(tau_arr.shape, dtype=complex)
    else:
        if p is None:
            weights = np.ones_like(omegas)
        else:
            couplings = mtilde * omegas[:, None]
            weights = couplings[:, p] * couplings[:, q if q is not None else p]
        out = weights @ f_kernel(omegas[:, None], bath.beta, tau_arr[None, :])
    return out if np.ndim(tau) else complex(out[0])


# --- discretization -------------------------------------------------------------

def _bin_moments(shape, omega_c, edges):
    """Exact bin integrals of J(w)/w^2 (unit eta) and of its first moment.

    super-ohmic: J/w^2 = w e^{-w/w_c} / (6 w_c^2)
    ohmic:       J/w^2 = e^{-w/w_c} / w
    """
    x = omega_c
    if shape == "super-ohmic":
        mass_prim = -x * (edges + x) * np.exp(-edges / x) / (6.0 * x ** 2)
        mom_prim = -x * (edges ** 2 + 2 * x * edges + 2 * x ** 2) \
            * np.exp(-edges / x) / (6.0 * x ** 2)
    else:
        from scipy.special import exp1
        mass_prim = -exp1(edges / x)
        mom_prim = -x * np.exp(-edges / x)
    return np.diff(mass_prim), np.diff(mom_prim)


def discretize_density(dens):
    """Log-spaced bins on (~0, 10 w_c] with exact bin masses.

    Each bin contributes one mode at its mass centroid with
    mtilde_k^2 = int_bin J(w)/w^2 dw, so sums of mtilde^2 (and of
    mtilde^2 w, the reorganization energy) are exact for any n_points.
    """
    lo = dens.omega_c * dens.omega_min_factor
    hi = 10.0 * dens.omega_c
    edges = np.geomspace(lo, hi, dens.n_points + 1)
    mass_unit, moment_unit = _bin_moments(dens.shape, dens.omega_c, edges)
    mass_unit = np.clip(mass_unit, 0.0, None)
    centroid = np.where(mass_unit > 0, moment_unit / np.where(mass_unit > 0,
                                                              mass_unit, 1.0),
                        0.5 * (edges[:-1] + edges[1:]))
    modes = []
    for k in range(dens.n_points):
        mtilde_k = np.sqrt(np.clip(dens.eta * mass_unit[k], 0.0, None))
        omega_k = float(np.clip(centroid[k], edges[k], edges[k + 1]))
        modes.append(Mode(omega=omega_k, coupling=mtilde_k * omega_k))
    return modes


def reorganization_integral(dens):
    """Closed form of int J(w)/w^2 dw for the supported shapes (eta = 1).

    super-ohmic: 1/6; ohmic: divergent (returns inf).
    """
    if dens.shape == "super-ohmic":
        return 1.0 / 6.0
    return np.inf


# --- half-Fourier (Laplace) transform ----------------------------------------------

def markov_cutoff_ok(beta, omega_c, t_c):
    """Check the decay criterion beta w_c t_c^2 >> 2 for continuum baths."""
    if np.isinf(beta):
        return True
    return beta * omega_c * t_c ** 2 >= 2.0 * MARKOV_CUTOFF_FACTOR


def half_fourier_from_sums(u, v, omegas, beta, delta, t_c, n_steps=None,
                           conj=False, equilibrium_only=False):
    """int_0^inf B(tau) e^{i delta tau} d tau with the tail beyond t_c replaced
    by the equilibrium value's analytic contribution (i0+ regularization)."""
    coth = coth_half_beta_omega(omegas, beta)
    b_eq = np.exp(-0.5 * np.sum(coth * (u ** 2 + v ** 2)))
    if n_steps is None:
        n_steps = max(2048, int(40 * t_c * (np.max(omegas) if omegas.size else 1.0) / (2 * np.pi)))
    tau, dt = np.linspace(0.0, t_c, n_steps + 1, retstep=True)
    if equilibrium_only or omegas.size == 0:
        b_vals = np.full(tau.shape, b_eq, dtype=complex)
    else:
        b_vals = bcf_from_sums(u, v, omegas, beta, tau, conj=conj)
    integrand = (b_vals - b_eq) * np.exp(1j * delta * tau)
    head = np.trapezoid(integrand, dx=dt)
    if delta == 0:
        warnings.warn("half_fourier with delta = 0: equilibrium tail is only "
                      "conditionally convergent, dropping it", MarkovCutoffWarning)
        tail = 0.0
        head += b_eq * t_c
    else:
        # int_0^inf b_eq e^{i delta tau} = i b_eq / delta  (delta -> delta + i0+)
        tail = 1j * b_eq / delta
    return head + tail


def half_fourier(sig, bath, delta, t_c, n_orb=None, n_steps=None, conj=False):
    """Half-Fourier transform of the signature's correlation function."""
    if t_c <= 0:
        raise BathDomainError("t_c must be positive")
    if n_orb is None:
        n_orb = 1 + max(orb for _, orb in sig.t_slots + sig.s_slots)
    omegas, mtilde = bath.tables(n_orb)
    u, v = sig.signed_sums(mtilde)
    for dens in bath.densities:
        if not markov_cutoff_ok(bath.beta, dens.omega_c, t_c):
            suggestion = np.sqrt(2.0 * MARKOV_CUTOFF_FACTOR / (bath.beta * dens.omega_c))
            warnings.warn(
                f"cutoff criterion beta*w_c*t_c^2 >> 2 not met; "
                f"suggest t_c >= {suggestion:.1f}", MarkovCutoffWarning)
    return half_fourier_from_sums(u, v, omegas, bath.beta, delta, t_c,
                                  n_steps=n_steps, conj=conj)
