"""Small-polaron transformation: reorganization energies, shifted orbital
energies and the dressed two-electron tensor.

Displacing every orbital by its dimensionless coupling removes the linear
electron-boson term and produces, besides the on-site shift
lambda_p = sum_k M_kp^2 / w_k, a density-density pair interaction
-2 w_k mt_k^r mt_k^s between distinct orbitals.  The pair term is folded into
the antisymmetrized tensor as

    vt[r,s,p,q] = v[r,s,p,q]
                  - 2 sum_k w_k mt_k^r mt_k^s (d_rp d_sq - d_rq d_sp)(1 - d_rs)

so every downstream contraction keeps the single storage convention.
"""

from dataclasses import dataclass

import numpy as np

from .bath import BathDomainError, BathSignature
from .system import SpinOrbitalSystem


@dataclass(frozen=True)
class PolaronSystem:
    """Dressed system: shifted energies, dressed tensor, displacement table."""

    base: SpinOrbitalSystem
    lam: np.ndarray          # per-orbital reorganization energy
    eps_tilde: np.ndarray    # eps - lambda
    v_tilde: np.ndarray      # dressed antisymmetrized tensor
    mtilde: np.ndarray       # (n_modes, n_orb) dimensionless displacements

    @property
    def n_occ(self):
        return self.base.n_occ

    @property
    def n_virt(self):
        return self.base.n_virt

    @property
    def n_orb(self):
        return self.base.n_orb

    @property
    def occ(self):
        return self.base.occ

    @property
    def virt(self):
        return self.base.virt

    @property
    def mu(self):
        return self.base.mu


def reorganization_energies(bath, n_orb):
    """lambda_p = sum_k M_kp^2 / w_k over all effective modes."""
    omegas, mtilde = bath.tables(n_orb)
    if np.any(omegas <= 0):
        raise BathDomainError("mode frequencies must be positive")
    if omegas.size == 0:
        return np.zeros(n_orb)
    # (mtilde * omega)^2 / omega = mtilde^2 * omega
    return np.einsum("k,kp->p", omegas, mtilde ** 2)


def transform_integrals(system, bath):
    """Apply the polaron transformation to a validated system."""
    n = system.n_orb
    omegas, mtilde = bath.tables(n)
    lam = reorganization_energies(bath, n)
    eps_tilde = system.eps - lam

    v_tilde = system.v.copy()
    if omegas.size:
        pair = np.einsum("k,kr,ks->rs", omegas, mtilde, mtilde)
        np.fill_diagonal(pair, 0.0)
        eye = np.eye(n)
        shift = np.einsum("rs,rp,sq->rspq", pair, eye, eye) \
            - np.einsum("rs,rq,sp->rspq", pair, eye, eye)
        v_tilde = v_tilde - 2.0 * shift

    return PolaronSystem(base=system, lam=lam, eps_tilde=eps_tilde,
                         v_tilde=v_tilde, mtilde=mtilde)


def adiabatic_polaron(system):
    """Polaron wrapper with no bath: identity transformation."""
    n = system.n_orb
    return PolaronSystem(base=system, lam=np.zeros(n), eps_tilde=system.eps.copy(),
                         v_tilde=system.v.copy(), mtilde=np.zeros((0, n)))


def dressed_dipole_signature(i, a):
    """Bath slots attached to one particle-hole element of the dressed dipole:
    X+_a X_i read off mu_ia a+_a a_i."""
    return BathSignature(t_slots=((+1, a), (-1, i)))
