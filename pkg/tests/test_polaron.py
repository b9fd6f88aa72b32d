import numpy as np
import pytest
from scipy.linalg import eigh

from polartcl.bath import BathDomainError, BathSpec, DensitySpec, Mode
from polartcl.polaron import (adiabatic_polaron, dressed_dipole_signature,
                              reorganization_energies, transform_integrals)
from polartcl.system import ModelBuilder, build_model, validate_symmetries


def test_reorganization_no_modes():
    assert np.all(reorganization_energies(BathSpec(beta=1.0), 3) == 0)


def test_reorganization_single_mode_value():
    bath = BathSpec(modes=[Mode(omega=0.01, coupling=np.array([0.001, 0.0]))],
                    beta=10.0)
    lam = reorganization_energies(bath, 2)
    assert lam[0] == pytest.approx(1e-4)
    assert lam[1] == 0.0


def test_reorganization_additivity():
    mode = Mode(omega=0.01, coupling=np.array([0.001]))
    one = reorganization_energies(BathSpec(modes=[mode], beta=1.0), 1)
    two = reorganization_energies(BathSpec(modes=[mode, mode], beta=1.0), 1)
    assert two[0] == pytest.approx(2 * one[0])


def test_independent_boson_spectrum_oracle():
    """Exact diagonalization of one displaced oscillator: eigenvalues must be
    eps - lambda + n w, pinning the lambda convention."""
    eps0, omega, coupling = 0.3, 0.017, 0.004
    n_max = 60
    b = np.diag(np.sqrt(np.arange(1, n_max + 1)), k=1)
    h = eps0 * np.eye(n_max + 1) + omega * np.diag(np.arange(n_max + 1)) \
        + coupling * (b + b.T)
    vals = eigh(h, eigvals_only=True)
    lam = coupling ** 2 / omega
    expected = eps0 - lam + omega * np.arange(6)
    np.testing.assert_allclose(vals[:6], expected, atol=1e-8)
    bath = BathSpec(modes=[Mode(omega=omega, coupling=np.array([coupling]))],
                    beta=1.0)
    assert reorganization_energies(bath, 1)[0] == pytest.approx(lam)


def test_adiabatic_identity(sys23):
    bath = BathSpec(modes=[Mode(omega=0.3, coupling=np.zeros(5))], beta=4.0)
    pol = transform_integrals(sys23, bath)
    np.testing.assert_array_equal(pol.eps_tilde, sys23.eps)
    np.testing.assert_array_equal(pol.v_tilde, sys23.v)


def test_pair_shift_pattern(sys22):
    m = 0.12
    omega = 0.2
    coupling = np.array([m, m, 0.0, 0.0]) * omega
    bath = BathSpec(modes=[Mode(omega=omega, coupling=coupling)], beta=4.0)
    pol = transform_integrals(sys22, bath)
    shift = pol.v_tilde - sys22.v
    # diagonal-pair element pattern between the two displaced orbitals
    assert shift[0, 1, 0, 1] == pytest.approx(-2 * omega * m * m)
    assert shift[0, 1, 1, 0] == pytest.approx(+2 * omega * m * m)
    # same orbital twice: killed by the (1 - delta) factor
    assert shift[0, 0, 0, 0] == 0
    # dressed tensor keeps the storage symmetries
    report = validate_symmetries(
        type(sys22)(eps=pol.eps_tilde, v=pol.v_tilde, mu=sys22.mu, n_occ=2))
    assert report.antisymmetry < 1e-12 and report.hermiticity_v < 1e-12


def test_pair_shift_full_hamiltonian_oracle():
    """The transformed electronic constants must reproduce the exact spectrum
    of the coupled electron-boson Hamiltonian in every occupation sector."""
    from polartcl.oracle import FockSpaceRep
    from scipy.linalg import eigh as dense_eigh

    eps = np.array([-0.1, 0.25])
    omega, n_max = 0.21, 50
    mtilde = np.array([0.11, -0.07])
    coupling = mtilde * omega
    nb = n_max + 1
    b = np.diag(np.sqrt(np.arange(1, nb)), k=1)

    rep = FockSpaceRep(2, 1)
    h_el = sum(eps[p] * rep.number_op(p) for p in range(2))
    h_full = np.kron(h_el, np.eye(nb)) + np.kron(np.eye(4), omega * b.T @ b) \
        + sum(coupling[p] * np.kron(rep.number_op(p), b + b.T) for p in range(2))
    vals = dense_eigh(h_full, eigvals_only=True)

    bath = BathSpec(modes=[Mode(omega=omega, coupling=coupling)], beta=1.0)
    lam = reorganization_energies(bath, 2)
    # doubly occupied sector: E = eps0 + eps1 - lam0 - lam1 - 2 w mt0 mt1
    e_both = eps.sum() - lam.sum() - 2 * omega * mtilde[0] * mtilde[1]
    sector = [e for e in vals if abs(e - e_both) < 0.5 * omega]
    assert min(abs(np.array(sector) - e_both)) < 1e-8


def test_transform_rejects_bad_frequency(sys22):
    with pytest.raises(BathDomainError):
        Mode(omega=-0.1, coupling=np.zeros(4))


def test_dressed_dipole_signature():
    sig = dressed_dipole_signature(1, 5)
    assert sig.t_slots == ((1, 5), (-1, 1))
    assert sig.s_slots == ()


def test_density_discretization_enters_transform():
    dens = DensitySpec(shape="super-ohmic", eta=np.array([0.06, 0.0]),
                       omega_c=0.02, n_points=128)
    bath = BathSpec(densities=[dens], beta=50.0)
    lam = reorganization_energies(bath, 2)
    # lam = int J / w dw, checked against direct quadrature
    w = np.linspace(1e-8, 0.4, 200_000)
    j = dens.j_of(w)[:, 0]
    lam_ref = np.trapezoid(j / w, w)
    assert lam[0] == pytest.approx(lam_ref, rel=0.01)
    assert lam[1] == 0
