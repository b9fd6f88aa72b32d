import numpy as np
import pytest

from polartcl.oracle import (FockSpaceRep, TruncationError, TruncatedBoson,
                             anticommutator_check, boson_trace, exact_cis,
                             exact_fci, exact_fci_poles)
from polartcl.system import ModelBuilder, SpinOrbitalSystem, build_model


def test_anticommutators(sys22):
    rep = FockSpaceRep(4, 2)
    assert anticommutator_check(rep) < 1e-13


def test_cis_zero_interaction():
    system = build_model(ModelBuilder(seed=1, n_occ=2, n_virt=3, scale=0.0))
    vals, _ = exact_cis(system)
    gaps = np.sort(system.ph_gaps().reshape(-1))
    np.testing.assert_allclose(np.sort(vals), gaps, atol=1e-13)


def test_cis_degenerate_pair_splits_symmetrically():
    eps = np.array([-0.5, -0.5, 0.5, 0.5])
    v = np.zeros((4, 4, 4, 4), dtype=complex)
    # single coupling element between the two degenerate ph pairs:
    # A[(0,3),(1,2)] = <3 1 || 0 2> pattern with antisymmetrized storage
    w = 0.02
    for (a, b, c, d), val in [((3, 1, 0, 2), w)]:
        v[a, b, c, d] = v[b, a, d, c] = val
        v[b, a, c, d] = v[a, b, d, c] = -val
        v[c, d, a, b] = v[d, c, b, a] = val
        v[d, c, a, b] = v[c, d, b, a] = -val
    system = SpinOrbitalSystem(eps=eps, v=v, mu=np.zeros((3, 4, 4)), n_occ=2)
    vals, _ = exact_cis(system)
    coupled = [x for x in vals if abs(x - 1.0) > 1e-12]
    assert len(coupled) == 2
    np.testing.assert_allclose(sorted(coupled), [1.0 - w, 1.0 + w], atol=1e-12)


def test_fci_zero_interaction_single_gaps():
    system = build_model(ModelBuilder(seed=2, n_occ=1, n_virt=2, scale=0.0))
    poles = exact_fci_poles(system)
    gaps = np.sort(system.ph_gaps().reshape(-1))
    np.testing.assert_allclose(poles[:2], gaps, atol=1e-12)


def test_fci_two_level_analytic():
    # 2 spin-orbitals, 1 electron: only single excitation, no correlation
    eps = np.array([-0.4, 0.6])
    v = np.zeros((2, 2, 2, 2), dtype=complex)
    system = SpinOrbitalSystem(eps=eps, v=v, mu=np.zeros((3, 2, 2)), n_occ=1)
    poles = exact_fci_poles(system)
    assert poles[0] == pytest.approx(1.0, abs=1e-13)

    # 4 spin-orbitals, 2 electrons with one pair-coupling element: the ground
    # and doubly excited determinant mix through a 2x2 block
    k = 0.07
    v4 = np.zeros((4, 4, 4, 4), dtype=complex)
    # <23||01> chain coupling |01> and |23> determinants
    perms = [((2, 3, 0, 1), 1), ((3, 2, 0, 1), -1), ((2, 3, 1, 0), -1),
             ((3, 2, 1, 0), 1)]
    for (a, b, c, d), sign in perms:
        v4[a, b, c, d] = sign * k
        v4[c, d, a, b] = sign * k
    eps4 = np.array([-0.5, -0.45, 0.5, 0.57])
    system4 = SpinOrbitalSystem(eps=eps4, v=v4, mu=np.zeros((3, 4, 4)), n_occ=2)
    from polartcl.oracle import FockSpaceRep
    rep = FockSpaceRep(4, 2)
    h = rep.hamiltonian(system4)
    # analytic 2x2: <01|H|01> = 0 (reference), <23|H|23> = gap sum, coupling k
    gap = (eps4[2] + eps4[3]) - (eps4[0] + eps4[1])
    lo = 0.5 * (gap - np.sqrt(gap ** 2 + 4 * k ** 2))
    poles = exact_fci_poles(system4)
    e0_expected = lo
    counts = np.array([bin(s).count("1") for s in range(rep.dim)])
    sector = np.where(counts == 2)[0]
    vals = np.linalg.eigvalsh(h[np.ix_(sector, sector)])
    assert vals[0] == pytest.approx(e0_expected, abs=1e-12)


def test_fci_invariant_under_occupied_relabeling():
    system = build_model(ModelBuilder(seed=9, n_occ=2, n_virt=2, scale=0.2))
    poles = exact_fci_poles(system)
    # relabel the two occupied orbitals (swap rows/cols 0 and 1 everywhere)
    perm = np.array([1, 0, 2, 3])
    swapped = SpinOrbitalSystem(
        eps=system.eps[perm],
        v=system.v[np.ix_(perm, perm, perm, perm)],
        mu=system.mu[:, perm][:, :, perm], n_occ=2)
    poles2 = exact_fci_poles(swapped)
    np.testing.assert_allclose(np.sort(poles), np.sort(poles2), atol=1e-11)


def test_boson_identity_product():
    val = boson_trace([(np.zeros(1), 0.0)], [0.3], 5.0, n_max=30)
    assert val == pytest.approx(1.0, abs=1e-12)


def test_boson_single_pair_matches_closed_form():
    from polartcl.bath import bcf_from_sums
    omega, beta, mt, tau = 0.25, 7.0, 0.1, 3.3
    exact = boson_trace([(np.array([mt]), tau), (np.array([-mt]), 0.0)],
                        [omega], beta, n_max=60)
    closed = bcf_from_sums(np.array([mt]), np.array([-mt]), np.array([omega]),
                           beta, tau)
    assert exact == pytest.approx(closed, abs=1e-8)


def test_boson_zero_temperature_limits_agree():
    omega, mt, tau = 0.25, 0.12, 2.0
    big_beta = boson_trace([(np.array([mt]), tau), (np.array([-mt]), 0.0)],
                           [omega], 1e6, n_max=40)
    analytic = np.exp(-mt ** 2) * np.exp(mt ** 2 * np.exp(-1j * omega * tau))
    assert big_beta == pytest.approx(analytic, abs=1e-8)


def test_boson_truncation_error_raised():
    with pytest.raises(TruncationError):
        boson_trace([(np.array([2.5]), 1.0), (np.array([2.5]), 0.0)],
                    [0.01], 2.0, n_max=12)


def test_thermal_density_normalized():
    tb = TruncatedBoson([0.2, 0.4], beta=3.0, n_max=20)
    assert np.trace(tb.thermal_density()) == pytest.approx(1.0, abs=1e-12)


def test_displacement_unitary():
    tb = TruncatedBoson([0.2], beta=3.0, n_max=50)
    from polartcl.oracle import BosonOp
    d = tb.displacement(BosonOp(np.array([0.3]), 1.2))
    dev = np.abs(d @ d.conj().T - np.eye(d.shape[0]))
    # unitarity holds away from the truncation edge
    assert dev[:30, :30].max() < 1e-10
