import numpy as np
import pytest
from dataclasses import replace

from polartcl.bath import bcf_from_sums, f_kernel
from polartcl.oracle import ElectronBosonOracle, TclSuperoperator
from polartcl.polaron import transform_integrals
from polartcl.bath import BathSpec, Mode
from polartcl.system import ModelBuilder, build_model
from polartcl.wick import (catalog_text, evaluate_terms_reference,
                           first_order_terms, hermitize_terms,
                           second_order_terms, untransformed_terms,
                           validate_against_superoperator)


def test_first_order_is_cis_coupling(sys22, rng):
    terms = first_order_terms()
    assert len(terms) == 1
    amp = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    dense = TclSuperoperator(sys22).first_order_map(amp, 0.7)
    cat = -1j * evaluate_terms_reference(terms, sys22.eps, sys22.v, amp,
                                         0.7, 0.7, 2)
    np.testing.assert_allclose(cat, dense, atol=1e-13)


def test_first_order_zero_interaction_reduces_to_gaps():
    system = build_model(ModelBuilder(seed=1, n_occ=2, n_virt=2, scale=0.0))
    terms = first_order_terms()
    amp = np.ones((2, 2), dtype=complex)
    cat = evaluate_terms_reference(terms, system.eps, system.v, amp, 0.0, 0.0, 2)
    assert np.abs(cat).max() == 0


def test_second_order_matches_superoperator_across_seeds():
    terms = second_order_terms(hermitize=False)
    for seed in range(5):
        system = build_model(ModelBuilder(seed=seed, n_occ=2, n_virt=2,
                                          scale=0.2, complex_valued=seed % 2 == 0))
        dev = validate_against_superoperator(terms, system, t=0.7, s=0.3, rng=seed)
        assert dev < 1e-12


def test_second_order_asymmetric_partitions():
    terms = second_order_terms(hermitize=False)
    for no, nv in [(1, 3), (3, 1), (2, 3)]:
        system = build_model(ModelBuilder(seed=11, n_occ=no, n_virt=nv, scale=0.15))
        assert validate_against_superoperator(terms, system, 1.3, 0.45, rng=1) < 1e-12


def test_sign_flip_is_detected(sys22):
    terms = list(second_order_terms(hermitize=False))
    terms[5] = replace(terms[5], coeff=-terms[5].coeff)
    dev = validate_against_superoperator(terms, sys22, 0.7, 0.3, rng=0)
    assert dev > 1e-4


def test_catalog_membership_and_counts():
    terms = second_order_terms(hermitize=False)
    assert len(terms) == 11  # documented convention, see README
    n_eq = sum(1 for t in terms if t.equilibrium_bath)
    assert n_eq == 1
    assert len(second_order_terms(hermitize=True)) == 22

    # the factorizable fifth-order chain:
    # out (i,a); o (i,c); vt creates (a,j) annihilates (b,d);
    # vs creates (b,d) annihilates (c,j)
    fifth = [t for t in terms if t.factorizable and t.scaling == 5
             and t.out_pattern[0] == t.o_pattern[0]
             and t.spaces[t.vt_pattern[1]] == "o"]
    assert fifth, "factorizable fifth-order chain term missing"
    t5 = fifth[0]
    assert set(t5.vt_pattern[2:]) == set(t5.vs_pattern[:2])

    # the non-factorizable sixth-order term: vt creates two holes and
    # annihilates (particle, hole of the output)
    sixth = [t for t in terms if not t.factorizable and t.scaling == 6
             and t.o_pattern[0] in t.vt_pattern[:2]
             and t.out_pattern[0] in t.vt_pattern[2:]]
    assert sixth, "sixth-order cross term missing"


def test_scaling_orders():
    terms = second_order_terms(hermitize=False)
    assert sorted(t.scaling for t in terms) == [5, 5, 5, 5, 6, 6, 6, 6, 6, 6, 6]
    assert all(t.scaling <= 4 for t in untransformed_terms(hermitize=False))


def test_particle_hole_conservation_and_double_indices():
    for terms in (second_order_terms(hermitize=False),
                  untransformed_terms(hermitize=False)):
        for t in terms:
            assert t.spaces[t.out_pattern[0]] == "o"
            assert t.spaces[t.out_pattern[1]] == "v"
            assert t.spaces[t.o_pattern[0]] == "o"
            assert t.spaces[t.o_pattern[1]] == "v"
            count = {}
            slots = (list(t.out_pattern) + list(t.o_pattern)
                     + list(t.vt_pattern) + list(t.vs_pattern or ()))
            for s in slots:
                count[s] = count.get(s, 0) + 1
            assert all(c == 2 for c in count.values())


def test_hermitized_pairs_structure():
    base = second_order_terms(hermitize=False)
    done = hermitize_terms(list(base))
    assert len(done) == 2 * len(base)
    for orig, (m1, m2) in zip(base, zip(done[::2], done[1::2])):
        assert m1.coeff == orig.coeff / 2
        assert m2.coeff == -orig.coeff / 2
        assert m2.out_pattern == orig.o_pattern
        assert m2.o_pattern == orig.out_pattern
        assert m2.kernel_delta_sign == -m1.kernel_delta_sign


def test_catalog_dump_deterministic():
    a = catalog_text(second_order_terms(hermitize=True))
    b = catalog_text(second_order_terms(hermitize=True))
    assert a == b
    assert "factorizable=True scaling=5" in a


def test_transformed_catalog_with_full_bath_against_dense_oracle(sys22):
    omega, beta = 0.35, 6.0
    rng = np.random.default_rng(7)
    mtilde = rng.uniform(-0.15, 0.2, 4)
    bath = BathSpec(modes=[Mode(omega=omega, coupling=mtilde * omega)], beta=beta)
    pol = transform_integrals(sys22, bath)
    orc = ElectronBosonOracle(sys22, omega, beta, n_max=22, eps=pol.eps_tilde)
    orc.set_dressed_interaction(pol.v_tilde, mtilde)
    amp = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    t, s = 1.1, 0.4
    dense = orc.second_order_map(amp, t, s)

    mt_table = mtilde[None, :]

    def bath_value(term, orb, t, s):
        u = sum(sg * mt_table[:, orb[sym]] for sg, sym in term.bath_t_slots())
        v = sum(sg * mt_table[:, orb[sym]] for sg, sym in term.bath_s_slots())
        return bcf_from_sums(u, v, np.array([omega]), beta, t - s,
                             conj=term.conj_bath,
                             equilibrium_only=term.equilibrium_bath)

    cat = evaluate_terms_reference(second_order_terms(hermitize=False),
                                   pol.eps_tilde, pol.v_tilde, amp, t, s, 2,
                                   bath_value=bath_value)
    assert np.abs(dense - cat).max() < 1e-12


def test_untransformed_catalog_against_dense_oracle(sys22, rng):
    omega, beta = 0.3, 8.0
    m = rng.standard_normal((4, 4)) * 0.1
    m = 0.5 * (m + m.T)
    orc = ElectronBosonOracle(sys22, omega, beta, n_max=30)
    orc.set_one_body_interaction(m)
    amp = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    t, s = 0.9, 0.35
    dense = orc.second_order_map(amp, t, s)

    def bath_value(term, orb, t, s, mode):
        f = f_kernel(omega, beta, t - s)
        return np.conj(f) if term.conj_bath else f

    # the full expansion (disconnected pieces included) is exact
    full = untransformed_terms(hermitize=False, include_disconnected=True)
    cat = evaluate_terms_reference(full, sys22.eps, None, amp, t, s, 2,
                                   bath_value=bath_value, mode_tensors=[(omega, m)])
    assert np.abs(dense - cat).max() < 1e-12

    # the connected-only catalog differs from the exact map by exactly the
    # dropped disconnected pieces
    conn = untransformed_terms(hermitize=False)
    cat_c = evaluate_terms_reference(conn, sys22.eps, None, amp, t, s, 2,
                                     bath_value=bath_value, mode_tensors=[(omega, m)])
    disc = [term for term in full if term not in set(conn)]
    assert disc
    cat_d = evaluate_terms_reference(disc, sys22.eps, None, amp, t, s, 2,
                                     bath_value=bath_value, mode_tensors=[(omega, m)])
    assert np.abs(dense - cat_c - cat_d).max() < 1e-12


def test_uniform_diagonal_coupling_cancels(sys22, rng):
    # a coupling proportional to the total number operator commutes with
    # everything: the generated terms must cancel exactly
    m = 0.3 * np.eye(4)
    amp = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))

    def bath_value(term, orb, t, s, mode):
        f = f_kernel(0.25, 5.0, t - s)
        return np.conj(f) if term.conj_bath else f

    for catalog in (untransformed_terms(hermitize=False),
                    untransformed_terms(hermitize=False, include_disconnected=True)):
        val = evaluate_terms_reference(catalog, sys22.eps, None, amp, 0.8, 0.2, 2,
                                       bath_value=bath_value,
                                       mode_tensors=[(0.25, m)])
        assert np.abs(val).max() < 1e-13


def test_adiabatic_limit_shared_with_superoperator(sys22):
    # V = 0 gives a vanishing map on both routes
    zero_v = np.zeros_like(sys22.v)
    terms = second_order_terms(hermitize=False)
    dev = validate_against_superoperator(terms, sys22, 0.7, 0.3, rng=2, v=zero_v)
    assert dev < 1e-15


def test_equal_times_matches_single_commutator_square(sys22, rng):
    # s = t: the dense map remains consistent with the catalog at coincident
    # times (the kernel integrand at tau = 0)
    terms = second_order_terms(hermitize=False)
    dev = validate_against_superoperator(terms, sys22, 0.6, 0.6, rng=3)
    assert dev < 1e-12
