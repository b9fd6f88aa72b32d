"""Ready-made model systems for the example workflows and the acceptance
suite: a two-chromophore transport dimer and a small vibronic absorber.

Both are synthetic spin-orbital models built from spatial-orbital data, with
baths specified in spectroscopic units.
"""

import numpy as np

from .bath import BathSpec, Mode
from .system import SpinOrbitalSystem, spin_orbital_tensors
from .units import HARTREE_CM, HARTREE_EV, beta_from_temperature


def _chem_tensor(n_sp, elements):
    """Chemist-notation (pq|rs) spatial tensor from a sparse element list,
    symmetrized over the 8-fold permutation group."""
    chem = np.zeros((n_sp,) * 4)
    for (p, q, r, s), value in elements.items():
        for a, b, c, d in {(p, q, r, s), (q, p, r, s), (p, q, s, r), (q, p, s, r),
                           (r, s, p, q), (s, r, p, q), (r, s, q, p), (s, r, q, p)}:
            chem[a, b, c, d] = value
    return chem


def spatial_system(eps_spatial, chem_elements, mu_elements, n_electrons):
    """Spin-orbital system from spatial data; orbitals stay in input order
    (occupied = first n_electrons spin-orbitals)."""
    eps_spatial = np.asarray(eps_spatial, dtype=float)
    n_sp = eps_spatial.size
    chem = _chem_tensor(n_sp, chem_elements)
    mu_sp = np.zeros((3, n_sp, n_sp))
    for (axis, p, q), value in mu_elements.items():
        mu_sp[axis, p, q] = value
        mu_sp[axis, q, p] = value
    eps, v, mu = spin_orbital_tensors(eps_spatial, chem, mu_sp)
    return SpinOrbitalSystem(eps=eps, v=v, mu=mu, n_occ=n_electrons)


def per_spatial_mtilde(values):
    """Expand per-spatial-orbital dimensionless couplings to spin-orbitals."""
    return np.repeat(np.asarray(values, dtype=float), 2)


def lorentzian_cluster(omega0, gamma, mtilde, n_points=33, span=6.0):
    """A Lorentzian-broadened oscillator as a cluster of discrete modes.

    The squared couplings sample a normalized Lorentzian of half-width
    ``gamma`` around ``omega0`` so the summed displacement strength matches
    the bare mode and its correlation function decays on 1/gamma.
    """
    mtilde = np.asarray(mtilde, dtype=float)
    if gamma <= 0:
        return [Mode(omega=omega0, coupling=mtilde * omega0)]
    lo = max(omega0 - span * gamma, 0.05 * omega0)
    grid = np.linspace(lo, omega0 + span * gamma, n_points)
    weight = gamma / np.pi / ((grid - omega0) ** 2 + gamma ** 2)
    weight = weight * np.gradient(grid)
    weight = weight / weight.sum()
    return [Mode(omega=float(w), coupling=np.sqrt(wt) * mtilde * w)
            for w, wt in zip(grid, weight)]


# --- two-chromophore transport dimer ---------------------------------------------


def transport_model(gap_high_ev=None, gap_low_ev=17.3, coupling=0.0055,
                    mode_cm=2831.0, temperature_k=273.0,
                    mtilde_by_frontier=(0.025, 0.05, 0.165, 0.055),
                    broadening=None, hole_offset=None, ct_coupling=0.0025,
                    mtilde_spatial=None):
    """Two weakly coupled two-level chromophores plus one bath oscillator.

    Spatial orbitals: 0 = hole level of the high-gap unit, 1 = hole level of
    the low-gap unit, 2 = particle level of the high-gap unit, 3 = particle
    level of the low-gap unit.  The interaction couples the two local
    transitions like a transition-dipole contact; ``ct_coupling`` adds a
    contact between each local transition and the charge-transfer ones.  The
    bath mode attaches to the four frontier orbitals with the given
    dimensionless displacements ordered (HOMO, HOMO-1, LUMO, LUMO+1) by
    orbital energy unless ``mtilde_spatial`` overrides the assignment;
    ``hole_offset`` places the charge-transfer configurations relative to the
    bright pair.
    """
    omega = mode_cm / HARTREE_CM
    # defaults: donor gap one quantum above the acceptor gap, and hole levels
    # two quanta apart so the charge-transfer sink sits one quantum below the
    # acceptor transition
    if gap_high_ev is None:
        gap_high_ev = gap_low_ev + omega * HARTREE_EV
    if hole_offset is None:
        hole_offset = 2.0 * omega
    gap_h = gap_high_ev / HARTREE_EV
    gap_l = gap_low_ev / HARTREE_EV
    eps_spatial = [-0.30, -0.30 + hole_offset,
                   -0.30 + gap_h, -0.30 + hole_offset + gap_l]
    # transition-density contacts: local-local plus an optional contact
    # linking the low-gap transition to the low-lying charge-transfer
    # configuration (a relaxation sink sharing its hole level)
    chem = {(0, 2, 1, 3): coupling}
    if ct_coupling:
        chem[(2, 1, 1, 3)] = ct_coupling   # (l_L h_R | h_R l_R)
    mu = {(0, 0, 2): 1.0, (0, 1, 3): 1.0}
    system = spatial_system(eps_spatial, chem, mu, n_electrons=4)

    if mtilde_spatial is None:
        # energy-ordered frontier labels: HOMO = highest occupied spatial orbital
        occ_order = np.argsort([eps_spatial[0], eps_spatial[1]])[::-1]
        virt_order = np.argsort([eps_spatial[2], eps_spatial[3]])
        mt_spatial = np.zeros(4)
        homo, homo_m1 = occ_order[0], occ_order[1]
        lumo, lumo_p1 = 2 + virt_order[0], 2 + virt_order[1]
        mt_spatial[homo] = mtilde_by_frontier[0]
        mt_spatial[homo_m1] = mtilde_by_frontier[1]
        mt_spatial[lumo] = mtilde_by_frontier[2]
        mt_spatial[lumo_p1] = mtilde_by_frontier[3]
    else:
        mt_spatial = np.asarray(mtilde_spatial, dtype=float)

    mtilde = per_spatial_mtilde(mt_spatial)
    gamma = omega / 7.0 if broadening is None else broadening
    bath = BathSpec(modes=lorentzian_cluster(omega, gamma, mtilde),
                    beta=beta_from_temperature(temperature_k))
    return system, bath


# --- small vibronic absorber -------------------------------------------------------


def vibronic_model(gap_ev=13.0, coupling=0.02, mode_cm=1600.0,
                   temperature_k=4397.25, mtilde_spatial=(0.0, 0.45)):
    """One bright transition dressed by a single strong oscillator at high
    temperature; the sideband progression around each adiabatic peak spaces
    by the mode frequency with roughly thermal weights."""
    gap = gap_ev / HARTREE_EV
    eps_spatial = [-0.35, -0.35 + gap]
    chem = {(0, 1, 0, 1): coupling, (0, 0, 1, 1): 2.5 * coupling}
    mu = {(0, 0, 1): 1.0}
    system = spatial_system(eps_spatial, chem, mu, n_electrons=2)
    omega = mode_cm / HARTREE_CM
    mtilde = per_spatial_mtilde(mtilde_spatial)
    bath = BathSpec(modes=[Mode(omega=omega, coupling=mtilde * omega)],
                    beta=beta_from_temperature(temperature_k))
    return system, bath
