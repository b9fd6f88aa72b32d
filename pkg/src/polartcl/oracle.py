"""Brute-force validators: dense Fock-space electronic algebra, truncated-boson
thermal traces, CIS and full-CI diagonalization.

These are deliberately slow, direct constructions used as ground truth for the
generated equation-of-motion terms and for the closed-form bath correlation
functions.  They ship with the library so the ``validate`` CLI subcommand can
run them on user models.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm, eigh

from .system import SpinOrbitalSystem


# --- fermionic Fock space -------------------------------------------------------

class FockSpaceRep:
    """Occupation-number basis (dimension 2^n) with dense a / a+ matrices."""

    def __init__(self, n_orb, n_occ):
        if n_orb > 14:
            raise ValueError("Fock-space oracle limited to small bases")
        self.n_orb = n_orb
        self.n_occ = n_occ
        self.dim = 2 ** n_orb
        self.a = [self._annihilator(p) for p in range(n_orb)]
        self.adag = [m.conj().T for m in self.a]
        self.vacuum_index = self._det_index(range(n_occ))
        vac = np.zeros(self.dim, dtype=complex)
        vac[self.vacuum_index] = 1.0
        self.vacuum = vac

    def _annihilator(self, p):
        # Jordan-Wigner: orbital p occupies bit p; sign from bits < p.
        dim = self.dim
        mat = np.zeros((dim, dim), dtype=complex)
        for state in range(dim):
            if state & (1 << p):
                target = state & ~(1 << p)
                sign = (-1) ** bin(state & ((1 << p) - 1)).count("1")
                mat[target, state] = sign
        return mat

    def _det_index(self, occupied):
        idx = 0
        for p in occupied:
            idx |= 1 << p
        return idx

    def number_op(self, p):
        return self.adag[p] @ self.a[p]

    def e_pq(self, p, q):
        """Bare a+_p a_q."""
        return self.adag[p] @ self.a[q]

    def one_body(self, h):
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for p in range(self.n_orb):
            for q in range(self.n_orb):
                if h[p, q] != 0:
                    out += h[p, q] * self.e_pq(p, q)
        return out

    def two_body_bare(self, v):
        """(1/4) sum v[r,s,p,q] a+_r a+_s a_q a_p."""
        out = np.zeros((self.dim, self.dim), dtype=complex)
        n = self.n_orb
        for r in range(n):
            for s in range(n):
                block = self.adag[r] @ self.adag[s]
                for p in range(n):
                    for q in range(n):
                        coef = v[r, s, p, q]
                        if coef != 0:
                            out += 0.25 * coef * block @ self.a[q] @ self.a[p]
        return out

    def two_body_normal(self, v):
        """Normal-ordered two-body operator: bare minus mean-field and scalar.

        (1/4) v N[a+a+aa] = (1/4) v a+a+aa - sum_i <pi||qi> N[a+_p a_q]
                             - (1/2) sum_ij <ij||ij>.
        """
        occ = range(self.n_occ)
        bare = self.two_body_bare(v)
        f2 = np.zeros((self.n_orb, self.n_orb), dtype=complex)
        for i in occ:
            f2 += v[:, i, :, i]
        scalar = 0.5 * sum(v[i, j, i, j] for i in occ for j in occ)
        return bare - self.one_body_normal(f2) - scalar * np.eye(self.dim)

    def one_body_normal(self, h):
        """sum h[p,q] N[a+_p a_q] = sum h[p,q] a+_p a_q - sum_occ h[i,i]."""
        shift = sum(h[i, i] for i in range(self.n_occ))
        return self.one_body(h) - shift * np.eye(self.dim)

    def hamiltonian(self, system):
        """Model Hamiltonian: diagonal one-electron part (normal-ordered) plus
        the normal-ordered two-electron interaction; reference energy 0."""
        return (self.one_body_normal(np.diag(system.eps))
                + self.two_body_normal(system.v))

    def dipole_matrix(self, system, direction):
        return self.one_body(system.mu[direction])


def anticommutator_check(rep):
    """Max deviation of {a_p, a+_q} = delta_pq as matrix identities."""
    dev = 0.0
    eye = np.eye(rep.dim)
    for p in range(rep.n_orb):
        for q in range(rep.n_orb):
            acomm = rep.a[p] @ rep.adag[q] + rep.adag[q] @ rep.a[p]
            target = eye if p == q else 0.0
            dev = max(dev, np.abs(acomm - target).max())
    return dev


# --- exact electronic references -------------------------------------------------

def exact_cis(system):
    """Eigenvalues/eigenvectors of the TDA response matrix
    A[(ia),(jb)] = (eps_a - eps_i) delta + <aj||ib>, built densely."""
    no, nv = system.n_occ, system.n_virt
    occ, virt = system.occ, system.virt
    dim = no * nv
    a_mat = np.zeros((dim, dim), dtype=complex)
    for i in range(no):
        for a in range(nv):
            row = i * nv + a
            a_mat[row, row] += system.eps[virt[a]] - system.eps[occ[i]]
            for j in range(no):
                for b in range(nv):
                    a_mat[row, j * nv + b] += system.v[virt[a], occ[j], occ[i], virt[b]]
    herm_dev = np.abs(a_mat - a_mat.conj().T).max()
    if herm_dev > 1e-9:
        raise ValueError(f"CIS matrix not Hermitian (dev {herm_dev:.2e})")
    vals, vecs = eigh(a_mat)
    return vals, vecs


def exact_fci(system):
    """Full diagonalization of the model Hamiltonian in the N-electron sector.

    Returns (excitation_energies, transition_dipoles) where transition dipoles
    are |<k|mu_dir|0>| per direction, and the ground state index 0.
    """
    rep = FockSpaceRep(system.n_orb, system.n_occ)
    h = rep.hamiltonian(system)
    # restrict to the fixed particle-number sector
    counts = np.array([bin(s).count("1") for s in range(rep.dim)])
    sector = np.where(counts == system.n_occ)[0]
    h_sec = h[np.ix_(sector, sector)]
    vals, vecs = eigh(h_sec)
    excitations = vals[1:] - vals[0]
    dips = np.zeros((3, len(vals) - 1))
    for direction in range(3):
        mu = rep.dipole_matrix(system, direction)[np.ix_(sector, sector)]
        amp = vecs.conj().T @ mu @ vecs[:, 0]
        dips[direction] = np.abs(amp[1:])
    return excitations, dips


def exact_fci_poles(system):
    return exact_fci(system)[0]


# --- truncated boson space --------------------------------------------------------

@dataclass
class BosonOp:
    """One displacement factor in an ordered product: sign * mtilde per mode,
    evolved to ``time``: exp[ sum_m c_m (b+_m e^{i w_m t} - b_m e^{-i w_m t}) ]."""

    coeffs: np.ndarray  # per-mode displacement amplitude (signed)
    time: float


class TruncatedBoson:
    """Dense n_max-level oscillators for <= 2 modes with a thermal state."""

    def __init__(self, omegas, beta, n_max=60):
        self.omegas = np.asarray(omegas, dtype=float)
        if self.omegas.size > 2:
            raise ValueError("truncated-boson oracle limited to 2 modes")
        self.beta = float(beta)
        self.n_max = int(n_max)
        self.levels = self.n_max + 1
        self._b_single = np.diag(np.sqrt(np.arange(1, self.levels)), k=1)

    def _lift(self, mat, mode):
        ops = [np.eye(self.levels)] * self.omegas.size
        ops[mode] = mat
        out = ops[0]
        for extra in ops[1:]:
            out = np.kron(out, extra)
        return out

    def lowering(self, mode):
        return self._lift(self._b_single, mode)

    def thermal_weights(self, mode):
        n = np.arange(self.levels)
        if np.isinf(self.beta):
            w = np.zeros(self.levels)
            w[0] = 1.0
            return w
        w = np.exp(-self.beta * self.omegas[mode] * n)
        return w / w.sum()

    def thermal_density(self):
        rho = np.diag(self.thermal_weights(0))
        for mode in range(1, self.omegas.size):
            rho = np.kron(rho, np.diag(self.thermal_weights(mode)))
        return rho

    def displacement(self, op):
        """Matrix for one BosonOp, built by exact exponentiation."""
        gen = 0.0
        for mode, omega in enumerate(self.omegas):
            c = op.coeffs[mode]
            if c == 0:
                continue
            b = self.lowering(mode)
            phase = np.exp(1j * omega * op.time)
            gen = gen + c * (phase * b.conj().T - np.conj(phase) * b)
        if np.isscalar(gen):
            dim = self.levels ** self.omegas.size
            return np.eye(dim, dtype=complex)
        return expm(gen)

    def trace_product(self, ops):
        """Thermal trace of an ordered product of displacement operators."""
        dim = self.levels ** self.omegas.size
        prod = np.eye(dim, dtype=complex)
        for op in ops:
            prod = prod @ self.displacement(op)
        return complex(np.trace(prod @ self.thermal_density()))


class TruncationError(RuntimeError):
    pass


def boson_trace(ops, omegas, beta, n_max=60, check=True, rtol=1e-8):
    """Exact thermal trace of time-evolved displacement products.

    ``ops`` is a list of (signed per-mode coefficient array, time) pairs in
    operator order (leftmost first).  Convergence in n_max is verified by
    recomputing with n_max - 10.
    """
    ops = [BosonOp(np.atleast_1d(np.asarray(c, dtype=float)), t) for c, t in ops]
    full = TruncatedBoson(omegas, beta, n_max).trace_product(ops)
    if check:
        smaller = TruncatedBoson(omegas, beta, n_max - 10).trace_product(ops)
        if abs(full - smaller) > rtol * max(1.0, abs(full)):
            raise TruncationError(
                f"boson trace not converged at n_max={n_max}: "
                f"{full} vs {smaller} at n_max-10")
    return full


# --- dense TCL superoperator -------------------------------------------------------

def _interaction_picture(rep, op, eps, time):
    """e^{i F t} op e^{-i F t} with diagonal one-particle F (normal-ordered
    shift cancels in the conjugation)."""
    det_energy = np.zeros(rep.dim)
    for p in range(rep.n_orb):
        det_energy += eps[p] * ((np.arange(rep.dim) >> p) & 1)
    phase = np.exp(1j * det_energy * time)
    return (phase[:, None] * op) * phase.conj()[None, :]


class TclSuperoperator:
    """Explicit P L(t) Q L(s) P map over the particle-hole block.

    The particle-hole projector uses the trace pairing against transition
    densities anchored on the reference determinant:
    P(M) = sum_kc E_ck |0><0| Tr[E_ck^dag M].
    """

    def __init__(self, system, eps=None, v=None):
        self.system = system
        self.rep = FockSpaceRep(system.n_orb, system.n_occ)
        self.eps = system.eps if eps is None else eps
        v = system.v if v is None else v
        self.v_normal = self.rep.two_body_normal(v)
        self.rho0 = np.outer(self.rep.vacuum, self.rep.vacuum.conj())
        no, nv = system.n_occ, system.n_virt
        self.e_ph = [[self.rep.e_pq(system.virt[a], system.occ[i])
                      for a in range(nv)] for i in range(no)]

    def ph_object(self, amp):
        """Transition density sum amp[i,a] E_ai rho_0."""
        no, nv = self.system.n_occ, self.system.n_virt
        out = np.zeros((self.rep.dim, self.rep.dim), dtype=complex)
        for i in range(no):
            for a in range(nv):
                if amp[i, a] != 0:
                    out += amp[i, a] * self.e_ph[i][a] @ self.rho0
        return out

    def ph_extract(self, mat):
        """Coefficients Tr[E_ai^dag M] as an (n_occ, n_virt) array."""
        no, nv = self.system.n_occ, self.system.n_virt
        out = np.zeros((no, nv), dtype=complex)
        for i in range(no):
            for a in range(nv):
                out[i, a] = np.trace(self.e_ph[i][a].conj().T @ mat)
        return out

    def project_ph(self, mat):
        coeff = self.ph_extract(mat)
        return self.ph_object(coeff)

    def liouville(self, mat, time):
        v_t = _interaction_picture(self.rep, self.v_normal, self.eps, time)
        return -1j * (v_t @ mat - mat @ v_t)

    def first_order_map(self, amp, time=0.0):
        """P L(t) P acting on a ph amplitude (interaction picture)."""
        return self.ph_extract(self.liouville(self.ph_object(amp), time))

    def second_order_map(self, amp, t, s):
        """P L(t) Q L(s) P acting on a ph amplitude (interaction picture,
        adiabatic limit: all bath factors equal 1)."""
        m1 = self.liouville(self.ph_object(amp), s)
        m1_q = m1 - self.project_ph(m1)
        m2 = self.liouville(m1_q, t)
        return self.ph_extract(m2)


def superoperator_tcl(system, t, s, amp, eps=None, v=None):
    """Convenience wrapper building the dense map once."""
    return TclSuperoperator(system, eps=eps, v=v).second_order_map(amp, t, s)


# --- dense electron (x) boson oracle -----------------------------------------------

class ElectronBosonOracle:
    """Exact P L(t) Q L(s) P over electron (x) truncated-boson space.

    Builds the system-bath interaction explicitly (one-body bilinear
    coupling, or the dressed two-body interaction with displacement
    operators), so the second-order map includes every bath effect without
    any closed-form correlation function.  Ground truth for kernel ordering
    and the factorized bath factors of the projected route.
    """

    def __init__(self, system, omega, beta, n_max=24, eps=None):
        self.system = system
        self.rep = FockSpaceRep(system.n_orb, system.n_occ)
        self.eps = system.eps if eps is None else np.asarray(eps)
        self.omega = float(omega)
        self.beta = float(beta)
        self.boson = TruncatedBoson([omega], beta, n_max)
        self.nb = self.boson.levels
        self.dim = self.rep.dim * self.nb
        self._interaction = None
        # thermal bath state and vacuum-anchored electronic density
        rho_el = np.outer(self.rep.vacuum, self.rep.vacuum.conj())
        self.rho0 = np.kron(rho_el, self.boson.thermal_density())
        no, nv = system.n_occ, system.n_virt
        eye_b = np.eye(self.nb)
        self.e_ph = [[np.kron(self.rep.e_pq(system.virt[a], system.occ[i]), eye_b)
                      for a in range(nv)] for i in range(no)]

    # -- vertex builders -----------------------------------------------------

    def set_one_body_interaction(self, m_matrix):
        """Bilinear coupling sum_pq M[p,q] N[a+_p a_q] (x) (b+ + b)."""
        b = self.boson.lowering(0)
        bath_op = b + b.conj().T
        elec = self.rep.one_body_normal(np.asarray(m_matrix, dtype=complex))
        self._interaction = np.kron(elec, bath_op)

    def set_dressed_interaction(self, v_tilde, mtilde):
        """(1/4) sum v[r,s,p,q] N[a+_r a+_s a_q a_p] (x) X+_r X+_s X_q X_p."""
        n = self.system.n_orb
        x_ops = [self.boson.displacement(BosonOp(np.array([mtilde[p]]), 0.0))
                 for p in range(n)]
        x_dag = [x.conj().T for x in x_ops]
        total = np.zeros((self.dim, self.dim), dtype=complex)
        for r in range(n):
            for s in range(n):
                for p in range(n):
                    for q in range(n):
                        coef = v_tilde[r, s, p, q]
                        if coef == 0:
                            continue
                        elec = self._normal_string(
                            [(True, r), (True, s), (False, q), (False, p)])
                        bath = x_dag[r] @ x_dag[s] @ x_ops[q] @ x_ops[p]
                        total += 0.25 * coef * np.kron(elec, bath)
        self._interaction = total

    def _normal_string(self, ops):
        """Normal-ordered product: each operator is entirely quasi-creator or
        quasi-annihilator, so normal ordering is a signed stable reorder."""
        def quasi_creator(dag, p):
            return dag == (p >= self.system.n_occ)

        order = sorted(range(len(ops)),
                       key=lambda k: (0 if quasi_creator(*ops[k]) else 1, k))
        sign = _permutation_parity(order)
        mat = np.eye(self.rep.dim, dtype=complex)
        for k in order:
            dag, p = ops[k]
            mat = mat @ (self.rep.adag[p] if dag else self.rep.a[p])
        return sign * mat

    # -- picture and projectors ----------------------------------------------

    def _phases(self, time):
        det_energy = np.zeros(self.rep.dim)
        for p in range(self.rep.n_orb):
            det_energy += self.eps[p] * ((np.arange(self.rep.dim) >> p) & 1)
        full = det_energy[:, None] + self.omega * np.arange(self.nb)[None, :]
        return np.exp(1j * full.reshape(-1) * time)

    def liouville(self, mat, time):
        ph = self._phases(time)
        v_t = (ph[:, None] * self._interaction) * ph.conj()[None, :]
        return -1j * (v_t @ mat - mat @ v_t)

    def ph_extract(self, mat):
        no, nv = self.system.n_occ, self.system.n_virt
        out = np.zeros((no, nv), dtype=complex)
        for i in range(no):
            for a in range(nv):
                out[i, a] = np.trace(self.e_ph[i][a].conj().T @ mat)
        return out

    def ph_object(self, amp):
        no, nv = self.system.n_occ, self.system.n_virt
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for i in range(no):
            for a in range(nv):
                if amp[i, a] != 0:
                    out += amp[i, a] * self.e_ph[i][a] @ self.rho0
        return out

    def project(self, mat):
        return self.ph_object(self.ph_extract(mat))

    def first_order_map(self, amp, time=0.0):
        return self.ph_extract(self.liouville(self.ph_object(amp), time))

    def second_order_map(self, amp, t, s):
        m1 = self.liouville(self.ph_object(amp), s)
        m1_q = m1 - self.project(m1)
        return self.ph_extract(self.liouville(m1_q, t))


def _permutation_parity(order):
    seen = [False] * len(order)
    sign = 1
    for start in range(len(order)):
        if seen[start]:
            continue
        length = 0
        k = start
        while not seen[k]:
            seen[k] = True
            k = order[k]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign
