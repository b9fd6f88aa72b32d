"""Electronic system container: orbital energies, antisymmetrized two-electron
integrals over spin-orbitals, and dipole matrices.

Storage convention
------------------
``v[r, s, p, q]`` is the antisymmetrized physicist-notation element
<rs||pq>; the two-electron operator is (1/4) sum v[r,s,p,q] a+_r a+_s a_q a_p,
normal-ordered against the Aufbau reference determinant.  The one-electron
part of the Hamiltonian is taken to be diagonal with entries ``eps``.
"""

import re
from dataclasses import dataclass, field

import numpy as np

SYMMETRY_TOL = 1e-10


class IntegralParseError(ValueError):
    """Malformed record in an integral file; carries the line number."""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class SymmetryError(ValueError):
    pass


@dataclass(frozen=True)
class SpinOrbitalSystem:
    """Immutable spin-orbital model: eps (n,), v (n,n,n,n), mu (3,n,n)."""

    eps: np.ndarray
    v: np.ndarray
    mu: np.ndarray
    n_occ: int

    def __post_init__(self):
        object.__setattr__(self, "eps", np.asarray(self.eps, dtype=float))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=complex))
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=complex))
        n = self.eps.shape[0]
        if self.v.shape != (n, n, n, n):
            raise ValueError("v has wrong shape")
        if self.mu.shape != (3, n, n):
            raise ValueError("mu has wrong shape")
        if not (0 < self.n_occ < n):
            raise ValueError("n_occ out of range")
        if not np.all(np.isfinite(self.eps)):
            raise ValueError("orbital energies must be finite")

    @property
    def n_orb(self):
        return self.eps.shape[0]

    @property
    def n_virt(self):
        return self.n_orb - self.n_occ

    @property
    def occ(self):
        return np.arange(self.n_occ)

    @property
    def virt(self):
        return np.arange(self.n_occ, self.n_orb)

    def ph_gaps(self):
        """Matrix of bare gaps eps_a - eps_i, shape (n_occ, n_virt)."""
        return self.eps[self.virt][None, :] - self.eps[self.occ][:, None]


@dataclass(frozen=True)
class SymmetryReport:
    antisymmetry: float
    hermiticity_v: float
    hermiticity_mu: float
    tol: float = SYMMETRY_TOL

    @property
    def ok(self):
        return max(self.antisymmetry, self.hermiticity_v, self.hermiticity_mu) <= self.tol

    def __str__(self):
        flag = lambda x: "" if x <= self.tol else "  <-- exceeds tol"
        return (
            f"antisymmetry   max dev {self.antisymmetry:.3e}{flag(self.antisymmetry)}\n"
            f"hermiticity V  max dev {self.hermiticity_v:.3e}{flag(self.hermiticity_v)}\n"
            f"hermiticity mu max dev {self.hermiticity_mu:.3e}{flag(self.hermiticity_mu)}"
        )


def validate_symmetries(system):
    """Largest absolute deviation per symmetry class of the stored tensors."""
    v = system.v
    anti = max(
        np.abs(v + v.transpose(1, 0, 2, 3)).max(),
        np.abs(v + v.transpose(0, 1, 3, 2)).max(),
    )
    herm_v = np.abs(v - v.transpose(2, 3, 0, 1).conj()).max()
    herm_mu = np.abs(system.mu - system.mu.transpose(0, 2, 1).conj()).max()
    return SymmetryReport(float(anti), float(herm_v), float(herm_mu))


def require_valid(system, tol=SYMMETRY_TOL):
    report = validate_symmetries(system)
    if max(report.antisymmetry, report.hermiticity_v, report.hermiticity_mu) > tol:
        raise SymmetryError(f"tensor symmetry violated beyond {tol:g}:\n{report}")
    return system


# --- spatial -> spin-orbital expansion ---------------------------------------

def spin_orbital_tensors(eps_spatial, two_e_chem, mu_spatial=None):
    """Expand spatial-orbital integrals to the spin-orbital basis.

    ``two_e_chem[p,q,r,s]`` is the chemist-notation spatial integral (pq|rs).
    Spin-orbital index 2*p is the alpha and 2*p+1 the beta component of
    spatial orbital p.  Returns (eps, v_antisym, mu).
    """
    eps_spatial = np.asarray(eps_spatial, dtype=float)
    two_e_chem = np.asarray(two_e_chem, dtype=complex)
    n_sp = eps_spatial.shape[0]
    n = 2 * n_sp

    eps = np.repeat(eps_spatial, 2)

    spatial = np.arange(n) // 2
    spin = np.arange(n) % 2
    same_spin = (spin[:, None] == spin[None, :]).astype(float)

    # physicist <pq|rs> = (pr|qs) delta(sp_p,sp_r) delta(sp_q,sp_s)
    chem = two_e_chem[np.ix_(spatial, spatial, spatial, spatial)]
    phys = np.einsum("prqs,pr,qs->pqrs", chem, same_spin, same_spin, optimize=True)
    v = phys - phys.transpose(0, 1, 3, 2)

    if mu_spatial is None:
        mu = np.zeros((3, n, n), dtype=complex)
    else:
        mu_spatial = np.asarray(mu_spatial, dtype=complex)
        mu = mu_spatial[:, spatial][:, :, spatial] * same_spin[None, :, :]
    return eps, v, mu


# --- FCIDUMP-style loader -----------------------------------------------------

def load_fcidump(path, n_electrons, mu_spatial=None, tol=SYMMETRY_TOL):
    """Read a free-format integral file: ``value i j k l`` per line.

    Two-electron records hold chemist (ij|kl) spatial integrals with 8-fold
    permutational symmetry; ``value i 0 0 0`` records are orbital energies and
    ``value 0 0 0 0`` (core energy) is ignored.  Orbital indices are 1-based.
    """
    energies = {}
    records = []
    n_max = 0
    with open(path) as handle:
        for line_no, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 5:
                raise IntegralParseError(
                    f"expected 'value i j k l', got {line!r}", line_no)
            try:
                value = float(parts[0])
                i, j, k, l = (int(p) for p in parts[1:])
            except ValueError as exc:
                raise IntegralParseError(str(exc), line_no) from None
            if min(i, j, k, l) < 0:
                raise IntegralParseError("negative orbital index", line_no)
            n_max = max(n_max, i, j, k, l)
            if i == 0 and j == 0 and k == 0 and l == 0:
                continue  # core energy
            if j == 0 and k == 0 and l == 0:
                energies[i - 1] = value
            elif k == 0 and l == 0:
                raise IntegralParseError(
                    "one-electron off-diagonal records are not supported "
                    "(one-electron part must be diagonal)", line_no)
            else:
                if min(i, j, k, l) == 0:
                    raise IntegralParseError("two-electron record with a zero index", line_no)
                records.append((value, i - 1, j - 1, k - 1, l - 1))

    if n_max == 0:
        raise IntegralParseError("no records found", None)
    n_sp = n_max
    eps_spatial = np.zeros(n_sp)
    for idx, value in energies.items():
        eps_spatial[idx] = value

    chem = np.zeros((n_sp, n_sp, n_sp, n_sp))
    seen = np.zeros((n_sp, n_sp, n_sp, n_sp), dtype=bool)
    for value, i, j, k, l in records:
        for a, b, c, d in {(i, j, k, l), (j, i, k, l), (i, j, l, k), (j, i, l, k),
                           (k, l, i, j), (l, k, i, j), (k, l, j, i), (l, k, j, i)}:
            if seen[a, b, c, d] and abs(chem[a, b, c, d] - value) > tol:
                raise SymmetryError(
                    f"integral ({i + 1} {j + 1}|{k + 1} {l + 1}) conflicts with an "
                    f"earlier permutation partner beyond {tol:g}")
            chem[a, b, c, d] = value
            seen[a, b, c, d] = True

    eps, v, mu = spin_orbital_tensors(eps_spatial, chem, mu_spatial)
    if n_electrons < 1 or n_electrons >= 2 * n_sp:
        raise ValueError("n_electrons out of range")
    if n_electrons % 2:
        raise ValueError("n_electrons must be even (closed-shell reference)")

    # occupied = lowest-energy spin-orbitals; reorder basis so they come first
    order = np.argsort(eps, kind="stable")
    eps = eps[order]
    v = v[np.ix_(order, order, order, order)]
    mu = mu[:, order][:, :, order]
    system = SpinOrbitalSystem(eps=eps, v=v, mu=mu, n_occ=n_electrons)
    return require_valid(system, tol)


# --- synthetic model builder ---------------------------------------------------

@dataclass(frozen=True)
class ModelBuilder:
    """Deterministic random model; same seed reproduces identical tensors."""

    seed: int
    n_occ: int
    n_virt: int
    scale: float
    eps_occ_range: tuple = (-1.2, -0.4)
    eps_virt_range: tuple = (0.4, 1.2)
    dipole_scale: float = 1.0
    complex_valued: bool = False


def build_model(builder):
    if builder.n_occ < 1 or builder.n_virt < 1:
        raise ValueError("counts must be >= 1")
    rng = np.random.default_rng(builder.seed)
    n = builder.n_occ + builder.n_virt

    lo, hi = builder.eps_occ_range
    eps_occ = np.sort(rng.uniform(lo, hi, builder.n_occ))
    lo, hi = builder.eps_virt_range
    eps_virt = np.sort(rng.uniform(lo, hi, builder.n_virt))
    eps = np.concatenate([eps_occ, eps_virt])

    raw = rng.standard_normal((n, n, n, n))
    if builder.complex_valued:
        raw = raw + 1j * rng.standard_normal((n, n, n, n))
    v = antisymmetrize(raw)
    v = 0.5 * (v + v.transpose(2, 3, 0, 1).conj())
    peak = np.abs(v).max()
    if peak > 0 and builder.scale > 0:
        v *= builder.scale / peak
    else:
        v = np.zeros_like(v)

    mu = rng.standard_normal((3, n, n)) * builder.dipole_scale
    mu = 0.5 * (mu + mu.transpose(0, 2, 1))
    return SpinOrbitalSystem(eps=eps, v=v.astype(complex), mu=mu.astype(complex),
                             n_occ=builder.n_occ)


def antisymmetrize(t):
    """Project a rank-4 tensor onto the <rs||pq> antisymmetry pattern."""
    return 0.25 * (t - t.transpose(1, 0, 2, 3) - t.transpose(0, 1, 3, 2)
                   + t.transpose(1, 0, 3, 2))


# --- native structured-text format ---------------------------------------------

def save_native(system, path):
    """Write eps, V, mu to a structured text file; round-trips to 1e-14."""
    with open(path, "w") as out:
        out.write("polartcl-system 1\n")
        out.write(f"n_orb {system.n_orb}\n")
        out.write(f"n_occ {system.n_occ}\n")
        out.write("eps\n")
        for value in system.eps:
            out.write(f"{float(value)!r}\n")
        out.write("v\n")
        nz = np.argwhere(np.abs(system.v) > 0)
        out.write(f"{len(nz)}\n")
        for r, s, p, q in nz:
            z = system.v[r, s, p, q]
            out.write(f"{r} {s} {p} {q} {float(z.real)!r} {float(z.imag)!r}\n")
        out.write("mu\n")
        nz = np.argwhere(np.abs(system.mu) > 0)
        out.write(f"{len(nz)}\n")
        for a, p, q in nz:
            z = system.mu[a, p, q]
            out.write(f"{a} {p} {q} {float(z.real)!r} {float(z.imag)!r}\n")
        out.write("end\n")


def load_native(path):
    with open(path) as handle:
        lines = [ln.strip() for ln in handle]
    pos = 0

    def take():
        nonlocal pos
        while pos < len(lines) and not lines[pos]:
            pos += 1
        if pos >= len(lines):
            raise IntegralParseError("unexpected end of file", pos)
        pos += 1
        return lines[pos - 1]

    header = take()
    if not header.startswith("polartcl-system"):
        raise IntegralParseError("not a polartcl system file", 1)
    n_orb = int(take().split()[1])
    n_occ = int(take().split()[1])
    if take() != "eps":
        raise IntegralParseError("expected eps section", pos)
    eps = np.array([float(take()) for _ in range(n_orb)])
    if take() != "v":
        raise IntegralParseError("expected v section", pos)
    v = np.zeros((n_orb,) * 4, dtype=complex)
    for _ in range(int(take())):
        r, s, p, q, re_, im_ = take().split()
        v[int(r), int(s), int(p), int(q)] = float(re_) + 1j * float(im_)
    if take() != "mu":
        raise IntegralParseError("expected mu section", pos)
    mu = np.zeros((3, n_orb, n_orb), dtype=complex)
    for _ in range(int(take())):
        a, p, q, re_, im_ = take().split()
        mu[int(a), int(p), int(q)] = float(re_) + 1j * float(im_)
    return SpinOrbitalSystem(eps=eps, v=v, mu=mu, n_occ=n_occ)
