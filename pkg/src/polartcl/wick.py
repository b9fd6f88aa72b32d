"""Symbolic generation of the particle-hole equation-of-motion terms.

The propagated object is a particle-hole transition density anchored on the
reference determinant,  sum_ia o_ia a+_a a_i |0><0|, tensored with the
equilibrium bath.  Matrix elements of the time-local generator are closed
vacuum expectation values, so every term is produced mechanically: expand the
nested commutators of the (normal-ordered) interaction at times t and s around
the transition density, contract fully with Wick's theorem, and keep connected
terms.  The four operator orderings carry either the two-time bath correlation
function or its complex conjugate depending on which vertex stands left of the
bath density inside the trace.  The projected route (one-body intermediate,
removed by the complementary projector) subtracts products of two first-order
maps whose bath factors are equal-time expectations; those terms keep only the
equilibrium part of the correlation function.

Terms are generated once, canonicalized (dummy relabeling plus the
antisymmetry of the interaction tensor), merged, and cached as plain data for
the propagator.
"""

import itertools
import string
from dataclasses import dataclass, replace
from fractions import Fraction
from functools import lru_cache

import numpy as np

OCC, VIR, GEN = "o", "v", "g"

_LETTERS = string.ascii_lowercase + string.ascii_uppercase


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class _Op:
    dag: bool
    sym: int
    tensor: str


@dataclass(frozen=True)
class TermSpec:
    """One contraction recipe of the equation of motion.

    Patterns hold canonical symbol ids; ``spaces[sym]`` is 'o' or 'v'.  For a
    vertex pattern the first half of the slots are created orbitals, the
    second half annihilated ones.  ``coeff`` is the real rational prefactor of
    the term as it enters d(o)/dt (the -i of the first-order map and the
    (-i)^2 of the second-order map are already folded in as real factors).
    """

    order: int
    coeff: Fraction
    vt_pattern: tuple
    vs_pattern: tuple | None
    o_pattern: tuple
    out_pattern: tuple
    spaces: tuple
    rank: int = 2
    conj_bath: bool = False
    equilibrium_bath: bool = False
    kernel_delta_sign: int = -1
    hermitized: bool = False
    routes: tuple = ()

    # -- derived patterns ----------------------------------------------------

    @staticmethod
    def _vertex_delta(pattern):
        half = len(pattern) // 2
        coefs = {}
        for k, sym in enumerate(pattern):
            coefs[sym] = coefs.get(sym, 0) + (1 if k < half else -1)
        return {s: c for s, c in coefs.items() if c}

    def delta_t(self):
        """Signed orbital-energy exponent of the later-time vertex."""
        return self._vertex_delta(self.vt_pattern)

    def delta_s(self):
        return self._vertex_delta(self.vs_pattern) if self.vs_pattern else {}

    def kernel_delta(self):
        """Exponent pattern of the memory kernel, int B(tau) e^{i delta tau}."""
        return {s: self.kernel_delta_sign * c for s, c in self.delta_s().items()}

    @staticmethod
    def _signed_slots(pattern):
        half = len(pattern) // 2
        return tuple((1 if k < half else -1, sym) for k, sym in enumerate(pattern))

    def bath_t_slots(self):
        return self._signed_slots(self.vt_pattern)

    def bath_s_slots(self):
        return self._signed_slots(self.vs_pattern) if self.vs_pattern else ()

    def all_syms(self):
        syms = set(self.out_pattern) | set(self.o_pattern) | set(self.vt_pattern)
        if self.vs_pattern:
            syms |= set(self.vs_pattern)
        return sorted(syms)

    def v_side_syms(self):
        syms = set(self.vt_pattern)
        if self.vs_pattern:
            syms |= set(self.vs_pattern)
        return syms

    @property
    def factorizable(self):
        """True when some amplitude/output index stays out of both vertices,
        so the vertex-plus-kernel block contracts to an intermediate first."""
        if self.order == 1:
            return False
        ext = set(self.o_pattern) | set(self.out_pattern)
        return bool(ext - self.v_side_syms())

    @property
    def scaling(self):
        """Polynomial order in the single-particle basis size."""
        if self.order == 1:
            return len(self.all_syms())
        if self.factorizable:
            return max(len(self.v_side_syms()),
                       len(set(self.o_pattern) | set(self.out_pattern)))
        return len(self.all_syms())

    def describe(self):
        sp = lambda s: f"{self.spaces[s]}{s}"
        pat = lambda p: "(" + " ".join(sp(s) for s in p) + ")" if p else "-"
        dk = self.kernel_delta()
        dk_txt = " ".join(f"{c:+d}*e[{sp(s)}]" for s, c in sorted(dk.items())) or "0"
        return (f"order={self.order} rank={self.rank} coeff={self.coeff} "
                f"conj={int(self.conj_bath)} eq={int(self.equilibrium_bath)} "
                f"herm={int(self.hermitized)}\n"
                f"  out={pat(self.out_pattern)} o={pat(self.o_pattern)}\n"
                f"  vt={pat(self.vt_pattern)} vs={pat(self.vs_pattern)}\n"
                f"  kernel_delta: {dk_txt}\n"
                f"  factorizable={self.factorizable} scaling={self.scaling} "
                f"routes={','.join(self.routes)}")


# --- Wick machinery -----------------------------------------------------------


def _full_contractions(ops):
    """All complete pairings of a closed operator string against the reference.

    A pair (i, j) with i < j survives only between different tensors, with
    opposite dagger characters; a daggered left partner gives an occupied
    contraction, an undaggered one a virtual contraction.  The sign follows
    from counting still-active operators between the partners, processing
    pairs left to right.
    """
    n = len(ops)
    active = [True] * n

    def rec(sign, pairs):
        first = -1
        for k in range(n):
            if active[k]:
                first = k
                break
        if first < 0:
            yield sign, tuple(pairs)
            return
        for j in range(first + 1, n):
            if not active[j]:
                continue
            if ops[j].tensor == ops[first].tensor or ops[j].dag == ops[first].dag:
                continue
            between = sum(1 for k in range(first + 1, j) if active[k])
            ctype = OCC if ops[first].dag else VIR
            active[first] = active[j] = False
            yield from rec(sign * (-1) ** between, pairs + [(first, j, ctype)])
            active[first] = active[j] = True

    yield from rec(1, [])


def _intersect(space_a, space_b):
    if space_a == space_b:
        return space_a
    if GEN in (space_a, space_b):
        return space_b if space_a == GEN else space_a
    return None


class _Union:
    def __init__(self, spaces):
        self.parent = {}
        self.space = dict(spaces)

    def find(self, s):
        root = s
        while self.parent.get(root, root) != root:
            root = self.parent[root]
        while self.parent.get(s, s) != s:
            self.parent[s], s = root, self.parent[s]
        return root

    def union(self, s1, s2, ctype):
        r1, r2 = self.find(s1), self.find(s2)
        merged = _intersect(self.space[r1], self.space[r2])
        if merged is None:
            return False
        merged = _intersect(merged, ctype)
        if merged is None:
            return False
        if r1 != r2:
            self.parent[r2] = r1
        self.space[r1] = merged
        return True


def _connected(pairs, tags):
    adj = {t: set() for t in tags}
    for i_tag, j_tag in pairs:
        adj[i_tag].add(j_tag)
        adj[j_tag].add(i_tag)
    seen = set()
    stack = [next(iter(tags))]
    while stack:
        t = stack.pop()
        if t in seen:
            continue
        seen.add(t)
        stack.extend(adj[t])
    return seen == set(tags)


def _route_groups(order_tags, rank):
    alloc = itertools.count()
    ops, slots, spaces = [], {}, {}
    for tag in order_tags:
        if tag == "out":
            i, a = next(alloc), next(alloc)
            grp = [_Op(True, i, "out"), _Op(False, a, "out")]
            slots["out"] = (i, a)
            spaces[i], spaces[a] = OCC, VIR
        elif tag == "o":
            j, b = next(alloc), next(alloc)
            grp = [_Op(True, b, "o"), _Op(False, j, "o")]
            slots["o"] = (j, b)
            spaces[j], spaces[b] = OCC, VIR
        elif rank == 2:
            x = [next(alloc) for _ in range(4)]
            grp = [_Op(True, x[0], tag), _Op(True, x[1], tag),
                   _Op(False, x[3], tag), _Op(False, x[2], tag)]
            slots[tag] = tuple(x)
            spaces.update({s: GEN for s in x})
        else:
            x = [next(alloc) for _ in range(2)]
            grp = [_Op(True, x[0], tag), _Op(False, x[1], tag)]
            slots[tag] = tuple(x)
            spaces.update({s: GEN for s in x})
        ops.extend(grp)
    return ops, slots, spaces


def _expand_route(order_tags, route_coeff, conj, rank, route_name,
                  connected_only=True):
    """Fully contract one operator ordering; yields raw (unmerged) terms."""
    ops, slots, spaces = _route_groups(order_tags, rank)
    vertex_tags = [t for t in order_tags if t not in ("out", "o")]
    prefactor = Fraction(1, 4) ** (2 if rank == 2 else 0)
    if rank == 2 and len(vertex_tags) == 1:
        prefactor = Fraction(1, 4)
    raw = []
    for sign, pairs in _full_contractions(ops):
        uf = _Union(spaces)
        alive = True
        for i, j, ctype in pairs:
            if not uf.union(ops[i].sym, ops[j].sym, ctype):
                alive = False
                break
        if not alive:
            continue
        if connected_only and not _connected(
                [(ops[i].tensor, ops[j].tensor) for i, j, _ in pairs],
                set(["out", "o"] + vertex_tags)):
            continue
        rep = uf.find
        term = {
            "coeff": route_coeff * sign * prefactor,
            "out": tuple(rep(s) for s in slots["out"]),
            "o": tuple(rep(s) for s in slots["o"]),
            "vt": tuple(rep(s) for s in slots["vt"]) if "vt" in slots else None,
            "vs": tuple(rep(s) for s in slots["vs"]) if "vs" in slots else None,
            "spaces": {rep(s): uf.space[rep(s)] for s in list(spaces)},
            "conj": conj,
            "route": route_name,
        }
        for s in term["spaces"].values():
            if s == GEN:
                raise GenerationError("unresolved general index survived contraction")
        raw.append(term)
    return raw


_TB_PERMS = (((0, 1, 2, 3), 1), ((1, 0, 2, 3), -1),
             ((0, 1, 3, 2), -1), ((1, 0, 3, 2), 1))
_OB_PERMS = (((0, 1), 1),)


def _canonicalize(raw_terms, rank, eq=False):
    """Relabel dummies, exploit vertex antisymmetry, merge identical terms."""
    perms = _TB_PERMS if rank == 2 else _OB_PERMS
    merged = {}
    for term in raw_terms:
        best = None
        vt, vs = term["vt"], term["vs"]
        vt_opts = [(tuple(vt[k] for k in p), sg) for p, sg in perms] if vt else [(None, 1)]
        vs_opts = [(tuple(vs[k] for k in p), sg) for p, sg in perms] if vs else [(None, 1)]
        for vt2, sg_t in vt_opts:
            for vs2, sg_s in vs_opts:
                mapping = {}

                def rl(sym):
                    if sym not in mapping:
                        mapping[sym] = len(mapping)
                    return mapping[sym]

                out2 = tuple(rl(s) for s in term["out"])
                o2 = tuple(rl(s) for s in term["o"])
                vt3 = tuple(rl(s) for s in vt2) if vt2 else None
                vs3 = tuple(rl(s) for s in vs2) if vs2 else None
                spaces = tuple(term["spaces"][orig] for orig in
                               sorted(mapping, key=mapping.get))
                key = (out2, o2, vt3, vs3, spaces, term["conj"], eq)
                if best is None or key < best[0]:
                    best = (key, sg_t * sg_s)
        key, sg = best
        entry = merged.setdefault(key, [Fraction(0), set()])
        entry[0] += term["coeff"] * sg
        entry[1].add(term["route"])
    out = []
    for (out2, o2, vt3, vs3, spaces, conj, eqf), (coeff, routes) in sorted(merged.items()):
        if coeff == 0:
            continue
        out.append(TermSpec(
            order=2 if vs3 is not None else 1, coeff=coeff,
            vt_pattern=vt3, vs_pattern=vs3, o_pattern=o2, out_pattern=out2,
            spaces=spaces, rank=rank, conj_bath=conj, equilibrium_bath=eqf,
            routes=tuple(sorted(routes))))
    return out


# --- public generators ----------------------------------------------------------


@lru_cache(maxsize=None)
def first_order_terms():
    """Time-local coupling term(s) of the first-order map.

    The bare orbital-energy gap is handled structurally by the propagator; the
    terms here carry the interaction and its equal-time bath factor.  The
    leading -i is applied at assembly.
    """
    raw = (_expand_route(("out", "vt", "o"), Fraction(1), False, 2, "VO")
           + _expand_route(("vt", "out", "o"), Fraction(-1), False, 2, "OV"))
    return tuple(_canonicalize(raw, rank=2))


def _double_commutator_routes(rank):
    # pieces of [V(t), [V(s), o rho]] closed with the output element; the
    # ordering left of the bath density fixes B(tau) vs conj(B(tau))
    return (
        (("out", "vt", "vs", "o"), Fraction(1), False, "VtVsO"),
        (("vt", "out", "vs", "o"), Fraction(-1), False, "VsOVt"),
        (("vs", "out", "vt", "o"), Fraction(-1), True, "VtOVs"),
        (("vs", "vt", "out", "o"), Fraction(1), True, "OVsVt"),
    )


def _subtraction_terms():
    """Projected route: composition of two first-order maps through the
    particle-hole block, with factorized equal-time bath factors."""
    first = first_order_terms()
    raw = []
    for t1 in first:
        for t2 in first:
            # relabel: t1 keeps externals (out, mid), t2 uses (mid, in)
            n1 = max(t1.all_syms()) + 1
            shift = {s: s + 100 for s in t2.all_syms()}  # temporary namespace
            mid_map = {t2.out_pattern[0]: t1.o_pattern[0],
                       t2.out_pattern[1]: t1.o_pattern[1]}

            def map2(sym):
                return mid_map.get(sym, shift[sym])

            vt = t1.vt_pattern
            vs = tuple(map2(s) for s in t2.vt_pattern)
            o = tuple(map2(s) for s in t2.o_pattern)
            spaces = {s: t1.spaces[s] for s in t1.all_syms()}
            for s in t2.all_syms():
                spaces[map2(s)] = t2.spaces[s]
            raw.append({
                "coeff": t1.coeff * t2.coeff,
                "out": t1.out_pattern, "o": o, "vt": vt, "vs": vs,
                "spaces": spaces, "conj": False, "route": "sub",
            })
    return _canonicalize(raw, rank=2, eq=True)


@lru_cache(maxsize=None)
def second_order_terms(hermitize=True, include_disconnected=False):
    """Complete second-order catalog of the dressed theory.

    The double-commutator orderings are expanded and Wick-contracted; the
    projected one-body route is subtracted with its factorized equal-time
    bath factors.  With ``hermitize`` the list is doubled into the
    norm-restoring pairs: half weight, amplitude and output slots swapped,
    kernel phase and sign flipped.  Disconnected pieces (vacuum loops and
    separable blocks, which cancel exactly in the adiabatic limit) are
    excluded unless requested.
    """
    raw = []
    for order_tags, coeff, conj, name in _double_commutator_routes(2):
        raw.extend(_expand_route(order_tags, -coeff, conj, 2, name,
                                 connected_only=not include_disconnected))
    terms = _canonicalize(raw, rank=2)
    terms = list(terms) + _subtraction_terms()
    _sanity_check(terms)
    if hermitize:
        terms = hermitize_terms(terms)
    return tuple(terms)


@lru_cache(maxsize=None)
def untransformed_terms(hermitize=True, include_disconnected=False):
    """Second-order catalog for a bilinear one-body bath coupling.

    Vertices are one-body M[p,q] tensors per mode; kernels are the plain
    harmonic correlation function of each mode (or its conjugate).  The
    projected route vanishes because a single displacement has zero thermal
    average.
    """
    raw = []
    for order_tags, coeff, conj, name in _double_commutator_routes(1):
        raw.extend(_expand_route(order_tags, -coeff, conj, 1, name,
                                 connected_only=not include_disconnected))
    terms = _canonicalize(raw, rank=1)
    _sanity_check(terms)
    if hermitize:
        terms = hermitize_terms(terms)
    return tuple(terms)


def hermitize_terms(terms):
    """Norm-restoring completion: for every term add the partner with the
    amplitude and output slots swapped, kernel phase and prefactor negated,
    both at half weight."""
    out = []
    for t in terms:
        out.append(replace(t, coeff=t.coeff / 2, hermitized=True))
        out.append(replace(t, coeff=-t.coeff / 2,
                           out_pattern=t.o_pattern, o_pattern=t.out_pattern,
                           kernel_delta_sign=-t.kernel_delta_sign,
                           hermitized=True))
    return out


def _sanity_check(terms):
    for t in terms:
        for sym in t.all_syms():
            if t.spaces[sym] not in (OCC, VIR):
                raise GenerationError(f"bad space in term:\n{t.describe()}")
        for pattern, want in ((t.out_pattern, (OCC, VIR)), (t.o_pattern, (OCC, VIR))):
            got = tuple(t.spaces[s] for s in pattern)
            if got != want:
                raise GenerationError(f"bad external spaces:\n{t.describe()}")
        count = {}
        for s in (list(t.out_pattern) + list(t.o_pattern) + list(t.vt_pattern)
                  + list(t.vs_pattern or ())):
            count[s] = count.get(s, 0) + 1
        if any(c > 2 for c in count.values()):
            raise GenerationError(f"index appears more than twice:\n{t.describe()}")


def catalog_text(terms):
    lines = [f"{len(terms)} terms"]
    for k, t in enumerate(terms):
        lines.append(f"term {k:02d} " + t.describe())
    return "\n".join(lines) + "\n"


# --- reference evaluation ---------------------------------------------------------


def _sym_ranges(term, n_occ, n_virt):
    return {s: (n_occ if term.spaces[s] == OCC else n_virt) for s in term.all_syms()}


def _orbital(term, sym, idx, n_occ):
    return idx if term.spaces[sym] == OCC else n_occ + idx


def evaluate_terms_reference(terms, eps, v, amp, t, s, n_occ, bath_value=None,
                             mode_tensors=None):
    """Slow direct-loop evaluation of the catalog (interaction picture).

    ``bath_value(term, orbital_map, t, s)`` returns the bath factor for one
    concrete index assignment; default 1 (adiabatic).  For rank-1 catalogs
    ``mode_tensors`` is a list of (omega, M-matrix) and ``bath_value`` takes
    the mode index as an extra argument.
    """
    eps = np.asarray(eps)
    n = eps.shape[0]
    n_virt = n - n_occ
    out = np.zeros((n_occ, n_virt), dtype=complex)
    for term in terms:
        syms = term.all_syms()
        ranges = _sym_ranges(term, n_occ, n_virt)
        d_t, d_s = term.delta_t(), term.delta_s()
        for assignment in itertools.product(*(range(ranges[s]) for s in syms)):
            idx = dict(zip(syms, assignment))
            orb = {sym: _orbital(term, sym, idx[sym], n_occ) for sym in syms}
            phase = np.exp(1j * (
                t * sum(c * eps[orb[sym]] for sym, c in d_t.items())
                + s * sum(c * eps[orb[sym]] for sym, c in d_s.items())))
            o_i, o_a = term.o_pattern
            amp_val = amp[idx[o_i], idx[o_a]]
            if amp_val == 0:
                continue
            if term.rank == 2:
                vt = v[tuple(orb[x] for x in term.vt_pattern)]
                vs = v[tuple(orb[x] for x in term.vs_pattern)] if term.vs_pattern else 1.0
                weights = [(vt * vs, None)]
            else:
                weights = [(mode_tensors[k][1][tuple(orb[x] for x in term.vt_pattern)]
                            * mode_tensors[k][1][tuple(orb[x] for x in term.vs_pattern)], k)
                           for k in range(len(mode_tensors))]
            for weight, mode in weights:
                if weight == 0:
                    continue
                if bath_value is None:
                    b = 1.0
                elif term.rank == 2:
                    b = bath_value(term, orb, t, s)
                else:
                    b = bath_value(term, orb, t, s, mode)
                value = float(term.coeff) * weight * phase * amp_val * b
                out[idx[term.out_pattern[0]], idx[term.out_pattern[1]]] += value
    return out


def validate_against_superoperator(terms, system, t, s, rng=None, eps=None, v=None):
    """Max deviation between the contracted catalog and the explicit dense
    projected superoperator, in the adiabatic limit, on a random amplitude."""
    from .oracle import TclSuperoperator

    rng = np.random.default_rng(rng)
    amp = rng.standard_normal((system.n_occ, system.n_virt)) \
        + 1j * rng.standard_normal((system.n_occ, system.n_virt))
    dense = TclSuperoperator(system, eps=eps, v=v).second_order_map(amp, t, s)
    use_v = system.v if v is None else v
    use_eps = system.eps if eps is None else eps
    contracted = evaluate_terms_reference(terms, use_eps, use_v, amp, t, s,
                                          system.n_occ)
    return float(np.abs(dense - contracted).max())
