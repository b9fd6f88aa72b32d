"""Assemble and integrate the equation of motion for the particle-hole
amplitude: generator compilation, incremental memory kernels, adaptive
Runge-Kutta stepping.

The stationarity of the equilibrium bath makes every memory integral a
function of elapsed time only, K(t) = int_0^t B(tau) e^{i delta tau} d tau,
and B depends on concrete orbital indices only through the signed coupling
sums of its signature.  Kernels are therefore pooled over distinct
(delta, u, v, conj, equilibrium) keys across all terms; each pooled key owns
one (ph x ph) coefficient matrix so a derivative evaluation is one kernel
update plus one tensor contraction.
"""

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import wick
from .bath import coth_half_beta_omega, f_kernel
from .polaron import PolaronSystem, adiabatic_polaron, transform_integrals, \
    reorganization_energies
from .system import SpinOrbitalSystem

OCC = wick.OCC


class IntegratorError(RuntimeError):
    pass


@dataclass
class PhAmplitude:
    """Complex particle-hole matrix indexed (occupied, virtual)."""

    data: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=complex)

    @property
    def norm(self):
        return float(np.sum(np.abs(self.data) ** 2))

    def copy(self):
        return PhAmplitude(self.data.copy(), self.time)


@dataclass
class PropagationConfig:
    t_final: float
    dt_initial: float = 0.05
    dt_min: float = 1e-6
    dt_max: float = 1.0
    rk_tolerance: float = 1e-8
    quad_order: int = 3
    mode: str = "transformed"  # transformed | untransformed | adiabatic
    correlation_terms: bool = True
    adaptive: bool = True
    output_dt: float = 0.5
    subtract_reorganization: bool = True
    hermitize: bool = True
    # the norm-restoring completion applies to the correlation terms; applying
    # it to the one-body bath terms cancels every diagonal-coupling channel
    # (their kernels all sit at delta = 0), so they stay plain by default
    hermitize_bath_terms: bool = False

    def __post_init__(self):
        if not (0 < self.dt_min <= self.dt_initial <= self.dt_max):
            raise ValueError("need 0 < dt_min <= dt_initial <= dt_max")
        if self.mode not in ("transformed", "untransformed", "adiabatic"):
            raise ValueError(f"unknown propagation mode {self.mode!r}")
        if self.t_final <= 0:
            raise ValueError("t_final must be positive")


@dataclass
class Trajectory:
    times: np.ndarray
    amps: np.ndarray      # (T, n_occ, n_virt)
    norms: np.ndarray
    kick: str | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_occ(self):
        return self.amps.shape[1]

    @property
    def n_virt(self):
        return self.amps.shape[2]


# --- kernel stacks ------------------------------------------------------------------

_QUANT = 12  # decimals used to pool kernel keys


@dataclass
class _ConstStack:
    """Kernels with constant B: K(t) = bfac * (e^{i d t} - 1)/(i d)."""

    delta: np.ndarray
    bfac: np.ndarray
    gmat: np.ndarray

    def kernel_at(self, t):
        phi = np.empty_like(self.delta, dtype=complex)
        zero = self.delta == 0.0
        nz = ~zero
        phi[zero] = t
        d = self.delta[nz]
        phi[nz] = (np.exp(1j * d * t) - 1.0) / (1j * d)
        return self.bfac * phi


@dataclass
class _TwoTimeStack:
    """Dressed kernels: B(tau) = beq * exp(- sum_m u_m v_m F_m(tau))."""

    delta: np.ndarray
    conj: np.ndarray
    u: np.ndarray       # (K, M)
    v: np.ndarray
    beq: np.ndarray
    gmat: np.ndarray
    omegas: np.ndarray
    beta: float

    def b_values(self, tau):
        f = f_kernel(self.omegas[:, None], self.beta, np.asarray(tau)[None, :])
        b = self.beq[:, None] * np.exp(-(self.u * self.v) @ f)
        return np.where(self.conj[:, None], b.conj(), b)


@dataclass
class _ModeFStack:
    """Plain harmonic-correlation kernels: B(tau) = F_mode(tau)."""

    delta: np.ndarray
    conj: np.ndarray
    omega: np.ndarray   # per key
    gmat: np.ndarray
    beta: float

    def b_values(self, tau):
        f = f_kernel(self.omega[:, None], self.beta, np.asarray(tau)[None, :])
        return np.where(self.conj[:, None], f.conj(), f)


@dataclass
class MemoryKernelState:
    """Running values of the pooled memory integrals; K(0) = 0."""

    time: float
    two_time: np.ndarray
    mode_f: np.ndarray

    def copy(self):
        return MemoryKernelState(self.time, self.two_time.copy(), self.mode_f.copy())


def _gauss_nodes(t0, t1, order):
    x, w = np.polynomial.legendre.leggauss(order)
    mid, half = 0.5 * (t0 + t1), 0.5 * (t1 - t0)
    return mid + half * x, half * w


@dataclass
class CompiledGenerator:
    """First-order matrix plus pooled second-order stacks."""

    n_occ: int
    n_virt: int
    eps: np.ndarray
    g1: np.ndarray
    const_stack: _ConstStack | None
    two_time_stack: _TwoTimeStack | None
    mode_f_stack: _ModeFStack | None
    quad_order: int = 3
    meta: dict = field(default_factory=dict)

    @property
    def ph_dim(self):
        return self.n_occ * self.n_virt

    def fresh_kernels(self):
        n_tt = self.two_time_stack.delta.size if self.two_time_stack else 0
        n_mf = self.mode_f_stack.delta.size if self.mode_f_stack else 0
        return MemoryKernelState(0.0, np.zeros(n_tt, complex), np.zeros(n_mf, complex))

    # -- kernel handling -----------------------------------------------------

    @property
    def max_kernel_freq(self):
        """Fastest oscillation in any kernel integrand, for subdivision."""
        freq = 0.0
        for st in (self.two_time_stack, self.mode_f_stack):
            if st is None or st.delta.size == 0:
                continue
            om = st.omegas if hasattr(st, "omegas") else st.omega
            om_max = float(np.max(om)) if np.size(om) else 0.0
            freq = max(freq, float(np.max(np.abs(st.delta))) + 3.0 * om_max)
        return freq

    def _increments(self, t0, t1, n_sub=None):
        """Quadrature of B(tau) e^{i delta tau} over [t0, t1] for both stacks.

        The interval is subdivided so each Gauss panel spans at most a third
        of the fastest oscillation period.
        """
        if t1 == t0:
            return 0.0, 0.0
        if n_sub is None:
            freq = self.max_kernel_freq
            n_sub = max(1, int(np.ceil(abs(t1 - t0) * freq * 6.0 / (2 * np.pi))))
        edges = np.linspace(t0, t1, n_sub + 1)
        nodes_all, weights_all = [], []
        for a, b in zip(edges[:-1], edges[1:]):
            nd, wt = _gauss_nodes(a, b, self.quad_order)
            nodes_all.append(nd)
            weights_all.append(wt)
        nodes = np.concatenate(nodes_all)
        weights = np.concatenate(weights_all)
        inc_tt = 0.0
        if self.two_time_stack is not None:
            st = self.two_time_stack
            phase = np.exp(1j * st.delta[:, None] * nodes[None, :])
            inc_tt = (st.b_values(nodes) * phase) @ weights
        inc_mf = 0.0
        if self.mode_f_stack is not None:
            st = self.mode_f_stack
            phase = np.exp(1j * st.delta[:, None] * nodes[None, :])
            inc_mf = (st.b_values(nodes) * phase) @ weights
        return inc_tt, inc_mf

    def advance_kernels(self, kernels, h):
        """Kernels advanced from kernels.time by h (accepted steps only)."""
        if h <= 0:
            raise ValueError("advance needs h > 0")
        inc_tt, inc_mf = self._increments(kernels.time, kernels.time + h)
        return MemoryKernelState(kernels.time + h,
                                 kernels.two_time + inc_tt,
                                 kernels.mode_f + inc_mf)

    def generator_at(self, t, kernels):
        """Dense generator matrix G(t) with stage-local kernel increments."""
        g = self.g1.copy()
        if self.const_stack is not None:
            k = self.const_stack.kernel_at(t)
            g += np.tensordot(k, self.const_stack.gmat, axes=(0, 0))
        if self.two_time_stack is not None or self.mode_f_stack is not None:
            inc_tt, inc_mf = self._increments(kernels.time, t)
            if self.two_time_stack is not None:
                g += np.tensordot(kernels.two_time + inc_tt,
                                  self.two_time_stack.gmat, axes=(0, 0))
            if self.mode_f_stack is not None:
                g += np.tensordot(kernels.mode_f + inc_mf,
                                  self.mode_f_stack.gmat, axes=(0, 0))
        return g

    def kernels_from_scratch(self, t, panels_per_period=12):
        """Direct high-order quadrature of every pooled kernel over [0, t]."""
        state = self.fresh_kernels()
        if t == 0:
            return state
        n_sub = max(64, int(np.ceil(t * self.max_kernel_freq
                                    * panels_per_period / (2 * np.pi))))
        inc_tt, inc_mf = self._increments(0.0, t, n_sub=n_sub)
        return MemoryKernelState(t, state.two_time + inc_tt, state.mode_f + inc_mf)


def derivative(state, kernels, compiled):
    """d(amp)/dt at state.time; kernels must be current at an accepted step
    at or before state.time."""
    g = compiled.generator_at(state.time, kernels)
    out = (g @ state.data.reshape(-1)).reshape(state.data.shape)
    if not np.all(np.isfinite(out)):
        raise IntegratorError("non-finite derivative (check couplings and kernels)")
    return out


# --- compilation --------------------------------------------------------------------


def _term_coefficient_grid(term, eps, n_occ, v=None, m_matrix=None):
    """Flattened per-index-tuple data for one term.

    ``v`` supplies two-body vertices, ``m_matrix`` one-body vertices.  Returns
    coefficient values, the kernel phase, signed bath-sum generators per
    symbol, and ph in/out indices, all flattened over the index grid.
    """
    n = eps.shape[0]
    nv = n - n_occ
    syms = term.all_syms()
    pos = {s: k for k, s in enumerate(syms)}
    dims = tuple(n_occ if term.spaces[s] == OCC else nv for s in syms)
    grids = np.indices(dims)
    orb = {s: grids[pos[s]] + (0 if term.spaces[s] == OCC else n_occ) for s in syms}

    tensor = v if term.rank == 2 else m_matrix
    vals = tensor[tuple(orb[s] for s in term.vt_pattern)].astype(complex)
    if term.vs_pattern is not None:
        vals = vals * tensor[tuple(orb[s] for s in term.vs_pattern)]
    vals = float(term.coeff) * vals

    delta = np.zeros(dims)
    for s, c in term.kernel_delta().items():
        delta = delta + c * eps[orb[s]]

    out_flat = (grids[pos[term.out_pattern[0]]] * nv
                + grids[pos[term.out_pattern[1]]]).reshape(-1)
    in_flat = (grids[pos[term.o_pattern[0]]] * nv
               + grids[pos[term.o_pattern[1]]]).reshape(-1)
    size = int(np.prod(dims))
    return {
        "vals": vals.reshape(-1),
        "delta": delta.reshape(-1),
        "orb": {s: orb[s].reshape(-1) for s in syms},
        "out": out_flat,
        "in": in_flat,
        "size": size,
    }


def _bath_sums(term, orb_flat, mtilde, size):
    """Signed per-mode sums (u, w) of the bath signature, (size, M)."""
    n_modes = mtilde.shape[0]
    u = np.zeros((size, n_modes))
    w = np.zeros((size, n_modes))
    for sg, s in term.bath_t_slots():
        u += sg * mtilde[:, orb_flat[s]].T
    for sg, s in term.bath_s_slots():
        w += sg * mtilde[:, orb_flat[s]].T
    return u, w


def _first_order_matrix(eps, v, omegas, mtilde, beta, n_occ):
    """-i [ diag gaps + coupling * equal-time bath factor ]."""
    n = eps.shape[0]
    nv = n - n_occ
    gaps = (eps[n_occ:][None, :] - eps[:n_occ][:, None]).reshape(-1)
    g = np.diag(-1j * gaps).astype(complex)
    coth = coth_half_beta_omega(omegas, beta) if omegas.size else np.zeros(0)

    for term in wick.first_order_terms():
        grid = _term_coefficient_grid(term, eps, n_occ, v=v)
        vals = grid["vals"]
        if omegas.size:
            u, _ = _bath_sums(term, grid["orb"], mtilde, grid["size"])
            vals = vals * np.exp(-0.5 * (u ** 2) @ coth)
        np.add.at(g, (grid["out"], grid["in"]), -1j * vals)
    return g


class _StackBuilder:
    def __init__(self, ph_dim):
        self.ph = ph_dim
        self.index = {}
        self.payload = []
        self.coo_key = []
        self.coo_out = []
        self.coo_in = []
        self.coo_val = []

    def gmat(self):
        g = np.zeros((len(self.payload), self.ph, self.ph), dtype=complex)
        if self.coo_key:
            keys = np.concatenate(self.coo_key)
            outs = np.concatenate(self.coo_out)
            ins = np.concatenate(self.coo_in)
            vals = np.concatenate(self.coo_val)
            np.add.at(g, (keys, outs, ins), vals)
        return g

    def __len__(self):
        return len(self.payload)


def _unique_rows(mat):
    """Row-wise grouping; returns (list of row-bytes, inverse index)."""
    q = np.round(mat, _QUANT)
    q[q == 0.0] = 0.0  # normalize -0.0
    view = np.ascontiguousarray(q)
    uniq, inverse = np.unique(view, axis=0, return_inverse=True)
    rows = [row.tobytes() for row in uniq]
    return uniq, rows, inverse.reshape(-1)


def compile_generator(source, bath, cfg):
    """Build the first-order matrix and pooled second-order stacks.

    ``source`` is a SpinOrbitalSystem or a PolaronSystem.  In transformed mode
    a plain system is polaron-transformed with the given bath first; in
    adiabatic mode the bath is ignored; in untransformed mode the bath couples
    through the bare bilinear interaction.
    """
    from .bath import BathSpec

    if bath is None:
        bath = BathSpec(beta=np.inf)

    if cfg.mode == "transformed":
        pol = source if isinstance(source, PolaronSystem) else \
            transform_integrals(source, bath)
        eps, v = pol.eps_tilde, pol.v_tilde
        omegas, mtilde = bath.tables(pol.n_orb)
        n_occ = pol.n_occ
    elif cfg.mode == "adiabatic":
        system = source.base if isinstance(source, PolaronSystem) else source
        eps, v = system.eps, system.v
        omegas, mtilde = np.zeros(0), np.zeros((0, system.n_orb))
        n_occ = system.n_occ
    else:  # untransformed
        system = source.base if isinstance(source, PolaronSystem) else source
        eps = system.eps.copy()
        if cfg.subtract_reorganization:
            eps = eps - reorganization_energies(bath, system.n_orb)
        v = system.v
        omegas, mtilde = bath.tables(system.n_orb)
        n_occ = system.n_occ

    n = eps.shape[0]
    nv = n - n_occ
    ph = n_occ * nv
    beta = bath.beta

    g1_modes = (omegas, mtilde) if cfg.mode == "transformed" else \
        (np.zeros(0), np.zeros((0, n)))
    g1 = _first_order_matrix(eps, v, g1_modes[0], g1_modes[1], beta, n_occ)

    const_b = _StackBuilder(ph)
    two_time = _StackBuilder(ph)
    mode_f = _StackBuilder(ph)
    coth = coth_half_beta_omega(omegas, beta) if omegas.size else np.zeros(0)

    def scatter(builder, uniq_rows_bytes, payloads, inverse, out_f, in_f, vals):
        base_keys = np.empty(len(uniq_rows_bytes), dtype=np.int64)
        for k, (row, pay) in enumerate(zip(uniq_rows_bytes, payloads)):
            idx = builder.index.get(row)
            if idx is None:
                idx = len(builder.payload)
                builder.index[row] = idx
                builder.payload.append(pay)
            base_keys[k] = idx
        builder.coo_key.append(base_keys[inverse])
        builder.coo_out.append(out_f)
        builder.coo_in.append(in_f)
        builder.coo_val.append(vals)

    if cfg.mode in ("transformed", "adiabatic") and cfg.correlation_terms:
        terms = wick.second_order_terms(hermitize=cfg.hermitize)
        for term in terms:
            grid = _term_coefficient_grid(term, eps, n_occ, v=v)
            vals, delta_f = grid["vals"], grid["delta"]
            keep = np.abs(vals) > 0
            if not np.any(keep):
                continue
            if omegas.size == 0:
                mat = np.column_stack([delta_f[keep], np.ones(keep.sum())])
                uniq, rows, inverse = _unique_rows(mat)
                scatter(const_b, rows, [(r[0], r[1]) for r in uniq], inverse,
                        grid["out"][keep], grid["in"][keep], vals[keep])
                continue
            u, w = _bath_sums(term, grid["orb"], mtilde, grid["size"])
            u, w, vals, delta_f = u[keep], w[keep], vals[keep], delta_f[keep]
            out_f, in_f = grid["out"][keep], grid["in"][keep]
            beq = np.exp(-0.5 * ((u ** 2 + w ** 2) @ coth))
            static = term.equilibrium_bath | (np.abs(u * w).max(axis=1) < 1e-15)
            if np.any(static):
                mat = np.column_stack([delta_f[static], beq[static]])
                uniq, rows, inverse = _unique_rows(mat)
                scatter(const_b, rows, [(r[0], r[1]) for r in uniq], inverse,
                        out_f[static], in_f[static], vals[static])
            dyn = ~static if not term.equilibrium_bath else np.zeros(0, bool)
            if np.any(dyn):
                conj_col = np.full(dyn.sum(), 1.0 if term.conj_bath else 0.0)
                mat = np.column_stack([delta_f[dyn], conj_col, u[dyn], w[dyn]])
                uniq, rows, inverse = _unique_rows(mat)
                payloads = [(r[0], bool(r[1]), r[2:2 + omegas.size],
                             r[2 + omegas.size:]) for r in uniq]
                scatter(two_time, rows, payloads, inverse,
                        out_f[dyn], in_f[dyn], vals[dyn])

    if cfg.mode == "untransformed":
        if cfg.correlation_terms:
            for term in wick.second_order_terms(hermitize=cfg.hermitize):
                grid = _term_coefficient_grid(term, eps, n_occ, v=v)
                vals, delta_f = grid["vals"], grid["delta"]
                keep = np.abs(vals) > 0
                if not np.any(keep):
                    continue
                mat = np.column_stack([delta_f[keep], np.ones(keep.sum())])
                uniq, rows, inverse = _unique_rows(mat)
                scatter(const_b, rows, [(r[0], r[1]) for r in uniq], inverse,
                        grid["out"][keep], grid["in"][keep], vals[keep])
        couplings = mtilde * omegas[:, None] if omegas.size else mtilde
        for term in wick.untransformed_terms(hermitize=cfg.hermitize_bath_terms):
            for k in range(omegas.size):
                m_mat = np.diag(couplings[k])
                grid = _term_coefficient_grid(term, eps, n_occ, m_matrix=m_mat)
                vals, delta_f = grid["vals"], grid["delta"]
                keep = np.abs(vals) > 0
                if not np.any(keep):
                    continue
                conj_col = np.full(keep.sum(), 1.0 if term.conj_bath else 0.0)
                mat = np.column_stack([delta_f[keep], conj_col,
                                       np.full(keep.sum(), float(k))])
                uniq, rows, inverse = _unique_rows(mat)
                payloads = [(r[0], bool(r[1]), int(r[2])) for r in uniq]
                scatter(mode_f, rows, payloads, inverse,
                        grid["out"][keep], grid["in"][keep], vals[keep])

    const_stack = None
    if len(const_b):
        pay = const_b.payload
        const_stack = _ConstStack(delta=np.array([p[0] for p in pay]),
                                  bfac=np.array([p[1] for p in pay]),
                                  gmat=const_b.gmat())
    tt_stack = None
    if len(two_time):
        pay = two_time.payload
        tt_stack = _TwoTimeStack(
            delta=np.array([p[0] for p in pay]),
            conj=np.array([p[1] for p in pay], dtype=bool),
            u=np.array([p[2] for p in pay]),
            v=np.array([p[3] for p in pay]),
            beq=np.exp(-0.5 * (((np.array([p[2] for p in pay]) ** 2
                                 + np.array([p[3] for p in pay]) ** 2) @ coth))),
            gmat=two_time.gmat(), omegas=omegas, beta=beta)
    mf_stack = None
    if len(mode_f):
        pay = mode_f.payload
        mf_stack = _ModeFStack(
            delta=np.array([p[0] for p in pay]),
            conj=np.array([p[1] for p in pay], dtype=bool),
            omega=np.array([omegas[p[2]] for p in pay]),
            gmat=mode_f.gmat(), beta=beta)

    return CompiledGenerator(
        n_occ=n_occ, n_virt=nv, eps=eps, g1=g1,
        const_stack=const_stack, two_time_stack=tt_stack, mode_f_stack=mf_stack,
        quad_order=cfg.quad_order,
        meta={"mode": cfg.mode,
              "n_const": len(const_b), "n_two_time": len(two_time),
              "n_mode_f": len(mode_f)})


# --- stepping -----------------------------------------------------------------------

# Fehlberg 4(5) tableau
_RKF_C = np.array([0.0, 0.25, 3.0 / 8.0, 12.0 / 13.0, 1.0, 0.5])
_RKF_A = [
    [],
    [0.25],
    [3.0 / 32.0, 9.0 / 32.0],
    [1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0],
    [439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0],
    [-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0],
]
_RKF_B5 = np.array([16.0 / 135.0, 0.0, 6656.0 / 12825.0, 28561.0 / 56430.0,
                    -9.0 / 50.0, 2.0 / 55.0])
_RKF_B4 = np.array([25.0 / 216.0, 0.0, 1408.0 / 2565.0, 2197.0 / 4104.0,
                    -0.2, 0.0])


def _stage_generators(compiled, kernels, t, h, stage_times, cache=None):
    gens = []
    for ct in stage_times:
        key = round(t + ct * h, 14)
        if cache is not None and key in cache:
            gens.append(cache[key])
            continue
        g = compiled.generator_at(t + ct * h, kernels)
        if cache is not None:
            cache[key] = g
        gens.append(g)
    return gens


def step(state, kernels, compiled, cfg, h):
    """One embedded 4/5 attempt from state.time with step h.

    Returns (new_state, new_kernels, h_next, accepted).  Stage evaluations use
    the step-start kernels plus stage-local increments; the kernel state is
    advanced only when the step is accepted.
    """
    y = state.data.reshape(-1)
    t = state.time
    gens = _stage_generators(compiled, kernels, t, h, _RKF_C)
    k = []
    for i in range(6):
        yi = y.copy()
        for j, a in enumerate(_RKF_A[i]):
            yi += h * a * k[j]
        k.append(gens[i] @ yi)
    y5 = y + h * sum(b * ki for b, ki in zip(_RKF_B5, k))
    y4 = y + h * sum(b * ki for b, ki in zip(_RKF_B4, k))
    err = float(np.max(np.abs(y5 - y4)))
    tol = cfg.rk_tolerance * max(1.0, float(np.max(np.abs(y5))))

    if not cfg.adaptive or err <= tol:
        new_kernels = compiled.advance_kernels(kernels, h)
        new_state = PhAmplitude(y5.reshape(state.data.shape), t + h)
        if not np.all(np.isfinite(new_state.data)):
            raise IntegratorError(f"non-finite amplitude at t={t + h}")
        grow = 0.9 * (tol / err) ** 0.2 if err > 0 else 2.0
        h_next = float(np.clip(h * min(2.0, max(0.3, grow)), cfg.dt_min, cfg.dt_max))
        return new_state, new_kernels, h_next, True
    shrink = 0.9 * (tol / err) ** 0.25
    h_next = float(h * min(1.0, max(0.1, shrink)))
    if h_next < cfg.dt_min:
        raise IntegratorError(f"step underflow at t={t} (h={h_next:.3e})")
    return state, kernels, h_next, False


def _rk4_step(state, kernels, compiled, h, g_start=None):
    """Classic fixed-step stage; returns the end-of-step generator so the
    caller can reuse it as the next step's start (it only depends on time)."""
    y = state.data.reshape(-1)
    t = state.time
    g0 = compiled.generator_at(t, kernels) if g_start is None else g_start
    g_half = compiled.generator_at(t + 0.5 * h, kernels)
    g_end = compiled.generator_at(t + h, kernels)
    k1 = g0 @ y
    k2 = g_half @ (y + 0.5 * h * k1)
    k3 = g_half @ (y + 0.5 * h * k2)
    k4 = g_end @ (y + h * k3)
    y_new = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    new_kernels = compiled.advance_kernels(kernels, h)
    return PhAmplitude(y_new.reshape(state.data.shape), t + h), new_kernels, g_end


def propagate(source, bath, cfg, initial, compiled=None, kick=None):
    """Integrate the equation of motion; samples on the output grid.

    ``initial`` is a PhAmplitude at t = 0.  Deterministic for fixed inputs.
    ``kick`` labels the dipole direction of the initial state, if any.
    """
    if compiled is None:
        compiled = compile_generator(source, bath, cfg)
    state = PhAmplitude(initial.data.copy(), 0.0)
    kernels = compiled.fresh_kernels()

    n_out = int(round(cfg.t_final / cfg.output_dt)) + 1
    out_times = np.arange(n_out) * cfg.output_dt
    amps = np.zeros((n_out,) + state.data.shape, dtype=complex)
    norms = np.zeros(n_out)
    amps[0] = state.data
    norms[0] = state.norm
    next_out = 1

    h = cfg.dt_initial
    g_carry = (None, None)  # (time, generator) from the previous step's end
    while next_out < n_out:
        target = out_times[next_out]
        while state.time < target - 1e-12:
            h_try = min(h, cfg.dt_max, target - state.time)
            if cfg.adaptive:
                state, kernels, h, ok = step(state, kernels, compiled, cfg, h_try)
                if not ok:
                    continue
            else:
                g_start = g_carry[1] if g_carry[0] == round(state.time, 12) else None
                state, kernels, g_end = _rk4_step(state, kernels, compiled,
                                                  h_try, g_start)
                g_carry = (round(state.time, 12), g_end)
                h = cfg.dt_initial
        amps[next_out] = state.data
        norms[next_out] = state.norm
        next_out += 1
    return Trajectory(times=out_times, amps=amps, norms=norms, kick=kick,
                      meta={"mode": cfg.mode, "t_final": cfg.t_final,
                            "dt": cfg.dt_initial, "adaptive": cfg.adaptive})


def advance_kernels(kernels, compiled, h):
    """Public wrapper: kernels advanced by h with the compiled quadrature."""
    return compiled.advance_kernels(kernels, h)


# --- trajectory and checkpoint I/O ----------------------------------------------------


def save_trajectory(traj, path):
    no, nv = traj.n_occ, traj.n_virt
    header = [f"polartcl-trajectory n_occ={no} n_virt={nv} kick={traj.kick}",
              "t " + " ".join(f"re(o[{i},{a}]) im(o[{i},{a}])"
                              for i in range(no) for a in range(nv)) + " norm"]
    flat = traj.amps.reshape(len(traj.times), -1)
    cols = [traj.times]
    for k in range(flat.shape[1]):
        cols.append(flat[:, k].real)
        cols.append(flat[:, k].imag)
    cols.append(traj.norms)
    data = np.column_stack(cols)
    np.savetxt(path, data, header="\n".join(header), fmt="%.12e")


def load_trajectory(path):
    with open(path) as handle:
        first = handle.readline()
    tokens = dict(tok.split("=") for tok in first.replace("#", "").split()
                  if "=" in tok)
    no, nv = int(tokens["n_occ"]), int(tokens["n_virt"])
    kick = tokens.get("kick")
    kick = None if kick in (None, "None") else kick
    data = np.loadtxt(path)
    data = np.atleast_2d(data)
    times = data[:, 0]
    flat = data[:, 1:-1]
    amps = (flat[:, 0::2] + 1j * flat[:, 1::2]).reshape(len(times), no, nv)
    return Trajectory(times=times, amps=amps, norms=data[:, -1], kick=kick)


def save_checkpoint(path, state, kernels, meta=None):
    np.savez(path, amp=state.data, time=state.time,
             kernel_time=kernels.time, kernel_tt=kernels.two_time,
             kernel_mf=kernels.mode_f, meta=str(meta or {}))


def load_checkpoint(path):
    with np.load(path, allow_pickle=False) as data:
        state = PhAmplitude(data["amp"], float(data["time"]))
        kernels = MemoryKernelState(float(data["kernel_time"]),
                                    data["kernel_tt"], data["kernel_mf"])
    return state, kernels


# --- per-term dual-path evaluation (test surface) --------------------------------------


def _kernel_value(delta, u, w, omegas, beta, conj, eq, t, memo, n_tau=3000):
    key = (round(float(delta), _QUANT), bool(conj), bool(eq),
           u.round(_QUANT).tobytes(), w.round(_QUANT).tobytes())
    if key in memo:
        return memo[key]
    from .bath import bcf_from_sums
    tau, dt = np.linspace(0.0, t, n_tau + 1, retstep=True)
    b = bcf_from_sums(u, w, omegas, beta, tau, conj=conj, equilibrium_only=eq)
    val = complex(np.trapezoid(b * np.exp(1j * delta * tau), dx=dt))
    memo[key] = val
    return val


def evaluate_term_direct(term, eps, v, omegas, mtilde, beta, amp, t, memo=None):
    """Direct full-rank loop over every index tuple of one term."""
    import itertools
    no = amp.shape[0]
    nv = amp.shape[1]
    memo = {} if memo is None else memo
    syms = term.all_syms()
    ranges = {s: (no if term.spaces[s] == OCC else nv) for s in syms}
    out = np.zeros((no, nv), dtype=complex)
    kd = term.kernel_delta()
    for assignment in itertools.product(*(range(ranges[s]) for s in syms)):
        idx = dict(zip(syms, assignment))
        orb = {s: (idx[s] if term.spaces[s] == OCC else no + idx[s]) for s in syms}
        weight = float(term.coeff) * v[tuple(orb[s] for s in term.vt_pattern)] \
            * v[tuple(orb[s] for s in term.vs_pattern)] \
            * amp[idx[term.o_pattern[0]], idx[term.o_pattern[1]]]
        if weight == 0:
            continue
        delta = sum(c * eps[orb[s]] for s, c in kd.items())
        u = sum(sg * mtilde[:, orb[s]] for sg, s in term.bath_t_slots())
        w = sum(sg * mtilde[:, orb[s]] for sg, s in term.bath_s_slots())
        kern = _kernel_value(delta, np.atleast_1d(u), np.atleast_1d(w), omegas,
                             beta, term.conj_bath, term.equilibrium_bath, t, memo)
        out[idx[term.out_pattern[0]], idx[term.out_pattern[1]]] += weight * kern
    return out


def evaluate_term_factorized(term, eps, v, omegas, mtilde, beta, amp, t, memo=None):
    """Factorized path: contract the vertex/kernel block into an intermediate
    over the indices it shares with the amplitude and output first."""
    import itertools
    if not term.factorizable:
        raise ValueError("term does not admit the factorized path")
    no, nv = amp.shape
    memo = {} if memo is None else memo
    v_syms = sorted(term.v_side_syms())
    ext_all = list(dict.fromkeys(list(term.out_pattern) + list(term.o_pattern)))
    anchor = [s for s in ext_all if s in term.v_side_syms()]
    free = [s for s in ext_all if s not in term.v_side_syms()]
    ranges = {s: (no if term.spaces[s] == OCC else nv)
              for s in set(v_syms) | set(ext_all)}
    kd = term.kernel_delta()

    inter = {}
    for assignment in itertools.product(*(range(ranges[s]) for s in v_syms)):
        idx = dict(zip(v_syms, assignment))
        orb = {s: (idx[s] if term.spaces[s] == OCC else no + idx[s]) for s in v_syms}
        weight = float(term.coeff) * v[tuple(orb[s] for s in term.vt_pattern)] \
            * v[tuple(orb[s] for s in term.vs_pattern)]
        if weight == 0:
            continue
        delta = sum(c * eps[orb[s]] for s, c in kd.items())
        u = sum(sg * mtilde[:, orb[s]] for sg, s in term.bath_t_slots())
        w = sum(sg * mtilde[:, orb[s]] for sg, s in term.bath_s_slots())
        kern = _kernel_value(delta, np.atleast_1d(u), np.atleast_1d(w), omegas,
                             beta, term.conj_bath, term.equilibrium_bath, t, memo)
        key = tuple(idx[s] for s in anchor)
        inter[key] = inter.get(key, 0.0) + weight * kern

    out = np.zeros((no, nv), dtype=complex)
    for key, value in inter.items():
        idx = dict(zip(anchor, key))
        for assignment in itertools.product(*(range(ranges[s]) for s in free)):
            idx.update(dict(zip(free, assignment)))
            out[idx[term.out_pattern[0]], idx[term.out_pattern[1]]] += \
                value * amp[idx[term.o_pattern[0]], idx[term.o_pattern[1]]]
    return out
