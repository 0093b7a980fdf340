"""Brute-force oracle on a truncated Hilbert space.

Everything here works on the full density matrix of the composite system
cavity x emitters (x probe).  Emitters come in two flavours:

* ``two_level``  -- exact Pauli emitters; population decay jumps through
  the lowering operator and both dephasing channels couple through sigma_z/2.
* ``hp``         -- bosonic emitters truncated at ``atom_cutoff`` quanta;
  the dephasing channels couple through the number operator.

For a Hermitian jump operator, adding a constant leaves the dissipator
unchanged, so sigma_z/2 and the two-level number operator generate the same
dynamics; an ``hp`` emitter with cutoff 1 therefore reproduces ``two_level``
exactly, which the tests exploit.

Density matrices are vectorized row-major, vec(A rho B) = (A kron B^T) vec(rho).
Steady states come from a sparse LU solve of the generator with one row
replaced by the trace constraint; a time-marching fallback covers dimensions
above the direct-solve threshold.  The overall Hilbert-space dimension is
capped by a budget, overridable through the CAVLAB_BUDGET environment
variable.
"""
from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh, expm
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import expm_multiply, splu

from .analytic import SpectrumResult
from .errors import BudgetError, ParameterError, SingularSystemError
from .model import SystemParams
from .moments import MomentState

__all__ = [
    "SpaceSpec",
    "TruncatedState",
    "WignerGrid",
    "StochasticCheckReport",
    "dimension_budget",
    "build_hamiltonian",
    "jump_operators",
    "build_liouvillian",
    "hamiltonian_superop",
    "steady_state",
    "expectation",
    "reduce_cavity",
    "steady_moment_state",
    "converged_moment_state",
    "coherent_vector",
    "wigner",
    "wigner_grid_for_state",
    "probe_spectrum",
    "stochastic_dephasing_check",
]

DEFAULT_DIMENSION_BUDGET = 512
# Largest Hilbert dimension for the sparse LU path.  LU fill-in grows much
# faster than the marching cost, so past ~80 states the propagator wins.
_DIRECT_SOLVE_LIMIT = 64


def dimension_budget() -> int:
    """Hilbert-space dimension cap; CAVLAB_BUDGET overrides the default."""
    raw = os.environ.get("CAVLAB_BUDGET")
    if raw is None:
        return DEFAULT_DIMENSION_BUDGET
    try:
        value = int(raw)
    except ValueError as exc:
        raise ParameterError(f"CAVLAB_BUDGET must be an integer, got {raw!r}") from exc
    if value < 2:
        raise ParameterError("CAVLAB_BUDGET must be at least 2")
    return value


@dataclass(frozen=True)
class SpaceSpec:
    """Shape of the truncated composite Hilbert space."""

    cavity_cutoff: int
    n_atoms: int
    atom_model: str = "hp"          # "hp" or "two_level"
    atom_cutoff: int = 2            # per-emitter quanta, hp model only
    probe_enabled: bool = False

    def __post_init__(self):
        if self.cavity_cutoff < 1:
            raise ParameterError("SpaceSpec: cavity_cutoff must be >= 1")
        if self.n_atoms < 0:
            raise ParameterError("SpaceSpec: n_atoms must be >= 0")
        if self.atom_model not in ("hp", "two_level"):
            raise ParameterError("SpaceSpec: atom_model must be 'hp' or 'two_level'")
        if self.atom_model == "hp" and self.atom_cutoff < 1:
            raise ParameterError("SpaceSpec: atom_cutoff must be >= 1")

    @property
    def atom_dim(self) -> int:
        return 2 if self.atom_model == "two_level" else self.atom_cutoff + 1

    @property
    def dims(self) -> tuple[int, ...]:
        out = (self.cavity_cutoff + 1,) + (self.atom_dim,) * self.n_atoms
        if self.probe_enabled:
            out = out + (2,)
        return out

    @property
    def dimension(self) -> int:
        return int(np.prod(self.dims))

    def check_budget(self) -> "SpaceSpec":
        budget = dimension_budget()
        if self.dimension > budget:
            raise BudgetError(
                f"Hilbert dimension {self.dimension} exceeds budget {budget} "
                "(set CAVLAB_BUDGET to raise it)"
            )
        return self

    def with_cavity_cutoff(self, cutoff: int) -> "SpaceSpec":
        return SpaceSpec(cutoff, self.n_atoms, self.atom_model,
                         self.atom_cutoff, self.probe_enabled)


def _destroy(dim: int) -> sp.csr_matrix:
    return sp.diags(np.sqrt(np.arange(1, dim, dtype=float)), 1, format="csr").astype(complex)


def _embed(op: sp.spmatrix, site: int, dims: tuple[int, ...]) -> sp.csr_matrix:
    mat = sp.identity(1, format="csr", dtype=complex)
    for k, d in enumerate(dims):
        blk = op if k == site else sp.identity(d, format="csr", dtype=complex)
        mat = sp.kron(mat, blk, format="csr")
    return mat


def cavity_annihilation(space: SpaceSpec) -> sp.csr_matrix:
    return _embed(_destroy(space.cavity_cutoff + 1), 0, space.dims)


def atom_lowering(space: SpaceSpec, j: int) -> sp.csr_matrix:
    if space.atom_model == "two_level":
        op = sp.csr_matrix(np.array([[0, 1], [0, 0]], dtype=complex))
    else:
        op = _destroy(space.atom_dim)
    return _embed(op, 1 + j, space.dims)


def _atom_dephasing_op(space: SpaceSpec) -> sp.csr_matrix:
    """Single-site operator the dephasing noise couples to."""
    if space.atom_model == "two_level":
        return sp.csr_matrix(np.diag([-0.5, 0.5]).astype(complex))   # sigma_z / 2
    return sp.diags(np.arange(space.atom_dim, dtype=float), 0, format="csr").astype(complex)


def atom_number(space: SpaceSpec, j: int) -> sp.csr_matrix:
    if space.atom_model == "two_level":
        op = sp.csr_matrix(np.diag([0.0, 1.0]).astype(complex))
    else:
        op = sp.diags(np.arange(space.atom_dim, dtype=float), 0, format="csr").astype(complex)
    return _embed(op, 1 + j, space.dims)


def probe_lowering(space: SpaceSpec) -> sp.csr_matrix:
    if not space.probe_enabled:
        raise ParameterError("probe_lowering: space has no probe mode")
    op = sp.csr_matrix(np.array([[0, 1], [0, 0]], dtype=complex))
    return _embed(op, len(space.dims) - 1, space.dims)


def build_hamiltonian(params: SystemParams, omega_l: float,
                      space: SpaceSpec) -> sp.csr_matrix:
    """System Hamiltonian in the frame rotating at the drive frequency."""
    if space.n_atoms != params.n_atoms:
        raise ParameterError("build_hamiltonian: space.n_atoms != params.n_atoms")
    delta_c = params.omega_c - omega_l
    delta_a = params.omega_a - omega_l
    a_c = cavity_annihilation(space)
    h = delta_c * (a_c.conj().T @ a_c)
    drive = math.sqrt(2.0 * params.kappa1) * params.beta
    h = h + 1j * (drive * a_c.conj().T - np.conj(drive) * a_c)
    for j in range(params.n_atoms):
        low = atom_lowering(space, j)
        if space.atom_model == "two_level":
            sz_half = _embed(_atom_dephasing_op(space), 1 + j, space.dims)
            h = h + delta_a * sz_half
        else:
            h = h + delta_a * (low.conj().T @ low)
        h = h + params.g * (low.conj().T @ a_c + low @ a_c.conj().T)
    return h.tocsr()


def jump_operators(params: SystemParams, space: SpaceSpec) -> list[sp.csr_matrix]:
    """Collapse operators: cavity leak, cavity jitter, per-emitter decay and
    dephasing, collective dephasing (present only when the rate is nonzero)."""
    ops = [math.sqrt(2.0 * params.kappa) * cavity_annihilation(space)]
    if params.inv_tau_jitter > 0.0:
        a_c = cavity_annihilation(space)
        ops.append(math.sqrt(2.0 * params.inv_tau_jitter) * (a_c.conj().T @ a_c))
    for j in range(params.n_atoms):
        ops.append(math.sqrt(params.gamma_par) * atom_lowering(space, j))
    if params.inv_tau_indiv > 0.0:
        for j in range(params.n_atoms):
            site = _embed(_atom_dephasing_op(space), 1 + j, space.dims)
            ops.append(math.sqrt(2.0 * params.inv_tau_indiv) * site)
    if params.inv_tau_common > 0.0 and params.n_atoms > 0:
        total = sum(_embed(_atom_dephasing_op(space), 1 + j, space.dims)
                    for j in range(params.n_atoms))
        ops.append(math.sqrt(2.0 * params.inv_tau_common) * total)
    return [op.tocsr() for op in ops]


def hamiltonian_superop(h: sp.spmatrix) -> sp.csr_matrix:
    """-i [H, .] in vectorized form."""
    dim = h.shape[0]
    ident = sp.identity(dim, format="csr", dtype=complex)
    return (-1j * (sp.kron(h, ident) - sp.kron(ident, h.T))).tocsr()


def _dissipator_superop(c: sp.spmatrix) -> sp.csr_matrix:
    dim = c.shape[0]
    ident = sp.identity(dim, format="csr", dtype=complex)
    cdc = (c.conj().T @ c).tocsr()
    out = sp.kron(c, c.conj()) - 0.5 * (sp.kron(cdc, ident) + sp.kron(ident, cdc.T))
    return out.tocsr()


def build_liouvillian(params: SystemParams, omega_l: float, space: SpaceSpec,
                      extra_hamiltonian: sp.spmatrix | None = None,
                      extra_jumps: tuple[sp.spmatrix, ...] = ()) -> sp.csr_matrix:
    """Sparse generator of the master equation on the vectorized state."""
    space.check_budget()
    h = build_hamiltonian(params, omega_l, space)
    if extra_hamiltonian is not None:
        h = (h + extra_hamiltonian).tocsr()
    gen = hamiltonian_superop(h)
    for c in list(jump_operators(params, space)) + list(extra_jumps):
        gen = gen + _dissipator_superop(c)
    return gen.tocsr()


@dataclass
class TruncatedState:
    """Density matrix over the composite truncated space."""

    rho: np.ndarray
    dims: tuple[int, ...]

    def __post_init__(self):
        dim = int(np.prod(self.dims))
        if self.rho.shape != (dim, dim):
            raise ParameterError("TruncatedState: matrix shape does not match dims")

    def trace(self) -> complex:
        return complex(np.trace(self.rho))

    def hermiticity_residual(self) -> float:
        return float(np.max(np.abs(self.rho - self.rho.conj().T)))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.rho + self.rho.conj().T))[0])

    def purity(self) -> float:
        return float(np.real(np.trace(self.rho @ self.rho)))

    def check(self, positivity_floor: float = -1e-8) -> "TruncatedState":
        if abs(self.trace() - 1.0) > 1e-10:
            raise SingularSystemError("state trace deviates from 1")
        if self.hermiticity_residual() > 1e-10:
            raise SingularSystemError("state is not Hermitian")
        if self.min_eigenvalue() < positivity_floor:
            raise SingularSystemError("state has a significantly negative eigenvalue")
        return self


def _trace_indices(dim: int) -> np.ndarray:
    return np.arange(dim) * (dim + 1)


def _direct_steady(gen: sp.spmatrix, dim: int, tol: float) -> np.ndarray:
    coo = gen.tocoo()
    keep = coo.row != 0
    rows = np.concatenate([coo.row[keep], np.zeros(dim, dtype=coo.row.dtype)])
    cols = np.concatenate([coo.col[keep], _trace_indices(dim)])
    data = np.concatenate([coo.data[keep], np.ones(dim, dtype=complex)])
    a = sp.csc_matrix((data, (rows, cols)), shape=gen.shape)
    b = np.zeros(dim * dim, dtype=complex)
    b[0] = 1.0
    try:
        lu = splu(a)
        x = lu.solve(b)
        for _ in range(2):
            x = x + lu.solve(b - a @ x)
    except RuntimeError as exc:
        raise SingularSystemError(f"steady_state: sparse LU failed: {exc}") from exc
    residual = np.max(np.abs(gen @ x)) / max(np.max(np.abs(x)), 1e-300)
    if residual > tol:
        raise SingularSystemError(
            f"steady_state: residual {residual:.3e} above tolerance {tol:.3e}"
        )
    return x


def _marching_steady(gen: sp.spmatrix, dim: int, tol: float,
                     max_rounds: int = 60) -> np.ndarray:
    x = np.zeros(dim * dim, dtype=complex)
    x[_trace_indices(dim)] = 1.0 / dim
    rate = float(np.max(np.abs(gen.diagonal())))
    horizon = 1.0 / max(rate, 1e-300)
    for _ in range(max_rounds):
        x = expm_multiply(gen * horizon, x)
        tr = x[_trace_indices(dim)].sum()
        x = x / tr
        residual = np.max(np.abs(gen @ x)) / max(np.max(np.abs(x)), 1e-300)
        if residual < tol:
            return x
        horizon = min(2.0 * horizon, 1e6 / max(rate, 1e-300))
    raise SingularSystemError("steady_state: time marching did not converge")


def steady_state(gen: sp.spmatrix, dims: tuple[int, ...],
                 method: str = "auto", tol: float = 1e-10) -> TruncatedState:
    """Stationary density matrix of the generator.

    Direct sparse solve with the trace constraint replacing one row; above
    the direct-solve size limit (or with method="marching") the state is
    relaxed by repeated application of the exponential propagator.
    """
    dim = int(np.prod(dims))
    if gen.shape != (dim * dim, dim * dim):
        raise ParameterError("steady_state: generator shape does not match dims")
    if method not in ("auto", "direct", "marching"):
        raise ParameterError("steady_state: unknown method")
    if method == "direct" or (method == "auto" and dim <= _DIRECT_SOLVE_LIMIT):
        x = _direct_steady(gen, dim, tol)
    else:
        x = _marching_steady(gen, dim, max(tol, 1e-9))
    rho = x.reshape(dim, dim)
    rho = 0.5 * (rho + rho.conj().T)
    rho = rho / np.trace(rho).real
    return TruncatedState(rho, dims).check()


def expectation(state: TruncatedState, observable) -> complex:
    ob = observable
    if sp.issparse(ob):
        if ob.shape != state.rho.shape:
            raise ParameterError("expectation: dimension mismatch")
        return complex((ob @ state.rho).diagonal().sum())
    ob = np.asarray(ob)
    if ob.shape != state.rho.shape:
        raise ParameterError("expectation: dimension mismatch")
    return complex(np.trace(ob @ state.rho))


def reduce_cavity(state: TruncatedState) -> TruncatedState:
    """Partial trace over everything but the cavity mode."""
    d0 = state.dims[0]
    rest = int(np.prod(state.dims[1:])) if len(state.dims) > 1 else 1
    rho = state.rho.reshape(d0, rest, d0, rest)
    return TruncatedState(np.einsum("arbr->ab", rho), (d0,))


def steady_moment_state(params: SystemParams, omega_l: float,
                        space: SpaceSpec,
                        method: str = "auto") -> tuple[MomentState, TruncatedState]:
    """Steady state plus its first/second moments folded into a MomentState."""
    gen = build_liouvillian(params, omega_l, space)
    state = steady_state(gen, space.dims, method=method)
    a_c = cavity_annihilation(space)
    s1 = expectation(state, a_c)
    s3 = expectation(state, a_c.conj().T @ a_c).real
    n = params.n_atoms
    if n == 0:
        return MomentState(s1, 0j, s3, 0j, 0.0, 0.0), state
    lows = [atom_lowering(space, j) for j in range(n)]
    s2 = np.mean([expectation(state, low) for low in lows])
    s4 = np.mean([expectation(state, a_c.conj().T @ low) for low in lows])
    s5 = float(np.mean([expectation(state, low.conj().T @ low).real for low in lows]))
    if n > 1:
        pairs = [expectation(state, lows[k].conj().T @ lows[j])
                 for k in range(n) for j in range(n) if k != j]
        s6 = float(np.mean(pairs).real)
    else:
        s6 = 0.0
    return MomentState(complex(s1), complex(s2), s3, complex(s4), s5, s6), state


def converged_moment_state(params: SystemParams, omega_l: float, space: SpaceSpec,
                           rel_tol: float = 1e-6, max_rounds: int = 4,
                           ) -> tuple[MomentState, TruncatedState, SpaceSpec]:
    """Raise the cavity cutoff by 2 until the reported moments settle."""
    current = space
    mstate, state = steady_moment_state(params, omega_l, current)
    for _ in range(max_rounds):
        bigger = current.with_cavity_cutoff(current.cavity_cutoff + 2)
        m2, s2 = steady_moment_state(params, omega_l, bigger)
        ref = np.abs(mstate.packed())
        change = np.max(np.abs(m2.packed() - mstate.packed()) / np.maximum(ref, 1e-300))
        if change < rel_tol:
            return m2, s2, bigger
        current, mstate, state = bigger, m2, s2
    raise SingularSystemError(
        "converged_moment_state: cavity cutoff did not converge within budget"
    )


def coherent_vector(alpha: complex, dim: int) -> np.ndarray:
    """Fock-basis amplitudes of |alpha>, truncated at dim levels."""
    amp = np.zeros(dim, dtype=complex)
    amp[0] = math.exp(-0.5 * abs(alpha) ** 2)
    for n in range(1, dim):
        amp[n] = amp[n - 1] * alpha / math.sqrt(n)
    return amp


# --- Wigner function --------------------------------------------------------

@dataclass
class WignerGrid:
    """Phase-space samples W(x + i p); unit integral, vacuum peak 2/pi."""

    xs: np.ndarray
    ps: np.ndarray
    w: np.ndarray            # shape (len(xs), len(ps))

    def integral(self) -> float:
        return float(np.trapezoid(np.trapezoid(self.w, self.ps, axis=1), self.xs))

    def normalization_residual(self) -> float:
        return abs(self.integral() - 1.0)

    def mean_alpha(self) -> complex:
        alpha = self.xs[:, None] + 1j * self.ps[None, :]
        return complex(np.trapezoid(np.trapezoid(self.w * alpha, self.ps, axis=1), self.xs))

    def photon_number(self) -> float:
        r2 = self.xs[:, None] ** 2 + self.ps[None, :] ** 2
        m2 = float(np.trapezoid(np.trapezoid(self.w * r2, self.ps, axis=1), self.xs))
        return m2 - 0.5


def _displacement_elements(gamma: np.ndarray, dim: int) -> np.ndarray:
    """<m|D(gamma)|n> for a batch of displacements, shape (len(gamma), dim, dim).

    Built from the corner element by stable two-term recurrences; every
    entry is bounded by 1 so there is no overflow risk.
    """
    gamma = np.asarray(gamma, dtype=complex)
    out = np.empty((gamma.size, dim, dim), dtype=complex)
    rt = np.sqrt(np.arange(dim + 1, dtype=float))
    out[:, 0, 0] = np.exp(-0.5 * np.abs(gamma) ** 2)
    for m in range(dim - 1):
        out[:, m + 1, 0] = gamma * out[:, m, 0] / rt[m + 1]
    for n in range(dim - 1):
        out[:, 0, n + 1] = -np.conj(gamma) * out[:, 0, n] / rt[n + 1]
        for m in range(dim - 1):
            out[:, m + 1, n + 1] = (rt[n + 1] * out[:, m, n]
                                    + gamma * out[:, m, n + 1]) / rt[m + 1]
    return out


def wigner(state: TruncatedState, xs: np.ndarray, ps: np.ndarray,
           chunk: int = 2048) -> WignerGrid:
    """W(alpha) = (2/pi) tr[rho D(2 alpha) P] on the grid alpha = x + i p."""
    if len(state.dims) != 1:
        raise ParameterError("wigner: reduce to the cavity mode first")
    dim = state.dims[0]
    xs = np.asarray(xs, dtype=float)
    ps = np.asarray(ps, dtype=float)
    alphas = (xs[:, None] + 1j * ps[None, :]).ravel()
    signs = (-1.0) ** np.arange(dim)
    w = np.empty(alphas.size)
    for start in range(0, alphas.size, chunk):
        batch = alphas[start:start + chunk]
        dmat = _displacement_elements(2.0 * batch, dim)
        w[start:start + chunk] = (2.0 / math.pi) * np.real(
            np.einsum("nm,kmn,n->k", state.rho, dmat, signs)
        )
    return WignerGrid(xs, ps, w.reshape(xs.size, ps.size))


def wigner_grid_for_state(state: TruncatedState, n_points: int = 101,
                          n_sigma: float = 5.0) -> tuple[np.ndarray, np.ndarray]:
    """Square grid centered on the field amplitude, wide enough for the
    normalization check (roughly n_sigma standard deviations per quadrature)."""
    a = sp.csr_matrix(np.diag(np.sqrt(np.arange(1, state.dims[0])), 1).astype(complex))
    mean = expectation(state, a)
    n_cav = expectation(state, a.conj().T @ a).real
    spread = math.sqrt(max(n_cav - abs(mean) ** 2, 0.0) + 0.5)
    half = abs(mean) + n_sigma * spread
    xs = np.linspace(-half, half, n_points)
    return xs, xs.copy()


# --- Appendix-style probe spectrum ------------------------------------------

def probe_spectrum(params: SystemParams, omega_l: float, grid: np.ndarray,
                   epsilon: float = 1e-3, kappa_p: float | None = None,
                   space: SpaceSpec | None = None) -> SpectrumResult:
    """Emission spectrum read out by a weakly coupled two-level probe mode.

    For every observation frequency the probe is detuned by omega - omega_l,
    the composite steady state is solved, and the probe occupation divided by
    pi * kappa_p * epsilon**2 estimates the total spectral density; the
    coherent line appears as a Lorentzian of width kappa_p and is subtracted
    to leave the incoherent part.
    """
    grid = np.asarray(grid, dtype=float)
    if epsilon <= 0.0 or epsilon >= 1.0:
        raise ParameterError("probe_spectrum: epsilon must be in (0, 1)")
    if kappa_p is None:
        rates = [params.kappa, params.gamma_par, params.gamma_perp]
        rates += [r for r in (params.inv_tau_jitter,) if r > 0.0]
        kappa_p = min(rates) / 100.0
    if kappa_p <= 0.0:
        raise ParameterError("probe_spectrum: kappa_p must be positive")
    if space is None:
        space = SpaceSpec(cavity_cutoff=6, n_atoms=params.n_atoms,
                          atom_model="hp", atom_cutoff=3, probe_enabled=True)
    if not space.probe_enabled:
        raise ParameterError("probe_spectrum: space must enable the probe mode")

    base = SpaceSpec(space.cavity_cutoff, space.n_atoms, space.atom_model,
                     space.atom_cutoff, probe_enabled=False)
    gen0 = build_liouvillian(params, omega_l, base)
    bare = steady_state(gen0, base.dims)
    a_bare = cavity_annihilation(base)
    mean_field = expectation(bare, a_bare)
    photon_number = expectation(bare, a_bare.conj().T @ a_bare).real
    coherent_power = abs(mean_field) ** 2

    g_p = epsilon * kappa_p
    a_p = probe_lowering(space)
    a_c = cavity_annihilation(space)
    n_p = (a_p.conj().T @ a_p).tocsr()
    coupling = g_p * (a_c.conj().T @ a_p + a_c @ a_p.conj().T)
    gen_fixed = build_liouvillian(
        params, omega_l, space,
        extra_hamiltonian=coupling,
        extra_jumps=(math.sqrt(2.0 * kappa_p) * a_p,),
    )
    gen_detune = hamiltonian_superop(n_p)

    density = np.empty(grid.size)
    worst_backaction = 0.0
    for k, omega in enumerate(grid):
        delta = omega - omega_l
        gen = (gen_fixed + delta * gen_detune).tocsr()
        state = steady_state(gen, space.dims)
        occupation = expectation(state, n_p).real
        density[k] = occupation / (math.pi * kappa_p * epsilon ** 2)
        probe_amp = abs(expectation(state, a_p))
        if coherent_power > 0.0:
            worst_backaction = max(
                worst_backaction, probe_amp / (epsilon * math.sqrt(coherent_power)))
    if worst_backaction > 2.0:
        warnings.warn(
            f"probe_spectrum: probe amplitude reached {worst_backaction:.2f}x "
            "the epsilon * cavity-field bound; results may be perturbed",
            RuntimeWarning,
        )
    rendered = (kappa_p / math.pi) / (kappa_p ** 2 + (grid - omega_l) ** 2)
    incoherent = density - rendered * coherent_power
    return SpectrumResult(
        omega_l=omega_l, grid=grid, incoherent_density=incoherent,
        coherent_power=coherent_power, method="probe",
        meta={"epsilon": epsilon, "kappa_p": kappa_p,
              "photon_number": photon_number, "dims": space.dims,
              "total_density": density},
    )


# --- stochastic-Hamiltonian consistency check -------------------------------

@dataclass
class StochasticCheckReport:
    trace_distance: float
    n_traj: int
    n_steps: int
    dt: float
    t_end: float
    diffusion: float
    method: str
    seed: int
    extras: dict = field(default_factory=dict)


def _component_structure(propagator: np.ndarray, deltas: np.ndarray
                         ) -> tuple[np.ndarray, np.ndarray] | None:
    """Labels and per-component phase slopes if the noise kick is a scalar on
    every connected block of the propagator pattern; None otherwise."""
    scale = np.max(np.abs(propagator))
    pattern = sp.csr_matrix(np.abs(propagator) > 1e-13 * max(scale, 1e-300))
    n_comp, labels = connected_components(pattern, directed=True, connection="weak")
    slopes = np.empty(n_comp)
    span = max(np.max(np.abs(deltas)), 1.0)
    for c in range(n_comp):
        vals = deltas[labels == c]
        if np.max(vals) - np.min(vals) > 1e-9 * span:
            return None
        slopes[c] = vals.mean()
    return labels, slopes


def stochastic_dephasing_check(deterministic_gen: sp.spmatrix, operator,
                               diffusion: float, initial: np.ndarray,
                               t_end: float, dt: float, n_traj: int,
                               seed: int, force_stepwise: bool = False
                               ) -> StochasticCheckReport:
    """Monte-Carlo average of trajectories with white-noise phase kicks vs the
    Lindblad evolution with jump sqrt(diffusion) * operator.

    Each step applies half the deterministic propagator, the exact unitary
    kick exp(-i sqrt(diffusion) dW O), and the second deterministic half.
    When the deterministic propagator decomposes into blocks on which the
    kick acts as a single scalar phase (true for number-operator noise on a
    driveless cavity), the whole trajectory average collapses to one phase
    average per block, which is taken instead of stepping explicitly; the
    result is identical to the stepwise path for the same seed.
    """
    op = operator.toarray() if sp.issparse(operator) else np.asarray(operator, dtype=complex)
    dim = op.shape[0]
    if np.max(np.abs(op - op.conj().T)) > 1e-12 * max(np.max(np.abs(op)), 1e-300):
        raise ParameterError("stochastic_dephasing_check: operator must be Hermitian")
    if diffusion < 0.0:
        raise ParameterError("stochastic_dephasing_check: diffusion must be >= 0")
    if dt <= 0.0 or t_end < dt:
        raise ParameterError("stochastic_dephasing_check: need 0 < dt <= t_end")
    if diffusion * dt > 1.0:
        raise ParameterError("stochastic_dephasing_check: diffusion * dt too large")
    if dim > 48:
        raise BudgetError("stochastic_dephasing_check: dimension above dense budget")
    n_steps = int(round(t_end / dt))
    t_end = n_steps * dt

    lam, vecs = eigh(op)
    basis = np.kron(vecs.conj().T, vecs.T)
    basis_inv = np.kron(vecs, vecs.conj())
    gen_eig = basis @ deterministic_gen.toarray() @ basis_inv
    deltas = (lam[:, None] - lam[None, :]).ravel()
    rho0 = vecs.conj().T @ np.asarray(initial, dtype=complex) @ vecs
    v0 = rho0.ravel()

    propagator = expm(gen_eig * dt)
    structure = None if force_stepwise else _component_structure(propagator, deltas)
    rng = np.random.default_rng(seed)
    root_d = math.sqrt(diffusion)
    chunk = 2048

    if structure is not None:
        labels, slopes = structure
        phase_sums = np.zeros(slopes.size, dtype=complex)
        done = 0
        while done < n_traj:
            c = min(chunk, n_traj - done)
            wiener = rng.standard_normal((c, n_steps)) * math.sqrt(dt)
            totals = wiener.sum(axis=1)
            phase_sums += np.exp(-1j * root_d * np.outer(totals, slopes)).sum(axis=0)
            done += c
        factors = (phase_sums / n_traj)[labels]
        v_mc = expm(gen_eig * t_end) @ v0 * factors
        method = "factored"
    else:
        half = expm(gen_eig * (0.5 * dt))
        half_t = half.T.copy()
        acc = np.zeros(dim * dim, dtype=complex)
        done = 0
        while done < n_traj:
            c = min(chunk, n_traj - done)
            wiener = rng.standard_normal((c, n_steps)) * math.sqrt(dt)
            states = np.broadcast_to(v0, (c, dim * dim)).copy()
            for k in range(n_steps):
                states = states @ half_t
                states *= np.exp(-1j * root_d * wiener[:, k, None] * deltas[None, :])
                states = states @ half_t
            acc += states.sum(axis=0)
            done += c
        v_mc = acc / n_traj
        method = "stepwise"

    dissipator = -0.5 * diffusion * deltas ** 2
    v_ref = expm((gen_eig + np.diag(dissipator)) * t_end) @ v0
    diff = (v_mc - v_ref).reshape(dim, dim)
    diff = 0.5 * (diff + diff.conj().T)
    distance = 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(diff))))
    return StochasticCheckReport(
        trace_distance=distance, n_traj=n_traj, n_steps=n_steps, dt=dt,
        t_end=t_end, diffusion=diffusion, method=method, seed=seed,
    )
