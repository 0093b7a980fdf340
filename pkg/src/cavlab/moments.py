"""Oracle based on the closed set of first and second field/emitter moments.

For the linearised (bosonic-emitter) model the Heisenberg equations close on
six moments once permutation symmetry over identical emitters is used:

===== ======================= =======================================
s1    ``<a_c>``               mean cavity field
s2    ``<a_j>``               mean emitter amplitude (any j)
s3    ``<a_c^dag a_c>``       cavity photon number
s4    ``<a_c^dag a_j>``       cavity-emitter cross moment
s5    ``<a_j^dag a_j>``       emitter excitation (p_exc)
s6    ``<a_k^dag a_j>``       emitter-emitter cross moment, k != j
===== ======================= =======================================

Channel bookkeeping follows from the commutation structure of the jump
operators: the common dephasing channel commutes with every emitter-emitter
bilinear, so it damps only the amplitudes (through ``gamma_perp``) and the
cavity-emitter cross moment; the individual channel additionally damps s6 at
twice its rate; cavity jitter damps s1 and s4 but not the photon number.
This module is independent of :mod:`cavlab.analytic` (no closed-form results
are consumed here) and is validated against the full density-matrix oracle.

A non-reduced per-emitter variant (every ``<a_k^dag a_j>`` kept) is retained
for small emitter numbers as a cross-check of the symmetry reduction.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson

from .analytic import SpectrumResult
from .errors import ParameterError, SingularSystemError, StepSizeError
from .model import SystemParams

__all__ = [
    "MomentState",
    "derivative",
    "steady_state",
    "integrate",
    "regression_spectrum",
    "per_atom_steady_state",
    "intensity_from_state",
    "energy_balance_residual",
]


@dataclass(frozen=True)
class MomentState:
    """Snapshot of the six symmetry-reduced moments."""

    s1: complex
    s2: complex
    s3: float
    s4: complex
    s5: float
    s6: float

    @staticmethod
    def vacuum() -> "MomentState":
        return MomentState(0j, 0j, 0.0, 0j, 0.0, 0.0)

    def packed(self) -> np.ndarray:
        """Real 9-vector [Re s1, Im s1, Re s2, Im s2, s3, Re s4, Im s4, s5, s6]."""
        return np.array([
            self.s1.real, self.s1.imag, self.s2.real, self.s2.imag,
            self.s3, self.s4.real, self.s4.imag, self.s5, self.s6,
        ])

    @staticmethod
    def from_packed(x: np.ndarray) -> "MomentState":
        return MomentState(
            s1=complex(x[0], x[1]), s2=complex(x[2], x[3]), s3=float(x[4]),
            s4=complex(x[5], x[6]), s5=float(x[7]), s6=float(x[8]),
        )


def derivative(params: SystemParams, omega_l: float, state: MomentState) -> MomentState:
    """Time derivative of the reduced moment set."""
    n = params.n_atoms
    kappa = params.kappa
    gp = params.gamma_perp
    g = params.g
    delta_c = params.omega_c - omega_l
    delta_a = params.omega_a - omega_l
    drive = math.sqrt(2.0 * params.kappa1) * params.beta
    gamma_c = kappa + params.inv_tau_jitter       # mean-field cavity damping

    ds1 = -(gamma_c + 1j * delta_c) * state.s1 - 1j * g * n * state.s2 + drive
    ds3 = (
        -2.0 * kappa * state.s3
        + 2.0 * (drive * state.s1.conjugate()).real
        + 2.0 * g * n * state.s4.imag
    )
    if n == 0:
        return MomentState(ds1, 0j, ds3, 0j, 0.0, 0.0)

    ds2 = -(gp + 1j * delta_a) * state.s2 - 1j * g * state.s1
    ds4 = (
        -(gamma_c + gp + 1j * (delta_a - delta_c)) * state.s4
        + drive.conjugate() * state.s2
        - 1j * g * state.s3
        + 1j * g * (state.s5 + (n - 1) * state.s6)
    )
    ds5 = -2.0 * g * state.s4.imag - params.gamma_par * state.s5
    rate6 = 2.0 * params.inv_tau_indiv + params.gamma_par
    if n >= 2:
        ds6 = -2.0 * g * state.s4.imag - rate6 * state.s6
    else:
        ds6 = -rate6 * state.s6   # no emitter pairs: s6 relaxes to zero
    return MomentState(ds1, ds2, ds3, ds4, ds5, ds6)


_ACTIVE_EMPTY = np.array([0, 1, 4])     # Re s1, Im s1, s3


def _affine_parts(fun, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Matrix and offset of a real-affine map probed on basis vectors."""
    offset = fun(np.zeros(dim))
    matrix = np.empty((dim, dim))
    for i in range(dim):
        e = np.zeros(dim)
        e[i] = 1.0
        matrix[:, i] = fun(e) - offset
    return matrix, offset


def _solve_equilibrated(matrix: np.ndarray, rhs: np.ndarray, what: str) -> np.ndarray:
    """Linear solve with power-of-two row/column scaling and one refinement step."""
    row = np.max(np.abs(matrix), axis=1)
    if np.any(row == 0.0):
        raise SingularSystemError(f"{what}: structurally singular system")
    rs = np.exp2(np.round(np.log2(row)))
    scaled = matrix / rs[:, None]
    col = np.max(np.abs(scaled), axis=0)
    col[col == 0.0] = 1.0
    cs = np.exp2(np.round(np.log2(col)))
    scaled = scaled / cs[None, :]
    try:
        x = np.linalg.solve(scaled, rhs / rs) / cs
        residual = rhs - matrix @ x
        x = x + np.linalg.solve(scaled, residual / rs) / cs
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"{what}: {exc}") from exc
    residual = rhs - matrix @ x
    scale = np.max(np.abs(matrix)) * max(np.max(np.abs(x)), 1e-300)
    if np.max(np.abs(residual)) > 1e-8 * scale:
        raise SingularSystemError(f"{what}: residual check failed")
    return x


def steady_state(params: SystemParams, omega_l: float) -> MomentState:
    """Fixed point of :func:`derivative`, found by direct linear solve."""

    def fun(x: np.ndarray) -> np.ndarray:
        return derivative(params, omega_l, MomentState.from_packed(x)).packed()

    matrix, offset = _affine_parts(fun, 9)
    if params.n_atoms == 0:
        idx = _ACTIVE_EMPTY
        sub = matrix[np.ix_(idx, idx)]
        x = np.zeros(9)
        x[idx] = _solve_equilibrated(sub, -offset[idx], "moments.steady_state")
    else:
        x = _solve_equilibrated(matrix, -offset, "moments.steady_state")
    return MomentState.from_packed(x)


def integrate(params: SystemParams, omega_l: float, state0: MomentState,
              t_end: float, dt: float, rtol: float = 1e-8,
              atol: float = 1e-12) -> tuple[np.ndarray, list[MomentState]]:
    """Fixed-step 4th-order integration of the moment equations.

    Each step is taken twice (one full step, two half steps) and the
    difference serves as the local error estimate; a step whose estimate
    exceeds ``atol + rtol * |state|`` raises :class:`StepSizeError` rather
    than silently degrading the trajectory.
    """
    if t_end <= 0.0 or dt <= 0.0:
        raise ParameterError("integrate: t_end and dt must be positive")

    def rhs(x: np.ndarray) -> np.ndarray:
        return derivative(params, omega_l, MomentState.from_packed(x)).packed()

    def rk4(x: np.ndarray, h: float) -> np.ndarray:
        k1 = rhs(x)
        k2 = rhs(x + 0.5 * h * k1)
        k3 = rhs(x + 0.5 * h * k2)
        k4 = rhs(x + h * k3)
        return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    n_steps = max(1, int(round(t_end / dt)))
    h = t_end / n_steps
    times = np.linspace(0.0, t_end, n_steps + 1)
    x = state0.packed()
    states = [state0]
    for k in range(n_steps):
        full = rk4(x, h)
        half = rk4(rk4(x, 0.5 * h), 0.5 * h)
        err = np.max(np.abs(full - half))
        tol = atol + rtol * max(np.max(np.abs(half)), 1.0)
        if err > tol:
            raise StepSizeError(
                f"integrate: local error {err:.3e} exceeds tolerance {tol:.3e} "
                f"at t={times[k]:.6g}; reduce dt"
            )
        x = half
        states.append(MomentState.from_packed(x))
    return times, states


# --- correlation spectrum via the regression of the first-moment system ----

def _first_moment_matrix(params: SystemParams, omega_l: float) -> np.ndarray:
    """Matrix of the closed (s1, s2) system; 1x1 when there are no emitters."""
    delta_c = params.omega_c - omega_l
    gamma_c = params.kappa + params.inv_tau_jitter
    if params.n_atoms == 0:
        return np.array([[-(gamma_c + 1j * delta_c)]])
    delta_a = params.omega_a - omega_l
    g = params.g
    return np.array([
        [-(gamma_c + 1j * delta_c), -1j * g * params.n_atoms],
        [-1j * g, -(params.gamma_perp + 1j * delta_a)],
    ])


def regression_spectrum(params: SystemParams, omega_l: float, grid: np.ndarray,
                        t_max: float | None = None,
                        dt: float | None = None) -> SpectrumResult:
    """Emission spectrum from the steady-state two-time field correlation.

    The correlation pair ``(<a_c^dag(0) a_c(tau)>, <a_c^dag(0) a_j(tau)>)``
    obeys the same linear system as the first moments, with the drive term
    multiplied by ``<a_c^dag>`` and initial conditions given by the
    steady-state second moments.  The lag-infinity plateau ``|s1|**2`` is the
    coherent power; the remainder is integrated against ``exp(i(omega -
    omega_l) tau)`` with a composite quadrature to give the incoherent
    density on ``grid``.
    """
    grid = np.asarray(grid, dtype=float)
    ss = steady_state(params, omega_l)
    matrix = _first_moment_matrix(params, omega_l)
    eigvals = np.linalg.eigvals(matrix)
    rate_min = float(np.min(-eigvals.real))
    if rate_min <= 0.0:
        raise SingularSystemError("regression_spectrum: correlation system is not decaying")
    delta_max = float(np.max(np.abs(grid - omega_l))) if grid.size else 0.0
    scale = max(float(np.max(np.abs(eigvals))), delta_max, rate_min)
    if dt is None:
        dt = 0.05 / scale
    if t_max is None:
        t_max = 30.0 / rate_min

    if params.n_atoms == 0:
        u = np.array([ss.s3 - abs(ss.s1) ** 2], dtype=complex)
    else:
        u = np.array([
            ss.s3 - abs(ss.s1) ** 2,
            ss.s4 - ss.s1.conjugate() * ss.s2,
        ])
    u0_norm = np.linalg.norm(u)

    n_steps = max(2, int(math.ceil(t_max / dt)))
    h = t_max / n_steps
    samples = np.empty(n_steps + 1, dtype=complex)
    samples[0] = u[0]
    for k in range(n_steps):
        k1 = matrix @ u
        k2 = matrix @ (u + 0.5 * h * k1)
        k3 = matrix @ (u + 0.5 * h * k2)
        k4 = matrix @ (u + h * k3)
        u = u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        samples[k + 1] = u[0]

    if u0_norm > 0.0 and np.linalg.norm(u) > 1e-6 * u0_norm:
        warnings.warn(
            "regression_spectrum: correlation has not decayed to its plateau "
            f"within t_max={t_max:.3g}; spectrum tails may be inaccurate",
            RuntimeWarning,
        )

    taus = np.linspace(0.0, t_max, n_steps + 1)
    density = np.empty(grid.size)
    chunk = max(1, int(4e6 // max(taus.size, 1)))
    for start in range(0, grid.size, chunk):
        dw = grid[start:start + chunk] - omega_l
        kernel = np.exp(1j * np.outer(dw, taus)) * samples[None, :]
        density[start:start + chunk] = simpson(kernel, x=taus, axis=1).real / math.pi
    return SpectrumResult(
        omega_l=omega_l, grid=grid, incoherent_density=density,
        coherent_power=abs(ss.s1) ** 2, method="regression",
        meta={"t_max": t_max, "dt": h, "photon_number": ss.s3},
    )


# --- non-reduced per-emitter cross-check -----------------------------------

def _per_atom_derivative(params: SystemParams, omega_l: float,
                         z: np.ndarray) -> np.ndarray:
    """Derivative of the full per-emitter moment set, complex packed.

    Layout: [a_c, a_1..a_N, n_c, c_1..c_N, m_11..m_NN] where
    ``c_j = <a_c^dag a_j>`` and ``m_kj = <a_k^dag a_j>`` row-major.
    """
    n = params.n_atoms
    kappa = params.kappa
    gp = params.gamma_perp
    g = params.g
    delta_c = params.omega_c - omega_l
    delta_a = params.omega_a - omega_l
    drive = math.sqrt(2.0 * params.kappa1) * params.beta
    gamma_c = kappa + params.inv_tau_jitter

    a_c = z[0]
    a = z[1:1 + n]
    n_c = z[1 + n]
    c = z[2 + n:2 + 2 * n]
    m = z[2 + 2 * n:].reshape(n, n)

    out = np.empty_like(z)
    out[0] = -(gamma_c + 1j * delta_c) * a_c - 1j * g * a.sum() + drive
    out[1:1 + n] = -(gp + 1j * delta_a) * a - 1j * g * a_c
    out[1 + n] = (
        -2.0 * kappa * n_c + drive * np.conj(a_c) + np.conj(drive) * a_c
        - 1j * g * (c.sum() - np.conj(c).sum())
    )
    out[2 + n:2 + 2 * n] = (
        -(gamma_c + gp + 1j * (delta_a - delta_c)) * c
        + np.conj(drive) * a - 1j * g * n_c + 1j * g * m.sum(axis=0)
    )
    dm = 1j * g * (c[None, :] - np.conj(c)[:, None])
    dm = dm - (2.0 * params.inv_tau_indiv + params.gamma_par) * m
    dm[np.diag_indices(n)] += 2.0 * params.inv_tau_indiv * np.diag(m)
    out[2 + 2 * n:] = dm.reshape(-1)
    return out


def per_atom_steady_state(params: SystemParams, omega_l: float) -> MomentState:
    """Steady state of the non-reduced per-emitter system, folded back to
    the symmetry-reduced representation.  Intended for n_atoms <= 3."""
    n = params.n_atoms
    if not 1 <= n <= 3:
        raise ParameterError("per_atom_steady_state: supported for 1 <= n_atoms <= 3")
    dim_c = 2 + 2 * n + n * n

    def fun(x: np.ndarray) -> np.ndarray:
        d = _per_atom_derivative(params, omega_l, x.view(complex))
        return d.view(float).copy()

    matrix, offset = _affine_parts(fun, 2 * dim_c)
    x = _solve_equilibrated(matrix, -offset, "per_atom_steady_state")
    z = x.view(complex)
    a = z[1:1 + n]
    c = z[2 + n:2 + 2 * n]
    m = z[2 + 2 * n:].reshape(n, n)
    off_diag = (m.sum() - np.trace(m)) / (n * (n - 1)) if n > 1 else 0.0
    return MomentState(
        s1=complex(z[0]), s2=complex(a.mean()), s3=float(z[1 + n].real),
        s4=complex(c.mean()), s5=float(np.trace(m).real / n),
        s6=float(np.real(off_diag)),
    )


# --- derived intensities and balance checks --------------------------------

def intensity_from_state(params: SystemParams, state: MomentState) -> tuple[float, float]:
    """(R, T) from steady moments via the input-output relations."""
    flux = abs(params.beta) ** 2
    if flux == 0.0:
        raise ParameterError("intensity_from_state: drive amplitude is zero")
    drive = math.sqrt(2.0 * params.kappa1) * params.beta
    big_r = (
        2.0 * params.kappa1 * state.s3
        - 2.0 * (drive * state.s1.conjugate()).real
        + flux
    ) / flux
    big_t = 2.0 * params.kappa2 * state.s3 / flux
    return big_r, big_t


def energy_balance_residual(params: SystemParams, state: MomentState) -> float:
    """Relative mismatch of photon outflow vs drive work in the steady state."""
    drive = math.sqrt(2.0 * params.kappa1) * params.beta
    inflow = 2.0 * (drive * state.s1.conjugate()).real
    outflow = 2.0 * params.kappa * state.s3 + params.n_atoms * params.gamma_par * state.s5
    scale = max(abs(inflow), abs(outflow), 1e-300)
    return abs(inflow - outflow) / scale
