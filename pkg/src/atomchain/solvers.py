"""Steady states and time evolution of the master equation."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from .coupling import ChainConfig
from .lindblad import Liouvillian, excitation_numbers, sector_indices

PSD_TOL = 1e-8


class SolverError(RuntimeError):
    """Steady-state solve failed; ``residual`` carries the last residual norm."""

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


class StiffnessError(RuntimeError):
    """The adaptive integrator could not take a step."""

    def __init__(self, message: str, t: float):
        super().__init__(f"{message} at t = {t:.6g}")
        self.t = t


def check_density_matrix(rho: np.ndarray, atol: float = 1e-10, psd_tol: float = PSD_TOL) -> None:
    """Raise ``ValueError`` unless ``rho`` is Hermitian, unit trace and PSD."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"density matrix must be square, got shape {rho.shape}")
    dim = rho.shape[0]
    if dim & (dim - 1):
        raise ValueError(f"dimension {dim} is not a power of two")
    herm = np.abs(rho - rho.conj().T).max()
    if herm > atol:
        raise ValueError(f"density matrix not Hermitian (deviation {herm:.2e})")
    tr = np.trace(rho)
    if abs(tr - 1) > atol:
        raise ValueError(f"density matrix trace {tr.real:.12g} != 1")
    lam_min = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min()
    if lam_min < -psd_tol:
        raise ValueError(f"density matrix has negative eigenvalue {lam_min:.2e}")


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    diff = a - b
    return 0.5 * float(np.abs(np.linalg.eigvalsh(0.5 * (diff + diff.conj().T))).sum())


def _to_vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho, dtype=complex).reshape(-1, order="F")


def _to_rho(vec: np.ndarray, dim: int) -> np.ndarray:
    return vec.reshape(dim, dim, order="F")


@dataclass
class SteadyStateResult:
    rho: np.ndarray
    residual: float
    method: str
    iterations: int = 0


@dataclass
class Trajectory:
    """States at the requested times (units 1/gamma0).

    States are expressed in the frame rotating with the free atomic
    Hamiltonian. Populations, inter-atomic coherences and every heat flux are
    identical in both frames.
    """

    times: np.ndarray
    states: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.times)


def _embed(n_atoms: int, idx: np.ndarray, x: np.ndarray) -> np.ndarray:
    dim = 2**n_atoms
    vec = np.zeros(dim * dim, dtype=complex)
    vec[idx] = x
    return _to_rho(vec, dim)


@lru_cache(maxsize=None)
def _hermitian_maps(n_atoms: int):
    """Real parametrisation of Hermitian matrices restricted to the sector.

    Returns ``(expand, rows, n_diag_rows, pivot)``: ``expand`` maps real
    parameters u (diagonal entries, then Re/Im pairs of the upper triangle) to
    the complex sector vector; ``rows`` lists the sector positions whose real
    and imaginary parts form the real system.
    """
    idx = sector_indices(n_atoms)
    dim = 2**n_atoms
    a_all, b_all = idx % dim, idx // dim
    where = {(int(a), int(b)): i for i, (a, b) in enumerate(zip(a_all, b_all))}
    diag = [i for i, (a, b) in enumerate(zip(a_all, b_all)) if a == b]
    upper = [i for i, (a, b) in enumerate(zip(a_all, b_all)) if a < b]
    r, c, v = [], [], []
    col = 0
    for i in diag:
        r.append(i), c.append(col), v.append(1.0)
        col += 1
    for i in upper:
        j = where[(int(b_all[i]), int(a_all[i]))]
        r += [i, j, i, j]
        c += [col, col, col + 1, col + 1]
        v += [1.0, 1.0, 1j, -1j]
        col += 2
    expand = sp.csr_matrix((v, (r, c)), shape=(len(idx), col))
    return expand, np.array(diag + upper), len(diag)


def _real_form(m: sp.csr_matrix, n_atoms: int) -> sp.csr_matrix:
    expand, rows, n_diag = _hermitian_maps(n_atoms)
    c = (m[rows] @ expand).tocsr()
    # diagonal rows are real; upper-triangle rows contribute Re and Im parts
    return sp.vstack([c.real, c[n_diag:].imag]).tocsr()


def _relative_residual(m, x: np.ndarray) -> float:
    r = float(np.linalg.norm(m @ x))
    scale = spla.norm(m, np.inf) * float(np.linalg.norm(x, np.inf))
    return r / scale if scale > 0 else r


DENSE_LIMIT = 4000


def steady_state(L: Liouvillian, tol: float = 1e-12, refine: int = 2) -> SteadyStateResult:
    """Unit-trace null vector of the generator.

    The generator is restricted to the excitation-conserving sector and
    written in a real parametrisation of Hermitian matrices. One population
    row is replaced by the trace condition and the bordered system is
    solved by LU (dense up to ``DENSE_LIMIT`` unknowns, where fill-in makes
    sparse factors no cheaper, sparse beyond), followed by ``refine`` steps
    of iterative refinement. If that fails or leaves a relative residual
    above ``tol``, shifted inverse iteration on the null space is used.
    """
    n_atoms = L.n_atoms
    expand, _, n_diag = _hermitian_maps(n_atoms)
    m = _real_form(L.sector, n_atoms)
    n = m.shape[0]
    trace_row = np.zeros(n)
    trace_row[:n_diag] = 1.0
    pivot = 0

    keep = np.ones(n)
    keep[pivot] = 0.0
    border = sp.csr_matrix((trace_row[:n_diag], (np.zeros(n_diag, dtype=int), np.arange(n_diag))), shape=(n, n))
    bordered = (sp.diags(keep) @ m + border).tocsr()
    rhs = np.zeros(n)
    rhs[pivot] = 1.0

    method = "bordered-lu-dense" if n <= DENSE_LIMIT else "bordered-lu-sparse"
    u = None
    iterations = 0
    try:
        solve = _factorize(bordered, dense=n <= DENSE_LIMIT)
        u = solve(rhs)
        for _ in range(refine):
            u = u + solve(rhs - bordered @ u)
            iterations += 1
        if not np.all(np.isfinite(u)) or _relative_residual(m, u) > tol:
            u = None
    except (RuntimeError, np.linalg.LinAlgError, sla.LinAlgWarning):
        u = None

    if u is None:
        method = "shifted-inverse"
        u, iterations = _inverse_iteration(m, trace_row)
        rel = _relative_residual(m, u)
        if not np.isfinite(rel) or rel > tol:
            raise SolverError("steady-state solve did not converge", rel)

    u = u / (trace_row @ u)
    x = expand @ u
    rho = _embed(n_atoms, L.sector_indices, x)
    residual = float(np.linalg.norm(L.sector @ x))
    return SteadyStateResult(rho=rho, residual=residual, method=method, iterations=iterations)


def _factorize(a: sp.csr_matrix, dense: bool):
    if dense:
        with warnings.catch_warnings():
            warnings.simplefilter("error", sla.LinAlgWarning)
            lu = sla.lu_factor(a.toarray(), check_finite=False)
        return lambda b: sla.lu_solve(lu, b, check_finite=False)
    return spla.splu(a.tocsc()).solve


def _inverse_iteration(m: sp.csr_matrix, trace_row: np.ndarray, max_iter: int = 50):
    n = m.shape[0]
    shift = 1e-10 * spla.norm(m, np.inf)
    try:
        solve = _factorize((m - shift * sp.identity(n, format="csr")).tocsr(), dense=n <= DENSE_LIMIT)
    except (RuntimeError, np.linalg.LinAlgError, sla.LinAlgWarning) as exc:
        raise SolverError(f"shifted factorisation failed: {exc}") from exc
    x = trace_row / np.linalg.norm(trace_row)
    it = 0
    for it in range(1, max_iter + 1):
        y = solve(x)
        y = y / np.linalg.norm(y)
        if np.dot(y, x) < 0:
            y = -y
        done = np.linalg.norm(y - x) < 1e-14
        x = y
        if done:
            break
    return x, it


def gibbs_state(config: ChainConfig) -> np.ndarray:
    """Thermal state of the free atomic Hamiltonian at the bath temperature."""
    n = config.n_th
    p_e = n / (1.0 + 2.0 * n)
    exc = excitation_numbers(config.n_atoms)
    diag = p_e**exc * (1.0 - p_e) ** (config.n_atoms - exc)
    return np.diag(diag).astype(complex)


def _in_sector(rho: np.ndarray, idx: np.ndarray) -> bool:
    mask = np.ones(rho.size, dtype=bool)
    mask[idx] = False
    off = _to_vec(rho)[mask]
    return off.size == 0 or float(np.abs(off).max()) == 0.0


def evolve(
    L: Liouvillian,
    rho0: np.ndarray,
    t_grid,
    rtol: float = 1e-8,
    atol: float = 1e-12,
    method: str = "expm",
) -> Trajectory:
    """Integrate the master equation from ``rho0`` at t = 0.

    ``method="expm"`` (default) propagates between output times with dense
    matrix exponentials (scaling and squaring) of the generator restricted to
    the excitation-conserving sector; the generator is time independent so
    this is exact up to rounding, whatever the spread of timescales.
    ``method="radau"`` uses the adaptive implicit Radau IIA scheme with the
    given tolerances. It is A- and L-stable but must resolve the
    dipole-dipole oscillations (up to ~1e4 gamma0 at 0.1 um), so it is only
    practical over short horizons.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or len(t_grid) == 0:
        raise ValueError("t_grid must be a non-empty 1-d sequence")
    if np.any(np.diff(t_grid) <= 0) or t_grid[0] < 0:
        raise ValueError("t_grid must be non-negative and strictly increasing")
    rho0 = np.asarray(rho0, dtype=complex)
    dim = L.dim
    if rho0.shape != (dim, dim):
        raise ValueError(f"initial state has shape {rho0.shape}, expected {(dim, dim)}")

    idx = L.sector_indices
    if _in_sector(rho0, idx):
        gen = L.sector.tocsc()
        y0 = _to_vec(rho0)[idx]
        embed = lambda y: _embed(L.n_atoms, idx, y)  # noqa: E731
        space = "sector"
    else:
        gen = L.rotating.tocsc()
        y0 = _to_vec(rho0)
        embed = lambda y: _to_rho(y.copy(), dim)  # noqa: E731
        space = "full"

    if method == "expm":
        ys, diag = _propagate_expm(gen, y0, t_grid)
    elif method == "radau":
        ys, diag = _integrate(gen, y0, t_grid, rtol, atol)
    else:
        raise ValueError(f"unknown method {method!r}")
    raw = np.array([embed(y) for y in ys])
    # the generator preserves Hermiticity; drop the rounding-level anti-Hermitian part
    states = 0.5 * (raw + raw.conj().transpose(0, 2, 1))
    diag.update(
        method=method, space=space, frame="rotating", rtol=rtol,
        antihermitian=float(np.abs(raw - states).max()),
    )
    return Trajectory(times=t_grid.copy(), states=states, diagnostics=diag)


def _integrate(gen, y0, t_grid, rtol, atol):
    if not np.any(gen.data) or t_grid[-1] == 0:
        return np.repeat(y0[None, :], len(t_grid), axis=0), {"nfev": 0}
    # Radau in scipy is real-only: integrate [Re y, Im y] under the real block form.
    re, im = gen.real, gen.imag
    real_gen = sp.bmat([[re, -im], [im, re]], format="csc")
    n = len(y0)
    sol = solve_ivp(
        lambda _t, y: real_gen @ y,
        (0.0, float(t_grid[-1])),
        np.concatenate([y0.real, y0.imag]),
        method="Radau",
        t_eval=t_grid,
        jac=real_gen,
        rtol=rtol,
        atol=atol,
    )
    if sol.status != 0:
        t_fail = float(sol.t[-1]) if len(sol.t) else 0.0
        raise StiffnessError(sol.message, t_fail)
    ys = sol.y[:n].T + 1j * sol.y[n:].T
    return ys, {"nfev": int(sol.nfev), "njev": int(sol.njev), "nlu": int(sol.nlu)}


def _propagate_expm(gen, y0, t_grid):
    dense = gen.toarray()
    ys = []
    y = y0
    t_prev = 0.0
    for t in t_grid:
        dt = t - t_prev
        if dt > 0:
            y = sla.expm(dense * dt) @ y
        ys.append(y)
        t_prev = t
    return np.array(ys), {"nexpm": len(t_grid)}


def log_time_grid(t_min: float = 1e-4, t_max: float = 1e4, per_decade: int = 10, include_zero: bool = True):
    """Log-spaced output times in units of 1/gamma0."""
    n = int(round(np.log10(t_max / t_min) * per_decade)) + 1
    grid = np.geomspace(t_min, t_max, n)
    return np.concatenate([[0.0], grid]) if include_zero else grid
