"""Operator algebra and the master-equation generator as a sparse superoperator.

Conventions
-----------
* Computational basis: atom 0 is the most significant tensor factor; on each
  atom index 0 is the ground state and 1 the excited state.
* Vectorisation is column-major: ``vec(rho)[a + dim*b] = rho[a, b]``, so
  ``A rho B`` maps to ``kron(B.T, A) @ vec(rho)``.
* Time is measured in units of 1/gamma0 and energies in units of hbar*omega
  (the Hamiltonian carries hbar = 1 and rates in units of gamma0).

Every term of the generator conserves the total excitation number, so the
matrix is block diagonal in the "charge" ``n(a) - n(b)`` of ``rho[a, b]``.
The zero-charge sector contains every populations/coherence observable used
downstream and is exposed as :attr:`Liouvillian.sector`.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .coupling import ChainConfig, CouplingTables, build_coupling_tables

MAX_ATOMS = 10

TERMS = frozenset({"hamiltonian", "local", "nonlocal", "pump", "extract"})


def _check_n(n_atoms: int) -> None:
    if not 1 <= n_atoms <= MAX_ATOMS:
        raise ValueError(f"number of atoms must be in [1, {MAX_ATOMS}], got {n_atoms}")


@lru_cache(maxsize=None)
def _lowering(n_atoms: int) -> tuple[sp.csr_matrix, ...]:
    _check_n(n_atoms)
    sm = sp.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex))
    ops = []
    for j in range(n_atoms):
        left = sp.identity(2**j, dtype=complex, format="csr")
        right = sp.identity(2 ** (n_atoms - j - 1), dtype=complex, format="csr")
        ops.append(sp.kron(sp.kron(left, sm), right, format="csr"))
    return tuple(ops)


def ladder_ops(n_atoms: int) -> tuple[list[sp.csr_matrix], list[sp.csr_matrix]]:
    """Per-atom lowering and raising operators on the 2^N-dimensional space."""
    lower = list(_lowering(n_atoms))
    return lower, [op.T.conj().tocsr() for op in lower]


@lru_cache(maxsize=None)
def excitation_numbers(n_atoms: int) -> np.ndarray:
    """Excitation count of every computational basis state."""
    idx = np.arange(2**n_atoms)
    return np.array([bin(i).count("1") for i in idx])


@lru_cache(maxsize=None)
def atom_occupations(n_atoms: int) -> np.ndarray:
    """``occ[j, a]`` is 1 when atom j is excited in basis state a."""
    idx = np.arange(2**n_atoms)
    return np.array([(idx >> (n_atoms - 1 - j)) & 1 for j in range(n_atoms)], dtype=float)


def sector_indices(n_atoms: int) -> np.ndarray:
    """Positions in vec(rho) of the elements rho[a, b] with equal excitation number."""
    return _sector_indices(n_atoms)


@lru_cache(maxsize=None)
def _sector_indices(n_atoms: int) -> np.ndarray:
    exc = excitation_numbers(n_atoms)
    dim = 2**n_atoms
    a, b = np.meshgrid(np.arange(dim), np.arange(dim), indexing="ij")
    vec_pos = (a + dim * b).ravel()
    keep = (exc[a] == exc[b]).ravel()
    out = np.sort(vec_pos[keep])
    out.setflags(write=False)
    return out


def spre(a) -> sp.csr_matrix:
    return sp.kron(sp.identity(a.shape[0], dtype=complex), a, format="csr")


def spost(b) -> sp.csr_matrix:
    return sp.kron(b.T, sp.identity(b.shape[0], dtype=complex), format="csr")


def lindblad_term(a, b) -> sp.csr_matrix:
    """Superoperator of ``rho -> a rho b^dag - {b^dag a, rho}/2``."""
    bd = b.T.conj().tocsr()
    prod = bd @ a
    return (sp.kron(bd.T, a, format="csr") - 0.5 * spre(prod) - 0.5 * spost(prod)).tocsr()


def commutator(h) -> sp.csr_matrix:
    """Superoperator of ``rho -> -i [h, rho]``."""
    return (-1j * (spre(h) - spost(h))).tocsr()


class _Stack:
    """Several sparse matrices sharing one CSR pattern, combined by a matvec."""

    def __init__(self, blocks: list[sp.spmatrix], shape: tuple[int, int]):
        rows, cols, vals, ids = [], [], [], []
        for i, blk in enumerate(blocks):
            coo = blk.tocoo()
            coo.sum_duplicates()
            rows.append(coo.row)
            cols.append(coo.col)
            vals.append(coo.data)
            ids.append(np.full(coo.nnz, i))
        rows = np.concatenate(rows).astype(np.int64)
        cols = np.concatenate(cols).astype(np.int64)
        key = rows * shape[1] + cols
        uniq, pos = np.unique(key, return_inverse=True)
        self.shape = shape
        self.indices = (uniq % shape[1]).astype(np.int32)
        counts = np.bincount(uniq // shape[1], minlength=shape[0])
        self.indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)
        self.weights = sp.csr_matrix(
            (np.concatenate(vals), (pos, np.concatenate(ids))),
            shape=(len(uniq), len(blocks)),
        )

    def combine(self, coeffs: np.ndarray) -> sp.csr_matrix:
        data = self.weights @ coeffs
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=self.shape)


class OperatorBasis:
    """Superoperator building blocks for an N-atom chain.

    Block keys:

    ``("ha",)``            commutator with the total excitation number
    ``("hop", j, k)``      commutator with sigma_j^+ sigma_k^- + h.c. (j < k)
    ``("up", j, k)``       rho -> s_j^+ rho s_k^- - {s_k^- s_j^+, rho}/2
    ``("down", j, k)``     rho -> s_j^- rho s_k^+ - {s_k^+ s_j^-, rho}/2
    """

    def __init__(self, n_atoms: int):
        _check_n(n_atoms)
        self.n_atoms = n_atoms
        self.dim = 2**n_atoms
        lower, raise_ = ladder_ops(n_atoms)
        n_tot = sp.diags(excitation_numbers(n_atoms).astype(complex), format="csr")
        keys, mats = [("ha",)], [commutator(n_tot)]
        for j in range(n_atoms):
            for k in range(j + 1, n_atoms):
                keys.append(("hop", j, k))
                mats.append(commutator(raise_[j] @ lower[k] + raise_[k] @ lower[j]))
        for j in range(n_atoms):
            for k in range(n_atoms):
                keys.append(("up", j, k))
                mats.append(lindblad_term(raise_[j], raise_[k]))
                keys.append(("down", j, k))
                mats.append(lindblad_term(lower[j], lower[k]))
        self.keys = keys
        self.index = {key: i for i, key in enumerate(keys)}
        self._mats = mats

    @cached_property
    def full(self) -> _Stack:
        d2 = self.dim**2
        return _Stack(self._mats, (d2, d2))

    @cached_property
    def sector(self) -> _Stack:
        idx = sector_indices(self.n_atoms)
        m = len(idx)
        return _Stack([mat[idx][:, idx] for mat in self._mats], (m, m))

    def coefficients(self, terms: dict) -> np.ndarray:
        vec = np.zeros(len(self.keys), dtype=complex)
        for key, value in terms.items():
            vec[self.index[key]] += value
        return vec


@lru_cache(maxsize=None)
def operator_basis(n_atoms: int) -> OperatorBasis:
    return OperatorBasis(n_atoms)


def _check_tables(config: ChainConfig, tables: CouplingTables | None) -> CouplingTables:
    if tables is None:
        return build_coupling_tables(config)
    if tables.n_atoms != config.n_atoms:
        raise ValueError("coupling tables do not match the chain size")
    return tables


def generator_terms(
    config: ChainConfig,
    tables: CouplingTables | None = None,
    include=TERMS,
) -> dict:
    """Coefficients of every building block for the requested generator terms.

    ``("ha",)`` is always present when ``"hamiltonian"`` is requested; its
    coefficient is omega/gamma0.
    """
    tables = _check_tables(config, tables)
    unknown = set(include) - TERMS
    if unknown:
        raise ValueError(f"unknown generator terms: {sorted(unknown)}")
    n = config.n_atoms
    nth = tables.n_th
    lam = tables.lambda_rel
    gam = tables.gamma_rel
    terms: dict = {}

    def add(key, value):
        terms[key] = terms.get(key, 0.0) + value

    if "hamiltonian" in include:
        add(("ha",), config.emitter.omega / tables.gamma0)
        for j in range(n):
            for k in range(j + 1, n):
                add(("hop", j, k), lam[j, k])
    if "local" in include:
        for j in range(n):
            add(("up", j, j), nth)
            add(("down", j, j), 1.0 + nth)
    if "nonlocal" in include:
        for j in range(n):
            for k in range(n):
                if j != k:
                    add(("up", j, k), nth * gam[j, k])
                    add(("down", j, k), (1.0 + nth) * gam[j, k])
    if "pump" in include and config.gamma_in > 0:
        add(("up", config.pump_site, config.pump_site), config.gamma_in / tables.gamma0)
    if "extract" in include and config.gamma_out > 0:
        e = config.extract_site
        add(("down", e, e), config.gamma_out / tables.gamma0)
    return terms


@dataclass(frozen=True, eq=False)
class Liouvillian:
    """Sparse generator acting on column-major vec(rho), in units of gamma0.

    ``matrix`` keeps the free atomic Hamiltonian explicitly (its entries are of
    order omega/gamma0). ``rotating`` drops it, which is exact in the frame
    rotating at omega because every other term commutes with it; ``sector`` is
    the zero-charge block, identical in both frames.
    """

    n_atoms: int
    omega_rel: float
    terms: dict
    includes: frozenset
    config_hash: str = ""

    @property
    def dim(self) -> int:
        return 2**self.n_atoms

    @property
    def basis(self) -> OperatorBasis:
        return operator_basis(self.n_atoms)

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        return self.basis.full.combine(self.basis.coefficients(self.terms))

    @cached_property
    def rotating(self) -> sp.csr_matrix:
        terms = {k: v for k, v in self.terms.items() if k != ("ha",)}
        return self.basis.full.combine(self.basis.coefficients(terms))

    @cached_property
    def sector(self) -> sp.csr_matrix:
        terms = {k: v for k, v in self.terms.items() if k != ("ha",)}
        return self.basis.sector.combine(self.basis.coefficients(terms))

    @property
    def sector_indices(self) -> np.ndarray:
        return sector_indices(self.n_atoms)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        """Right-hand side of the master equation for a dense matrix ``rho``."""
        vec = np.asarray(rho, dtype=complex).reshape(-1, order="F")
        return (self.matrix @ vec).reshape(self.dim, self.dim, order="F")

    def dump_triplets(self, path, which: str = "matrix") -> Path:
        """Write the nonzeros as ``row col re im`` lines (0-based indices)."""
        mat = getattr(self, which).tocoo()
        path = Path(path)
        with path.open("w") as fh:
            fh.write(f"# {mat.shape[0]} {mat.shape[1]} {mat.nnz} column-major vec, units of gamma0\n")
            for r, c, v in zip(mat.row, mat.col, mat.data):
                fh.write(f"{r} {c} {v.real:.17g} {v.imag:.17g}\n")
        return path


def _superop(config, tables, include) -> sp.csr_matrix:
    basis = operator_basis(config.n_atoms)
    return basis.full.combine(basis.coefficients(generator_terms(config, tables, include)))


def build_hamiltonian(config: ChainConfig, tables: CouplingTables | None = None) -> sp.csr_matrix:
    """System Hamiltonian H_a + H_Lambda (hbar = 1, units of gamma0)."""
    tables = _check_tables(config, tables)
    lower, raise_ = ladder_ops(config.n_atoms)
    n_tot = sp.diags(excitation_numbers(config.n_atoms).astype(complex), format="csr")
    h = (config.emitter.omega / tables.gamma0) * n_tot
    lam = tables.lambda_rel
    for j in range(config.n_atoms):
        for k in range(j + 1, config.n_atoms):
            h = h + lam[j, k] * (raise_[j] @ lower[k] + raise_[k] @ lower[j])
    return h.tocsr()


def build_dissipator_local(config: ChainConfig, tables: CouplingTables | None = None) -> sp.csr_matrix:
    return _superop(config, tables, {"local"})


def build_dissipator_nonlocal(config: ChainConfig, tables: CouplingTables | None = None) -> sp.csr_matrix:
    return _superop(config, tables, {"nonlocal"})


def build_dissipator_pump(config: ChainConfig) -> sp.csr_matrix:
    return _superop(config, None, {"pump"})


def build_dissipator_extract(config: ChainConfig) -> sp.csr_matrix:
    return _superop(config, None, {"extract"})


def assemble_liouvillian(
    config: ChainConfig,
    tables: CouplingTables | None = None,
    include_pump: bool = True,
    include=None,
) -> Liouvillian:
    """Full generator; ``include_pump=False`` drops only the pump dissipator."""
    tables = _check_tables(config, tables)
    if include is None:
        include = TERMS if include_pump else TERMS - {"pump"}
    include = frozenset(include)
    return Liouvillian(
        n_atoms=config.n_atoms,
        omega_rel=config.emitter.omega / tables.gamma0,
        terms=generator_terms(config, tables, include),
        includes=include,
        config_hash=config.config_hash(),
    )
