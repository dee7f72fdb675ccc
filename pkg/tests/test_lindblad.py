import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from hypothesis import given
from hypothesis import strategies as st

from atomchain.coupling import ChainConfig, CouplingTables, build_coupling_tables, chain_from_gaps, displaced_chain
from atomchain.lindblad import (
    assemble_liouvillian,
    build_dissipator_extract,
    build_dissipator_local,
    build_dissipator_nonlocal,
    build_dissipator_pump,
    build_hamiltonian,
    excitation_numbers,
    ladder_ops,
    sector_indices,
)
from atomchain.solvers import gibbs_state

import oracles


def vec(rho):
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v, dim):
    return v.reshape(dim, dim, order="F")


def random_chain(seed, n, T=None, pump=True):
    rng = np.random.default_rng(seed)
    gaps = rng.uniform(0.05e-6, 2e-6, size=n - 1)
    T = T if T is not None else float(rng.uniform(10, 1000))
    return chain_from_gaps(gaps, bath_T=T, gamma_in_rel=1e-3 if pump else 0.0, gamma_out_rel=1e2 if pump else 0.0)


# ---------------------------------------------------------------- operators


def test_single_atom_lowering():
    lower, raise_ = ladder_ops(1)
    np.testing.assert_array_equal(lower[0].toarray(), [[0, 1], [0, 0]])
    np.testing.assert_array_equal(raise_[0].toarray(), [[0, 0], [1, 0]])


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_ladder_algebra(n):
    lower, raise_ = ladder_ops(n)
    eye = sp.identity(2**n).toarray()
    for j in range(n):
        np.testing.assert_array_equal((lower[j] @ raise_[j] + raise_[j] @ lower[j]).toarray(), eye)
        assert (raise_[j] @ raise_[j]).nnz == 0
        for k in range(n):
            if k != j:
                comm = lower[j] @ lower[k] - lower[k] @ lower[j]
                assert abs(comm).max() == 0 if comm.nnz else True
                comm = lower[j] @ raise_[k] - raise_[k] @ lower[j]
                assert comm.nnz == 0 or abs(comm).max() == 0


@pytest.mark.parametrize("n", [0, 11])
def test_ladder_range(n):
    with pytest.raises(ValueError):
        ladder_ops(n)


def test_basis_ordering_matches_kron():
    lower, _ = ladder_ops(3)
    for j in range(3):
        np.testing.assert_array_equal(lower[j].toarray(), oracles.site_op(np.array([[0, 1], [0, 0]]), j, 3))


# ---------------------------------------------------------------- hamiltonian


def test_hamiltonian_without_coupling_is_diagonal():
    cfg = chain_from_gaps([1e-1])  # 10 cm apart: Lambda negligible
    h = build_hamiltonian(cfg).toarray()
    t = build_coupling_tables(cfg)
    off = h - np.diag(np.diagonal(h))
    assert np.abs(off).max() <= abs(t.lambda_rel[0, 1]) + 1e-300
    np.testing.assert_allclose(np.diagonal(h).real, excitation_numbers(2) * cfg.emitter.omega / t.gamma0)


def test_two_atom_single_excitation_splitting():
    cfg = chain_from_gaps([0.2e-6])
    t = build_coupling_tables(cfg)
    h = build_hamiltonian(cfg).toarray()
    block = h[np.ix_([1, 2], [1, 2])]
    w = cfg.emitter.omega / t.gamma0
    lam = t.lambda_rel[0, 1]
    # subtract the large diagonal before diagonalising to keep digits
    ev = np.linalg.eigvalsh(block - w * np.eye(2))
    np.testing.assert_allclose(sorted(ev), sorted([-lam, lam]), rtol=1e-12)


@given(st.integers(0, 10_000), st.integers(2, 5))
def test_hamiltonian_conserves_excitations(seed, n):
    cfg = random_chain(seed, n)
    h = build_hamiltonian(cfg)
    ntot = sp.diags(excitation_numbers(n).astype(float))
    assert abs(h @ ntot - ntot @ h).max() == 0.0 if (h @ ntot - ntot @ h).nnz else True


# ---------------------------------------------------------------- dissipators


def test_dissipator_pieces_vanish_when_rates_vanish():
    cfg = chain_from_gaps([0.2e-6, 0.3e-6], gamma_in_rel=0.0, gamma_out_rel=0.0)
    # the shared sparsity pattern may keep explicit zeros
    assert abs(build_dissipator_pump(cfg)).max() == 0
    assert abs(build_dissipator_extract(cfg)).max() == 0
    real = build_coupling_tables(cfg)
    local_only = CouplingTables(real.gamma0, real.n_th, real.lambda_, np.diag(np.diagonal(real.gamma_pair)))
    assert abs(build_dissipator_nonlocal(cfg, local_only)).max() == 0


@pytest.mark.parametrize(
    "builder", [build_dissipator_local, build_dissipator_nonlocal, build_dissipator_pump, build_dissipator_extract]
)
def test_each_dissipator_is_trace_preserving(builder, rng):
    cfg = random_chain(3, 3)
    d = builder(cfg)
    for _ in range(3):
        rho = oracles.random_density(3, rng)
        out = unvec(d @ vec(rho), 8)
        assert abs(np.trace(out)) < 1e-12


def test_contact_pair_singlet_is_dark_at_zero_temperature():
    # contact limit gamma_12 = gamma0, imposed on the tables; n = 0 at 1 K
    cfg = chain_from_gaps([1e-9], bath_T=1.0, gamma_in_rel=0.0, gamma_out_rel=0.0)
    real = build_coupling_tables(cfg)
    assert real.gamma_rel[0, 1] == pytest.approx(1.0, abs=1e-7)
    t = CouplingTables(gamma0=real.gamma0, n_th=0.0, lambda_=np.zeros((2, 2)), gamma_pair=np.full((2, 2), real.gamma0))
    d = build_dissipator_local(cfg, t) + build_dissipator_nonlocal(cfg, t)
    singlet = np.zeros(4, dtype=complex)
    singlet[1], singlet[2] = 1 / np.sqrt(2), -1 / np.sqrt(2)
    rho = np.outer(singlet, singlet.conj())
    out = unvec(d @ vec(rho), 4)
    assert np.abs(out).max() < 1e-14
    triplet = np.zeros(4, dtype=complex)
    triplet[1] = triplet[2] = 1 / np.sqrt(2)
    out_t = unvec(d @ vec(np.outer(triplet, triplet)), 4)
    # the symmetric state decays at twice the single-atom rate
    assert out_t[0, 0].real == pytest.approx(2.0, rel=1e-14)


def test_single_atom_detailed_balance_population():
    cfg = ChainConfig(positions=(0.0,), bath_T=300.0)
    d = build_dissipator_local(cfg).toarray()
    n = cfg.n_th
    p = n / (1 + 2 * n)
    rho = np.diag([1 - p, p]).astype(complex)
    assert np.abs(d @ vec(rho)).max() < 1e-15


def test_ground_state_stationary_at_zero_temperature():
    cfg = ChainConfig(positions=(0.0, 0.3e-6), bath_T=1.0)
    assert cfg.n_th == 0.0
    d = build_dissipator_local(cfg) + build_dissipator_nonlocal(cfg)
    rho = np.zeros((4, 4), dtype=complex)
    rho[0, 0] = 1.0
    assert np.abs(d @ vec(rho)).max() == 0.0


# ---------------------------------------------------------------- assembled generator


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_sparse_matches_dense_transcription(n, seed, rng):
    cfg = random_chain(seed, n) if n > 1 else ChainConfig(positions=(0.0,), bath_T=400.0, gamma_in=1.0, gamma_out=2.0)
    t = build_coupling_tables(cfg)
    L = assemble_liouvillian(cfg, t)
    args = dict(
        lam=t.lambda_rel,
        gam=t.gamma_rel,
        nth=t.n_th,
        g_in=cfg.gamma_in_rel,
        g_out=cfg.gamma_out_rel,
        p=cfg.pump_site,
        e=cfg.extract_site,
    )
    for _ in range(3):
        rho = oracles.random_density(n, rng)
        # full generator, with the free Hamiltonian of order 1e13
        ref = oracles.dense_rhs(rho, cfg.emitter.omega / t.gamma0, **args)
        got = L.apply(rho)
        assert np.abs(got - ref).max() <= 1e-12 * np.abs(ref).max()
        # rotating frame isolates the dissipators and the dipole coupling
        ref = oracles.dense_rhs(rho, 0.0, **args)
        got = unvec(L.rotating @ vec(rho), 2**n)
        assert np.abs(got - ref).max() <= 1e-12 * np.abs(ref).max()


def test_liouvillian_dimension_and_metadata():
    cfg = displaced_chain(4)
    L = assemble_liouvillian(cfg)
    assert L.matrix.shape == (256, 256)
    assert L.config_hash == cfg.config_hash()
    assert "pump" in L.includes
    assert "pump" not in assemble_liouvillian(cfg, include_pump=False).includes


@given(st.integers(0, 10_000), st.integers(1, 4), st.booleans())
def test_trace_preservation(seed, n, pump):
    cfg = random_chain(seed, n, pump=pump) if n > 1 else ChainConfig(positions=(0.0,), gamma_in=1.0, gamma_out=1.0)
    L = assemble_liouvillian(cfg)
    ident = vec(np.eye(2**n))
    left = L.matrix.conj().T @ ident
    assert np.abs(left).max() <= 1e-10 * spla.norm(L.matrix, np.inf)
    assert np.abs(L.rotating.conj().T @ ident).max() <= 1e-12 * spla.norm(L.rotating, np.inf)


@given(st.integers(0, 10_000), st.integers(2, 3))
def test_hermiticity_preservation(seed, n):
    rng = np.random.default_rng(seed)
    L = assemble_liouvillian(random_chain(seed, n))
    rho = oracles.random_density(n, rng)
    out = L.apply(rho)
    assert np.abs(out - out.conj().T).max() <= 1e-12 * np.abs(out).max()


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_gibbs_state_is_stationary(n):
    cfg = random_chain(7, n, pump=False) if n > 1 else ChainConfig(positions=(0.0,), bath_T=500.0)
    L = assemble_liouvillian(cfg)
    v = vec(gibbs_state(cfg))
    assert np.linalg.norm(L.matrix @ v) <= 1e-10 * spla.norm(L.matrix, np.inf) * np.linalg.norm(v)
    assert np.linalg.norm(L.rotating @ v) <= 1e-14 * np.linalg.norm(v)


def test_sector_is_closed_block():
    L = assemble_liouvillian(displaced_chain(3))
    idx = sector_indices(3)
    full = L.rotating.tocsr()
    mask = np.zeros(64, dtype=bool)
    mask[idx] = True
    assert abs(full[idx][:, ~mask]).max() == 0 if full[idx][:, ~mask].nnz else True
    np.testing.assert_allclose(full[idx][:, idx].toarray(), L.sector.toarray())


def test_triplet_dump(tmp_path):
    L = assemble_liouvillian(displaced_chain(2, d=0.3e-6))
    path = L.dump_triplets(tmp_path / "L.txt", which="rotating")
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# 16 16")
    m = np.zeros((16, 16), dtype=complex)
    for line in lines[1:]:
        r, c, re, im = line.split()
        m[int(r), int(c)] = float(re) + 1j * float(im)
    np.testing.assert_array_equal(m, L.rotating.toarray())
