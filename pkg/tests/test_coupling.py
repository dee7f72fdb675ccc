import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from atomchain.constants import CODATA_2018, SEPARATION_FLOOR
from atomchain.coupling import (
    ChainConfig,
    EmitterParams,
    SingularGeometryError,
    alpha_parallel,
    alpha_perpendicular,
    build_coupling_tables,
    chain_from_gaps,
    displaced_chain,
    gamma0,
    gamma_jk,
    lambda_jk,
    thermal_occupation,
)

import oracles

EM = EmitterParams()
R_PERP = np.array([0.1e-6, 0.0, 0.0])  # along x, dipole along z


def test_constants_table_is_codata_2018():
    assert CODATA_2018 == {
        "hbar": 1.054571817e-34,
        "c": 299792458.0,
        "epsilon_0": 8.8541878128e-12,
        "k_B": 1.380649e-23,
    }


def test_gamma0_matches_extended_precision():
    ref = float(oracles.gamma0(1e14, 1e-30))
    assert gamma0(EM) == pytest.approx(ref, rel=1e-14)
    assert ref == pytest.approx(4.21, abs=0.01)


def test_gamma0_scaling_laws():
    g = gamma0(EM)
    assert gamma0(EmitterParams(omega=2e14)) / g == pytest.approx(8.0, rel=1e-14)
    assert gamma0(EmitterParams(mu_mag=2e-30)) / g == pytest.approx(4.0, rel=1e-14)


def test_thermal_occupation_values():
    assert thermal_occupation(1e14, 300.0) == pytest.approx(float(oracles.n_thermal(1e14, 300)), rel=1e-13)
    assert thermal_occupation(1e14, 300.0) == pytest.approx(0.0850, abs=5e-4)
    assert thermal_occupation(1e14, 361.0) == pytest.approx(float(oracles.n_thermal(1e14, 361)), rel=1e-13)
    assert thermal_occupation(1e14, 0.01) == 0.0


@pytest.mark.parametrize("T", [0.0, -5.0])
def test_thermal_occupation_rejects_nonpositive_temperature(T):
    with pytest.raises(ValueError):
        thermal_occupation(1e14, T)


def test_lambda_perpendicular_matches_oracle():
    x = oracles.reduced_distance(1e14, 0.1e-6)
    assert float(x) == pytest.approx(1 / 29.979, rel=1e-4)
    ref = -mp.mpf(3) / 4 * oracles.gamma0(1e14, 1e-30) * oracles.g(x)
    assert lambda_jk(EM, R_PERP) == pytest.approx(float(ref), rel=1e-12)


def test_gamma_perpendicular_matches_oracle():
    x = oracles.reduced_distance(1e14, 0.1e-6)
    ref = oracles.gamma0(1e14, 1e-30) * oracles.alpha_perp(x)
    assert gamma_jk(EM, R_PERP) == pytest.approx(float(ref), rel=1e-12)


def test_lambda_parallel_dipole_matches_oracle():
    em = EmitterParams(mu_hat=(1.0, 0.0, 0.0))
    x = oracles.reduced_distance(1e14, 2e-6)
    ref = -mp.mpf(3) / 4 * oracles.gamma0(1e14, 1e-30) * 2 * oracles.f(x)
    assert lambda_jk(em, (2e-6, 0, 0)) == pytest.approx(float(ref), rel=1e-12)


@given(st.floats(1e-4, 50.0))
def test_alpha_factors_match_oracle(x):
    assert float(alpha_parallel(x)) == pytest.approx(float(oracles.alpha_par(x)), rel=1e-12, abs=1e-14)
    assert float(alpha_perpendicular(x)) == pytest.approx(float(oracles.alpha_perp(x)), rel=1e-12, abs=1e-14)


def test_alpha_contact_limit():
    assert float(alpha_parallel(0.0)) == 1.0
    assert float(alpha_perpendicular(0.0)) == 1.0
    assert gamma_jk(EM, (0.0, 0.0, 0.0)) == pytest.approx(gamma0(EM), rel=1e-15)


def test_gamma_small_distance_is_quadratic():
    g0 = gamma0(EM)
    xs = np.geomspace(1e-5, 1e-2, 20)
    devs = []
    for x in xs:
        r = x * 299792458.0 / EM.omega
        devs.append(abs(gamma_jk(EM, (r, 0, 0)) / g0 - 1.0) / x**2)
    assert max(devs) < 1.0


def test_lambda_cubic_divergence():
    vals = []
    for x in (1e-2, 1e-3, 3.5e-4):
        r = x * 299792458.0 / EM.omega
        vals.append(lambda_jk(EM, (r, 0, 0)) / gamma0(EM) * x**3)
    # -(3/4) g(x) x^3 -> 3/4
    assert vals[-1] == pytest.approx(0.75, rel=1e-6)
    assert vals[0] == pytest.approx(0.75, rel=1e-3)


@given(st.floats(1e-3, 100.0))
def test_pair_rate_bounded(x):
    r = x * 299792458.0 / EM.omega
    for mu_hat in ((0, 0, 1.0), (1.0, 0, 0), (0.6, 0.0, 0.8)):
        g = gamma_jk(EmitterParams(mu_hat=mu_hat), (r, 0, 0)) / gamma0(EM)
        assert -1.0 <= g <= 1.0


def test_decay_at_large_distance():
    # transverse coefficients fall off as 1/x in the far zone
    g0 = gamma0(EM)
    for r in (1e-3, 1e-2, 1e-1):
        x = EM.omega * r / 299792458.0
        assert abs(lambda_jk(EM, (r, 0, 0))) <= 1.5 * g0 / x
        assert abs(gamma_jk(EM, (r, 0, 0))) <= 1.5 * g0 / x


def _rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    return q * np.sign(np.diag(r))


@given(st.integers(0, 10_000), st.floats(0.05e-6, 5e-6))
def test_rigid_rotation_invariance(seed, dist):
    rng = np.random.default_rng(seed)
    mu = rng.normal(size=3)
    mu /= np.linalg.norm(mu)
    r = rng.normal(size=3)
    r *= dist / np.linalg.norm(r)
    rot = _rotation(rng)
    a = EmitterParams(mu_hat=tuple(mu))
    mu_rot = rot @ mu
    b = EmitterParams(mu_hat=tuple(mu_rot / np.linalg.norm(mu_rot)))
    assert lambda_jk(b, rot @ r) == pytest.approx(lambda_jk(a, r), rel=1e-9)
    assert gamma_jk(b, rot @ r) == pytest.approx(gamma_jk(a, r), rel=1e-9, abs=1e-12)


def test_swap_symmetry():
    assert lambda_jk(EM, R_PERP) == lambda_jk(EM, -R_PERP)
    assert gamma_jk(EM, R_PERP) == gamma_jk(EM, -R_PERP)


def test_separation_floor():
    with pytest.raises(SingularGeometryError):
        lambda_jk(EM, (0.5 * SEPARATION_FLOOR, 0, 0))
    with pytest.raises(SingularGeometryError):
        ChainConfig(positions=(0.0, 0.5e-9))


@pytest.mark.parametrize(
    "kwargs",
    [
        {"positions": (0.0, 1e-7, 0.5e-7)},
        {"positions": (0.0, 1e-7), "bath_T": 0.0},
        {"positions": (0.0, 1e-7), "gamma_in": -1.0},
        {"positions": (0.0, 1e-7), "extract_site": 5},
    ],
)
def test_chain_validation(kwargs):
    with pytest.raises(ValueError):
        ChainConfig(**kwargs)


@pytest.mark.parametrize("kwargs", [{"omega": 0.0}, {"mu_mag": -1.0}, {"mu_hat": (1.0, 1.0, 0.0)}])
def test_emitter_validation(kwargs):
    with pytest.raises(ValueError):
        EmitterParams(**kwargs)


def test_two_atom_tables_match_pair_functions():
    cfg = chain_from_gaps([0.3e-6])
    t = build_coupling_tables(cfg)
    assert t.lambda_[0, 1] == lambda_jk(EM, (-0.3e-6, 0, 0))
    assert t.gamma_pair[0, 1] == gamma_jk(EM, (-0.3e-6, 0, 0))


def test_regular_chain_tables_are_toeplitz():
    t = build_coupling_tables(displaced_chain(4))
    lam, gam = t.lambda_, t.gamma_pair
    for m in (lam, gam):
        np.testing.assert_array_equal(m, m.T)
        for k in range(4):
            diag = np.diagonal(m, k)
            np.testing.assert_allclose(diag, diag[0], rtol=1e-9)
    np.testing.assert_array_equal(np.diagonal(gam), gamma0(EM))
    np.testing.assert_array_equal(np.diagonal(lam), 0.0)
    assert np.all(np.abs(gam[~np.eye(4, dtype=bool)]) <= gamma0(EM))


def test_config_hash_and_roundtrip():
    cfg = displaced_chain(4, d=1.03e-6, bath_T=361.0)
    again = ChainConfig.from_dict(cfg.to_dict())
    assert again == cfg
    assert again.config_hash() == cfg.config_hash()
    assert cfg.replace(bath_T=300.0).config_hash() != cfg.config_hash()
    assert math.isclose(cfg.gamma_in_rel, 1e-3) and math.isclose(cfg.gamma_out_rel, 1e2)
