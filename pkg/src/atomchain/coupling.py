"""Chain geometry and field-mediated coupling coefficients.

All rates returned by the public functions are in s^-1. The Lindblad engine
works in units of the vacuum decay rate ``gamma0``; use
:attr:`CouplingTables.lambda_rel` and :attr:`CouplingTables.gamma_rel` for that.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .constants import C, EPSILON_0, HBAR, K_B, SEPARATION_FLOOR

# Below this reduced distance the closed forms of the pair decay factors lose
# digits to cancellation; a Taylor series is used instead.
_SERIES_CUTOFF = 0.5
_SERIES_TERMS = 14


class SingularGeometryError(ValueError):
    """Two atoms are closer than the separation floor."""


@dataclass(frozen=True)
class EmitterParams:
    omega: float = 1e14
    mu_mag: float = 1e-30
    mu_hat: tuple[float, float, float] = (0.0, 0.0, 1.0)

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        if not self.mu_mag > 0:
            raise ValueError(f"mu_mag must be positive, got {self.mu_mag}")
        mu_hat = tuple(float(v) for v in self.mu_hat)
        if len(mu_hat) != 3:
            raise ValueError("mu_hat must be a 3-vector")
        if abs(math.sqrt(sum(v * v for v in mu_hat)) - 1.0) > 1e-12:
            raise ValueError(f"mu_hat must be a unit vector, got {mu_hat}")
        object.__setattr__(self, "mu_hat", mu_hat)


@dataclass(frozen=True)
class ChainConfig:
    """A linear chain of identical two-level emitters along the x axis.

    ``gamma_in`` and ``gamma_out`` are in s^-1. ``extract_site`` defaults to
    the last atom.
    """

    positions: tuple[float, ...]
    emitter: EmitterParams = field(default_factory=EmitterParams)
    bath_T: float = 300.0
    gamma_in: float = 0.0
    gamma_out: float = 0.0
    pump_site: int = 0
    extract_site: int | None = None

    def __post_init__(self):
        pos = tuple(float(x) for x in self.positions)
        object.__setattr__(self, "positions", pos)
        if len(pos) < 1:
            raise ValueError("chain needs at least one atom")
        gaps = np.diff(pos)
        if np.any(gaps <= 0):
            raise ValueError(f"positions must be strictly increasing, got {pos}")
        if len(gaps) and gaps.min() < SEPARATION_FLOOR:
            raise SingularGeometryError(
                f"separation {gaps.min():.3e} m below floor {SEPARATION_FLOOR:.0e} m"
            )
        if not self.bath_T > 0:
            raise ValueError(f"bath_T must be positive, got {self.bath_T}")
        if self.gamma_in < 0 or self.gamma_out < 0:
            raise ValueError("pump and extraction rates must be non-negative")
        n = len(pos)
        if self.extract_site is None:
            object.__setattr__(self, "extract_site", n - 1)
        for name in ("pump_site", "extract_site"):
            idx = getattr(self, name)
            if not 0 <= idx < n:
                raise ValueError(f"{name}={idx} out of range for {n} atoms")

    @property
    def n_atoms(self) -> int:
        return len(self.positions)

    @property
    def gaps(self) -> np.ndarray:
        return np.diff(self.positions)

    @property
    def gamma0(self) -> float:
        return gamma0(self.emitter)

    @property
    def gamma_in_rel(self) -> float:
        return self.gamma_in / self.gamma0

    @property
    def gamma_out_rel(self) -> float:
        return self.gamma_out / self.gamma0

    @property
    def n_th(self) -> float:
        return thermal_occupation(self.emitter.omega, self.bath_T)

    def replace(self, **changes) -> "ChainConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["positions"] = list(self.positions)
        d["emitter"]["mu_hat"] = list(self.emitter.mu_hat)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ChainConfig":
        d = dict(d)
        d["emitter"] = EmitterParams(**d.get("emitter", {}))
        return cls(**d)

    def config_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()


def chain_from_gaps(
    gaps: Sequence[float],
    emitter: EmitterParams | None = None,
    bath_T: float = 300.0,
    gamma_in_rel: float = 1e-3,
    gamma_out_rel: float = 1e2,
) -> ChainConfig:
    """Build a chain from successive inter-atomic distances (m).

    Pump and extraction rates are given in units of the vacuum decay rate.
    """
    emitter = emitter or EmitterParams()
    positions = np.concatenate([[0.0], np.cumsum(gaps)])
    g0 = gamma0(emitter)
    return ChainConfig(
        positions=tuple(positions),
        emitter=emitter,
        bath_T=bath_T,
        gamma_in=gamma_in_rel * g0,
        gamma_out=gamma_out_rel * g0,
    )


def displaced_chain(
    n_atoms: int = 4,
    d: float = 0.1e-6,
    a: float = 0.1e-6,
    **kwargs,
) -> ChainConfig:
    """Regular chain of spacing ``a`` whose last atom sits at distance ``d``
    from its neighbour."""
    if n_atoms < 2:
        raise ValueError("displaced chain needs at least two atoms")
    return chain_from_gaps([a] * (n_atoms - 2) + [d], **kwargs)


def gamma0(emitter: EmitterParams) -> float:
    """Vacuum spontaneous-emission rate |mu|^2 omega^3 / (3 pi eps0 hbar c^3)."""
    return emitter.mu_mag**2 * emitter.omega**3 / (3.0 * math.pi * EPSILON_0 * HBAR * C**3)


def thermal_occupation(omega: float, T: float) -> float:
    """Bose-Einstein occupation of the bath mode at ``omega``."""
    if not T > 0:
        raise ValueError(f"temperature must be positive, got {T}")
    if not omega > 0:
        raise ValueError(f"omega must be positive, got {omega}")
    x = HBAR * omega / (K_B * T)
    if x > 700:
        return 0.0
    return 1.0 / math.expm1(x)


def _f(x):
    return (np.cos(x) + x * np.sin(x)) / x**3


def _g(x):
    return ((x * x - 1.0) * np.cos(x) - x * np.sin(x)) / x**3


def _series(x, coeff):
    x2 = x * x
    total = 0.0
    term = 1.0
    for k in range(_SERIES_TERMS):
        total = total + coeff(k) * term
        term = term * x2
    return total


def alpha_parallel(x):
    """Pair decay factor for the dipole component along the pair axis.

    Equal to 3 (sin x - x cos x) / x^3, with limit 1 at x = 0.
    """
    x = np.asarray(x, dtype=float)
    small = x < _SERIES_CUTOFF
    xs = np.where(small, x, 1.0)
    xl = np.where(small, 1.0, x)
    # 3 * sum_{k>=0} (-1)^k (2k+2) x^{2k} / (2k+3)!
    series = 3.0 * _series(xs, lambda k: (-1) ** k * (2 * k + 2) / math.factorial(2 * k + 3))
    closed = 3.0 * (np.sin(xl) - xl * np.cos(xl)) / xl**3
    out = np.where(small, series, closed)
    return out[()] if out.ndim == 0 else out


def alpha_perpendicular(x):
    """Pair decay factor for a dipole component transverse to the pair axis.

    Equal to 3 (x cos x + (x^2 - 1) sin x) / (2 x^3), with limit 1 at x = 0.
    """
    x = np.asarray(x, dtype=float)
    small = x < _SERIES_CUTOFF
    xs = np.where(small, x, 1.0)
    xl = np.where(small, 1.0, x)
    # (3/2) [sin x / x - (sin x - x cos x) / x^3] expanded term by term
    series = 1.5 * _series(
        xs,
        lambda k: (-1) ** k * (1.0 / math.factorial(2 * k + 1) - (2 * k + 2) / math.factorial(2 * k + 3)),
    )
    closed = 1.5 * (xl * np.cos(xl) + (xl * xl - 1.0) * np.sin(xl)) / xl**3
    out = np.where(small, series, closed)
    return out[()] if out.ndim == 0 else out


def _reduced(emitter: EmitterParams, r_vec) -> tuple[float, float]:
    r_vec = np.asarray(r_vec, dtype=float)
    if r_vec.shape != (3,):
        raise ValueError("displacement must be a 3-vector")
    r = float(np.linalg.norm(r_vec))
    if r == 0.0:
        return 0.0, 0.0
    cos2 = float(np.dot(emitter.mu_hat, r_vec / r)) ** 2
    return emitter.omega * r / C, min(cos2, 1.0)


def lambda_jk(emitter: EmitterParams, r_vec) -> float:
    """Dipole-dipole energy shift (s^-1) between two atoms separated by ``r_vec`` (m)."""
    r = float(np.linalg.norm(np.asarray(r_vec, dtype=float)))
    if r < SEPARATION_FLOOR:
        raise SingularGeometryError(f"separation {r:.3e} m below floor {SEPARATION_FLOOR:.0e} m")
    x, cos2 = _reduced(emitter, r_vec)
    return float(-0.75 * gamma0(emitter) * (2.0 * cos2 * _f(x) + (1.0 - cos2) * _g(x)))


def gamma_jk(emitter: EmitterParams, r_vec) -> float:
    """Collective decay rate (s^-1) of an atom pair separated by ``r_vec`` (m).

    Finite at zero separation, where it equals ``gamma0``.
    """
    x, cos2 = _reduced(emitter, r_vec)
    return float(gamma0(emitter) * (cos2 * alpha_parallel(x) + (1.0 - cos2) * alpha_perpendicular(x)))


@dataclass(frozen=True)
class CouplingTables:
    gamma0: float
    n_th: float
    lambda_: np.ndarray
    gamma_pair: np.ndarray

    @property
    def n_atoms(self) -> int:
        return self.lambda_.shape[0]

    @property
    def lambda_rel(self) -> np.ndarray:
        return self.lambda_ / self.gamma0

    @property
    def gamma_rel(self) -> np.ndarray:
        return self.gamma_pair / self.gamma0


def build_coupling_tables(config: ChainConfig) -> CouplingTables:
    em = config.emitter
    n = config.n_atoms
    lam = np.zeros((n, n))
    gam = np.zeros((n, n))
    g0 = gamma0(em)
    np.fill_diagonal(gam, g0)
    for j in range(n):
        for k in range(j + 1, n):
            r_vec = (config.positions[j] - config.positions[k], 0.0, 0.0)
            lam[j, k] = lam[k, j] = lambda_jk(em, r_vec)
            gam[j, k] = gam[k, j] = gamma_jk(em, r_vec)
    lam.setflags(write=False)
    gam.setflags(write=False)
    return CouplingTables(gamma0=g0, n_th=config.n_th, lambda_=lam, gamma_pair=gam)
