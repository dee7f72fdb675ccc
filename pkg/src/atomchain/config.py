"""TOML run configuration.

A configuration document has four sections, all in SI units::

    [emitter]
    omega = 1e14            # transition frequency, rad/s
    mu_mag = 1e-30          # dipole magnitude, C m
    mu_hat = [0.0, 0.0, 1.0]

    [bath]
    T = 361.0               # required, K

    [drive]
    gamma_in_rel = 1e-3     # pump rate in units of gamma0 (or gamma_in in s^-1)
    gamma_out_rel = 1e2     # extraction rate in units of gamma0 (or gamma_out in s^-1)
    pump_site = 0
    extract_site = 3        # defaults to the last atom

    [geometry]              # exactly one of: positions, gaps, or n_atoms (+ a, d)
    n_atoms = 4
    a = 1e-7                # regular spacing, m
    d = 1.03e-6             # distance between the last two atoms, m

``emitter`` and ``drive`` may be omitted; their defaults are the values
shown. Further sections (``sweep``, ``ga``, ``dynamics``) are read by the
matching subcommands.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import tomli
import tomli_w

from .coupling import ChainConfig, EmitterParams, gamma0

DEFAULT_EMITTER = {"omega": 1e14, "mu_mag": 1e-30, "mu_hat": [0.0, 0.0, 1.0]}
DEFAULT_DRIVE = {"gamma_in_rel": 1e-3, "gamma_out_rel": 1e2}


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def load_document(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read file ({exc.strerror})") from exc
    try:
        return tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        # the decoder message carries the line and column
        raise ConfigError(str(path), f"parse error: {exc}") from exc


def _section(doc: dict, name: str, required: bool = False) -> dict:
    sec = doc.get(name)
    if sec is None:
        if required:
            raise ConfigError(name, "missing required section")
        return {}
    if not isinstance(sec, dict):
        raise ConfigError(name, "must be a table")
    return sec


def _number(sec: dict, section: str, key: str, default=None, required: bool = False) -> float | None:
    if key not in sec:
        if required:
            raise ConfigError(f"{section}.{key}", "missing required field")
        return default
    value = sec[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{section}.{key}", f"expected a number, got {value!r}")
    return float(value)


def _int(sec: dict, section: str, key: str, default=None, required: bool = False) -> int | None:
    if key not in sec:
        if required:
            raise ConfigError(f"{section}.{key}", "missing required field")
        return default
    value = sec[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{section}.{key}", f"expected an integer, got {value!r}")
    return value


def _emitter(doc: dict) -> EmitterParams:
    sec = {**DEFAULT_EMITTER, **_section(doc, "emitter")}
    mu_hat = sec["mu_hat"]
    if not isinstance(mu_hat, list) or len(mu_hat) != 3:
        raise ConfigError("emitter.mu_hat", "expected a list of three numbers")
    try:
        return EmitterParams(
            omega=_number(sec, "emitter", "omega"),
            mu_mag=_number(sec, "emitter", "mu_mag"),
            mu_hat=tuple(float(v) for v in mu_hat),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError("emitter", str(exc)) from exc


def _positions(doc: dict) -> tuple:
    sec = _section(doc, "geometry", required=True)
    forms = [k for k in ("positions", "gaps", "n_atoms") if k in sec]
    if len(forms) != 1:
        raise ConfigError("geometry", "give exactly one of positions, gaps or n_atoms")
    form = forms[0]
    if form in ("positions", "gaps"):
        vals = sec[form]
        if not isinstance(vals, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals):
            raise ConfigError(f"geometry.{form}", "expected a list of numbers")
        vals = [float(v) for v in vals]
        if form == "positions":
            return tuple(vals)
        return tuple(np.concatenate([[0.0], np.cumsum(vals)]))
    n = _int(sec, "geometry", "n_atoms")
    if n < 2:
        raise ConfigError("geometry.n_atoms", "need at least two atoms")
    a = _number(sec, "geometry", "a", default=0.1e-6)
    d = _number(sec, "geometry", "d", default=a)
    gaps = [a] * (n - 2) + [d]
    return tuple(np.concatenate([[0.0], np.cumsum(gaps)]))


def _rate(sec: dict, name: str, g0: float) -> float:
    absolute = _number(sec, "drive", name)
    relative = _number(sec, "drive", f"{name}_rel")
    if absolute is not None and relative is not None:
        raise ConfigError(f"drive.{name}", f"give either {name} or {name}_rel, not both")
    if absolute is not None:
        return absolute
    if relative is None:
        relative = DEFAULT_DRIVE[f"{name}_rel"]
    return relative * g0


def config_from_document(doc: dict) -> ChainConfig:
    emitter = _emitter(doc)
    bath = _section(doc, "bath")
    T = _number(bath, "bath", "T", required=True)
    drive = _section(doc, "drive")
    g0 = gamma0(emitter)
    positions = _positions(doc)
    extract = _int(drive, "drive", "extract_site")
    pump = _int(drive, "drive", "pump_site", default=0)
    g_in = _rate(drive, "gamma_in", g0)
    g_out = _rate(drive, "gamma_out", g0)
    try:
        return ChainConfig(
            positions=positions,
            emitter=emitter,
            bath_T=T,
            gamma_in=g_in,
            gamma_out=g_out,
            pump_site=pump,
            extract_site=extract,
        )
    except ValueError as exc:
        raise ConfigError("config", str(exc)) from exc


def load_config(path) -> ChainConfig:
    return config_from_document(load_document(path))


def config_to_document(config: ChainConfig) -> dict:
    """Lossless document: absolute positions and rates, so a reload hashes identically."""
    em = config.emitter
    return {
        "emitter": {"omega": em.omega, "mu_mag": em.mu_mag, "mu_hat": list(em.mu_hat)},
        "bath": {"T": config.bath_T},
        "drive": {
            "gamma_in": config.gamma_in,
            "gamma_out": config.gamma_out,
            "pump_site": config.pump_site,
            "extract_site": config.extract_site,
        },
        "geometry": {"positions": list(config.positions)},
    }


def dump_config(config: ChainConfig, path, extra: dict | None = None) -> Path:
    doc = config_to_document(config)
    if extra:
        doc.update(extra)
    path = Path(path)
    path.write_text(tomli_w.dumps(doc))
    return path
