"""Parameter sweeps, efficiency maxima over (d, T) and dynamics bundles.

Sweep axes act on a base :class:`ChainConfig`:

``d``       distance between the last two atoms (m)
``d<j>``    distance between atom j-1 and atom j, atoms counted from 1 (m)
``T``       bath temperature (K)
``omega``   transition frequency (rad/s); pump and extraction rates are
            rescaled so that their ratio to the vacuum decay rate is kept

Results are ordered by grid index regardless of evaluation order. Points
whose solve fails carry an error string instead of numbers.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import math
import sqlite3
import threading
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .coupling import ChainConfig, EmitterParams, build_coupling_tables, gamma0
from .flux import (
    FluxReport,
    TimeResolvedEfficiency,
    delta_from_states,
    efficiency_from_states,
    flux_report,
    site_labels,
    steady_branches,
    time_resolved_efficiency,
)
from .solvers import log_time_grid

OUTPUTS = ("chi", "flux", "delta")
D_LIMITS = (0.1e-6, 3e-6)
T_LIMITS = (10.0, 1000.0)


def code_version() -> str:
    from . import __version__

    return __version__


# --------------------------------------------------------------------------
# axes


def _gap_index(name: str, n_atoms: int) -> int:
    """Index into ``config.gaps`` addressed by an axis name."""
    if name == "d":
        return n_atoms - 2
    j = int(name[1:])
    if not 2 <= j <= n_atoms:
        raise ValueError(f"axis {name!r} does not exist for a {n_atoms}-atom chain")
    return j - 2


def _valid_axis(name: str) -> bool:
    return name in ("d", "T", "omega") or (name.startswith("d") and name[1:].isdigit())


def with_gap(config: ChainConfig, index: int, value: float) -> ChainConfig:
    gaps = np.array(config.gaps)
    gaps[index] = value
    positions = config.positions[0] + np.concatenate([[0.0], np.cumsum(gaps)])
    return config.replace(positions=tuple(positions))


def with_omega(config: ChainConfig, omega: float) -> ChainConfig:
    """Change the frequency keeping pump and extraction rates fixed in units of gamma0."""
    em = EmitterParams(omega=omega, mu_mag=config.emitter.mu_mag, mu_hat=config.emitter.mu_hat)
    scale = gamma0(em) / config.gamma0
    return config.replace(emitter=em, gamma_in=config.gamma_in * scale, gamma_out=config.gamma_out * scale)


def apply_axis(config: ChainConfig, name: str, value: float) -> ChainConfig:
    if name == "T":
        return config.replace(bath_T=float(value))
    if name == "omega":
        return with_omega(config, float(value))
    if _valid_axis(name):
        return with_gap(config, _gap_index(name, config.n_atoms), float(value))
    raise ValueError(f"unknown sweep axis {name!r}")


@dataclass(frozen=True)
class SweepAxis:
    name: str
    values: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if not _valid_axis(self.name):
            raise ValueError(f"unknown sweep axis {self.name!r}")
        if not vals:
            raise ValueError(f"axis {self.name!r} has an empty grid")
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"axis {self.name!r} has non-finite values")


@dataclass(frozen=True)
class SweepSpec:
    base: ChainConfig
    axes: tuple
    outputs: tuple = ("chi",)

    def __post_init__(self):
        axes = tuple(self.axes)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "outputs", tuple(self.outputs))
        if not 1 <= len(axes) <= 2:
            raise ValueError("a sweep has one or two axes")
        names = [a.name for a in axes]
        if len(set(names)) != len(names):
            raise ValueError(f"repeated axis in {names}")
        for a in axes:
            if a.name.startswith("d") and a.name != "d":
                _gap_index(a.name, self.base.n_atoms)
        bad = set(self.outputs) - set(OUTPUTS)
        if bad or "chi" not in self.outputs:
            raise ValueError(f"outputs must include 'chi' and be drawn from {OUTPUTS}")

    @property
    def shape(self) -> tuple:
        return tuple(len(a.values) for a in self.axes)

    def coords(self, idx: tuple) -> dict:
        return {a.name: a.values[i] for a, i in zip(self.axes, idx)}

    def config_at(self, idx: tuple) -> ChainConfig:
        cfg = self.base
        for a, i in zip(self.axes, idx):
            cfg = apply_axis(cfg, a.name, a.values[i])
        return cfg

    def indices(self):
        return itertools.product(*(range(n) for n in self.shape))

    def points(self):
        """(index, coords, config) in row-major grid order."""
        for idx in self.indices():
            yield idx, self.coords(idx), self.config_at(idx)

    def to_dict(self) -> dict:
        return {
            "base": self.base.to_dict(),
            "axes": [{"name": a.name, "values": list(a.values)} for a in self.axes],
            "outputs": list(self.outputs),
        }

    def spec_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()


@dataclass
class SweepRecord:
    index: tuple
    coords: dict
    config_hash: str
    result: dict | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def chi(self) -> float:
        return self.result["efficiency"]["chi"] if self.ok else float("nan")


@dataclass
class SweepResult:
    spec: SweepSpec
    records: list
    provenance: dict = field(default_factory=dict)

    def grid(self, key: str = "chi") -> np.ndarray:
        """Observable ``key`` reshaped to the sweep grid; failed points are nan."""
        out = np.full(self.spec.shape, np.nan)
        for r in self.records:
            if r.ok:
                out[r.index] = _lookup(r.result, key)
        return out

    @property
    def n_failed(self) -> int:
        return sum(not r.ok for r in self.records)

    def argmax(self, key: str = "chi") -> SweepRecord:
        g = self.grid(key)
        if np.all(np.isnan(g)):
            raise RuntimeError("every sweep point failed")
        # records are stored in row-major grid order
        return self.records[int(np.nanargmax(g))]

    def write_csv(self, path, columns: Sequence[str] | None = None, scale: dict | None = None) -> Path:
        """One row per grid point: axis values, then requested observables, then error."""
        path = Path(path)
        names = [a.name for a in self.spec.axes]
        scale = scale or {}
        if columns is None:
            columns = ["chi", "E", "E0", "P"]
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([_axis_header(n, scale) for n in names] + list(columns) + ["error"])
            for r in self.records:
                row = [repr(r.coords[n] / scale.get(n, 1.0)) for n in names]
                row += [repr(_lookup(r.result, c)) if r.ok else "nan" for c in columns]
                row.append(r.error or "")
                w.writerow(row)
        return path


def _axis_header(name: str, scale: dict) -> str:
    if name in scale:
        return f"{name}_um" if name.startswith("d") else f"{name}_scaled"
    return {"T": "T_K", "omega": "omega_rad_s"}.get(name, f"{name}_m")


def _lookup(result: dict, key: str) -> float:
    for section in ("efficiency", "delta", "flux"):
        sub = result.get(section) or {}
        if key in sub:
            return sub[key]
    if key in result:
        return result[key]
    raise KeyError(key)


# --------------------------------------------------------------------------
# cache


class ResultCache:
    """Point results keyed by config hash and requested outputs.

    Kept in memory; with ``path`` also persisted to a SQLite file so that
    figures sharing grid points reuse earlier solves.
    """

    def __init__(self, path=None):
        self._mem: dict[str, dict] = {}
        self._lock = threading.Lock()
        self._db = None
        if path is not None:
            self._db = sqlite3.connect(str(path), check_same_thread=False)
            self._db.execute("CREATE TABLE IF NOT EXISTS points (key TEXT PRIMARY KEY, value TEXT)")
            self._db.commit()

    @staticmethod
    def key(config: ChainConfig, outputs: Iterable[str]) -> str:
        return config.config_hash() + ":" + ",".join(sorted(outputs))

    def get(self, key: str):
        with self._lock:
            if key in self._mem:
                return self._mem[key]
            if self._db is not None:
                row = self._db.execute("SELECT value FROM points WHERE key = ?", (key,)).fetchone()
                if row is not None:
                    value = json.loads(row[0])
                    self._mem[key] = value
                    return value
        return None

    def put(self, key: str, value: dict) -> None:
        with self._lock:
            self._mem[key] = value
            if self._db is not None:
                self._db.execute(
                    "INSERT OR REPLACE INTO points (key, value) VALUES (?, ?)", (key, json.dumps(value))
                )
                self._db.commit()

    def __len__(self) -> int:
        return len(self._mem)

    def close(self) -> None:
        if self._db is not None:
            self._db.close()
            self._db = None


# --------------------------------------------------------------------------
# evaluation


def evaluate_point(config: ChainConfig, outputs: Sequence[str] = ("chi",)) -> dict:
    """Efficiency (and optionally flux and Delta channels) of one configuration."""
    tables = build_coupling_tables(config)
    pumped, bare = steady_branches(config, tables)
    eff = efficiency_from_states(pumped, bare, config, tables)
    out = {"efficiency": eff.to_dict()}
    if "flux" in outputs or "delta" in outputs:
        delta = delta_from_states(pumped, bare, config, tables)
        if "flux" in outputs:
            out["flux"] = delta.pumped.to_dict()
            out["balance"] = float(delta.pumped.energy_balance())
        if "delta" in outputs:
            out["delta"] = delta.to_dict()
    return out


def _safe_eval(args):
    config, outputs = args
    try:
        return evaluate_point(config, outputs), None
    except Exception as exc:  # recorded per point, the sweep continues
        return None, f"{type(exc).__name__}: {exc}"


def sweep(spec: SweepSpec, workers: int | None = None, cache: ResultCache | None = None) -> SweepResult:
    """Evaluate every grid point of ``spec``.

    ``workers > 1`` evaluates uncached points in a process pool; the record
    order is the row-major grid order either way.
    """
    records, todo = [], []
    n_cached = 0
    for idx in spec.indices():
        rec = SweepRecord(index=idx, coords=spec.coords(idx), config_hash="")
        records.append(rec)
        try:
            cfg = spec.config_at(idx)
        except ValueError as exc:
            # invalid geometry or temperature at this grid point
            rec.error = f"{type(exc).__name__}: {exc}"
            continue
        rec.config_hash = cfg.config_hash()
        hit = cache.get(ResultCache.key(cfg, spec.outputs)) if cache is not None else None
        if hit is not None:
            rec.result = hit
            n_cached += 1
        else:
            todo.append((rec, cfg))

    jobs = [(cfg, spec.outputs) for _, cfg in todo]
    if workers and workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_safe_eval, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = [_safe_eval(j) for j in jobs]

    for (rec, cfg), (value, err) in zip(todo, results):
        rec.result, rec.error = value, err
        if value is not None and cache is not None:
            cache.put(ResultCache.key(cfg, spec.outputs), value)

    provenance = {
        "spec_hash": spec.spec_hash(),
        "base_config_hash": spec.base.config_hash(),
        "code_version": code_version(),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "cached_points": n_cached,
    }
    return SweepResult(spec=spec, records=records, provenance=provenance)


def log_grid(lo: float, hi: float, n: int) -> tuple:
    return tuple(float(v) for v in np.geomspace(lo, hi, n))


# --------------------------------------------------------------------------
# maxima over (d, T)


@dataclass
class FrequencyMaximum:
    omega: float
    chi_max: float
    d_max: float
    T_max: float
    E: float
    E0: float
    P: float
    n_failed: int = 0
    coarse: SweepResult | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "omega": self.omega,
            "chi_max": self.chi_max,
            "d_max": self.d_max,
            "T_max": self.T_max,
            "E": self.E,
            "E0": self.E0,
            "P": self.P,
            "n_failed": self.n_failed,
        }


def _check_range(rng, limits, name):
    lo, hi = float(rng[0]), float(rng[1])
    if not (lo < hi):
        raise ValueError(f"{name} range must be increasing, got {rng}")
    if lo < limits[0] * (1 - 1e-9) or hi > limits[1] * (1 + 1e-9):
        raise ValueError(f"{name} range {rng} outside [{limits[0]}, {limits[1]}]")
    return lo, hi


def _refined(values: tuple, i: int, factor: int, lo: float, hi: float) -> tuple:
    """Log grid ``factor`` times finer spanning the neighbours of ``values[i]``."""
    a = values[max(i - 1, 0)]
    b = values[min(i + 1, len(values) - 1)]
    n = factor * (2 if 0 < i < len(values) - 1 else 1) + 1
    return log_grid(max(a, lo), min(b, hi), n)


def _best(result: SweepResult):
    best = None
    for r in result.records:
        if r.ok and math.isfinite(r.chi) and (best is None or r.chi > best.chi):
            best = r
    return best


def maximize_d_T(
    base: ChainConfig,
    d_range=D_LIMITS,
    T_range=T_LIMITS,
    n_d: int = 60,
    n_T: int = 40,
    refine: int = 4,
    workers: int | None = None,
    cache: ResultCache | None = None,
) -> FrequencyMaximum:
    """Grid maximum of chi over the last gap and the temperature, then a local refinement."""
    d_lo, d_hi = _check_range(d_range, D_LIMITS, "d")
    T_lo, T_hi = _check_range(T_range, T_LIMITS, "T")
    d_axis = SweepAxis("d", log_grid(d_lo, d_hi, n_d))
    T_axis = SweepAxis("T", log_grid(T_lo, T_hi, n_T))
    coarse = sweep(SweepSpec(base, (d_axis, T_axis)), workers=workers, cache=cache)
    best = _best(coarse)
    if best is None:
        raise RuntimeError("every point of the coarse grid failed")
    n_failed = coarse.n_failed
    if refine and refine > 1:
        i, j = best.index
        fine = sweep(
            SweepSpec(
                base,
                (
                    SweepAxis("d", _refined(d_axis.values, i, refine, d_lo, d_hi)),
                    SweepAxis("T", _refined(T_axis.values, j, refine, T_lo, T_hi)),
                ),
            ),
            workers=workers,
            cache=cache,
        )
        n_failed += fine.n_failed
        fb = _best(fine)
        if fb is not None and fb.chi > best.chi:
            best = fb
    eff = best.result["efficiency"]
    return FrequencyMaximum(
        omega=base.emitter.omega,
        chi_max=eff["chi"],
        d_max=best.coords["d"],
        T_max=best.coords["T"],
        E=eff["E"],
        E0=eff["E0"],
        P=eff["P"],
        n_failed=n_failed,
        coarse=coarse,
    )


def frequency_maxima(
    omega_grid: Sequence[float],
    d_range=D_LIMITS,
    T_range=T_LIMITS,
    base: ChainConfig | None = None,
    n_d: int = 60,
    n_T: int = 40,
    refine: int = 4,
    workers: int | None = None,
    cache: ResultCache | None = None,
) -> list:
    """Per-frequency maximum of chi over (d, T) with its location and fluxes.

    ``E``, ``E0`` and ``P`` are in units of hbar*omega*gamma0 of each frequency.
    """
    from .coupling import displaced_chain

    base = base if base is not None else displaced_chain(4)
    return [
        maximize_d_T(with_omega(base, float(w)), d_range, T_range, n_d, n_T, refine, workers, cache)
        for w in omega_grid
    ]


# --------------------------------------------------------------------------
# dynamics


@dataclass
class DynamicsReport:
    """Pump and no-pump time series on a shared grid, from one initial state."""

    config: ChainConfig
    efficiency: TimeResolvedEfficiency
    pumped: list
    bare: list

    @property
    def times(self) -> np.ndarray:
        return self.efficiency.times

    def series(self, key: str, branch: str = "pumped") -> np.ndarray:
        reports = self.pumped if branch == "pumped" else self.bare
        return np.array([r.to_dict()[key] for r in reports])

    def populations(self, branch: str = "pumped") -> np.ndarray:
        reports = self.pumped if branch == "pumped" else self.bare
        return np.array([r.populations for r in reports])

    def rows(self) -> tuple[list, list]:
        """Header and rows: time, populations of both branches, chi, then every channel."""
        labels = site_labels(self.config.n_atoms)
        header = ["t"] + [f"p_{l}" for l in labels] + [f"p0_{l}" for l in labels] + ["chi", "E", "E0", "P"]
        keys = [k for k in self.pumped[0].to_dict() if not k.startswith("p_")]
        header += keys + [f"{k}_0" for k in keys]
        eff = self.efficiency
        rows = []
        for i, t in enumerate(self.times):
            dp = self.pumped[i].to_dict()
            db = self.bare[i].to_dict()
            row = [t] + list(self.pumped[i].populations) + list(self.bare[i].populations)
            row += [eff.chi[i], eff.E[i], eff.E0[i], eff.P[i]]
            row += [dp[k] for k in keys] + [db[k] for k in keys]
            rows.append(row)
        return header, rows

    def write_csv(self, path, columns: Sequence[str] | None = None) -> Path:
        header, rows = self.rows()
        sel = list(range(len(header))) if columns is None else [0] + [header.index(c) for c in columns]
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([header[i] for i in sel])
            for row in rows:
                w.writerow([repr(float(row[i])) for i in sel])
        return path


def dynamics_report(
    config: ChainConfig,
    t_grid=None,
    rho0: np.ndarray | None = None,
    method: str = "expm",
) -> DynamicsReport:
    """Populations, chi(t), every flux channel and coherences for both branches.

    The default initial state is the product Gibbs state of the bath.
    """
    tables = build_coupling_tables(config)
    t_grid = log_time_grid() if t_grid is None else np.asarray(t_grid, dtype=float)
    tre = time_resolved_efficiency(config, tables, t_grid, rho0=rho0, method=method)
    bare_cfg = config.replace(gamma_in=0.0)
    pumped = [flux_report(r, config, tables) for r in tre.pumped.states]
    bare = [flux_report(r, bare_cfg, tables) for r in tre.bare.states]
    return DynamicsReport(config=config, efficiency=tre, pumped=pumped, bare=bare)


def first_crossing(times: np.ndarray, values: np.ndarray, threshold: float) -> float:
    """Earliest time at which ``values`` reaches ``threshold``; inf if never."""
    hit = np.nonzero(np.asarray(values) >= threshold)[0]
    return float(times[hit[0]]) if len(hit) else float("inf")


__all__ = [
    "SweepAxis",
    "SweepSpec",
    "SweepRecord",
    "SweepResult",
    "ResultCache",
    "FluxReport",
    "FrequencyMaximum",
    "DynamicsReport",
    "apply_axis",
    "with_gap",
    "with_omega",
    "evaluate_point",
    "sweep",
    "log_grid",
    "maximize_d_T",
    "frequency_maxima",
    "dynamics_report",
    "first_crossing",
]
