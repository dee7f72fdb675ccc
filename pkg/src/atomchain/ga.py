"""Genetic search over the placement of atoms beyond the pumped triplet.

A genome holds the distances d_j (m) between atom j-1 and atom j for every
atom j >= 4 (atoms counted from 1). The first three atoms stay regularly
spaced at ``a``. Fitness is the stationary efficiency.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .constants import SEPARATION_FLOOR
from .coupling import ChainConfig, EmitterParams, chain_from_gaps
from .flux import efficiency

TRIPLET = 3
RESOLUTION = 1e-9

# Reference optima (N, gaps, chi) for regular-triplet chains at T = 361 K, omega = 1e14 rad/s.
TABLE_GENOMES = (
    (5, (0.763e-6, 0.618e-6), 13.518),
    (6, (0.556e-6, 1.076e-6, 0.578e-6), 13.982),
    (6, (0.782e-6, 0.564e-6, 0.518e-6), 13.631),
    (7, (0.768e-6, 0.581e-6, 0.380e-6, 0.419e-6), 13.908),
)


@dataclass(frozen=True)
class GAConfig:
    population_size: int = 1000
    survival_fraction: float = 0.5
    mutation_rate: float = 0.20
    convergence_tol: float | None = None
    elite_window: int = 20
    bounds: tuple = (0.1e-6, 3e-6)
    seed: int = 0
    max_generations: int = 200
    sigma_fraction: float = 0.05
    criterion: str = "positions+chi"

    def __post_init__(self):
        if self.population_size < 2 * self.elite_window:
            raise ValueError("population_size must be at least twice elite_window")
        if not 0 < self.mutation_rate < 1:
            raise ValueError("mutation_rate must lie in (0, 1)")
        if not 0 < self.survival_fraction < 1:
            raise ValueError("survival_fraction must lie in (0, 1)")
        if int(self.population_size * self.survival_fraction) < 2:
            raise ValueError("at least two survivors are needed for crossover")
        lo, hi = (float(v) for v in self.bounds)
        if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
            raise ValueError(f"bounds must be finite with lower <= upper, got {self.bounds}")
        if self.criterion not in ("positions+chi", "chi"):
            raise ValueError(f"unknown convergence criterion {self.criterion!r}")
        object.__setattr__(self, "bounds", (lo, hi))

    def tolerance(self, n_atoms: int) -> float:
        if self.convergence_tol is not None:
            return self.convergence_tol
        return 1e-2 if n_atoms >= 7 else 1e-3


def base_chain(
    n_atoms: int = 5,
    a: float = 0.1e-6,
    bath_T: float = 361.0,
    emitter: EmitterParams | None = None,
    gamma_in_rel: float = 1e-3,
    gamma_out_rel: float = 1e2,
) -> ChainConfig:
    """Regular chain; the GA overwrites the gaps after the triplet."""
    if n_atoms <= TRIPLET:
        raise ValueError(f"need more than {TRIPLET} atoms to have movable atoms")
    return chain_from_gaps(
        [a] * (n_atoms - 1),
        emitter=emitter,
        bath_T=bath_T,
        gamma_in_rel=gamma_in_rel,
        gamma_out_rel=gamma_out_rel,
    )


def snap(genome, resolution: float = RESOLUTION) -> np.ndarray:
    return np.round(np.asarray(genome, dtype=float) / resolution) * resolution


def genome_key(genome, resolution: float = RESOLUTION) -> tuple:
    return tuple(int(v) for v in np.round(np.asarray(genome, dtype=float) / resolution))


def is_feasible(genome) -> bool:
    g = np.asarray(genome, dtype=float)
    return bool(np.all(np.isfinite(g)) and np.all(g >= SEPARATION_FLOOR))


def chain_for(genome, base: ChainConfig) -> ChainConfig:
    gaps = np.array(base.gaps)
    genome = np.asarray(genome, dtype=float)
    if len(genome) != base.n_atoms - TRIPLET:
        raise ValueError(f"genome of length {len(genome)} for a {base.n_atoms}-atom chain")
    gaps[TRIPLET - 1 :] = genome
    positions = base.positions[0] + np.concatenate([[0.0], np.cumsum(gaps)])
    return base.replace(positions=tuple(positions))


def fitness(genome, base: ChainConfig) -> float:
    """Stationary efficiency of the chain, or -inf if it cannot be built or solved."""
    if not is_feasible(genome):
        return -math.inf
    try:
        return float(efficiency(chain_for(genome, base)).chi)
    except (ValueError, RuntimeError, ArithmeticError):
        return -math.inf


def _relative(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = np.maximum(np.abs(a), np.abs(b))
    diff = np.abs(a - b)
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(scale > 0, diff / scale, 0.0)
    return float(np.max(rel)) if rel.size else 0.0


def converged(genomes: np.ndarray, chis: np.ndarray, tol: float, criterion: str = "positions+chi") -> bool:
    """All pairs of the given individuals agree within ``tol`` (relative)."""
    if not np.all(np.isfinite(chis)):
        return False
    n = len(chis)
    for i in range(n):
        for j in range(i + 1, n):
            if _relative(chis[i], chis[j]) > tol:
                return False
            if criterion == "positions+chi" and _relative(genomes[i], genomes[j]) > tol:
                return False
    return True


@dataclass
class GAResult:
    n_atoms: int
    best_genome: np.ndarray
    best_chi: float
    elite: list
    converged: bool
    generations: int
    trace: list = field(repr=False)
    evaluations: int = 0
    config: GAConfig | None = None

    def table_row(self) -> dict:
        """Best genome in the layout d4 ... dN (um), chi."""
        row = {"N": self.n_atoms}
        for j, d in enumerate(self.best_genome, start=TRIPLET + 1):
            row[f"d{j}_um"] = round(float(d) * 1e6, 3)
        row["chi"] = round(self.best_chi, 3)
        row["converged"] = self.converged
        return row

    def to_dict(self) -> dict:
        return {
            "n_atoms": self.n_atoms,
            "best_genome": [float(v) for v in self.best_genome],
            "best_chi": self.best_chi,
            "elite": [{"genome": [float(v) for v in g], "chi": c} for g, c in self.elite],
            "converged": self.converged,
            "generations": self.generations,
            "evaluations": self.evaluations,
            "table_row": self.table_row(),
            "ga_config": asdict(self.config) if self.config else None,
        }


class _Evaluator:
    """Fitness with a cache keyed by the snapped genome."""

    def __init__(self, fn: Callable, base: ChainConfig, workers: int | None):
        self.fn = fn
        self.base = base
        self.cache: dict[tuple, float] = {}
        self.pool = ProcessPoolExecutor(max_workers=workers) if workers and workers > 1 else None
        self.calls = 0

    def __call__(self, genomes: np.ndarray) -> np.ndarray:
        keys = [genome_key(g) for g in genomes]
        todo = []
        seen = set()
        for k, g in zip(keys, genomes):
            if k not in self.cache and k not in seen:
                seen.add(k)
                todo.append((k, g))
        if todo:
            args = [g for _, g in todo]
            if self.pool is not None:
                values = list(self.pool.map(self.fn, args, [self.base] * len(args)))
            else:
                values = [self.fn(g, self.base) for g in args]
            self.calls += len(todo)
            for (k, _), v in zip(todo, values):
                self.cache[k] = float(v)
        return np.array([self.cache[k] for k in keys])

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()


def _repair(pop: np.ndarray, lo: float, hi: float) -> np.ndarray:
    pop = snap(np.clip(pop, lo, hi))
    # snapping may leave a value just outside the bounds or under the floor
    pop = np.clip(pop, max(lo, SEPARATION_FLOOR), max(hi, SEPARATION_FLOOR))
    return pop


def optimize(
    ga: GAConfig,
    base: ChainConfig,
    fitness_fn: Callable = fitness,
    workers: int | None = None,
    log_path=None,
    progress: Callable | None = None,
) -> GAResult:
    """Generational search: rank, keep the best fraction, refill by blend crossover, mutate.

    Survivors keep their cached fitness, so the best fitness never decreases.
    Stops when the ``elite_window`` best individuals agree pairwise within
    the tolerance, or after ``max_generations`` with ``converged=False``.
    """
    n_genes = base.n_atoms - TRIPLET
    if n_genes < 1:
        raise ValueError("chain has no movable atoms")
    rng = np.random.default_rng(ga.seed)
    lo, hi = ga.bounds
    sigma = ga.sigma_fraction * (hi - lo)
    tol = ga.tolerance(base.n_atoms)
    n_keep = int(ga.population_size * ga.survival_fraction)
    n_child = ga.population_size - n_keep

    log = open(log_path, "w") if log_path is not None else None
    evaluate = _Evaluator(fitness_fn, base, workers)
    trace = []
    try:
        pop = _repair(rng.uniform(lo, hi, size=(ga.population_size, n_genes)), lo, hi)
        done = False
        gen = 0
        while True:
            fit = evaluate(pop)
            # stable sort keeps the ranking deterministic under ties
            order = np.argsort(-fit, kind="stable")
            pop, fit = pop[order], fit[order]
            elite_g, elite_f = pop[: ga.elite_window], fit[: ga.elite_window]
            done = converged(elite_g, elite_f, tol, ga.criterion)
            finite = fit[np.isfinite(fit)]
            entry = {
                "generation": gen,
                "best_chi": float(fit[0]),
                "median_chi": float(np.median(finite)) if finite.size else -math.inf,
                "evaluations": evaluate.calls,
                "converged": done,
                "elite": [[float(v) for v in g] for g in elite_g],
                "elite_chi": [float(v) for v in elite_f],
            }
            trace.append(entry)
            if log is not None:
                log.write(json.dumps(entry, sort_keys=True) + "\n")
                log.flush()
            if progress is not None:
                progress(entry)
            if done or gen >= ga.max_generations:
                break

            parents = pop[:n_keep]
            ia = rng.integers(0, n_keep, size=n_child)
            ib = rng.integers(0, n_keep, size=n_child)
            w = rng.random((n_child, n_genes))
            children = w * parents[ia] + (1.0 - w) * parents[ib]
            mask = rng.random((n_child, n_genes)) < ga.mutation_rate
            children = children + mask * rng.normal(0.0, 1.0, size=(n_child, n_genes)) * sigma
            pop = np.vstack([parents, _repair(children, lo, hi)])
            gen += 1
    finally:
        evaluate.close()
        if log is not None:
            log.close()

    return GAResult(
        n_atoms=base.n_atoms,
        best_genome=pop[0].copy(),
        best_chi=float(fit[0]),
        elite=[(g.copy(), float(f)) for g, f in zip(pop[: ga.elite_window], fit[: ga.elite_window])],
        converged=done,
        generations=gen,
        trace=trace,
        evaluations=evaluate.calls,
        config=ga,
    )


def table_check(genomes: Sequence = TABLE_GENOMES, bath_T: float = 361.0) -> list:
    """Forward evaluation of reference genomes: (N, genome, reference chi, computed chi, relative deviation)."""
    rows = []
    for n_atoms, genome, ref in genomes:
        t0 = time.perf_counter()
        chi = fitness(genome, base_chain(n_atoms, bath_T=bath_T))
        rows.append(
            {
                "N": n_atoms,
                "genome_um": [round(g * 1e6, 3) for g in genome],
                "chi_reference": ref,
                "chi": chi,
                "rel_deviation": (chi - ref) / ref,
                "seconds": time.perf_counter() - t0,
            }
        )
    return rows


def write_report(result: GAResult, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(result.to_dict(), indent=2, sort_keys=True))
    return path
