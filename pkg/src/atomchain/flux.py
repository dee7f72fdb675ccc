"""Heat-flux channels and the transport efficiency.

Fluxes are in units of hbar*omega*gamma0 and follow the sign convention
"positive = energy flowing into the atom(s)". Every channel is computed as a
trace of the atomic energy against one generator term; the coherence-based
closed forms are available as cross-checks.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .coupling import ChainConfig, CouplingTables, build_coupling_tables
from .lindblad import assemble_liouvillian, atom_occupations, ladder_ops
from .solvers import Trajectory, evolve, gibbs_state, steady_state

P_FLOOR = 1e-12


class UndefinedEfficiencyError(ValueError):
    """The pumped flux is too small for the efficiency to be defined."""


@lru_cache(maxsize=None)
def _dense_ops(n_atoms: int):
    lower, raise_ = ladder_ops(n_atoms)
    lower = [op.toarray() for op in lower]
    raise_ = [op.toarray() for op in raise_]
    occ = atom_occupations(n_atoms)
    return lower, raise_, occ


def _dissipate(a, b, rho):
    """a rho b^dag - {b^dag a, rho}/2 for dense matrices."""
    bd = b.conj().T
    prod = bd @ a
    return a @ rho @ bd - 0.5 * (prod @ rho + rho @ prod)


def _energy(occ_row_or_total, drho):
    """Tr(n drho) for a diagonal number operator given by its diagonal."""
    return float(np.real(np.dot(occ_row_or_total, np.diagonal(drho))))


@dataclass
class FluxReport:
    """Every flux channel for one state.

    ``hop[j, k]``: energy gained by atom j through coherent exchange with k.
    ``loc[j]``: energy atom j draws locally from the bath.
    ``nl[j, k]``: energy each atom of the pair (j, k) draws collectively.
    ``coherences[j, k]`` is <sigma_j^+ sigma_k^->, ``populations`` are the
    ground-state populations.
    """

    hop: np.ndarray
    loc: np.ndarray
    nl: np.ndarray
    pump_P: float
    extract_E: float
    coherences: np.ndarray
    populations: np.ndarray
    hop_from_coherence: np.ndarray = field(repr=False, default=None)
    nl_from_coherence: np.ndarray = field(repr=False, default=None)

    @property
    def n_atoms(self) -> int:
        return len(self.loc)

    def energy_balance(self) -> float:
        """d<H_a>/dt from all channels; vanishes at stationarity."""
        iu = np.triu_indices(self.n_atoms, 1)
        return self.pump_P - self.extract_E + self.loc.sum() + 2.0 * self.nl[iu].sum()

    def to_dict(self, labels=None) -> dict:
        """Flat channel mapping with names Qhop_jk, Qloc_j, Qnl_jk, P, E."""
        n = self.n_atoms
        labels = labels or site_labels(n)
        out = {"P": self.pump_P, "E": self.extract_E}
        for j in range(n):
            out[f"Qloc_{labels[j]}"] = float(self.loc[j])
        for j in range(n):
            for k in range(n):
                if j != k:
                    out[f"Qhop_{labels[j]}{labels[k]}"] = float(self.hop[j, k])
        for j in range(n):
            for k in range(j + 1, n):
                out[f"Qnl_{labels[j]}{labels[k]}"] = float(self.nl[j, k])
        for j in range(n):
            out[f"p_{labels[j]}"] = float(self.populations[j])
        for j in range(n):
            for k in range(j + 1, n):
                c = self.coherences[j, k]
                out[f"Re_c_{labels[j]}{labels[k]}"] = float(c.real)
                out[f"Im_c_{labels[j]}{labels[k]}"] = float(c.imag)
        return out


def site_labels(n_atoms: int) -> list[str]:
    """Atom names p, 2, ..., N-1, e."""
    if n_atoms == 1:
        return ["p"]
    return ["p"] + [str(j) for j in range(2, n_atoms)] + ["e"]


def flux_report(rho: np.ndarray, config: ChainConfig, tables: CouplingTables | None = None) -> FluxReport:
    n = config.n_atoms
    dim = 2**n
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (dim, dim):
        raise ValueError(f"state of shape {rho.shape} does not match a {n}-atom chain")
    tables = tables if tables is not None else build_coupling_tables(config)
    lower, raise_, occ = _dense_ops(n)
    total = occ.sum(axis=0)
    nth = tables.n_th
    lam = tables.lambda_rel
    gam = tables.gamma_rel

    coh = np.zeros((n, n), dtype=complex)
    for j in range(n):
        for k in range(n):
            coh[j, k] = np.trace(rho @ (raise_[j] @ lower[k]))

    hop = np.zeros((n, n))
    for j in range(n):
        for k in range(j + 1, n):
            x = raise_[j] @ lower[k] + raise_[k] @ lower[j]
            comm = -1j * lam[j, k] * (x @ rho - rho @ x)
            hop[j, k] = _energy(occ[j], comm)
            hop[k, j] = -hop[j, k]

    loc = np.zeros(n)
    for j in range(n):
        d = nth * _dissipate(raise_[j], raise_[j], rho) + (1 + nth) * _dissipate(lower[j], lower[j], rho)
        loc[j] = _energy(total, d)

    nl = np.zeros((n, n))
    for j in range(n):
        for k in range(j + 1, n):
            d = gam[j, k] * (
                nth * (_dissipate(raise_[j], raise_[k], rho) + _dissipate(raise_[k], raise_[j], rho))
                + (1 + nth) * (_dissipate(lower[j], lower[k], rho) + _dissipate(lower[k], lower[j], rho))
            )
            # the two atoms draw equal amounts; average the traces so nl is exactly symmetric
            nl[j, k] = nl[k, j] = 0.5 * (_energy(occ[j], d) + _energy(occ[k], d))

    p, e = config.pump_site, config.extract_site
    g_in = config.gamma_in / tables.gamma0
    g_out = config.gamma_out / tables.gamma0
    P = _energy(total, g_in * _dissipate(raise_[p], raise_[p], rho)) if g_in > 0 else 0.0
    E = -_energy(total, g_out * _dissipate(lower[e], lower[e], rho)) if g_out > 0 else 0.0

    # <s_j^+ s_k^-> = c; the trace form equals +2 Lambda Im c with this ordering.
    hop_c = 2.0 * lam * coh.imag
    nl_c = -gam * coh.real
    np.fill_diagonal(hop_c, 0.0)
    np.fill_diagonal(nl_c, 0.0)

    pops = 1.0 - occ @ np.real(np.diagonal(rho))
    return FluxReport(
        hop=hop,
        loc=loc,
        nl=nl,
        pump_P=P,
        extract_E=E,
        coherences=coh,
        populations=pops,
        hop_from_coherence=hop_c,
        nl_from_coherence=nl_c,
    )


@dataclass
class EfficiencyResult:
    chi: float
    E: float
    E0: float
    P: float

    def to_dict(self) -> dict:
        return {"chi": self.chi, "E": self.E, "E0": self.E0, "P": self.P}


def steady_branches(config: ChainConfig, tables: CouplingTables):
    """Steady states with and without the pump dissipator."""
    pumped = steady_state(assemble_liouvillian(config, tables, include_pump=True)).rho
    bare = steady_state(assemble_liouvillian(config, tables, include_pump=False)).rho
    return pumped, bare


def _extracted(rho, config, tables) -> float:
    """E = -Tr(H_a D_out[rho]) = gamma_out <n_e>, in hbar*omega*gamma0."""
    occ = atom_occupations(config.n_atoms)
    return config.gamma_out / tables.gamma0 * float(np.real(np.dot(occ[config.extract_site], np.diagonal(rho))))


def _pumped(rho, config, tables) -> float:
    """P = Tr(H_a D_in[rho]) = gamma_in (1 - <n_p>), in hbar*omega*gamma0."""
    occ = atom_occupations(config.n_atoms)
    return config.gamma_in / tables.gamma0 * (1.0 - float(np.real(np.dot(occ[config.pump_site], np.diagonal(rho)))))


def efficiency(config: ChainConfig, tables: CouplingTables | None = None) -> EfficiencyResult:
    """Stationary efficiency chi = (E - E0) / P.

    E0 comes from the same chain with the pump dissipator removed.
    """
    if not config.gamma_in > 0:
        raise UndefinedEfficiencyError("pump rate is zero; efficiency undefined")
    tables = tables if tables is not None else build_coupling_tables(config)
    pumped, bare = steady_branches(config, tables)
    return efficiency_from_states(pumped, bare, config, tables)


def efficiency_from_states(pumped, bare, config: ChainConfig, tables: CouplingTables) -> EfficiencyResult:
    """Efficiency from already computed pump and no-pump states."""
    P = _pumped(pumped, config, tables)
    if P < P_FLOOR:
        raise UndefinedEfficiencyError(f"pumped flux {P:.3e} below floor {P_FLOOR:.0e}")
    E = _extracted(pumped, config, tables)
    E0 = _extracted(bare, config, tables)
    return EfficiencyResult(chi=(E - E0) / P, E=E, E0=E0, P=P)


@dataclass
class DeltaReport:
    """Pumping minus no-pumping differences of every channel."""

    pumped: FluxReport
    bare: FluxReport
    d_hop: np.ndarray
    d_loc: np.ndarray
    d_nl: np.ndarray
    P: float

    @property
    def d_hop_atom(self) -> np.ndarray:
        return self.d_hop.sum(axis=1)

    @property
    def d_nl_atom(self) -> np.ndarray:
        return self.d_nl.sum(axis=1)

    def normalized(self) -> dict:
        """Every Delta quantity divided by the pumped flux."""
        if not self.P > 0:
            return {k: np.zeros_like(v) for k, v in self._raw().items()}
        return {k: v / self.P for k, v in self._raw().items()}

    def _raw(self) -> dict:
        return {
            "hop": self.d_hop,
            "loc": self.d_loc,
            "nl": self.d_nl,
            "hop_atom": self.d_hop_atom,
            "nl_atom": self.d_nl_atom,
        }

    def to_dict(self, labels=None) -> dict:
        n = len(self.d_loc)
        labels = labels or site_labels(n)
        norm = self.normalized()
        out = {"P": self.P}
        for j in range(n):
            lj = labels[j]
            out[f"dQloc_{lj}"] = float(self.d_loc[j])
            out[f"dQhop_{lj}"] = float(self.d_hop_atom[j])
            out[f"dQnl_{lj}"] = float(self.d_nl_atom[j])
            out[f"dQloc_{lj}/P"] = float(norm["loc"][j])
            out[f"dQhop_{lj}/P"] = float(norm["hop_atom"][j])
            out[f"dQnl_{lj}/P"] = float(norm["nl_atom"][j])
            for k in range(n):
                if k != j:
                    lk = labels[k]
                    out[f"dQhop_{lj}{lk}"] = float(self.d_hop[j, k])
                    out[f"dQhop_{lj}{lk}/P"] = float(norm["hop"][j, k])
                    out[f"dQnl_{lj}{lk}"] = float(self.d_nl[j, k])
                    out[f"dQnl_{lj}{lk}/P"] = float(norm["nl"][j, k])
        return out


def delta_fluxes(config: ChainConfig, tables: CouplingTables | None = None) -> DeltaReport:
    tables = tables if tables is not None else build_coupling_tables(config)
    pumped, bare = steady_branches(config, tables)
    return delta_from_states(pumped, bare, config, tables)


def delta_from_states(pumped, bare, config, tables) -> DeltaReport:
    fp = flux_report(pumped, config, tables)
    # the no-pump branch has no pump flux by construction
    fb = flux_report(bare, config.replace(gamma_in=0.0), tables)
    return DeltaReport(
        pumped=fp,
        bare=fb,
        d_hop=fp.hop - fb.hop,
        d_loc=fp.loc - fb.loc,
        d_nl=fp.nl - fb.nl,
        P=fp.pump_P,
    )


@dataclass
class TimeResolvedEfficiency:
    times: np.ndarray
    chi: np.ndarray
    E: np.ndarray
    E0: np.ndarray
    P: np.ndarray
    valid: np.ndarray
    pumped: Trajectory
    bare: Trajectory


def time_resolved_efficiency(
    config: ChainConfig,
    tables: CouplingTables | None = None,
    t_grid=None,
    rho0: np.ndarray | None = None,
    method: str = "expm",
) -> TimeResolvedEfficiency:
    """chi(t) from pump and no-pump evolutions sharing one initial state.

    Points where P(t) does not exceed ``P_FLOOR`` get ``chi = nan`` and
    ``valid = False``.
    """
    from .solvers import log_time_grid

    tables = tables if tables is not None else build_coupling_tables(config)
    t_grid = log_time_grid() if t_grid is None else np.asarray(t_grid, dtype=float)
    rho0 = gibbs_state(config) if rho0 is None else rho0
    tr_p = evolve(assemble_liouvillian(config, tables, include_pump=True), rho0, t_grid, method=method)
    tr_b = evolve(assemble_liouvillian(config, tables, include_pump=False), rho0, t_grid, method=method)
    E = np.array([_extracted(r, config, tables) for r in tr_p.states])
    E0 = np.array([_extracted(r, config, tables) for r in tr_b.states])
    P = np.array([_pumped(r, config, tables) for r in tr_p.states])
    valid = P > P_FLOOR
    chi = np.full(len(t_grid), np.nan)
    chi[valid] = (E[valid] - E0[valid]) / P[valid]
    return TimeResolvedEfficiency(times=t_grid, chi=chi, E=E, E0=E0, P=P, valid=valid, pumped=tr_p, bare=tr_b)


def write_flux_json(report: FluxReport, path, labels=None) -> Path:
    path = Path(path)
    path.write_text(json.dumps(report.to_dict(labels), indent=2, sort_keys=True))
    return path


def write_flux_csv(reports, path, times=None, labels=None) -> Path:
    """One row per report, columns named after the channels."""
    path = Path(path)
    rows = [r.to_dict(labels) for r in reports]
    header = list(rows[0].keys())
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow((["t"] if times is not None else []) + header)
        for i, row in enumerate(rows):
            w.writerow(([repr(float(times[i]))] if times is not None else []) + [repr(row[h]) for h in header])
    return path
