"""Plot-ready data files for every figure panel.

Each generator writes CSV files named ``figN[_panel].csv`` into ``out_dir``
and returns ``(paths, meta)``, where ``meta`` records the grids and the base
configuration hash for the run manifest. ``quick=True`` shrinks every grid
for smoke runs.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .coupling import ChainConfig, chain_from_gaps, displaced_chain
from .experiments import (
    D_LIMITS,
    ResultCache,
    SweepAxis,
    SweepSpec,
    dynamics_report,
    frequency_maxima,
    log_grid,
    sweep,
)
from .ga import TABLE_GENOMES, table_check
from .solvers import log_time_grid

UM = 1e-6
T_STAT = 361.0
D_DYN = 1.03e-6
MAP_OMEGAS = {"a": 0.5e14, "b": 1e14, "c": 2e14, "d": 5e14}


def _d_grid(quick: bool) -> tuple:
    return log_grid(D_LIMITS[0], D_LIMITS[1], 12 if quick else 60)


def _write(path: Path, header, rows) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else repr(float(v)) for v in row])
    return path


def fig2(out_dir: Path, quick=False, workers=None, cache=None):
    """Efficiency against the last gap for N = 4 at 10 K and 300 K."""
    d = _d_grid(quick)
    paths = []
    for T in (10.0, 300.0):
        res = sweep(SweepSpec(displaced_chain(4, bath_T=T), (SweepAxis("d", d),)), workers, cache)
        paths.append(res.write_csv(out_dir / f"fig2_T{int(T)}.csv", columns=["chi"], scale={"d": UM}))
    return paths, {"d_grid": list(d), "T": [10.0, 300.0], "N": 4}


def fig3(out_dir: Path, quick=False, workers=None, cache=None):
    """Efficiency against the last gap for N = 2..7."""
    d = _d_grid(quick)
    sizes = (2, 3, 4, 5) if quick else (2, 3, 4, 5, 6, 7)
    paths = []
    for T in (10.0, 300.0):
        cols = []
        for n in sizes:
            res = sweep(SweepSpec(displaced_chain(n, bath_T=T), (SweepAxis("d", d),)), workers, cache)
            cols.append(res.grid("chi"))
        rows = [[di / UM] + [c[i] for c in cols] for i, di in enumerate(d)]
        paths.append(_write(out_dir / f"fig3_T{int(T)}.csv", ["d_um"] + [f"chi_N{n}" for n in sizes], rows))
    return paths, {"d_grid": list(d), "T": [10.0, 300.0], "N": list(sizes)}


def fig4(out_dir: Path, quick=False, workers=None, cache=None):
    """(d, T) maps at four frequencies, and the maximum against frequency."""
    n_d, n_T, refine = (10, 8, 2) if quick else (60, 40, 4)
    n_w = 6 if quick else 25
    omegas = sorted(set(np.geomspace(0.01e14, 5e14, n_w).tolist()) | set(MAP_OMEGAS.values()))
    maxima = frequency_maxima(omegas, n_d=n_d, n_T=n_T, refine=refine, workers=workers, cache=cache)
    by_w = {m.omega: m for m in maxima}
    paths = []
    for panel, w in MAP_OMEGAS.items():
        coarse = by_w[w].coarse
        paths.append(coarse.write_csv(out_dir / f"fig4_{panel}.csv", columns=["chi"], scale={"d": UM}))
    paths.append(
        _write(
            out_dir / "fig4_e.csv",
            ["omega_rad_s", "chi_max", "T_at_max_K", "n_failed"],
            [[m.omega, m.chi_max, m.T_max, m.n_failed] for m in maxima],
        )
    )
    paths.append(
        _write(out_dir / "fig4_f.csv", ["omega_rad_s", "d_max_um"], [[m.omega, m.d_max / UM] for m in maxima])
    )
    paths.append(
        _write(
            out_dir / "fig4_EE0P.csv",
            ["omega_rad_s", "E_minus_E0", "P", "E", "E0"],
            [[m.omega, m.E - m.E0, m.P, m.E, m.E0] for m in maxima if m.chi_max > 1],
        )
    )
    meta = {"omega_grid": omegas, "n_d": n_d, "n_T": n_T, "refine": refine, "maps": MAP_OMEGAS}
    return paths, meta


def _delta_sweep(quick, workers, cache):
    base = displaced_chain(4, bath_T=T_STAT)
    d = _d_grid(quick)
    return sweep(SweepSpec(base, (SweepAxis("d", d),), outputs=("chi", "delta")), workers, cache), d


def fig5(out_dir: Path, quick=False, workers=None, cache=None):
    """Pump-induced change of the fluxes of the extraction atom, per unit pumped flux."""
    res, d = _delta_sweep(quick, workers, cache)
    cols = ["dQhop_e/P", "dQnl_e/P", "dQloc_e/P", "dQhop_ep/P", "dQhop_e2/P", "dQhop_e3/P"]
    return [res.write_csv(out_dir / "fig5.csv", columns=cols, scale={"d": UM})], {"d_grid": list(d), "T": T_STAT}


def fig6(out_dir: Path, quick=False, workers=None, cache=None):
    """Pump-induced change of the fluxes of atom 2, and of the local and pair fluxes of p and 3."""
    res, d = _delta_sweep(quick, workers, cache)
    paths = [
        res.write_csv(
            out_dir / "fig6.csv", columns=["dQloc_2/P", "dQhop_2/P", "dQnl_2/P", "dQhop_2e/P"], scale={"d": UM}
        ),
        res.write_csv(out_dir / "fig6_p3.csv", columns=["dQloc_p/P", "dQloc_3/P", "dQnl_p3/P"], scale={"d": UM}),
    ]
    return paths, {"d_grid": list(d), "T": T_STAT}


_DYN_COLUMNS = {
    "fig7": ["chi", "p_p", "p0_p", "p_2", "p0_2", "p_3", "p0_3", "p_e", "p0_e"],
    "fig8": [
        "Qhop_p2", "Qhop_p3", "Qhop_pe", "Qhop_23", "Qhop_2e", "Qhop_3e",
        "Qhop_p2_0", "Qhop_p3_0", "Qhop_pe_0", "Qhop_23_0", "Qhop_2e_0", "Qhop_3e_0",
        "Im_c_pe", "Im_c_2e", "Im_c_3e", "Im_c_pe_0", "Im_c_2e_0", "Im_c_3e_0",
    ],
    "fig9": ["Qloc_p", "Qloc_2", "Qloc_3", "Qloc_e", "Qloc_p_0", "Qloc_2_0", "Qloc_3_0", "Qloc_e_0"],
    "fig10": [
        "Qnl_p2", "Qnl_p3", "Qnl_pe", "Qnl_23", "Qnl_2e", "Qnl_3e",
        "Qnl_p2_0", "Qnl_p3_0", "Qnl_pe_0", "Qnl_23_0", "Qnl_2e_0", "Qnl_3e_0",
        "Re_c_p3", "Re_c_23", "Re_c_p3_0", "Re_c_23_0",
    ],
}


def dynamics_config() -> ChainConfig:
    return displaced_chain(4, d=D_DYN, bath_T=T_STAT)


def _dynamics(fig_id: str):
    def run(out_dir: Path, quick=False, workers=None, cache=None):
        t_grid = log_time_grid(per_decade=4 if quick else 10)
        rep = dynamics_report(dynamics_config(), t_grid)
        path = rep.write_csv(out_dir / f"{fig_id}.csv", columns=_DYN_COLUMNS[fig_id])
        return [path], {"t_grid": [float(t) for t in t_grid], "initial_state": "gibbs"}

    run.__doc__ = f"Time series for {fig_id} from the thermal product state."
    return run


def fig11(out_dir: Path, quick=False, workers=None, cache=None):
    """Efficiency of a five-atom chain against the gaps before atoms 4 and 5."""
    n = 8 if quick else 40
    grid = log_grid(D_LIMITS[0], D_LIMITS[1], n)
    base = chain_from_gaps([0.1e-6] * 4, bath_T=T_STAT)
    res = sweep(SweepSpec(base, (SweepAxis("d4", grid), SweepAxis("d5", grid))), workers, cache)
    path = res.write_csv(out_dir / "fig11.csv", columns=["chi"], scale={"d4": UM, "d5": UM})
    return [path], {"d4_grid": list(grid), "d5_grid": list(grid), "T": T_STAT}


def table1_check(out_dir: Path, quick=False, workers=None, cache=None):
    """Forward evaluation of the reference genomes."""
    genomes = TABLE_GENOMES[:1] if quick else TABLE_GENOMES
    rows = table_check(genomes)
    path = _write(
        out_dir / "table1_check.csv",
        ["N", "genome_um", "chi_reference", "chi", "rel_deviation"],
        [[str(r["N"]), " ".join(f"{g:.3f}" for g in r["genome_um"]), r["chi_reference"], r["chi"], r["rel_deviation"]] for r in rows],
    )
    return [path], {"rows": rows}


FIGURES = {
    "fig2": fig2,
    "fig3": fig3,
    "fig4": fig4,
    "fig5": fig5,
    "fig6": fig6,
    "fig7": _dynamics("fig7"),
    "fig8": _dynamics("fig8"),
    "fig9": _dynamics("fig9"),
    "fig10": _dynamics("fig10"),
    "fig11": fig11,
    "table1-check": table1_check,
}


def generate(fig_id: str, out_dir, quick: bool = False, workers=None, cache: ResultCache | None = None):
    if fig_id not in FIGURES:
        raise KeyError(f"unknown figure {fig_id!r}; choose from {sorted(FIGURES)}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return FIGURES[fig_id](out_dir, quick=quick, workers=workers, cache=cache)
