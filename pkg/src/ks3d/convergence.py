"""Convergence studies on red-refined mesh sequences.

``run_case`` drives one manufactured case through a hierarchy of meshes,
solving the Stokes system on every level against exact Dirichlet data and
recording mesh size, system size, errors, and observed rates.  The resulting
table is the single source of truth for the CSV and any plot derived from it.
"""

from __future__ import annotations

import csv
import math
import sys
import time
from dataclasses import dataclass

import numpy as np

from .assembly import apply_dirichlet, build_system, expand_solution, gram_energy
from .domains import initial_mesh
from .errors import AssertionFailed, UnknownSpace
from .linalg import solve_saddle
from .manufactured import case_library, error_norms
from .mesh import red_refine
from .spaces import interpolate, pressure_space, velocity_space
from .stability import divergence_means

__all__ = ["CSV_COLUMNS", "ConvergenceTable", "LevelResult", "run_case"]

# After every solve the cell means of the broken divergence must vanish
# relative to the size of the computed field.
DIVERGENCE_TOL = 1e-10

RUN_SPACES = ("ks-p2", "ks-bubble", "br")

CSV_COLUMNS = (
    "case",
    "space",
    "level",
    "h_max",
    "n_dof",
    "nnz",
    "err_u_h1",
    "err_u_l2",
    "err_p_l2",
    "rate_h1",
    "rate_l2",
)


@dataclass(frozen=True)
class LevelResult:
    """One solved level.  The first eleven fields are the CSV row; the
    trailing diagnostics stay internal."""

    case: str
    space: str
    level: int
    h_max: float
    n_dof: int
    nnz: int
    err_u_h1: float
    err_u_l2: float
    err_p_l2: float
    rate_h1: float | None
    rate_l2: float | None
    div_max: float = float("nan")
    grad_norm: float = float("nan")
    wall_time: float = float("nan")


@dataclass(frozen=True)
class ConvergenceTable:
    rows: tuple[LevelResult, ...]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="ascii") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for row in self.rows:
                writer.writerow(
                    [
                        row.case,
                        row.space,
                        row.level,
                        _fmt(row.h_max),
                        row.n_dof,
                        row.nnz,
                        _fmt(row.err_u_h1),
                        _fmt(row.err_u_l2),
                        _fmt(row.err_p_l2),
                        "" if row.rate_h1 is None else _fmt(row.rate_h1),
                        "" if row.rate_l2 is None else _fmt(row.rate_l2),
                    ]
                )

    @classmethod
    def from_csv(cls, path) -> "ConvergenceTable":
        with open(path, newline="", encoding="ascii") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or tuple(reader.fieldnames) != CSV_COLUMNS:
                raise ValueError(f"{path}: expected columns {', '.join(CSV_COLUMNS)}")
            rows = [
                LevelResult(
                    case=rec["case"],
                    space=rec["space"],
                    level=int(rec["level"]),
                    h_max=float(rec["h_max"]),
                    n_dof=int(rec["n_dof"]),
                    nnz=int(rec["nnz"]),
                    err_u_h1=float(rec["err_u_h1"]),
                    err_u_l2=float(rec["err_u_l2"]),
                    err_p_l2=float(rec["err_p_l2"]),
                    rate_h1=float(rec["rate_h1"]) if rec["rate_h1"] else None,
                    rate_l2=float(rec["rate_l2"]) if rec["rate_l2"] else None,
                )
                for rec in reader
            ]
        return cls(rows=tuple(rows))


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _rate(prev: float, cur: float) -> float | None:
    if prev > 0.0 and cur > 0.0:
        return math.log2(prev / cur)
    return None


def run_case(case, space, levels, mu: float = 1.0, out=None, stream=None) -> ConvergenceTable:
    """Solve ``case`` with ``space`` on ``levels`` red-refined meshes.

    Level 0 is the case's initial mesh.  Every level interpolates the exact
    velocity as Dirichlet data, solves to a 1e-10 relative residual, checks
    discrete mass conservation, and logs its wall time to ``stream`` (stdout
    by default).  With ``out`` the table is also written as CSV.
    """
    if space not in RUN_SPACES:
        raise UnknownSpace(f"space {space!r} is not solvable; pick one of {RUN_SPACES}")
    case_data = case_library(case)
    if levels < 1:
        raise ValueError("levels must be at least 1")
    stream = sys.stdout if stream is None else stream
    mesh = initial_mesh(case)
    rows: list[LevelResult] = []
    prev = None
    for level in range(levels):
        if level > 0:
            mesh = red_refine(mesh)
        start = time.perf_counter()
        vspace = velocity_space(mesh, space)
        pspace = pressure_space(mesh)
        system = build_system(mesh, vspace, pspace, case_data, mu)
        lifting = interpolate(vspace, case_data.velocity)
        reduced = apply_dirichlet(system, lifting)
        u_f, p = solve_saddle(
            reduced.a_ff,
            reduced.b_f,
            reduced.rhs_f,
            reduced.rhs_g,
            pressure_nullspace=not mesh.has_neumann,
            pressure_weights=mesh.cell_volume,
        )
        u = expand_solution(reduced, u_f)
        div_max = float(np.abs(divergence_means(system.b, u, mesh.cell_volume)).max())
        grad_norm = math.sqrt(max(gram_energy(mesh, vspace, "grad", u), 0.0))
        if div_max > DIVERGENCE_TOL * (1.0 + grad_norm):
            raise AssertionFailed(
                f"discrete mass conservation violated at level {level}: "
                f"max cell-mean divergence {div_max:.3e}"
            )
        errs = error_norms(case_data, mesh, vspace, pspace, u, p)
        wall = time.perf_counter() - start
        row = LevelResult(
            case=case,
            space=space,
            level=level,
            h_max=mesh.h_max,
            n_dof=int(reduced.free.size + pspace.num_dofs),
            nnz=int(reduced.a_ff.nnz + 2 * reduced.b_f.nnz),
            err_u_h1=errs.h1,
            err_u_l2=errs.l2_velocity,
            err_p_l2=errs.l2_pressure,
            rate_h1=None if prev is None else _rate(prev.err_u_h1, errs.h1),
            rate_l2=None if prev is None else _rate(prev.err_u_l2, errs.l2_velocity),
            div_max=div_max,
            grad_norm=grad_norm,
            wall_time=wall,
        )
        if prev is not None and (row.n_dof <= prev.n_dof or row.nnz <= prev.nnz):
            raise AssertionFailed(
                f"system size did not grow from level {level - 1} to {level}"
            )
        print(
            f"# {case} {space} level {level}: h_max={row.h_max:.4g} "
            f"n_dof={row.n_dof} nnz={row.nnz} wall={wall:.2f}s",
            file=stream,
        )
        rows.append(row)
        prev = row
    table = ConvergenceTable(rows=tuple(rows))
    if out is not None:
        table.write_csv(out)
    return table
