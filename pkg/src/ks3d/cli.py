"""Command-line driver.

Subcommands: ``run`` (convergence study, CSV plus SVG), ``stability``
(Korn and inf-sup constants as NDJSON records), ``counterexample``
(degeneracy witnesses), ``check`` (mesh assumption report), and ``plot``
(re-render an existing CSV).

Exit codes: 0 success, 2 a numerical assertion failed, 3 the solver failed,
4 bad input (unknown names, unreadable files, malformed arguments).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .convergence import RUN_SPACES, ConvergenceTable, run_case
from .domains import cube_mesh, octa_patch
from .errors import (
    AssertionFailed,
    Indefinite,
    KS3DError,
    NotConverged,
    SingularSaddle,
)
from .manufactured import CASE_NAMES
from .mesh import check_H1, check_H2, read_mesh_file, red_refine
from .plotting import emit_plot
from .spaces import VELOCITY_SPACE_NAMES
from .stability import counterexample_infsup, counterexample_korn, infsup_constant, korn_constant

__all__ = ["main"]

EXIT_OK = 0
EXIT_ASSERTION = 2
EXIT_SOLVER = 3
EXIT_INPUT = 4

BUILTIN_MESHES = {"octa-patch": octa_patch, "cube": cube_mesh}


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors, which collides with the exit
    # code reserved for failed numerical assertions
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="ks3d", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="convergence study on red-refined meshes")
    run.add_argument("--case", required=True, choices=CASE_NAMES)
    run.add_argument("--space", required=True, choices=RUN_SPACES)
    run.add_argument("--levels", required=True, type=int)
    run.add_argument("--mu", type=float, default=1.0)
    run.add_argument("--out", required=True, help="CSV output path; an SVG is rendered alongside")

    stab = sub.add_parser("stability", help="Korn and inf-sup constants per level")
    source = stab.add_mutually_exclusive_group(required=True)
    source.add_argument("--builtin", choices=sorted(BUILTIN_MESHES))
    source.add_argument("--mesh", help="ASCII mesh file")
    stab.add_argument("--space", required=True, choices=VELOCITY_SPACE_NAMES)
    stab.add_argument("--levels", type=int, default=1)

    ce = sub.add_parser("counterexample", help="run a degeneracy witness")
    ce.add_argument("kind", choices=("infsup", "korn-wedge", "korn-tensor"))
    ce.add_argument("--a", type=float, default=1.0, help="amplitude of the wedge kernel field")

    chk = sub.add_parser("check", help="report mesh assumption violations")
    chk.add_argument("--mesh", required=True)

    plot = sub.add_parser("plot", help="render an SVG from an existing CSV")
    plot.add_argument("--in", dest="table", required=True)
    plot.add_argument("--out", required=True)
    return parser


def _cmd_run(args) -> int:
    out = Path(args.out)
    table = run_case(args.case, args.space, args.levels, mu=args.mu, out=out)
    print(f"# wrote {out}")
    if len(table.rows) >= 2:
        svg = out.with_suffix(".svg")
        emit_plot(table, svg)
        print(f"# wrote {svg}")
    else:
        print("# one level only; no convergence plot")
    return EXIT_OK


def _cmd_stability(args) -> int:
    if args.levels < 1:
        raise ValueError("levels must be at least 1")
    if args.builtin is not None:
        mesh = BUILTIN_MESHES[args.builtin]()
        origin = args.builtin
    else:
        mesh = read_mesh_file(args.mesh)
        origin = args.mesh
    for level in range(args.levels):
        if level > 0:
            mesh = red_refine(mesh)
        for compute in (korn_constant, infsup_constant):
            report = compute(mesh, args.space, level=level)
            print(
                f"# {origin} level {level}: {report.kind} constant "
                f"{report.constant:.6e} ({report.verdict})"
            )
            print(
                json.dumps(
                    {
                        "kind": report.kind,
                        "space": report.space,
                        "level": level,
                        "constant": report.constant,
                        "verdict": report.verdict,
                    }
                )
            )
    return EXIT_OK


def _cmd_counterexample(args) -> int:
    if args.kind == "infsup":
        report = counterexample_infsup()
    else:
        report = counterexample_korn(args.kind.removeprefix("korn-"), amplitude=args.a)
    for name, value in report.checks.items():
        print(f"# {name} = {value:.6e}")
    print(
        json.dumps(
            {
                "kind": report.kind,
                "space": report.space,
                "constant": report.constant,
                "checks": report.checks,
            }
        )
    )
    return EXIT_OK


def _cmd_check(args) -> int:
    mesh = read_mesh_file(args.mesh)
    violations = check_H2(mesh) + check_H1(mesh)
    if not violations:
        print(f"# {args.mesh}: both mesh assumptions hold")
        return EXIT_OK
    for v in violations:
        where = "" if v.face is None else f" (face {v.face})"
        print(f"# {args.mesh}: {v.assumption} violated: {v.reason}{where}")
    return EXIT_ASSERTION


def _cmd_plot(args) -> int:
    table = ConvergenceTable.from_csv(args.table)
    emit_plot(table, args.out)
    print(f"# wrote {args.out}")
    return EXIT_OK


_HANDLERS = {
    "run": _cmd_run,
    "stability": _cmd_stability,
    "counterexample": _cmd_counterexample,
    "check": _cmd_check,
    "plot": _cmd_plot,
}


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse --help (0) or remapped usage error (4)
        return int(exc.code or 0)
    try:
        return _HANDLERS[args.command](args)
    except AssertionFailed as exc:
        print(f"ks3d: assertion failed: {exc}", file=sys.stderr)
        return EXIT_ASSERTION
    except (NotConverged, SingularSaddle, Indefinite) as exc:
        print(f"ks3d: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (KS3DError, ValueError, OSError) as exc:
        print(f"ks3d: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    raise SystemExit(main())
