"""Command-line front end.

Subcommands:
  run              convergence study on a mesh family, CSV + gnuplot output
  projector-rates  measured approximation orders of the two cell projectors
  check-laws       structural-inequality and Jacobian checks for a given p
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

from . import harness, law as law_mod, mesh as mesh_mod
from .polybasis import INF, projector_rate_study
from .fields import exp_field
from .solver import NewtonConfig

FAMILY_CHOICES = ("triangular", "cartesian", "locally-refined", "hexagonal")


def _family_key(name: str) -> str:
    return name.replace("-", "_")


def _cmd_run(args) -> int:
    family = _family_key(args.family)
    law = law_mod.p_laplacian(args.p)
    levels = range(args.start_level, args.start_level + args.levels)
    config = NewtonConfig(atol=args.newton_tol, condense=args.condense,
                          boost=args.quad_boost)
    study = harness.run_study(family, args.degree, law, args.case, levels,
                              config=config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_text = harness.study_to_csv(study)
    (out / "study.csv").write_text(csv_text)
    (out / "study.gp").write_text(harness.gnuplot_script("study.csv", study))
    if args.write_meshes:
        for row in study.rows:
            m = mesh_mod.generate(family, row.level)
            (out / f"mesh_level{row.level}.txt").write_text(
                mesh_mod.write_mesh(m))
    sys.stdout.write(csv_text)
    if not study.converged:
        sys.stderr.write("solver diverged; see the last CSV row\n")
        return 1
    return 0


def _cmd_projector_rates(args) -> int:
    field = exp_field(1.0, 1.0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["projector,kind,m,p,slope,expected"]
    ok = True
    for name in ("l2", "elliptic"):
        res = projector_rate_study(field, args.degree, name,
                                   exactness=args.exactness)
        s = res["order"]
        for kind in ("cell", "trace"):
            for (m, p), rec in sorted(res[kind].items()):
                pn = "inf" if p == INF else repr(float(p))
                lines.append(f"{name},{kind},{m},{pn},"
                             f"{rec['slope']!r},{s - m}")
                if abs(rec["slope"] - (s - m)) > args.tol:
                    ok = False
    text = "\n".join(lines) + "\n"
    (out / "projector_rates.csv").write_text(text)
    sys.stdout.write(text)
    if not ok:
        sys.stderr.write(f"some slopes deviate more than {args.tol}\n")
        return 1
    return 0


def _cmd_check_laws(args) -> int:
    law = law_mod.p_laplacian(args.p)
    jac = law_mod.jacobian_check(law, seed=args.seed)
    sys.stdout.write(f"jacobian vs finite differences: {jac:.3e}\n")
    ok = jac <= 1e-5
    for rep in law_mod.check_all_inequalities(law, n=args.n, seed=args.seed):
        verdict = "PASS" if rep.passed else "FAIL"
        sys.stdout.write(f"{rep.ineq_id:10s} p={rep.p}  n={rep.n_samples}  "
                         f"max_violation={rep.max_violation:+.3e}  {verdict}\n")
        ok = ok and rep.passed
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hho")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="convergence study")
    run.add_argument("--family", choices=FAMILY_CHOICES, default="triangular")
    run.add_argument("--degree", type=int, default=1, metavar="K")
    run.add_argument("--p", type=float, default=2.0)
    run.add_argument("--case", choices=harness.CASES, default="trigonometric")
    run.add_argument("--levels", type=int, default=4,
                     help="number of refinement levels")
    run.add_argument("--start-level", type=int, default=2)
    run.add_argument("--out", default="out")
    run.add_argument("--condense", action="store_true",
                     help="statically condense cell unknowns")
    run.add_argument("--newton-tol", type=float, default=1e-10)
    run.add_argument("--quad-boost", type=int, default=0,
                     help="extra quadrature exactness")
    run.add_argument("--write-meshes", action="store_true")
    run.set_defaults(func=_cmd_run)

    pr = sub.add_parser("projector-rates", help="projector approximation orders")
    pr.add_argument("--degree", type=int, default=2, metavar="L")
    pr.add_argument("--out", default="out")
    pr.add_argument("--exactness", type=int, default=30)
    pr.add_argument("--tol", type=float, default=0.2)
    pr.set_defaults(func=_cmd_projector_rates)

    cl = sub.add_parser("check-laws", help="flux structure checks")
    cl.add_argument("--p", type=float, required=True)
    cl.add_argument("--n", type=int, default=100_000)
    cl.add_argument("--seed", type=int, default=12345)
    cl.set_defaults(func=_cmd_check_laws)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
