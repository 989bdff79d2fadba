# Copyright optdesign authors
# SPDX-License-Identifier: AGPL-3.0-or-later

"""The generate, solve, verify and bench commands.

Each command takes the parsed docopt arguments and returns its exit
code: 0 on success, 1 when a certificate fails.
"""

from __future__ import annotations

import logging as log
import os
from pathlib import Path
from typing import Any

from optdesign.baselines import Method
from optdesign.bench import (
    certify_solved,
    check_combination,
    solve_with,
    sweep,
    write_csv,
)
from optdesign.formulations import optimize
from optdesign.instances import (
    Family,
    InstanceSpec,
    Interfaces,
    Traffic,
    read_design,
    read_problem,
    write_design,
    write_problem,
)
from optdesign.model import Criterion, c_variance, criterion_value
from optdesign.verify import DEFAULT_TOL, CertificateKind, certify

Args = dict[str, Any]

CERTIFICATES = {
    "elfving": CertificateKind.Elfving,
    "kkt": CertificateKind.SBetaKKT,
    "gap": CertificateKind.KieferGap,
    "rank1": CertificateKind.RankOneSDP,
    "budget": CertificateKind.BudgetDuality,
}


def tolerance(args: Args) -> float:
    """``--tol``, else ``OPTDESIGN_TOL``, else the default tolerance."""
    value = args.get("--tol") or os.environ.get("OPTDESIGN_TOL")
    return float(value) if value else DEFAULT_TOL


def _csv(value: str | None) -> list[str]:
    return [part.strip() for part in (value or "").split(",") if part.strip()]


def spec_from_args(args: Args, **overrides: Any) -> InstanceSpec:
    low, high = (float(x) for x in args["--interval"].split(","))
    fields: dict[str, Any] = {
        "family": Family(args["--family"]),
        "seed": int(args["--seed"]),
        "s": int(args["--s"]),
        "m": int(args["--m"]),
        "l": int(args["--l"]),
        "r": int(args["--r"]),
        "degree": int(args["--degree"]),
        "grid": int(args["--grid"]),
        "interval": (low, high),
        "nodes": int(args["--nodes"]),
        "edges": int(args["--edges"]),
        "traffic": Traffic(args["--traffic"]),
        "interfaces": Interfaces(args["--interfaces"]),
        "budget": float(args["--budget"]),
    }
    return InstanceSpec(**{**fields, **overrides})


def cmd_generate(args: Args) -> int:
    spec = spec_from_args(args)
    problem = spec.generate()
    path = Path(args["--out"] or f"{spec.instance_id}.json")
    digest = write_problem(problem, path, spec)
    print(f"{digest}  {path}")
    return 0


def cmd_solve(args: Args) -> int:
    path = Path(args["PROBLEM"])
    problem = read_problem(path)
    criterion = Criterion(args["--criterion"])
    method = Method(args["--method"])
    check_combination(problem, criterion, method)

    dump = Path(args["--dump"]) if args["--dump"] else None
    solved = solve_with(
        problem, criterion, method,
        max_iter = int(args["--max-iter"]),
        dump = dump,
    )
    default = path.with_name(f"{path.stem}.{criterion.value}.json")
    out = Path(args["--out"] or default)
    write_design(
        solved.design, out, problem,
        criterion = criterion.value,
        method = method.value,
        value = solved.value,
    )

    w = solved.design.weights
    lines = [
        f"status      {solved.status}",
        f"value       {solved.value:.12g}",
        f"support     {len(solved.design.support)} of {problem.s}",
        f"iterations  {solved.iterations}",
        f"design      {out}",
    ]
    lines += [f"  w[{i}] = {w[i]:.10g}" for i in solved.design.support]

    recovery = solved.recovery
    if criterion == Criterion.c and problem.is_simplex and recovery:
        c = problem.target_matrix[:, 0]
        u = recovery.primal["u"]
        lines += [
            "variance identities",
            f"  (sum mu)^2   {recovery.value:.12g}",
            f"  (c^T u)^2    {float(c @ u) ** 2:.12g}",
            f"  c^T M^- c    {c_variance(problem, solved.design, c):.12g}",
        ]
    elif method != Method.socp:
        value = criterion_value(problem, solved.design, criterion)
        lines.append(f"criterion   {value:.12g}")
    print("\n".join(lines))

    if not args["--certify"]:
        return 0
    passed = certify_solved(
        problem, criterion, method, solved, tolerance(args),
    )
    print(f"certificate {'PASS' if passed else 'FAIL'}")
    return 0 if passed else 1


def cmd_verify(args: Args) -> int:
    problem = read_problem(Path(args["PROBLEM"]))
    design, document = read_design(Path(args["DESIGN"]), problem)
    criterion = Criterion(document.criterion or args["--criterion"])

    kind = None
    if args["--certificate"]:
        kind = CERTIFICATES[args["--certificate"]]

    bound = None
    if not problem.is_simplex and kind in {
        None, CertificateKind.BudgetDuality,
    }:
        _, solution, _ = optimize(problem, criterion)
        bound = solution.dcost

    found = certify(
        problem, design, criterion,
        kind = kind,
        tol = tolerance(args),
        bound = bound,
    )
    print(found.report())
    if not found.passed:
        log.warning("Violated: %s", ", ".join(found.failed))
    return 0 if found.passed else 1


def _bench_specs(args: Args) -> list[InstanceSpec]:
    base = spec_from_args(args)
    sizes = args["--sizes"]
    seeds = [int(seed) for seed in _csv(args["--seeds"])] or [base.seed]
    if sizes is None:
        return [base.model_copy(update={"seed": seed}) for seed in seeds]

    specs: list[InstanceSpec] = []
    per_param = int(args["--per-param"])
    for seed in seeds:
        for size in (int(n) for n in _csv(sizes)):
            match base.family:
                case Family.random:
                    update = {"m": size, "s": max(base.s, per_param * size)}
                case Family.polynomial:
                    update = {"degree": size}
                case Family.network:
                    links = min(2 * size, size * (size - 1) // 2)
                    update = {"nodes": size, "edges": links}
            specs.append(spec_from_args(args, seed=seed, **update))
    return specs


def cmd_bench(args: Args) -> int:
    criterion = Criterion(args["--criterion"])
    methods = [Method(name) for name in _csv(args["--methods"])]
    records = sweep(
        _bench_specs(args),
        criterion,
        methods,
        jobs = int(args["--jobs"]),
        tol = tolerance(args),
        max_iter = int(args["--max-iter"]),
    )
    out = Path(args["--out"]) if args["--out"] else None
    text = write_csv(records, out)
    if out is None:
        print(text, end="")

    failed = [r for r in records if r.status == "Optimal" and not r.certified]
    if failed:
        log.warning(
            "%d optimal runs failed their certificate: %s",
            len(failed), sorted({r.instance_id for r in failed}),
        )
    return 0
