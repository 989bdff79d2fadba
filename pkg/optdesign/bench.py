# Copyright optdesign authors
# SPDX-License-Identifier: AGPL-3.0-or-later

"""Benchmark sweeps over instances and methods.

Each run builds its own instance and solver workspace, so runs can be
spread over threads. A failing run becomes a row carrying the name of
its error as status.
"""

from __future__ import annotations

import logging as log
import math
import timeit
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import TYPE_CHECKING

import numpy as np
import pandas as pd

from optdesign.baselines import MAX_ITER, STOP_RATIO, Method, run
from optdesign.formulations import UnsupportedCombination, optimize
from optdesign.instances import InstanceSpec
from optdesign.model import Criterion, criterion_value
from optdesign.utils import OptDesignError, report
from optdesign.verify import (
    DEFAULT_TOL,
    CertificateKind,
    certify,
    optimality_gap,
)

if TYPE_CHECKING:
    from collections.abc import Iterable
    from pathlib import Path

    from optdesign.formulations import Recovery
    from optdesign.model import Design, DesignProblem

COLUMNS = [
    "instance_id", "s", "m", "l", "r", "criterion", "method", "status",
    "value", "gap", "time_ms", "iters", "support", "certified",
]


@dataclass(slots=True)
class BenchRecord:
    instance_id: str
    s: int
    m: int
    l: int  # noqa: E741
    r: int
    criterion: str
    method: str
    status: str
    value: float = math.nan
    gap: float = math.nan
    time_ms: float = math.nan
    iters: int = 0
    support: int = 0
    certified: bool = False


@dataclass(slots=True)
class Solved:
    design: Design
    value: float
    status: str
    iterations: int
    bound: float | None = None
    recovery: Recovery | None = None


def check_combination(
    problem: DesignProblem, criterion: Criterion, method: Method,
) -> None:
    """First-order methods only run on the simplex, and not for T or S."""
    if method == Method.socp:
        return
    if criterion in {Criterion.T, Criterion.S} or not problem.is_simplex:
        what = (
            criterion.value if problem.is_simplex
            else f"constrained {criterion.value}"
        )
        raise UnsupportedCombination(
            f"{what}-optimality is solved with socp only, not {method.value}",
        )


def solve_with(
    problem: DesignProblem,
    criterion: Criterion,
    method: Method,
    max_iter: int = MAX_ITER,
    stop_ratio: float = STOP_RATIO,
    dump: Path | None = None,
) -> Solved:
    check_combination(problem, criterion, method)
    if method == Method.socp:
        _, solution, recovery = optimize(problem, criterion, dump=dump)
        return Solved(
            design = recovery.design,
            value = recovery.value,
            status = solution.status.value,
            iterations = solution.iterations,
            bound = solution.dcost,
            recovery = recovery,
        )

    design, state = run(
        problem, criterion, method, stop_ratio=stop_ratio, max_iter=max_iter,
    )
    return Solved(
        design = design,
        value = criterion_value(problem, design, criterion),
        status = "MaxIter" if state.exceeded else "Converged",
        iterations = state.iteration,
    )


def certify_solved(
    problem: DesignProblem,
    criterion: Criterion,
    method: Method,
    solved: Solved,
    tol: float = DEFAULT_TOL,
    stop_ratio: float = STOP_RATIO,
) -> bool:
    """Exact certificate for socp, the stopping gap for the others."""
    if method == Method.socp:
        found = certify(
            problem, solved.design, criterion, tol=tol, bound=solved.bound,
        )
    else:
        found = certify(
            problem, solved.design, criterion,
            kind = CertificateKind.KieferGap,
            tol = max(tol, stop_ratio - 1),
        )
    if not found.passed:
        log.warning("Certificate failed:\n%s", found.report())
    return found.passed


def run_one(
    spec: InstanceSpec,
    criterion: Criterion,
    method: Method,
    tol: float = DEFAULT_TOL,
    max_iter: int = MAX_ITER,
) -> BenchRecord:
    dims = spec.dims
    record = BenchRecord(
        instance_id = spec.instance_id,
        s = dims.get("s", 0),
        m = dims.get("m", 0),
        l = dims.get("l", 0),
        r = dims.get("r", 0),
        criterion = criterion.value,
        method = method.value,
        status = "Error",
    )

    errors = (OptDesignError, np.linalg.LinAlgError)
    with report(*errors, msg=f"{spec.instance_id} {method.value}") as caught:
        problem = spec.generate()
        record.s, record.m = problem.s, problem.num_params
        record.l = max(a.shape[0] for a in problem.observation_matrices)
        if problem.target is not None:
            record.r = problem.target_matrix.shape[1]

        start = timeit.default_timer()
        solved = solve_with(problem, criterion, method, max_iter)
        record.time_ms = (timeit.default_timer() - start) * 1000

        record.status = solved.status
        record.value = solved.value
        record.iters = solved.iterations
        record.support = len(solved.design.support)
        if problem.is_simplex and criterion != Criterion.S:
            record.gap = optimality_gap(problem, solved.design, criterion)
        record.certified = certify_solved(
            problem, criterion, method, solved, tol,
        )

    if caught:
        record.status = type(caught[0]).__name__
    return record


def sweep(
    specs: Iterable[InstanceSpec],
    criterion: Criterion,
    methods: Iterable[Method],
    jobs: int = 1,
    tol: float = DEFAULT_TOL,
    max_iter: int = MAX_ITER,
) -> list[BenchRecord]:
    """Run every method on every instance, records in sweep order."""
    methods = list(methods)
    runs = [(spec, method) for spec in specs for method in methods]
    with ThreadPoolExecutor(max_workers=max(jobs, 1)) as pool:
        return list(pool.map(
            lambda job: run_one(job[0], criterion, job[1], tol, max_iter),
            runs,
        ))


def table(records: Iterable[BenchRecord]) -> pd.DataFrame:
    return pd.DataFrame([asdict(r) for r in records], columns=COLUMNS)


def write_csv(records: Iterable[BenchRecord], path: Path | None) -> str:
    """CSV of the records, also written to ``path`` when given."""
    text = table(records).to_csv(index=False, float_format="%.12g")
    if path:
        path.write_text(text)
    return text
