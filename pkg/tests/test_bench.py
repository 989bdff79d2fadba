# Copyright optdesign authors
# SPDX-License-Identifier: AGPL-3.0-or-later

import itertools
import math
import timeit
from pathlib import Path

import numpy as np
import pytest

from optdesign.baselines import Method, kiefer_ratio
from optdesign.bench import (
    COLUMNS,
    check_combination,
    run_one,
    sweep,
    write_csv,
)
from optdesign.conic import Status
from optdesign.formulations import UnsupportedCombination, optimize
from optdesign.instances import Family, InstanceSpec, gen_polynomial
from optdesign.model import Criterion, DesignProblem, c_variance
from optdesign.verify import CertificateKind, certify


def test_check_combination(e1e2: DesignProblem):
    check_combination(e1e2, Criterion.T, Method.socp)
    check_combination(e1e2, Criterion.D, Method.exchange)
    with pytest.raises(UnsupportedCombination, match="T-optimality"):
        check_combination(e1e2, Criterion.T, Method.mult)

    constrained = e1e2.with_constraints(np.ones((1, 2)), [1.0])
    with pytest.raises(UnsupportedCombination, match="constrained c"):
        check_combination(constrained, Criterion.c, Method.accel)


def test_run_one_socp():
    spec = InstanceSpec(family=Family.random, seed=7, s=12, m=3)
    record = run_one(spec, Criterion.c, Method.socp, tol=1e-5)
    assert record.status == "Optimal"
    assert record.certified
    assert (record.s, record.m, record.l, record.r) == (12, 3, 1, 1)
    assert record.gap < 1e-4
    assert record.support >= 1
    assert record.time_ms >= 0


def test_run_one_failure():
    spec = InstanceSpec(family=Family.random, s=2, m=4)
    record = run_one(spec, Criterion.c, Method.socp)
    assert record.status == "Inestimable"
    assert not record.certified
    assert math.isnan(record.value)


def test_sweep_order_and_csv(tmp_path: Path):
    specs = [
        InstanceSpec(family=Family.random, seed=seed, s=8, m=2)
        for seed in (1, 2)
    ]
    records = sweep(
        specs, Criterion.D, [Method.mult, Method.socp], jobs=3, tol=1e-5,
    )
    assert [r.method for r in records] == ["mult", "socp"] * 2
    assert [r.instance_id for r in records][::2] == \
        [spec.instance_id for spec in specs]

    path = tmp_path / "bench.csv"
    text = write_csv(records, path)
    assert path.read_text() == text
    header, *rows = text.splitlines()
    assert header == ",".join(COLUMNS)
    assert len(rows) == 4


@pytest.mark.slow
def test_polynomial_d_optimal_clusters():
    problem = gen_polynomial(5, (0.0, 3.0), 300)
    start = timeit.default_timer()
    _, _, recovery = optimize(problem, Criterion.D)
    elapsed = timeit.default_timer() - start
    design = recovery.design

    assert elapsed < 5
    assert kiefer_ratio(problem, design, Criterion.D) <= 1.001
    assert certify(problem, design, Criterion.D, tol=1e-4).passed

    # An interior support point of the continuous optimum may fall between
    # two grid points and share its weight with both
    heavy = np.flatnonzero(design.weights > 1e-5)
    clusters = np.split(heavy, np.flatnonzero(np.diff(heavy) > 1) + 1)
    assert len(clusters) == 6
    assert all(len(cluster) <= 2 for cluster in clusters)
    totals = [design.weights[cluster].sum() for cluster in clusters]
    np.testing.assert_allclose(totals, 1 / 6, atol=1e-3)
    assert heavy[0] == 0
    assert heavy[-1] == 299


@pytest.mark.slow
@pytest.mark.parametrize("method", [Method.mult, Method.accel])
def test_first_order_agrees_on_a(method: Method):
    spec = InstanceSpec(family=Family.random, seed=11, s=20, m=3, r=3)
    socp = run_one(spec, Criterion.A, Method.socp, tol=1e-5)
    other = run_one(spec, Criterion.A, method, max_iter=50000)
    assert other.status == "Converged"
    assert other.certified
    assert other.value == pytest.approx(socp.value, rel=2e-3)


@pytest.mark.slow
def test_a_optimal_methods_agree_at_scale():
    start = timeit.default_timer()
    for seed in range(10):
        spec = InstanceSpec(
            family=Family.random, seed=seed, s=150, m=75, l=1, r=3,
        )
        socp = run_one(spec, Criterion.A, Method.socp)
        assert socp.status == "Optimal"
        for method in (Method.mult, Method.exchange):
            other = run_one(spec, Criterion.A, method)
            assert other.status == "Converged", method
            assert socp.value * (1 - 1e-6) <= other.value
            assert other.value <= socp.value * 1.001
    assert timeit.default_timer() - start < 60


@pytest.mark.slow
def test_c_duality_over_seeds(random_problem):
    start = timeit.default_timer()
    for seed in range(20):
        problem = random_problem(seed=100 + seed, s=15, m=4, l=2)
        _, solution, recovery = optimize(problem, Criterion.c)
        assert abs(solution.pcost - solution.dcost) <= 1e-6 * (
            1 + abs(solution.pcost)
        )

        c = problem.target_matrix[:, 0]
        chain = [
            c_variance(problem, recovery.design, c),
            solution.pcost**2,
            float(recovery.primal["mu"].sum()) ** 2,
            float(c @ recovery.primal["u"]) ** 2,
        ]
        for first, second in itertools.combinations(chain, 2):
            assert first == pytest.approx(second, rel=1e-6)
    assert timeit.default_timer() - start < 10


@pytest.mark.slow
def test_c_optimal_at_scale(random_problem):
    problem = random_problem(seed=0, s=1024, m=128)
    start = timeit.default_timer()
    _, solution, recovery = optimize(problem, Criterion.c)
    assert solution.status == Status.Optimal
    for kind in (CertificateKind.Elfving, CertificateKind.RankOneSDP):
        found = certify(problem, recovery.design, Criterion.c, kind=kind)
        assert found.passed, found.report()
    assert timeit.default_timer() - start < 60
