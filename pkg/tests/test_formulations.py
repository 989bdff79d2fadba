# Copyright optdesign authors
# SPDX-License-Identifier: AGPL-3.0-or-later

import logging
import math

import numpy as np
import pytest

from optdesign.conic import IrrationalBeta, SecondOrderCone, solve
from optdesign.formulations import (
    Kind,
    UnsupportedCombination,
    augment_a_optimal,
    build,
    build_a_optimal,
    build_augmented_a_optimal,
    build_c_optimal,
    build_constrained_c_optimal,
    nested_models,
    optimize,
    polish_s_design,
    recover,
)
from optdesign.instances import gen_polynomial
from optdesign.model import (
    Criterion,
    Design,
    DesignProblem,
    Inestimable,
    SubModel,
    c_variance,
    criterion_value,
)


def test_c_optimal_two_points(e1e2: DesignProblem):
    _, solution, recovery = optimize(e1e2, Criterion.c)
    np.testing.assert_allclose(recovery.design.weights, [0.5, 0.5], atol=1e-6)
    assert recovery.value == pytest.approx(4, rel=1e-6)
    np.testing.assert_allclose(recovery.primal["u"], [1, 1], atol=1e-5)
    for h in recovery.blocks:
        np.testing.assert_allclose(np.abs(h), [1], atol=1e-5)
    assert -solution.pcost == pytest.approx(2, rel=1e-7)


def test_c_optimal_identity(identity: DesignProblem):
    _, _, recovery = optimize(identity, Criterion.c)
    assert recovery.value == pytest.approx(2, rel=1e-6)
    np.testing.assert_allclose(
        recovery.primal["u"], np.ones(2) / math.sqrt(2), atol=1e-6,
    )
    assert np.linalg.norm(recovery.primal["u"]) == pytest.approx(1, abs=1e-6)


def test_elfving_program_shape(e1e2: DesignProblem):
    result = build_c_optimal(e1e2)
    assert result.kind == Kind.Elfving
    assert result.program.cone_spec == (SecondOrderCone(2),) * 2
    assert result.program.num_variables == 2


@pytest.mark.parametrize("seed", range(5))
def test_duality_identities(random_problem, seed: int):
    problem = random_problem(seed=seed, s=12, m=3)
    _, solution, recovery = optimize(problem, Criterion.c)
    c = problem.target

    # (sum mu)^2 = (c^T u)^2 = c^T M(w)^- c at the optimum
    u, mu = recovery.primal["u"], recovery.primal["mu"]
    assert abs(solution.pcost - solution.dcost) <= 1e-7 * max(
        1, abs(solution.pcost),
    )
    assert float(mu.sum()) ** 2 == pytest.approx(recovery.value)
    assert float(c @ u) ** 2 == pytest.approx(recovery.value, rel=1e-6)
    assert c_variance(problem, recovery.design, c) == pytest.approx(
        recovery.value, rel=1e-6,
    )
    assert recovery.design.is_simplex()


def test_a_optimal_formulations_agree(random_problem):
    problem = random_problem(seed=7, s=15, m=3, l=2, r=2)
    direct = recover(*_solved(build_a_optimal(problem)))
    augmented = recover(*_solved(build_augmented_a_optimal(problem)))

    assert direct.value == pytest.approx(augmented.value, rel=1e-6)
    assert criterion_value(problem, direct.design, Criterion.A) == \
        pytest.approx(direct.value, rel=1e-5)
    assert direct.primal["u"].shape == (3, 2)
    assert augmented.primal["u"].shape == (3, 2)
    k = problem.target_matrix
    for found in (direct, augmented):
        assert float(np.sum(k * found.primal["u"])) ** 2 == pytest.approx(
            found.value, rel=1e-6,
        )


def _solved(result):
    return result, solve(result.program)


def test_augmented_problem(random_problem):
    problem = random_problem(seed=1, s=5, m=3, l=2, r=2)
    augmented = augment_a_optimal(problem)
    assert augmented.num_params == 6
    assert augmented.observation_matrices[0].shape == (4, 6)
    np.testing.assert_allclose(
        augmented.target, problem.target_matrix.T.ravel(),
    )


def test_constrained_matches_simplex(random_problem):
    problem = random_problem(seed=2, s=10, m=3)
    _, _, simplex = optimize(problem, Criterion.c)

    constrained = problem.with_constraints(np.ones((1, 10)), [1.0])
    _, solution, budget = optimize(constrained, Criterion.c)
    assert budget.value == pytest.approx(simplex.value, rel=1e-6)
    assert solution.dcost == pytest.approx(simplex.value, rel=1e-6)
    assert float(budget.primal["mu"].sum()) == pytest.approx(budget.value)


def test_doubling_budget_halves_variance(random_problem):
    problem = random_problem(seed=4, s=10, m=3)
    rng = np.random.default_rng(0)
    r = rng.uniform(0.5, 1.5, (2, 10))
    b = np.array([1.0, 0.8])

    _, _, base = optimize(problem.with_constraints(r, b), Criterion.c)
    _, _, doubled = optimize(problem.with_constraints(r, 2 * b), Criterion.c)
    assert doubled.value == pytest.approx(base.value / 2, rel=1e-5)
    assert np.all(r @ base.design.weights <= b + 1e-7)


def test_constrained_explicit_arguments(e1e2: DesignProblem):
    result = build_constrained_c_optimal(
        e1e2, r=np.array([[1.0, 0.0], [0.0, 1.0]]), b=[0.25, 1.0],
    )
    recovery = recover(*_solved(result))
    # w = (1/4, 1) gives 1/w_1 + 1/w_2 = 5
    assert recovery.value == pytest.approx(5, rel=1e-6)
    np.testing.assert_allclose(
        recovery.design.weights, [0.25, 1.0], atol=1e-6,
    )
    assert recovery.design.total == pytest.approx(1.25, abs=1e-6)


def test_constrained_unbounded_warns(e1e2: DesignProblem, caplog):
    # R w <= b with R = (1, -1) leaves every direction with w_1 <= w_2 open
    problem = e1e2.with_constraints(np.array([[1.0, -1.0]]), [0.5])
    with caplog.at_level(logging.WARNING):
        build(problem, Criterion.c)
    assert "unbounded" in caplog.text


def test_t_optimal_identity_target(random_problem):
    problem = random_problem(seed=5, s=9, m=3, l=2).with_target(np.eye(3))
    _, _, recovery = optimize(problem, Criterion.T)
    norms = [
        float(np.linalg.norm(a)) ** 2 for a in problem.observation_matrices
    ]
    best = max(norms)
    assert recovery.value == pytest.approx(best, rel=1e-6)
    assert criterion_value(problem, recovery.design, Criterion.T) == \
        pytest.approx(best, rel=1e-5)
    # All weight sits on the largest experiments
    for i in recovery.design.support:
        assert norms[i] == pytest.approx(best, rel=1e-4)
    assert recovery.formal_only


def test_t_optimal_value(e1e2: DesignProblem):
    # K = e_1: trace C_K(w) = w_1, maximal at the first experiment
    problem = e1e2.with_target(np.array([[1.0], [0.0]]))
    _, _, recovery = optimize(problem, Criterion.T)
    assert recovery.value == pytest.approx(1, rel=1e-6)
    np.testing.assert_allclose(recovery.design.weights, [1, 0], atol=1e-6)
    assert not recovery.formal_only


def test_d_optimal_two_points(e1e2: DesignProblem):
    _, _, recovery = optimize(e1e2, Criterion.D)
    np.testing.assert_allclose(recovery.design.weights, [0.5, 0.5], atol=1e-6)
    assert recovery.value == pytest.approx(math.log(2), abs=1e-6)


def test_d_optimal_line():
    problem = gen_polynomial(1, (0.0, 3.0), 4)
    _, _, recovery = optimize(problem, Criterion.D)
    np.testing.assert_allclose(
        recovery.design.weights, [0.5, 0, 0, 0.5], atol=1e-6,
    )
    assert recovery.value == pytest.approx(
        criterion_value(problem, recovery.design, Criterion.D), abs=1e-6,
    )


def test_polish_reaches_vertices():
    problem = nested_models(gen_polynomial(1, (0.0, 3.0), 4))
    polished = polish_s_design(problem, Design.uniform(4))
    np.testing.assert_allclose(polished.weights, [0.5, 0, 0, 0.5], atol=1e-9)
    assert polished.weights[1] == polished.weights[2] == 0


def test_polish_improves(random_problem):
    problem = nested_models(random_problem(seed=8, s=15, m=3))
    start = Design.uniform(15)
    polished = polish_s_design(problem, start)
    assert polished.is_simplex()
    assert criterion_value(problem, polished, Criterion.S) < \
        criterion_value(problem, start, Criterion.S)


def test_polish_keeps_singular_design(e1e2: DesignProblem):
    problem = nested_models(e1e2)
    design = Design(weights=[1, 0])
    np.testing.assert_array_equal(
        polish_s_design(problem, design).weights, [1, 0],
    )


def test_nested_models(random_problem):
    problem = random_problem(seed=0, s=6, m=3)
    nested = nested_models(problem)
    assert nested.models is not None
    assert nested.beta is not None
    assert [model.num_params for model in nested.models] == [1, 2, 3]
    np.testing.assert_allclose(nested.beta, np.full(3, 1 / 3))

    design = Design(weights=np.linspace(1, 2, 6) / np.linspace(1, 2, 6).sum())
    assert criterion_value(nested, design, Criterion.S) == pytest.approx(
        criterion_value(problem, design, Criterion.D),
    )


def test_s_optimal_single_model(e1e2: DesignProblem):
    problem = DesignProblem(
        observation_matrices = e1e2.observation_matrices,
        num_params = 2,
        models = [SubModel(
            observation_matrices = e1e2.observation_matrices,
            target = [1, 1],
        )],
        beta = [1.0],
    )
    _, _, recovery = optimize(problem, Criterion.S)
    assert recovery.value == pytest.approx(math.log(4), abs=1e-6)
    np.testing.assert_allclose(recovery.design.weights, [0.5, 0.5], atol=1e-6)


def test_s_optimal_zero_belief(e1e2: DesignProblem):
    first = SubModel(observation_matrices=[[[1.0]], [[0.0]]], target=[1.0])
    full = SubModel(
        observation_matrices = e1e2.observation_matrices, target = [0, 1],
    )
    problem = DesignProblem(
        observation_matrices = e1e2.observation_matrices,
        num_params = 2,
        models = [first, full],
        beta = [0.0, 1.0],
    )
    _, _, recovery = optimize(problem, Criterion.S)
    # Only the second coordinate matters
    np.testing.assert_allclose(recovery.design.weights, [0, 1], atol=1e-6)
    assert recovery.value == pytest.approx(0, abs=1e-6)


def test_s_optimal_irrational_beta(e1e2: DesignProblem):
    model = SubModel(
        observation_matrices = e1e2.observation_matrices, target = [1, 0],
    )
    problem = DesignProblem(
        observation_matrices = e1e2.observation_matrices,
        num_params = 2,
        models = [model, model],
        beta = [1 / math.pi, 1 - 1 / math.pi],
    )
    with pytest.raises(IrrationalBeta):
        optimize(problem, Criterion.S)


def test_inestimable_target(random_problem):
    problem = random_problem(seed=0, s=2, m=4)
    with pytest.raises(Inestimable):
        optimize(problem, Criterion.c)


def test_unsupported_combinations(e1e2: DesignProblem):
    constrained = e1e2.with_constraints(np.ones((1, 2)), [1.0])
    for criterion in (Criterion.A, Criterion.T, Criterion.D):
        with pytest.raises(UnsupportedCombination):
            optimize(constrained, criterion)
    with pytest.raises(UnsupportedCombination):
        optimize(e1e2, Criterion.S)


def test_augmented_requires_simplex(random_problem):
    problem = random_problem(seed=2, s=6, m=2, r=2)
    constrained = problem.with_constraints(np.ones((1, 6)), [1.0])
    with pytest.raises(UnsupportedCombination, match="simplex"):
        build_augmented_a_optimal(constrained)
