# Copyright optdesign authors
# SPDX-License-Identifier: AGPL-3.0-or-later

import math

import numpy as np
import pytest

from optdesign.baselines import (
    DegenerateDenominator,
    IterationState,
    MaxIterExceeded,
    Method,
    accelerated_multiplicative_step,
    exchange_step,
    gradient,
    kiefer_ratio,
    multiplicative_step,
    run,
)
from optdesign.formulations import optimize
from optdesign.instances import gen_polynomial
from optdesign.model import Criterion, Design, DesignProblem, criterion_value


def _directional(problem, design, criterion, vertex, step=1e-6):
    """Finite difference of the criterion toward a vertex."""
    target = np.zeros(problem.s)
    target[vertex] = 1
    moved = Design(weights=(1 - step) * design.weights + step * target)
    return (
        criterion_value(problem, moved, criterion)
        - criterion_value(problem, design, criterion)
    ) / step


@pytest.mark.parametrize("criterion", [Criterion.A, Criterion.c])
def test_variance_gradient(random_problem, criterion: Criterion):
    r = 2 if criterion == Criterion.A else 1
    problem = random_problem(seed=11, s=7, m=3, l=2, r=r)
    design = Design(weights=np.arange(1, 8) / 28)
    grad = gradient(problem, design, criterion)

    assert grad.bar == pytest.approx(float(design.weights @ grad.phi))
    assert grad.bar == pytest.approx(
        criterion_value(problem, design, criterion),
    )
    for i in range(problem.s):
        # d/dt Phi((1 - t) w + t e_i) = phi_bar - phi_i
        assert _directional(problem, design, criterion, i) == pytest.approx(
            grad.bar - grad.phi[i], rel=1e-3, abs=1e-5,
        )


def test_d_gradient(random_problem):
    problem = random_problem(seed=12, s=6, m=3, l=2)
    design = Design(weights=np.full(6, 1 / 6))
    grad = gradient(problem, design, Criterion.D)
    assert grad.bar == 3
    assert float(design.weights @ grad.phi) == pytest.approx(3)
    for i in range(problem.s):
        # -(1/m) log det moves by (m - phi_i) / m
        assert _directional(problem, design, Criterion.D, i) == \
            pytest.approx((3 - grad.phi[i]) / 3, rel=1e-3, abs=1e-5)


def test_t_gradient(random_problem):
    problem = random_problem(seed=13, s=5, m=3, l=2).with_target(np.eye(3))
    design = Design(weights=np.full(5, 0.2))
    grad = gradient(problem, design, Criterion.T)
    norms = [float(np.sum(a**2)) for a in problem.observation_matrices]
    np.testing.assert_allclose(grad.phi, norms)
    assert grad.bar == pytest.approx(
        criterion_value(problem, design, Criterion.T),
    )

    vertex = Design(weights=np.eye(5)[int(np.argmax(norms))])
    assert kiefer_ratio(problem, vertex, Criterion.T) == pytest.approx(1)


def test_kiefer_ratio(e1e2: DesignProblem):
    assert kiefer_ratio(e1e2, Design.uniform(2), Criterion.c) == \
        pytest.approx(1)
    assert kiefer_ratio(e1e2, Design(weights=[0.8, 0.2]), Criterion.c) > 1
    assert kiefer_ratio(e1e2, Design(weights=[0.8, 0.2]), Criterion.D) == \
        pytest.approx(1 / 0.2 / 2)


def test_multiplicative_step_improves(random_problem):
    problem = random_problem(seed=14, s=10, m=3)
    state = IterationState(design=Design.uniform(10))
    before = criterion_value(problem, state.design, Criterion.D)
    state = multiplicative_step(problem, state, Criterion.D)
    assert state.iteration == 1
    assert state.design.is_simplex()
    assert state.history[-1] < before


def test_acceleration_steps_further(e1e2: DesignProblem):
    start = IterationState(design=Design(weights=[0.9, 0.1]))
    plain = accelerated_multiplicative_step(
        e1e2, start, Criterion.D, acceleration=0,
    )
    fast = accelerated_multiplicative_step(
        e1e2, start, Criterion.D, acceleration=0.5,
    )

    # Without acceleration the step lands on the optimum itself
    np.testing.assert_allclose(plain.weights, [0.5, 0.5])
    np.testing.assert_allclose(fast.weights, [0.9 * 5 / 13, 1 - 0.9 * 5 / 13])
    assert np.abs(fast.weights - start.weights).sum() > \
        np.abs(plain.weights - start.weights).sum()
    assert fast.history[-1] < -math.log(0.09) / 2


def test_degenerate_denominator(e1e2: DesignProblem):
    # phi = (2, 2) at the uniform design, so gamma = 1 cancels phi_bar
    state = IterationState(design=Design.uniform(2))
    with pytest.raises(DegenerateDenominator):
        accelerated_multiplicative_step(
            e1e2, state, Criterion.D, acceleration=1.0,
        )


def test_exchange_step(random_problem):
    problem = random_problem(seed=15, s=10, m=3)
    for criterion in (Criterion.D, Criterion.A, Criterion.c):
        state = IterationState(design=Design.uniform(10))
        before = criterion_value(problem, state.design, criterion)
        state = exchange_step(problem, state, criterion)
        assert state.history[-1] <= before


@pytest.mark.parametrize("criterion", [Criterion.A, Criterion.D])
def test_exchange_run_converges(random_problem, criterion: Criterion):
    problem = random_problem(seed=19, s=40, m=6, r=2)
    _, _, recovery = optimize(problem, criterion)
    design, state = run(problem, criterion, Method.exchange, max_iter=300)

    assert not state.exceeded
    value = criterion_value(problem, design, criterion)
    if criterion == Criterion.A:
        assert value <= recovery.value * 1.001
    else:
        assert value <= recovery.value + 0.001 + 1e-9


def test_exchange_empties_experiments():
    problem = gen_polynomial(1, (0.0, 3.0), 4)
    design, state = run(
        problem, Criterion.D, Method.exchange, stop_ratio=1 + 1e-6,
    )
    assert state.ratio <= 1 + 1e-6
    np.testing.assert_allclose(design.weights, [0.5, 0, 0, 0.5], atol=1e-6)
    assert design.support == [0, 3]


@pytest.mark.parametrize("method", [Method.mult, Method.accel,
                                    Method.exchange])
def test_run_matches_socp(random_problem, method: Method):
    problem = random_problem(seed=16, s=10, m=3)
    _, _, recovery = optimize(problem, Criterion.D)
    design, state = run(problem, Criterion.D, method, max_iter=20_000)

    assert not state.exceeded
    assert state.ratio <= 1.001
    # A Kiefer ratio of 1 + eps bounds the D-gap by eps
    value = criterion_value(problem, design, Criterion.D)
    assert value - recovery.value <= 0.001 + 1e-7
    assert value >= recovery.value - 1e-6


def test_run_polynomial_line():
    problem = gen_polynomial(1, (0.0, 3.0), 4)
    design, state = run(problem, Criterion.D, Method.mult, stop_ratio=1.0001)
    assert state.ratio <= 1.0001
    np.testing.assert_allclose(design.weights[[0, 3]], [0.5, 0.5], atol=1e-2)


def test_run_iteration_budget(random_problem):
    problem = random_problem(seed=17, s=20, m=4)
    design, state = run(problem, Criterion.D, Method.mult, max_iter=1)
    assert state.exceeded
    assert design.is_simplex()
    assert state.iteration <= 1

    with pytest.raises(MaxIterExceeded):
        run(problem, Criterion.D, Method.mult, max_iter=1, strict=True)


def test_run_rejects():
    problem = gen_polynomial(1, (0.0, 3.0), 4)
    with pytest.raises(ValueError, match="iterative"):
        run(problem, Criterion.D, Method.socp)
    with pytest.raises(ValueError, match="baseline"):
        run(problem, Criterion.S, Method.mult)
