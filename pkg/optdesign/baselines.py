# Copyright optdesign authors
# SPDX-License-Identifier: AGPL-3.0-or-later

"""First-order design algorithms stopped by the Kiefer equivalence ratio.

For a design ``w`` the gradient function ``phi_i(w)`` measures how much
experiment ``i`` would improve the criterion, and ``phi_bar(w) =
sum_i w_i phi_i(w)``. A design is optimal exactly when
``max_i phi_i = phi_bar``:

- D: ``phi_i = trace(M^-1 A_i^T A_i)``, ``phi_bar = m``
- A (and c with one column): ``phi_i = ||A_i M^- K||_F^2``,
  ``phi_bar = trace(K^T M^- K)``
- T: ``phi_i = ||A_i U||_F^2`` with ``U`` minimizing ``trace(U^T M U)``
  under ``K^T U = I``, ``phi_bar = Phi_T(w)``

The multiplicative and accelerated updates are the classic reconstructions
built on these gradients; the exchange step trades weight between
the experiments with the largest and smallest gradients, Fedorov style.
"""

from __future__ import annotations

import logging as log
from dataclasses import dataclass, field, replace
from enum import auto
from typing import TYPE_CHECKING

import numpy as np
import scipy.linalg
import scipy.optimize

from optdesign.model import (
    PINV_CUTOFF,
    Criterion,
    Design,
    DesignProblem,
    InformationMatrix,
    criterion_value,
    information_matrix,
    log_det,
    t_minimizer,
)
from optdesign.utils import AutoStrEnum, OptDesignError

if TYPE_CHECKING:
    from numpy.typing import NDArray

    FloatArray = NDArray[np.float64]

STOP_RATIO = 1.001
MAX_ITER = 10_000
POWER = 0.9
ACCELERATION = {Criterion.A: 0.9, Criterion.c: 0.9, Criterion.D: 0.5}
OPTIMAL_RATIO = 1 + 1e-12
SWAP_XATOL = 1e-9
SWAP_LOG_FLOOR = -30.0


class DegenerateDenominator(OptDesignError):
    """The accelerated update divides by zero."""


class MaxIterExceeded(OptDesignError):
    """The stopping ratio was not reached within the iteration budget."""


class Method(AutoStrEnum):
    socp = auto()
    mult = auto()
    accel = auto()
    exchange = auto()


@dataclass(frozen=True, slots=True)
class Gradient:
    phi: FloatArray
    bar: float

    @property
    def ratio(self) -> float:
        return float(self.phi.max()) / self.bar

    @property
    def best(self) -> int:
        return int(np.argmax(self.phi))


@dataclass(frozen=True, slots=True)
class IterationState:
    design: Design
    iteration: int = 0
    history: tuple[float, ...] = ()
    ratio: float = np.inf
    power: float = POWER
    acceleration: float = 0.5
    exceeded: bool = False

    @property
    def weights(self) -> FloatArray:
        return self.design.weights

    def advance(
        self,
        problem: DesignProblem,
        criterion: Criterion,
        weights: FloatArray,
        ratio: float,
    ) -> IterationState:
        """Next state on the simplex, recording the new criterion value."""
        weights = np.maximum(weights, 0)
        weights = weights / weights.sum()
        return replace(
            self,
            design = Design(weights=weights),
            iteration = self.iteration + 1,
            history = (*self.history, _value(problem, weights, criterion)),
            ratio = ratio,
        )


def _row_sums(
    problem: DesignProblem, rows: FloatArray,
) -> FloatArray:
    """Sum per-row quantities of the stacked observations per experiment."""
    sizes = [a.shape[0] for a in problem.observation_matrices]
    starts = np.cumsum([0, *sizes[:-1]])
    return np.add.reduceat(rows, starts)


def gradient(
    problem: DesignProblem, design: Design, criterion: Criterion,
) -> Gradient:
    info = information_matrix(problem, design)
    stacked, _ = problem.stacked

    match criterion:
        case Criterion.D:
            log_det(info)
            solved = np.linalg.solve(info.matrix, stacked.T)
            phi = _row_sums(problem, np.sum(stacked.T * solved, axis=0))
            return Gradient(phi, float(problem.num_params))
        case Criterion.A | Criterion.c:
            k = problem.target_matrix
            info.check_estimable(k)
            projected = stacked @ (info.pinv() @ k)
            phi = _row_sums(problem, np.sum(projected**2, axis=1))
            bar = float(np.trace(k.T @ info.pinv() @ k))
            return Gradient(phi, bar)
        case Criterion.T:
            return _t_gradient(problem, info, stacked)
        case Criterion.S:
            raise ValueError("No gradient baseline for the S-criterion")


def _t_gradient(
    problem: DesignProblem, info: InformationMatrix, stacked: FloatArray,
) -> Gradient:
    """Gradient of the formal T-criterion ``trace C_K(w)``.

    ``phi_i = ||A_i U||_F^2`` at the Gauss-Markov minimizer ``U``, so that
    ``phi_bar = sum_i w_i phi_i`` is the criterion itself.
    """
    u = t_minimizer(info, problem.target_matrix)
    phi = _row_sums(problem, np.sum((stacked @ u) ** 2, axis=1))
    return Gradient(phi, float(info.design.weights @ phi))


def kiefer_ratio(
    problem: DesignProblem, design: Design, criterion: Criterion,
) -> float:
    """``max_i phi_i / phi_bar``, at least 1 and 1 only at an optimum."""
    return gradient(problem, design, criterion).ratio


def _value(
    problem: DesignProblem, weights: FloatArray, criterion: Criterion,
) -> float:
    """Criterion to minimize (T is negated)."""
    design = Design(weights=weights)
    value = criterion_value(problem, design, criterion)
    return -value if criterion == Criterion.T else value


def multiplicative_step(
    problem: DesignProblem,
    state: IterationState,
    criterion: Criterion,
    power: float | None = None,
) -> IterationState:
    power = state.power if power is None else power
    grad = gradient(problem, state.design, criterion)
    weights = state.weights * grad.phi**power
    return state.advance(problem, criterion, weights, grad.ratio)


def accelerated_multiplicative_step(
    problem: DesignProblem,
    state: IterationState,
    criterion: Criterion,
    acceleration: float | None = None,
) -> IterationState:
    gamma = state.acceleration if acceleration is None else acceleration
    grad = gradient(problem, state.design, criterion)
    shift = gamma * float(grad.phi.min())
    denominator = grad.bar - shift
    if abs(denominator) <= np.finfo(float).eps * max(abs(grad.bar), 1):
        raise DegenerateDenominator(
            f"phi_bar {grad.bar} equals gamma * phi_min {shift}",
        )
    weights = state.weights * (grad.phi - shift) / denominator
    return state.advance(problem, criterion, weights, grad.ratio)


def _line_search(
    problem: DesignProblem,
    weights: FloatArray,
    vertex: int,
    criterion: Criterion,
) -> float:
    target = np.zeros_like(weights)
    target[vertex] = 1

    def value(alpha: float) -> float:
        try:
            return _value(problem, (1 - alpha) * weights + alpha * target,
                          criterion)
        except OptDesignError:
            return np.inf

    found = scipy.optimize.minimize_scalar(
        value, bounds=(0, 1), method="bounded", options={"xatol": 1e-10},
    )
    alpha = float(found.x)
    return alpha if value(alpha) < value(0.0) else 0.0


def _vertex_step(
    problem: DesignProblem,
    state: IterationState,
    criterion: Criterion,
    grad: Gradient,
) -> IterationState:
    """Wynn step from ``w`` toward the experiment with the largest gradient."""
    weights = state.weights
    vertex = grad.best

    alpha = 0.0
    if grad.ratio > OPTIMAL_RATIO:
        if criterion == Criterion.D:
            d, m = float(grad.phi[vertex]), problem.num_params
            alpha = float(np.clip((d / m - 1) / (d - 1), 0, 1))
            moved = (1 - alpha) * weights
            moved[vertex] += alpha
            if _value(problem, moved, criterion) > _value(
                problem, weights, criterion,
            ):
                alpha = _line_search(problem, weights, vertex, criterion)
        else:
            alpha = _line_search(problem, weights, vertex, criterion)

    moved = (1 - alpha) * weights
    moved[vertex] += alpha
    return state.advance(problem, criterion, moved, grad.ratio)


@dataclass(slots=True)
class _Exchange:
    """``M^-1`` of a design, kept current through low-rank swaps.

    Moving ``delta`` from experiment ``j`` to ``i`` adds ``U C U^T`` to
    ``M`` with ``U = [A_i^T, A_j^T]`` and ``C = diag(delta I, -delta I)``,
    so the criterion changes through ``I + C U^T M^-1 U`` only.
    """
    problem: DesignProblem
    criterion: Criterion
    stacked: FloatArray
    inverse: FloatArray

    @classmethod
    def start(
        cls, problem: DesignProblem, design: Design, criterion: Criterion,
    ) -> _Exchange | None:
        info = information_matrix(problem, design)
        if criterion == Criterion.D:
            log_det(info)
        values = np.linalg.eigvalsh(info.matrix)
        if values[0] <= PINV_CUTOFF * values[-1]:
            return None
        inverse = scipy.linalg.cho_solve(
            scipy.linalg.cho_factor(info.matrix), np.eye(problem.num_params),
        )
        return cls(problem, criterion, problem.stacked[0], inverse)

    @property
    def solved(self) -> FloatArray:
        return self.inverse @ self.problem.target_matrix

    def phi(self) -> FloatArray:
        if self.criterion == Criterion.D:
            rows = np.sum(self.stacked * (self.stacked @ self.inverse), axis=1)
        else:
            rows = np.sum((self.stacked @ self.solved) ** 2, axis=1)
        return _row_sums(self.problem, rows)

    def swap(self, weights: FloatArray, i: int, j: int) -> bool:
        """Best move of mass from ``j`` to ``i``, False if none improves."""
        matrices = self.problem.observation_matrices
        u = np.hstack([matrices[i].T, matrices[j].T])
        v = self.inverse @ u
        g = u.T @ v
        p = None if self.criterion == Criterion.D else u.T @ self.solved
        sign = np.concatenate([
            np.ones(matrices[i].shape[0]), -np.ones(matrices[j].shape[0]),
        ])
        eye = np.eye(sign.size)

        def change(delta: float) -> float:
            core = eye + (delta * sign)[:, None] * g
            det_sign, log_ratio = np.linalg.slogdet(core)
            if det_sign <= 0 or log_ratio < SWAP_LOG_FLOOR:
                return np.inf
            if p is None:
                return -log_ratio / self.problem.num_params
            solved = np.linalg.solve(core, (delta * sign)[:, None] * p)
            return -float(np.sum(p * solved))

        limit = float(weights[j])
        found = scipy.optimize.minimize_scalar(
            change, bounds=(0, limit), method="bounded",
            options={"xatol": SWAP_XATOL * limit},
        )
        delta = float(found.x)
        if change(limit) <= change(delta):
            delta = limit
        if not change(delta) < 0:
            return False

        scaled = (delta * sign)[:, None]
        core = eye + scaled * g
        self.inverse -= v @ np.linalg.solve(core, scaled * v.T)
        self.inverse = (self.inverse + self.inverse.T) / 2
        weights[i] += delta
        weights[j] = 0.0 if delta == limit else weights[j] - delta
        return True


def exchange_step(
    problem: DesignProblem, state: IterationState, criterion: Criterion,
) -> IterationState:
    """Exchange mass between experiments until their gradients balance.

    Each swap takes weight from the supporting experiment with the
    smallest gradient and gives it to the one with the largest, with an
    exact line search. T and ill-conditioned information matrices take a
    Wynn step toward the best experiment instead.
    """
    grad = gradient(problem, state.design, criterion)
    exchange = None
    if criterion != Criterion.T and grad.ratio > OPTIMAL_RATIO:
        exchange = _Exchange.start(problem, state.design, criterion)
    if exchange is None:
        return _vertex_step(problem, state, criterion, grad)

    weights = state.weights.copy()
    for _ in range(np.count_nonzero(weights)):
        phi = exchange.phi()
        held = np.flatnonzero(weights > 0)
        receiving = int(np.argmax(phi))
        giving = int(held[np.argmin(phi[held])])
        if phi[receiving] <= phi[giving] * OPTIMAL_RATIO:
            break
        if not exchange.swap(weights, receiving, giving):
            break
    return state.advance(problem, criterion, weights, grad.ratio)


STEPS = {
    Method.mult: multiplicative_step,
    Method.accel: accelerated_multiplicative_step,
    Method.exchange: exchange_step,
}


@dataclass(slots=True)
class _Best:
    value: float = np.inf
    state: IterationState | None = field(default=None)


def run(
    problem: DesignProblem,
    criterion: Criterion,
    method: Method,
    stop_ratio: float = STOP_RATIO,
    max_iter: int = MAX_ITER,
    power: float = POWER,
    acceleration: float | None = None,
    strict: bool = False,
) -> tuple[Design, IterationState]:
    """Iterate from the uniform design until the Kiefer ratio is reached.

    When ``max_iter`` runs out the best design seen is returned with
    ``exceeded`` set, or `MaxIterExceeded` is raised if ``strict``.
    """
    if method not in STEPS:
        raise ValueError(f"{method.value} is not an iterative method")
    if criterion == Criterion.S:
        raise ValueError(f"No baseline for {criterion.value}")

    step = STEPS[method]
    if acceleration is None:
        acceleration = ACCELERATION.get(criterion, 0.5)
    state = IterationState(
        design = Design.uniform(problem.s),
        power = power,
        acceleration = acceleration,
    )
    best = _Best()

    while True:
        ratio = kiefer_ratio(problem, state.design, criterion)
        state = replace(state, ratio=ratio)
        value = (
            state.history[-1] if state.history
            else _value(problem, state.weights, criterion)
        )
        if value < best.value:
            best = _Best(value, state)

        if ratio <= stop_ratio:
            log.info(
                "%s %s-design: Kiefer ratio %.6f after %d iterations",
                method.value, criterion.value, ratio, state.iteration,
            )
            return state.design, state

        if state.iteration >= max_iter:
            break
        state = step(problem, state, criterion)

    final = replace(best.state or state, exceeded=True)
    message = (
        f"{method.value} {criterion.value}-design stopped at ratio "
        f"{final.ratio:.6f} after {state.iteration} iterations"
    )
    if strict:
        raise MaxIterExceeded(message)
    log.warning("%s", message)
    return final.design, final
