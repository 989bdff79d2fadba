# Copyright optdesign authors
# SPDX-License-Identifier: AGPL-3.0-or-later

"""Cone programs for each optimality criterion and design recovery.

Every builder returns a `FormulationResult` whose `RecoveryMap` locates the
design quantities in the solver vectors: primal variables by name and, for
the quantities read from dual multipliers, the rows of the constraints
they belong to.

Sign conventions follow `optdesign.conic.solver`: a constraint
``expr in K`` has a multiplier ``y in K*`` and the objective gradient is
``sum G^T y`` over all constraints.
"""

from __future__ import annotations

import logging as log
import math
from dataclasses import dataclass, field
from enum import auto
from typing import TYPE_CHECKING

import numpy as np
import scipy.linalg
import scipy.optimize
import scipy.sparse as sp

from optdesign.conic import (
    Affine,
    ProgramBuilder,
    Status,
    geometric_mean_epigraph,
    hyperbolic_constraint,
    solve,
)
from optdesign.model import (
    Criterion,
    Design,
    DesignProblem,
    Inestimable,
    SubModel,
    criterion_value,
    information_matrix,
    log_det,
)
from optdesign.utils import AutoStrEnum, OptDesignError

if TYPE_CHECKING:
    from pathlib import Path

    from numpy.typing import NDArray

    from optdesign.conic import ConeProgram, ConicSolution, SolverSettings

    FloatArray = NDArray[np.float64]

GEOMEAN_FLOOR = 1e-10
POLISH_ITER = 100
POLISH_START = 1e-4
POLISH_DECREASE = 1e-16
POLISH_LOCAL = 1e-10
POLISH_SLACK = 1e-10


class Infeasible(OptDesignError):
    """No admissible design exists for the requested program."""


class UnsupportedCombination(OptDesignError):
    """The criterion cannot be combined with this problem's constraints."""


class Kind(AutoStrEnum):
    Elfving = auto()
    Augmented = auto()
    Constrained = auto()
    Trace = auto()
    Geometric = auto()


@dataclass(frozen=True, slots=True)
class RecoveryMap:
    primal: dict[str, slice]
    dual: dict[str, list[slice]]

    def __post_init__(self) -> None:
        for name, spans in self.dual.items():
            if any(span.start < 0 or span.stop < span.start for span in spans):
                raise ValueError(f"Bad row slice for {name}")

    def variable(self, name: str, x: FloatArray) -> FloatArray:
        return x[self.primal[name]]

    def multipliers(self, name: str, y: FloatArray) -> list[FloatArray]:
        return [y[span] for span in self.dual.get(name, [])]


@dataclass(frozen=True, slots=True)
class FormulationResult:
    program: ConeProgram
    recovery_map: RecoveryMap
    criterion: Criterion
    kind: Kind
    problem: DesignProblem
    target: FloatArray | None = None


@dataclass(frozen=True, slots=True)
class Recovery:
    """Design-level reading of a solved formulation.

    ``value`` is the criterion in the convention of
    `optdesign.model.criterion_value`; ``blocks`` are the estimator
    coefficients ``h_i`` (or ``H_i``) when the criterion has them.
    """
    design: Design
    value: float
    objective: float
    blocks: list[FloatArray] = field(default_factory=list)
    primal: dict[str, FloatArray] = field(default_factory=dict)
    formal_only: bool = False


def _builder_result(
    builder: ProgramBuilder,
    criterion: Criterion,
    kind: Kind,
    problem: DesignProblem,
    target: FloatArray | None = None,
) -> FormulationResult:
    program = builder.build()
    return FormulationResult(
        program = program,
        recovery_map = RecoveryMap(
            dict(builder.variables), dict(builder.rows),
        ),
        criterion = criterion,
        kind = kind,
        problem = problem,
        target = target,
    )


def _vector_target(problem: DesignProblem, c: FloatArray | None) -> FloatArray:
    target = problem.target_matrix if c is None else np.asarray(c, float)
    if target.ndim == 2 and target.shape[1] == 1:  # noqa: PLR2004
        target = target[:, 0]
    if target.shape != (problem.num_params,):
        raise UnsupportedCombination(
            f"Expected a single target vector of length {problem.num_params}"
            f", got shape {target.shape}",
        )
    return target


def _matrix_target(problem: DesignProblem, k: FloatArray | None) -> FloatArray:
    if k is None:
        return problem.target_matrix
    return np.asarray(k, float).reshape(problem.num_params, -1)


def _require_simplex(problem: DesignProblem, criterion: Criterion) -> None:
    if not problem.is_simplex:
        raise UnsupportedCombination(
            f"{criterion.value}-optimality is only available on the simplex",
        )


def _elfving_builder(
    matrices: list[FloatArray | sp.spmatrix], c: FloatArray,
) -> ProgramBuilder:
    """``max c^T u  s.t.  ||A_i u|| <= 1`` for every experiment."""
    builder = ProgramBuilder()
    u = builder.variable("u", c.size)
    builder.minimize(-u.apply(c[None, :]))
    one = Affine.constant(1.0)
    for a in matrices:
        builder.soc(Affine.vstack((one, u.apply(a))), name="experiment")
    return builder


def build_c_optimal(
    problem: DesignProblem, c: FloatArray | None = None,
) -> FormulationResult:
    """c-optimal design through its Elfving program.

    The optimal value ``v`` gives the minimal variance ``v^2``; the cone
    multipliers ``(mu_i, -h_i)`` give the design ``w = mu / sum(mu)`` and
    the estimator blocks ``h_i``.
    """
    _require_simplex(problem, Criterion.c)
    target = _vector_target(problem, c)
    builder = _elfving_builder(problem.observation_matrices, target)
    return _builder_result(
        builder, Criterion.c, Kind.Elfving, problem, target,
    )


def build_a_optimal(
    problem: DesignProblem, k: FloatArray | None = None,
) -> FormulationResult:
    """A-optimal design over the row-major vectorization of ``U``.

    ``vec(A_i U) = (A_i kron I_r) vec(U)`` so every Frobenius norm is one
    second-order cone and ``trace(K^T U)`` is ``vec(K)^T vec(U)``.
    """
    _require_simplex(problem, Criterion.A)
    target = _matrix_target(problem, k)
    r = target.shape[1]
    eye = sp.identity(r, format="csr")
    matrices = [
        sp.kron(sp.csr_matrix(a), eye, format="csr")
        for a in problem.observation_matrices
    ]
    builder = _elfving_builder(matrices, target.ravel())
    return _builder_result(
        builder, Criterion.A, Kind.Elfving, problem, target,
    )


def augment_a_optimal(
    problem: DesignProblem, k: FloatArray | None = None,
) -> DesignProblem:
    """The c-optimal problem equivalent to A-optimality for ``K``.

    Experiments become ``I_r kron A_i`` and the target stacks the columns
    of ``K``.
    """
    target = _matrix_target(problem, k)
    r = target.shape[1]
    return DesignProblem(
        observation_matrices = [
            np.kron(np.eye(r), a) for a in problem.observation_matrices
        ],
        num_params = problem.num_params * r,
        target = target.T.ravel(),
    )


def build_augmented_a_optimal(
    problem: DesignProblem, k: FloatArray | None = None,
) -> FormulationResult:
    _require_simplex(problem, Criterion.A)
    target = _matrix_target(problem, k)
    augmented = augment_a_optimal(problem, target)
    builder = _elfving_builder(
        augmented.observation_matrices, augmented.target_matrix[:, 0],
    )
    return _builder_result(
        builder, Criterion.A, Kind.Augmented, problem, target,
    )


def _recession_warning(problem: DesignProblem) -> None:
    if problem.constraints is None:
        return
    r = problem.constraints.matrix
    found = scipy.optimize.linprog(
        np.zeros(problem.s),
        A_ub = r,
        b_ub = np.zeros(r.shape[0]),
        A_eq = np.ones((1, problem.s)),
        b_eq = [1.0],
        bounds = (0, None),
        method = "highs",
    )
    if found.status == 0:
        log.warning(
            "Constraint polyhedron R w <= b is unbounded along %s, the "
            "minimal variance may not be attained",
            np.round(found.x, 6).tolist(),
        )


def build_constrained_c_optimal(
    problem: DesignProblem,
    c: FloatArray | None = None,
    r: FloatArray | None = None,
    b: FloatArray | None = None,
) -> FormulationResult:
    """c-optimal design under ``R w <= b, w >= 0``.

    Minimizes ``sum(mu)`` subject to ``sum A_i^T h_i = c`` and
    ``||h_i||^2 <= w_i mu_i``; the optimum is the variance itself.
    """
    if r is not None and b is not None:
        problem = problem.with_constraints(r, b)
    if problem.constraints is None:
        s = problem.s
        problem = problem.with_constraints(np.ones((1, s)), [1.0])
    assert problem.constraints is not None
    target = _vector_target(problem, c)
    _recession_warning(problem)

    builder = ProgramBuilder()
    s = problem.s
    w = builder.variable("w", s)
    mu = builder.variable("mu", s)
    stacked, owners = problem.stacked
    h = builder.variable("h", stacked.shape[0])

    builder.zero(h.apply(stacked.T) - target, name="unbiased")
    builder.nonneg(
        problem.constraints.bound - w.apply(problem.constraints.matrix),
        name="budget",
    )
    builder.nonneg(w, name="weights")
    for i in range(s):
        rows = np.flatnonzero(owners == i)
        builder.soc(
            hyperbolic_constraint(h[rows], w[i], mu[i]), name="experiment",
        )
    builder.minimize(mu.sum())
    return _builder_result(
        builder, Criterion.c, Kind.Constrained, problem, target,
    )


def build_t_optimal(
    problem: DesignProblem, k: FloatArray | None = None,
) -> FormulationResult:
    """Formally T-optimal design: ``min t`` s.t. ``K^T U = I``,
    ``||A_i U||_F^2 <= t``.

    The multipliers ``(alpha_i, ., delta_i)`` of the hyperbolic cones sum
    to one through ``alpha_i + delta_i`` and form the design.
    """
    _require_simplex(problem, Criterion.T)
    target = _matrix_target(problem, k)
    m, r = target.shape
    eye = sp.identity(r, format="csr")

    builder = ProgramBuilder()
    u = builder.variable("u", m * r)
    t = builder.variable("t")
    builder.zero(
        u.apply(sp.kron(sp.csr_matrix(target.T), eye)) - np.eye(r).ravel(),
        name="identity",
    )
    one = Affine.constant(1.0)
    for a in problem.observation_matrices:
        z = u.apply(sp.kron(sp.csr_matrix(a), eye))
        builder.soc(hyperbolic_constraint(z, t, one), name="experiment")
    builder.minimize(t)
    return _builder_result(
        builder, Criterion.T, Kind.Trace, problem, target,
    )


def nested_models(problem: DesignProblem) -> DesignProblem:
    """The S-problem whose criterion is ``-(1/m) log det M``.

    Model ``k`` keeps the first ``k`` parameters and targets the last of
    them; ``det M`` telescopes over the ratios of consecutive minors.
    """
    m = problem.num_params
    models = [
        SubModel(
            observation_matrices = [
                a[:, :k] for a in problem.observation_matrices
            ],
            target = np.eye(k)[k - 1],
        )
        for k in range(1, m + 1)
    ]
    return DesignProblem(
        observation_matrices = problem.observation_matrices,
        num_params = m,
        models = models,
        beta = np.full(m, 1 / m),
    )


def build_s_optimal(
    problem: DesignProblem, criterion: Criterion = Criterion.S,
) -> FormulationResult:
    """S-optimal design maximizing ``prod_k t_k^beta_k``.

    Constraints: ``t_k c_k = sum_i A_(k),i^T v_ik``,
    ``||(sqrt(beta_k) v_ik)_k|| <= w_i`` and ``sum(w) <= 1``.
    Models with a zero belief weight are left out.
    """
    _require_simplex(problem, criterion)
    if not problem.models or problem.beta is None:
        raise UnsupportedCombination("S-optimality needs sub-models and beta")

    uniform = Design.uniform(problem.s)
    for k, model in enumerate(problem.models):
        sub = DesignProblem(
            observation_matrices = model.observation_matrices,
            num_params = model.num_params,
        )
        info = information_matrix(sub, uniform)
        try:
            info.check_estimable(model.target)
        except Inestimable as e:
            raise Inestimable(f"Model {k}: {e}") from e

    active = [k for k, beta in enumerate(problem.beta) if beta > 0]
    beta = problem.beta[active]
    builder = ProgramBuilder()
    s = problem.s
    w = builder.variable("w", s)
    t = builder.variable("t", len(active))
    g = builder.variable("g")

    per_experiment: list[list[Affine]] = [[w[i]] for i in range(s)]
    for j, k in enumerate(active):
        model = problem.models[k]
        stacked = np.vstack(model.observation_matrices)
        sizes = [a.shape[0] for a in model.observation_matrices]
        v = builder.variable(f"v[{j}]", stacked.shape[0])
        builder.zero(
            t[j].apply(model.target[:, None]) - v.apply(stacked.T),
            name="models",
        )
        bounds = np.cumsum([0, *sizes])
        for i in range(s):
            block = v[np.arange(bounds[i], bounds[i + 1])]
            per_experiment[i].append(math.sqrt(beta[j]) * block)

    for parts in per_experiment:
        builder.soc(Affine.vstack(parts), name="experiment")
    builder.nonneg(1 - w.sum(), name="simplex")
    geometric_mean_epigraph(
        builder, [t[j] for j in range(len(active))], beta, g,
    )
    builder.minimize(-g)
    return _builder_result(
        builder, criterion, Kind.Geometric, problem,
    )


def build_d_optimal(problem: DesignProblem) -> FormulationResult:
    _require_simplex(problem, Criterion.D)
    log_det(information_matrix(problem, Design.uniform(problem.s)))
    return build_s_optimal(nested_models(problem), Criterion.D)


def _check_status(result: FormulationResult, solution: ConicSolution) -> None:
    match solution.status:
        case Status.Optimal:
            return
        case Status.DualInfeasible if result.kind in {
            Kind.Elfving, Kind.Augmented,
        }:
            raise Inestimable(
                "Target is not estimable by any design: the Elfving "
                "program is unbounded",
            )
        case Status.PrimalInfeasible if result.kind == Kind.Constrained:
            raise Infeasible(
                "No design satisfying R w <= b makes the target estimable",
            )
        case Status.PrimalInfeasible if result.kind == Kind.Trace:
            raise Infeasible("K^T U = I has no solution, K is rank deficient")
        case Status.PrimalInfeasible | Status.DualInfeasible:
            raise Infeasible(
                f"{result.kind.value} program reported "
                f"{solution.status.value}",
            )
        case _:
            solution.check()


def _elfving_multipliers(
    result: FormulationResult, solution: ConicSolution,
) -> tuple[FloatArray, list[FloatArray]]:
    duals = result.recovery_map.multipliers("experiment", solution.y)
    mu = np.array([max(float(y[0]), 0.0) for y in duals])
    return mu, [-y[1:] for y in duals]


def recover_c_optimal(
    result: FormulationResult, solution: ConicSolution,
) -> Recovery:
    _check_status(result, solution)
    mu, blocks = _elfving_multipliers(result, solution)
    total = float(mu.sum())
    u = result.recovery_map.variable("u", solution.x)
    return Recovery(
        design = Design(weights=mu / total).pruned(),
        value = total**2,
        objective = solution.pcost,
        blocks = [h.reshape(-1) for h in blocks],
        primal = {"u": u, "mu": mu},
    )


def recover_a_optimal(
    result: FormulationResult, solution: ConicSolution,
) -> Recovery:
    _check_status(result, solution)
    assert result.target is not None
    m, r = result.target.shape
    mu, blocks = _elfving_multipliers(result, solution)
    total = float(mu.sum())
    u = result.recovery_map.variable("u", solution.x)

    if result.kind == Kind.Augmented:
        matrices = [h.reshape(r, -1).T for h in blocks]
        u_matrix = u.reshape(r, m).T
    else:
        matrices = [h.reshape(-1, r) for h in blocks]
        u_matrix = u.reshape(m, r)

    return Recovery(
        design = Design(weights=mu / total).pruned(),
        value = total**2,
        objective = solution.pcost,
        blocks = matrices,
        primal = {"u": u_matrix, "mu": mu},
    )


def recover_constrained_c_optimal(
    result: FormulationResult, solution: ConicSolution,
) -> Recovery:
    _check_status(result, solution)
    rmap, problem = result.recovery_map, result.problem
    w = np.maximum(rmap.variable("w", solution.x), 0)
    mu = rmap.variable("mu", solution.x)
    h = rmap.variable("h", solution.x)
    _, owners = problem.stacked
    return Recovery(
        design = Design(weights=w).pruned(renormalize=False),
        value = float(mu.sum()),
        objective = solution.pcost,
        blocks = [h[owners == i] for i in range(problem.s)],
        primal = {"w": w, "mu": mu},
    )


def recover_t_optimal(
    result: FormulationResult, solution: ConicSolution,
) -> Recovery:
    _check_status(result, solution)
    assert result.target is not None
    duals = result.recovery_map.multipliers("experiment", solution.y)
    weights = np.array([max(float(y[0] + y[-1]), 0.0) for y in duals])
    design = Design(weights=weights / weights.sum()).pruned()
    m, r = result.target.shape
    u = result.recovery_map.variable("u", solution.x).reshape(m, r)

    info = information_matrix(result.problem, design)
    residual = info.range_residual(result.target)
    formal_only = bool(np.any(
        residual > 1e-6 * np.linalg.norm(result.target, axis=0),
    ))
    if formal_only:
        log.warning(
            "T-optimum is only formal: Range K is not inside Range M(w*) "
            "(residual %.3g)", residual.max(),
        )

    t = float(result.recovery_map.variable("t", solution.x)[0])
    return Recovery(
        design = design,
        value = t,
        objective = solution.pcost,
        primal = {"u": u, "t": np.array([t])},
        formal_only = formal_only,
    )


@dataclass(frozen=True, slots=True)
class _StackedModel:
    rows: FloatArray
    owners: NDArray[np.intp]
    target: FloatArray
    beta: float


def _stacked_models(problem: DesignProblem) -> list[_StackedModel]:
    assert problem.models is not None and problem.beta is not None
    stacked: list[_StackedModel] = []
    for model, beta in zip(problem.models, problem.beta, strict=True):
        if beta <= 0:
            continue
        sizes = [a.shape[0] for a in model.observation_matrices]
        stacked.append(_StackedModel(
            rows = np.vstack(model.observation_matrices),
            owners = np.repeat(np.arange(len(sizes)), sizes),
            target = model.target,
            beta = float(beta),
        ))
    return stacked


def _s_derivatives(
    models: list[_StackedModel], w: FloatArray, support: NDArray[np.intp],
) -> tuple[float, FloatArray, FloatArray] | None:
    """S-criterion, its gradient and its Hessian on ``support``.

    With ``x_k = M_k^-1 c_k`` and ``r = A_(k),i x_k``, the variance moves
    by ``-||r||^2`` toward experiment ``i`` and has second derivatives
    ``2 p_i^T M_k^-1 p_j`` with ``p_i = A_(k),i^T r``. None when some
    ``M_k`` is singular.
    """
    s = w.size
    value, grad = 0.0, np.zeros(s)
    hess = np.zeros((support.size, support.size))
    for model in models:
        matrix = model.rows.T @ (w[model.owners, None] * model.rows)
        try:
            factor = scipy.linalg.cho_factor(matrix)
        except np.linalg.LinAlgError:
            return None
        x = scipy.linalg.cho_solve(factor, model.target)
        variance = float(model.target @ x)
        if not variance > 0:
            return None

        images = model.rows @ x
        g = np.bincount(model.owners, weights=images**2, minlength=s)
        p = np.zeros((s, x.size))
        np.add.at(p, model.owners, model.rows * images[:, None])
        ps, gs = p[support], g[support]

        value += model.beta * math.log(variance)
        grad -= model.beta * g / variance
        hess += model.beta * (
            2 * ps @ scipy.linalg.cho_solve(factor, ps.T) / variance
            - np.outer(gs, gs) / variance**2
        )
    return value, grad, hess


def polish_s_design(
    problem: DesignProblem, design: Design, max_iter: int = POLISH_ITER,
) -> Design:
    """Newton refinement of an S-optimal design on the simplex.

    Steps are taken on the support only. An experiment leaves when its
    weight reaches zero; once the restricted problem is solved, the
    experiment whose gradient most exceeds ``phi_bar`` joins. The input
    is returned when an information matrix turns singular or the result
    would be worse.
    """
    models = _stacked_models(problem)
    w = design.weights.copy()
    w[w <= POLISH_START * w.max()] = 0
    w /= w.sum()
    support = np.flatnonzero(w)
    rejected: set[int] = set()
    current = _s_derivatives(models, w, support)
    start = _s_derivatives(models, design.weights, support)
    if current is None or start is None:
        return design

    for _ in range(max_iter):
        value, grad, hess = current
        n = support.size
        kkt = np.block([
            [hess, np.ones((n, 1))], [np.ones((1, n)), np.zeros((1, 1))],
        ])
        rhs = np.concatenate([-grad[support], [0.0]])
        step = scipy.linalg.lstsq(kkt, rhs)[0][:n]
        decrease = -float(grad[support] @ step)

        if decrease <= POLISH_DECREASE:
            # Restricted optimum: add the best experiment outside, if any
            gains = -grad
            outside = np.setdiff1d(
                np.arange(w.size), [*support, *rejected],
            )
            bar = float(w @ gains)
            if not outside.size or gains[outside].max() <= bar * (
                1 + POLISH_SLACK
            ):
                break
            joining = outside[np.argmax(gains[outside])]
            support = np.union1d(support, [joining])
        else:
            stuck = (w[support] == 0) & (step < 0)
            if stuck.any():
                rejected.update(support[stuck].tolist())
                support = support[~stuck]
            else:
                moved, support = _newton_move(
                    models, w, support, step, value, decrease,
                )
                if moved is None:
                    break
                w = moved

        found = _s_derivatives(models, w, support)
        if found is None:
            return design
        current = found

    if current[0] > start[0]:
        return design
    return Design(weights=w / w.sum())


def _newton_move(
    models: list[_StackedModel],
    w: FloatArray,
    support: NDArray[np.intp],
    step: FloatArray,
    value: float,
    decrease: float,
) -> tuple[FloatArray | None, NDArray[np.intp]]:
    """Damped step, dropping the experiment that blocks it at zero."""
    blocking = np.flatnonzero(step < 0)
    limits = w[support][blocking] / -step[blocking]
    limit = float(limits.min()) if limits.size else math.inf
    alpha = min(1.0, limit)

    trial = w.copy()
    for _ in range(40):
        trial[support] = np.maximum(w[support] + alpha * step, 0)
        found = _s_derivatives(models, trial, support)
        # Close to the optimum the full step is taken as it is
        if found is not None and (
            decrease < POLISH_LOCAL
            or found[0] <= value - 1e-4 * alpha * decrease
        ):
            break
        alpha /= 2
    else:
        return None, support

    if alpha == limit:
        leaving = support[blocking[np.argmin(limits)]]
        trial[leaving] = 0
        support = support[support != leaving]
    return trial, support


def recover_s_optimal(
    result: FormulationResult, solution: ConicSolution,
) -> Recovery:
    """Design, ``t_k`` and the dual vectors ``h_k = -y_k / g``.

    The interior-point design is polished with `polish_s_design`, so that
    weights off the support vanish exactly.
    """
    _check_status(result, solution)
    rmap = result.recovery_map
    g = float(rmap.variable("g", solution.x)[0])
    if g <= GEOMEAN_FLOOR:
        raise Inestimable(
            "Some model target is not estimable: the geometric mean of "
            "the bounds vanishes",
        )

    w = np.maximum(rmap.variable("w", solution.x), 0)
    t = rmap.variable("t", solution.x)
    h = [-y / g for y in rmap.multipliers("models", solution.y)]
    v = [rmap.variable(f"v[{j}]", solution.x) for j in range(t.size)]
    design = polish_s_design(
        result.problem, Design(weights=w / w.sum()).pruned(),
    )
    try:
        value = criterion_value(result.problem, design, Criterion.S)
    except Inestimable:
        value = -2 * math.log(g)
    return Recovery(
        design = design,
        value = value,
        objective = solution.pcost,
        blocks = h,
        primal = {"t": t, "g": np.array([g]), "w": w, **{
            f"v{j}": vec for j, vec in enumerate(v)
        }},
    )


def build(problem: DesignProblem, criterion: Criterion) -> FormulationResult:
    """Pick the formulation for a criterion and the problem's constraints."""
    match criterion:
        case Criterion.c if problem.is_simplex:
            return build_c_optimal(problem)
        case Criterion.c:
            return build_constrained_c_optimal(problem)
        case Criterion.A:
            return build_a_optimal(problem)
        case Criterion.T:
            return build_t_optimal(problem)
        case Criterion.D:
            return build_d_optimal(problem)
        case Criterion.S:
            return build_s_optimal(problem)


def recover(result: FormulationResult, solution: ConicSolution) -> Recovery:
    match result.kind:
        case Kind.Elfving if result.criterion == Criterion.c:
            return recover_c_optimal(result, solution)
        case Kind.Elfving | Kind.Augmented:
            return recover_a_optimal(result, solution)
        case Kind.Constrained:
            return recover_constrained_c_optimal(result, solution)
        case Kind.Trace:
            return recover_t_optimal(result, solution)
        case Kind.Geometric:
            return recover_s_optimal(result, solution)


def optimize(
    problem: DesignProblem,
    criterion: Criterion,
    settings: SolverSettings | None = None,
    dump: Path | None = None,
) -> tuple[FormulationResult, ConicSolution, Recovery]:
    """Build, solve and read back the optimal design of a problem."""
    result = build(problem, criterion)
    if dump:
        result.program.dump(dump)
    solution = solve(result.program, settings)
    recovery = recover(result, solution)
    log.info(
        "%s-optimal design: value %.10g, support %s",
        criterion.value, recovery.value, recovery.design.support,
    )
    return result, solution, recovery
