# Copyright optdesign authors
# SPDX-License-Identifier: AGPL-3.0-or-later

"""Design problems, designs, information matrices and criteria.

Conventions: an experiment ``i`` has an observation matrix ``A_i`` of shape
``l_i x m``, a design is a nonnegative weight vector ``w`` and the
information matrix is ``M(w) = sum_i w_i A_i^T A_i``. The ``1/N`` factor of
the variance of replicated observations is dropped everywhere.
"""

from __future__ import annotations

import math
from enum import auto
from typing import Annotated, Any

import numpy as np
import scipy.linalg
from numpy.typing import NDArray
from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    model_validator,
)
from typing_extensions import Self

from optdesign.utils import AutoStrEnum, OptDesignError

FloatArray = NDArray[np.float64]

PINV_CUTOFF = 1e-10
ESTIMABILITY_TOL = 1e-8
PRUNE_THRESHOLD = 1e-7
BETA_SUM_TOL = 1e-12
SIMPLEX_TOL = 1e-9


class Inestimable(OptDesignError):
    """The target is not in the range of the information matrix."""


class SingularM(OptDesignError):
    """The information matrix is singular where it must be invertible."""


class DimensionMismatch(OptDesignError, ValueError):
    pass


class Criterion(AutoStrEnum):
    c = auto()
    A = auto()
    T = auto()
    D = auto()
    S = auto()


def _frozen(array: FloatArray) -> FloatArray:
    array.setflags(write=False)
    return array


def _as_matrix(value: Any) -> FloatArray:
    array = np.array(value, dtype=np.float64)
    if array.ndim == 1:
        array = array.reshape(1, -1)
    if array.ndim != 2:  # noqa: PLR2004
        raise DimensionMismatch(f"Expected a matrix, got shape {array.shape}")
    return _frozen(array)


def _as_vector(value: Any) -> FloatArray:
    array = np.array(value, dtype=np.float64).reshape(-1)
    return _frozen(array)


def _as_target(value: Any) -> FloatArray | None:
    if value is None:
        return None
    array = np.array(value, dtype=np.float64)
    if array.ndim > 2:  # noqa: PLR2004
        raise DimensionMismatch(
            f"Target must be a vector or a matrix: {value}",
        )
    return _frozen(array)


Matrix = Annotated[FloatArray, BeforeValidator(_as_matrix)]
Vector = Annotated[FloatArray, BeforeValidator(_as_vector)]
Target = Annotated[FloatArray | None, BeforeValidator(_as_target)]


class _Frozen(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


class Constraints(_Frozen):
    """Linear resource constraints ``R w <= b``."""
    matrix: Matrix
    bound: Vector

    @model_validator(mode="after")
    def _check(self) -> Self:
        if self.matrix.shape[0] != self.bound.size:
            raise DimensionMismatch(
                f"R has {self.matrix.shape[0]} rows, b has {self.bound.size}",
            )
        if not np.all(np.isfinite(self.bound)):
            raise DimensionMismatch("b must be finite")
        return self


class SubModel(_Frozen):
    """One of the candidate models of the S-criterion."""
    observation_matrices: list[Matrix]
    target: Vector

    @property
    def num_params(self) -> int:
        return self.target.size

    @model_validator(mode="after")
    def _check(self) -> Self:
        for i, a in enumerate(self.observation_matrices):
            if a.shape[1] != self.target.size:
                raise DimensionMismatch(
                    f"Sub-model matrix {i} has {a.shape[1]} columns, "
                    f"target has length {self.target.size}",
                )
        return self


class DesignProblem(_Frozen):
    observation_matrices: list[Matrix]
    num_params: int
    target: Target = None
    constraints: Constraints | None = None
    models: list[SubModel] | None = None
    beta: Vector | None = None

    @model_validator(mode="after")
    def _check(self) -> Self:
        m = self.num_params
        for i, a in enumerate(self.observation_matrices):
            if a.shape[1] != m:
                raise DimensionMismatch(
                    f"A_{i} has {a.shape[1]} columns, expected {m}",
                )

        if self.target is not None and self.target.shape[0] != m:
            raise DimensionMismatch(
                f"Target has {self.target.shape[0]} rows, expected {m}",
            )

        if self.constraints and self.constraints.matrix.shape[1] != self.s:
            raise DimensionMismatch(
                f"R has {self.constraints.matrix.shape[1]} columns, "
                f"expected {self.s}",
            )

        if (self.models is None) != (self.beta is None):
            raise DimensionMismatch("models and beta go together")

        if self.models is not None and self.beta is not None:
            if len(self.models) != self.beta.size:
                raise DimensionMismatch("One belief weight per model needed")
            if np.any(self.beta < 0):
                raise DimensionMismatch(f"Negative belief weight {self.beta}")
            if abs(self.beta.sum() - 1) > BETA_SUM_TOL:
                raise DimensionMismatch(f"Belief weights sum to {self.beta}")
            for model in self.models:
                if len(model.observation_matrices) != self.s:
                    raise DimensionMismatch(
                        "Every sub-model needs one matrix per experiment",
                    )
        return self

    @property
    def s(self) -> int:
        return len(self.observation_matrices)

    @property
    def is_simplex(self) -> bool:
        return self.constraints is None

    @property
    def target_matrix(self) -> FloatArray:
        """Target as an ``m x r`` matrix, a vector becoming one column."""
        if self.target is None:
            raise DimensionMismatch("This problem has no target")
        return self.target.reshape(self.num_params, -1)

    @property
    def stacked(self) -> tuple[FloatArray, NDArray[np.intp]]:
        """All observation rows stacked, with the experiment of each row."""
        rows = np.vstack(self.observation_matrices)
        owners = np.repeat(
            np.arange(self.s), [a.shape[0] for a in self.observation_matrices],
        )
        return rows, owners

    def with_target(self, target: Any) -> DesignProblem:
        return type(self)(**{**dict(self), "target": target})

    def with_constraints(self, r: Any, b: Any) -> DesignProblem:
        constraints = Constraints(matrix=r, bound=b)
        return type(self)(**{**dict(self), "constraints": constraints})


class Design(_Frozen):
    weights: Vector

    @model_validator(mode="after")
    def _check(self) -> Self:
        if np.any(self.weights < 0) or not np.all(np.isfinite(self.weights)):
            raise DimensionMismatch(f"Invalid design weights {self.weights}")
        return self

    @classmethod
    def uniform(cls, s: int) -> Self:
        return cls(weights=np.full(s, 1 / s))

    @property
    def threshold(self) -> float:
        return PRUNE_THRESHOLD * float(self.weights.max(initial=0))

    @property
    def support(self) -> list[int]:
        return np.flatnonzero(self.weights > self.threshold).tolist()

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def is_simplex(self, tol: float = SIMPLEX_TOL) -> bool:
        return abs(self.total - 1) <= tol

    def pruned(self, renormalize: bool = True) -> Design:
        """Zero the weights below the prune threshold."""
        weights = np.where(self.weights > self.threshold, self.weights, 0.0)
        if renormalize and weights.sum() > 0:
            weights = weights / weights.sum()
        return Design(weights=weights)


class InformationMatrix(_Frozen):
    matrix: Matrix
    design: Design

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.matrix, 2))

    def pinv(self, cutoff: float = PINV_CUTOFF) -> FloatArray:
        values, vectors = self.spectrum(cutoff)
        return (vectors / values) @ vectors.T

    def spectrum(
        self, cutoff: float = PINV_CUTOFF,
    ) -> tuple[FloatArray, FloatArray]:
        """Eigenpairs kept above ``cutoff * lambda_max``."""
        values, vectors = np.linalg.eigh(self.matrix)
        keep = values > cutoff * max(float(values[-1]), 0.0)
        if values[-1] <= 0:
            keep[:] = False
        return values[keep], vectors[:, keep]

    def range_residual(
        self, target: FloatArray, cutoff: float = PINV_CUTOFF,
    ) -> FloatArray:
        """Norm of each target column's component outside Range M."""
        target = target.reshape(self.matrix.shape[0], -1)
        _, vectors = self.spectrum(cutoff)
        outside = target - vectors @ (vectors.T @ target)
        return np.linalg.norm(outside, axis=0)

    def check_estimable(
        self, target: FloatArray, cutoff: float = PINV_CUTOFF,
    ) -> None:
        target = target.reshape(self.matrix.shape[0], -1)
        residual = self.range_residual(target, cutoff)
        scale = np.linalg.norm(target, axis=0)
        bad = np.flatnonzero(residual > ESTIMABILITY_TOL * scale)
        if bad.size:
            raise Inestimable(
                f"Target column(s) {bad.tolist()} outside Range M(w), "
                f"projection residual {residual[bad].max():.3g}",
            )


def _weights(
    problem: DesignProblem, design: Design | FloatArray,
) -> FloatArray:
    w = design.weights if isinstance(design, Design) else np.asarray(design)
    if w.shape != (problem.s,):
        raise DimensionMismatch(
            f"Design has {w.size} weights, "
            f"problem has {problem.s} experiments",
        )
    return w


def _gram(matrices: list[FloatArray], w: FloatArray, m: int) -> FloatArray:
    out = np.zeros((m, m))
    for weight, a in zip(w, matrices, strict=True):
        if weight:
            out += weight * (a.T @ a)
    return (out + out.T) / 2


def information_matrix(
    problem: DesignProblem, design: Design,
) -> InformationMatrix:
    w = _weights(problem, design)
    matrix = _gram(problem.observation_matrices, w, problem.num_params)
    return InformationMatrix(matrix=matrix, design=design)


def sub_information_matrices(
    problem: DesignProblem, design: Design,
) -> list[InformationMatrix]:
    """The matrices ``M_(k)(w)`` of the S-criterion sub-models."""
    w = _weights(problem, design)
    return [
        InformationMatrix(
            matrix=_gram(model.observation_matrices, w, model.num_params),
            design=design,
        )
        for model in problem.models or []
    ]


def target_variance(
    info: InformationMatrix, c: FloatArray, cutoff: float = PINV_CUTOFF,
) -> float:
    info.check_estimable(c, cutoff)
    values, vectors = info.spectrum(cutoff)
    projected = vectors.T @ c
    return float(np.sum(projected**2 / values))


def c_variance(
    problem: DesignProblem,
    design: Design,
    c: FloatArray,
    cutoff: float = PINV_CUTOFF,
) -> float:
    """Variance ``c^T M(w)^- c`` of the best estimator of ``c^T theta``."""
    c = np.asarray(c, dtype=np.float64)
    if c.shape != (problem.num_params,):
        raise DimensionMismatch(f"c has shape {c.shape}")
    return target_variance(information_matrix(problem, design), c, cutoff)


def t_minimizer(info: InformationMatrix, k: FloatArray) -> FloatArray:
    """``U`` minimizing ``trace(U^T M U)`` subject to ``K^T U = I``.

    ``U^T M U`` is then the information matrix ``C_K(w)`` of ``K^T theta``,
    defined even when ``Range K`` is not inside ``Range M``.
    """
    m, r = k.shape
    bordered = np.block([[info.matrix, k], [k.T, np.zeros((r, r))]])
    rhs = np.vstack([np.zeros((m, r)), np.eye(r)])
    u = scipy.linalg.lstsq(bordered, rhs)[0][:m]
    if np.linalg.norm(k.T @ u - np.eye(r)) > ESTIMABILITY_TOL * r:
        raise Inestimable("K^T U = I has no solution, K is rank deficient")
    return u


def _phi_t(info: InformationMatrix, k: FloatArray) -> float:
    u = t_minimizer(info, k)
    return float(np.trace(u.T @ info.matrix @ u))


def log_det(info: InformationMatrix) -> float:
    values = np.linalg.eigvalsh(info.matrix)
    if values[0] <= PINV_CUTOFF * max(values[-1], 0) or values[-1] <= 0:
        raise SingularM(f"det M(w) vanishes (smallest eigenvalue {values[0]})")
    return float(np.sum(np.log(values)))


def criterion_value(
    problem: DesignProblem, design: Design, criterion: Criterion,
) -> float:
    """Value of a criterion; T is maximized, every other one minimized."""
    match criterion:
        case Criterion.c | Criterion.A:
            info = information_matrix(problem, design)
            k = problem.target_matrix
            info.check_estimable(k)
            values, vectors = info.spectrum()
            return float(np.sum((vectors.T @ k) ** 2 / values[:, None]))
        case Criterion.T:
            info = information_matrix(problem, design)
            return _phi_t(info, problem.target_matrix)
        case Criterion.D:
            info = information_matrix(problem, design)
            return -log_det(info) / problem.num_params
        case Criterion.S:
            if not problem.models or problem.beta is None:
                raise DimensionMismatch("S-criterion needs sub-models")
            infos = sub_information_matrices(problem, design)
            return sum(
                float(beta) * math.log(target_variance(info, model.target))
                for beta, info, model in zip(
                    problem.beta, infos, problem.models, strict=True,
                )
                if beta > 0
            )


def blue_coefficients(
    problem: DesignProblem, design: Design, target: FloatArray,
) -> list[FloatArray]:
    """Per-experiment blocks of the best linear unbiased estimator.

    For a vector target the blocks are ``h_i = w_i A_i M(w)^+ c``, so that
    the estimator is ``sum_i h_i^T y_i``; for an ``m x r`` target they are
    the matrices ``H_i = w_i A_i M(w)^+ K``.
    """
    target = np.asarray(target, dtype=np.float64)
    w = _weights(problem, design)
    info = information_matrix(problem, design)
    info.check_estimable(target)
    solved = info.pinv() @ target
    return [
        weight * (a @ solved) if weight
        else np.zeros((a.shape[0], *target.shape[1:]))
        for weight, a in zip(w, problem.observation_matrices, strict=True)
    ]


def estimator_variance(
    blocks: list[FloatArray], design: Design,
) -> float:
    """``sum_i ||h_i||^2 / w_i`` over the experiments with positive weight."""
    return sum(
        float(np.sum(h**2)) / weight
        for h, weight in zip(blocks, design.weights, strict=True)
        if weight > 0
    )
