# Copyright optdesign authors
# SPDX-License-Identifier: AGPL-3.0-or-later

"""Newton systems of the interior-point method.

The system is the quasi-definite matrix

    [ 0   A^T   G^T  ]
    [ A   0     0    ]
    [ G   0    -W^2  ]

factored once per iteration with a static regularization and solved
several times, each solve followed by iterative refinement against the
unregularized matrix.
"""

from __future__ import annotations

import logging as log
import warnings
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg

from optdesign.utils import OptDesignError

if TYPE_CHECKING:
    from collections.abc import Callable

    from numpy.typing import NDArray

    FloatArray = NDArray[np.float64]

DENSE_BELOW = 500


class NumericalFailure(OptDesignError):
    """The Newton system could not be factored or solved."""


@dataclass(slots=True)
class KKTSystem:
    eq: sp.csr_matrix
    cone: sp.csr_matrix
    regularization: float = 1e-9
    refinement_steps: int = 3
    dense_below: int = DENSE_BELOW
    _base: sp.coo_matrix = field(init=False)
    _matrix: sp.csc_matrix | None = field(init=False, default=None)
    _solve: Callable[[FloatArray], FloatArray] | None = field(
        init=False, default=None,
    )

    def __post_init__(self) -> None:
        n = self.eq.shape[1]
        p = self.eq.shape[0]
        a, g = self.eq.tocoo(), self.cone.tocoo()
        rows = np.concatenate((a.row + n, a.col, g.row + n + p, g.col))
        cols = np.concatenate((a.col, a.row + n, g.col, g.row + n + p))
        vals = np.concatenate((a.data, a.data, g.data, g.data))
        self._base = sp.coo_matrix((vals, (rows, cols)), shape=self.shape)

    @property
    def num_variables(self) -> int:
        return self.eq.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        size = self.eq.shape[1] + self.eq.shape[0] + self.cone.shape[0]
        return (size, size)

    @property
    def dense(self) -> bool:
        return self.shape[0] < self.dense_below

    def factor(self, scaling_squared: sp.coo_matrix) -> None:
        """Factor the system for a new ``W^2`` block."""
        n, p = self.eq.shape[1], self.eq.shape[0]
        offset = n + p
        w2 = scaling_squared.tocoo()
        scaled = sp.coo_matrix(
            (-w2.data, (w2.row + offset, w2.col + offset)), shape=self.shape,
        )
        matrix = (self._base + scaled).tocsc()
        diag = np.full(self.shape[0], -self.regularization)
        diag[:n] = self.regularization
        regularized = (matrix + sp.diags(diag)).tocsc()
        self._matrix = matrix

        try:
            if self.dense:
                self._solve = self._dense_solver(regularized)
            else:
                self._solve = scipy.sparse.linalg.splu(regularized).solve
        except (
            RuntimeError, ValueError, np.linalg.LinAlgError,
            scipy.linalg.LinAlgWarning,
        ) as e:
            raise NumericalFailure(f"Newton system factorization: {e}") from e

    @staticmethod
    def _dense_solver(
        matrix: sp.csc_matrix,
    ) -> Callable[[FloatArray], FloatArray]:
        with warnings.catch_warnings():
            warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
            factors = scipy.linalg.lu_factor(
                matrix.toarray(), check_finite=True,
            )

        def solve(rhs: FloatArray) -> FloatArray:
            return scipy.linalg.lu_solve(factors, rhs, check_finite=False)

        return solve

    def solve(self, rhs: FloatArray) -> FloatArray:
        if self._solve is None or self._matrix is None:
            raise NumericalFailure("Solve before factor")

        solution = self._solve(rhs)
        for _ in range(self.refinement_steps):
            residual = rhs - self._matrix @ solution
            if np.linalg.norm(residual, np.inf) <= 1e-14 * (
                1 + np.linalg.norm(rhs, np.inf)
            ):
                break
            solution = solution + self._solve(residual)

        if not np.all(np.isfinite(solution)):
            raise NumericalFailure("Non-finite Newton direction")
        return solution

    def split(self, vec: FloatArray) -> tuple[Any, Any, Any]:
        n, p = self.eq.shape[1], self.eq.shape[0]
        return vec[:n], vec[n:n + p], vec[n + p:]


def stats_table(stats: list[dict[str, float]]) -> str:
    """Per-iteration progress in the usual interior-point layout."""
    lines = ["iter      pcost        dcost       gap      pres      dres"
             "      step"]
    lines += [
        "%4d %12.5e %12.5e %9.2e %9.2e %9.2e %9.2e" % (
            s["iter"], s["pcost"], s["dcost"], s["gap"], s["pres"],
            s["dres"], s["step"],
        )
        for s in stats
    ]
    return "\n".join(lines)


def log_stats(stats: list[dict[str, float]]) -> None:
    if log.getLogger().isEnabledFor(log.DEBUG):
        log.debug("Interior-point progress:\n%s", stats_table(stats))
