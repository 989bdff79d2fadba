# Copyright optdesign authors
# SPDX-License-Identifier: AGPL-3.0-or-later

"""Cone programs in the standard form used by the solver.

A program reads ``minimize c^T x  s.t.  A x + s = b,  s in K`` where ``K``
is an ordered product of zero cones, nonnegative orthants and second-order
cones laid over consecutive rows of ``A``. A second-order cone
``(t, u)`` requires ``||u|| <= t``.

Programs are assembled through `ProgramBuilder` from `Affine` expressions,
each expression ``G x + f`` being constrained to lie in a cone.
"""

from __future__ import annotations

import logging as log
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import TYPE_CHECKING, Any, TypeAlias

import numpy as np
import scipy.sparse as sp

from optdesign.utils import OptDesignError

if TYPE_CHECKING:
    from collections.abc import Iterable, Sequence
    from pathlib import Path

    from numpy.typing import ArrayLike, NDArray

    FloatArray = NDArray[np.float64]

DUMP_HEADER = "# optdesign cone program v1"
GEOMEAN_MAX_POWER = 10
RATIONAL_TOL = 1e-9


class IrrationalBeta(OptDesignError):
    """Weights without a small enough common denominator."""


@dataclass(frozen=True, slots=True)
class ZeroCone:
    size: int
    tag = "Z"


@dataclass(frozen=True, slots=True)
class NonNegCone:
    size: int
    tag = "L"


@dataclass(frozen=True, slots=True)
class SecondOrderCone:
    size: int
    tag = "Q"


Cone: TypeAlias = ZeroCone | NonNegCone | SecondOrderCone


@dataclass(frozen=True, slots=True)
class ConeProgram:
    objective: FloatArray
    eq_matrix: sp.csr_matrix
    eq_rhs: FloatArray
    cone_spec: tuple[Cone, ...]
    variable_names: dict[str, slice] = field(default_factory=dict)
    offset: float = 0.0

    def __post_init__(self) -> None:
        rows, cols = self.eq_matrix.shape
        if self.objective.shape != (cols,):
            raise ValueError(
                f"Objective has shape {self.objective.shape}, "
                f"expected ({cols},)",
            )
        if self.eq_rhs.shape != (rows,):
            raise ValueError(
                f"Right-hand side has shape {self.eq_rhs.shape}, "
                f"expected ({rows},)",
            )
        if sum(cone.size for cone in self.cone_spec) != rows:
            raise ValueError(
                f"Cone sizes sum to {sum(c.size for c in self.cone_spec)}, "
                f"the program has {rows} rows",
            )
        if any(cone.size < 1 for cone in self.cone_spec):
            raise ValueError("Every cone needs at least one row")
        for name, span in self.variable_names.items():
            if not 0 <= span.start <= span.stop <= cols:
                raise ValueError(f"Variable {name} out of bounds: {span}")

    @property
    def num_variables(self) -> int:
        return self.eq_matrix.shape[1]

    @property
    def num_rows(self) -> int:
        return self.eq_matrix.shape[0]

    def dump(self, path: Path) -> None:
        """Write a plain-text standard form for external cross-checks.

        Layout: a header line, ``n <vars> rows <rows> nnz <nnz>``, one
        ``var <name> <start> <stop>`` line per named block, a ``cones``
        line (``Z3 L2 Q3`` ...), the objective on a ``c`` line, the right
        hand side on a ``b`` line, then one ``A <row> <col> <value>`` line
        per nonzero, all indices 0-based.
        """
        coo = self.eq_matrix.tocoo()
        lines = [
            DUMP_HEADER,
            "# minimize c'x + offset  s.t.  A x + s = b,  s in K",
            f"n {self.num_variables} rows {self.num_rows} nnz {coo.nnz}",
            f"offset {self.offset!r}",
            *(
                f"var {name} {span.start} {span.stop}"
                for name, span in self.variable_names.items()
            ),
            "cones " + " ".join(f"{c.tag}{c.size}" for c in self.cone_spec),
            "c " + " ".join(map(repr, self.objective.tolist())),
            "b " + " ".join(map(repr, self.eq_rhs.tolist())),
            *(
                f"A {r} {c} {v!r}"
                for r, c, v in zip(
                    coo.row.tolist(), coo.col.tolist(), coo.data.tolist(),
                    strict=True,
                )
            ),
        ]
        path.write_text("\n".join(lines) + "\n")
        log.info("Wrote %d-row cone program to %s", self.num_rows, path)


@dataclass(frozen=True, slots=True)
class Affine:
    """Vector expression ``G x + f`` over the variables of a builder.

    ``G`` is kept as coordinate triplets without a fixed column count so
    that expressions stay valid while the builder declares more variables.
    """
    rows: NDArray[np.intp]
    cols: NDArray[np.intp]
    vals: FloatArray
    const: FloatArray

    __array_ufunc__ = None

    @classmethod
    def constant(cls, values: ArrayLike) -> Affine:
        const = np.atleast_1d(np.asarray(values, dtype=np.float64)).ravel()
        empty = np.zeros(0, dtype=np.intp)
        return cls(empty, empty, np.zeros(0), const)

    @classmethod
    def vstack(cls, exprs: Iterable[Affine]) -> Affine:
        rows, cols, vals, consts = [], [], [], []
        offset = 0
        for expr in exprs:
            rows.append(expr.rows + offset)
            cols.append(expr.cols)
            vals.append(expr.vals)
            consts.append(expr.const)
            offset += len(expr)
        return cls(
            np.concatenate(rows), np.concatenate(cols),
            np.concatenate(vals), np.concatenate(consts),
        )

    def __len__(self) -> int:
        return self.const.size

    @property
    def width(self) -> int:
        return int(self.cols.max()) + 1 if self.cols.size else 0

    def matrix(self, width: int | None = None) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.vals, (self.rows, self.cols)),
            shape=(len(self), self.width if width is None else width),
        )

    def __getitem__(self, key: int | slice | Sequence[int]) -> Affine:
        picked = np.atleast_1d(np.arange(len(self))[key]).astype(np.intp)
        selection = sp.csr_matrix(
            (np.ones(picked.size), (np.arange(picked.size), picked)),
            shape=(picked.size, len(self)),
        )
        return self.apply(selection)

    def __neg__(self) -> Affine:
        return Affine(self.rows, self.cols, -self.vals, -self.const)

    def __add__(self, other: Affine | float) -> Affine:
        if not isinstance(other, Affine):
            return Affine(self.rows, self.cols, self.vals, self.const + other)
        if len(other) == 1 and len(self) > 1:
            other = other.apply(np.ones((len(self), 1)))
        elif len(self) == 1 and len(other) > 1:
            return other + self
        if len(other) != len(self):
            raise ValueError(f"Adding lengths {len(self)} and {len(other)}")
        return Affine(
            np.concatenate((self.rows, other.rows)),
            np.concatenate((self.cols, other.cols)),
            np.concatenate((self.vals, other.vals)),
            self.const + other.const,
        )

    def __radd__(self, other: float) -> Affine:
        return self + other

    def __sub__(self, other: Affine | float) -> Affine:
        return self + (-other)

    def __rsub__(self, other: float) -> Affine:
        return -self + other

    def __mul__(self, scalar: float) -> Affine:
        return Affine(
            self.rows, self.cols, self.vals * scalar, self.const * scalar,
        )

    def __rmul__(self, scalar: float) -> Affine:
        return self * scalar

    def apply(self, matrix: Any) -> Affine:
        """Left-multiply by a dense or sparse matrix: ``P (G x + f)``."""
        mat = sp.csr_matrix(matrix if sp.issparse(matrix)
                            else np.atleast_2d(np.asarray(matrix, float)))
        product = (mat @ self.matrix()).tocoo()
        return Affine(
            product.row.astype(np.intp),
            product.col.astype(np.intp),
            product.data.astype(np.float64),
            np.asarray(mat @ self.const, dtype=np.float64).ravel(),
        )

    def sum(self) -> Affine:
        return self.apply(np.ones((1, len(self))))

    def value(self, x: FloatArray) -> FloatArray:
        return self.matrix(x.size) @ x + self.const


@dataclass(slots=True)
class ProgramBuilder:
    """Declares variables and cone constraints, then emits a program."""
    size: int = 0
    variables: dict[str, slice] = field(default_factory=dict)
    rows: dict[str, list[slice]] = field(default_factory=dict)
    _blocks: list[tuple[Cone, Affine]] = field(default_factory=list)
    _num_rows: int = 0
    _objective: Affine | None = None

    def variable(self, name: str, size: int = 1) -> Affine:
        if name in self.variables:
            raise ValueError(f"Variable {name} declared twice")
        span = slice(self.size, self.size + size)
        self.variables[name] = span
        self.size += size
        idx = np.arange(span.start, span.stop, dtype=np.intp)
        return Affine(np.arange(size, dtype=np.intp), idx, np.ones(size),
                      np.zeros(size))

    def add(
        self, cone: type[Cone], expr: Affine, name: str | None = None,
    ) -> slice:
        """Constrain ``expr`` to ``cone``, returning the rows it occupies."""
        if not len(expr):
            raise ValueError("Empty cone constraint")
        span = slice(self._num_rows, self._num_rows + len(expr))
        self._blocks.append((cone(len(expr)), expr))
        self._num_rows = span.stop
        if name:
            self.rows.setdefault(name, []).append(span)
        return span

    def zero(self, expr: Affine, name: str | None = None) -> slice:
        return self.add(ZeroCone, expr, name)

    def nonneg(self, expr: Affine, name: str | None = None) -> slice:
        return self.add(NonNegCone, expr, name)

    def soc(self, expr: Affine, name: str | None = None) -> slice:
        return self.add(SecondOrderCone, expr, name)

    def minimize(self, expr: Affine) -> None:
        if len(expr) != 1:
            raise ValueError("The objective must be a scalar expression")
        self._objective = expr

    def build(self) -> ConeProgram:
        objective = np.zeros(self.size)
        offset = 0.0
        if self._objective is not None:
            objective = self._objective.matrix(self.size).toarray().ravel()
            offset = float(self._objective.const[0])

        exprs = [expr for _, expr in self._blocks]
        stacked = Affine.vstack(exprs) if exprs else Affine.constant([])
        program = ConeProgram(
            objective = objective,
            eq_matrix = -stacked.matrix(self.size),
            eq_rhs = stacked.const.copy(),
            cone_spec = tuple(cone for cone, _ in self._blocks),
            variable_names = dict(self.variables),
            offset = offset,
        )
        log.debug(
            "Built cone program: %d variables, %d rows, %d cones",
            program.num_variables, program.num_rows, len(program.cone_spec),
        )
        return program


def hyperbolic_constraint(z: Affine, u: Affine, v: Affine) -> Affine:
    """Expression lying in a second-order cone iff ``||z||^2 <= u v``.

    ``u`` and ``v`` are scalar expressions; membership also forces them to
    be nonnegative.
    """
    if len(u) != 1 or len(v) != 1:
        raise ValueError("u and v must be scalar expressions")
    return Affine.vstack((u + v, 2 * z, u - v))


def rationalize(
    beta: ArrayLike, max_power: int = GEOMEAN_MAX_POWER,
) -> tuple[list[int], int]:
    """Numerators ``p_k`` and common denominator ``q <= 2^max_power``."""
    values = np.asarray(beta, dtype=np.float64).ravel()
    limit = 2**max_power
    fractions = [Fraction(float(b)).limit_denominator(limit) for b in values]
    q = math.lcm(*(f.denominator for f in fractions))
    numerators = [int(f * q) for f in fractions]

    if (
        q > limit
        or sum(numerators) != q
        or np.any(np.abs(np.array(numerators) / q - values) > RATIONAL_TOL)
    ):
        raise IrrationalBeta(
            f"Weights {values.tolist()} have no common denominator "
            f"<= {limit}",
        )
    return numerators, q


def geometric_mean_epigraph(
    builder: ProgramBuilder,
    terms: Sequence[Affine],
    beta: ArrayLike,
    out: Affine,
    prefix: str = "geomean",
    max_power: int = GEOMEAN_MAX_POWER,
) -> int:
    """Constrain ``out <= prod_k terms[k] ^ beta[k]`` with a binary tree.

    Leaves hold every term ``p_k`` times and ``out`` itself ``2^P - q``
    times; each inner node ``x`` of two children ``a, b`` gets the
    hyperbolic constraint ``x^2 <= a b`` and the root is ``out``.
    Returns the number of cones emitted.
    """
    numerators, q = rationalize(beta, max_power)
    leaves: list[Affine] = [
        term for term, p in zip(terms, numerators, strict=True)
        for _ in range(p)
    ]
    depth = max(q - 1, 0).bit_length()
    leaves += [out] * (2**depth - q)

    if len(leaves) == 1:
        builder.nonneg(leaves[0] - out, name=prefix)
        return 1

    emitted = 0
    level = leaves
    while len(level) > 1:
        parents: list[Affine] = []
        for left, right in zip(level[::2], level[1::2], strict=True):
            if len(level) == 2:
                node = out
            else:
                node = builder.variable(f"{prefix}[{emitted}]")
            builder.soc(hyperbolic_constraint(node, left, right), name=prefix)
            parents.append(node)
            emitted += 1
        level = parents
    return emitted


