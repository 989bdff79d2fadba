# Copyright optdesign authors
# SPDX-License-Identifier: AGPL-3.0-or-later

"""Versioned JSON documents for problems and designs.

A problem file starts with the header ``schema_version``, ``family``,
``seed`` and ``dims``. Matrices are ``{rows, cols, encoding, data}``
where a ``dense`` encoding lists the entries row by row and a ``coo``
encoding lists ``[row, col, value]`` triples. Design files hold the
``weights`` and the ``problem_hash`` of the problem they were solved for.
"""

from __future__ import annotations

import hashlib
import json
from typing import TYPE_CHECKING, Any, Literal

import numpy as np
from pydantic import BaseModel, ValidationError

from optdesign.model import Constraints, Design, DesignProblem, SubModel
from optdesign.utils import OptDesignError

if TYPE_CHECKING:
    from pathlib import Path

    from numpy.typing import NDArray

    from .generators import InstanceSpec

    FloatArray = NDArray[np.float64]

SCHEMA_VERSION = 1
SPARSE_FILL = 0.3


class ParseError(OptDesignError):
    """The file is not a well-formed document."""


class SchemaValidation(OptDesignError):
    """The document does not describe a valid problem or design."""


class SchemaVersionMismatch(OptDesignError):
    pass


class HashMismatch(OptDesignError):
    """A design was computed for another problem."""


class MatrixData(BaseModel):
    rows: int
    cols: int
    encoding: Literal["dense", "coo"]
    data: list[float] | list[tuple[int, int, float]]

    @classmethod
    def encode(cls, matrix: FloatArray) -> MatrixData:
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim == 1:
            matrix = matrix[:, None]
        rows, cols = matrix.shape
        nonzero = np.nonzero(matrix)
        if nonzero[0].size > SPARSE_FILL * matrix.size:
            return cls(
                rows=rows, cols=cols, encoding="dense",
                data=matrix.ravel().tolist(),
            )
        triples = [
            (int(i), int(j), float(matrix[i, j])) for i, j in zip(*nonzero)
        ]
        return cls(rows=rows, cols=cols, encoding="coo", data=triples)

    def decode(self) -> FloatArray:
        if self.encoding == "dense":
            data = np.array(self.data, dtype=np.float64)
            if data.size != self.rows * self.cols:
                raise SchemaValidation(
                    f"Dense {self.rows}x{self.cols} matrix has {data.size} "
                    "entries",
                )
            return data.reshape(self.rows, self.cols)

        matrix = np.zeros((self.rows, self.cols))
        for entry in self.data:
            if not isinstance(entry, tuple):
                raise SchemaValidation(f"Bad coo entry {entry}")
            i, j, value = entry
            if not (0 <= i < self.rows and 0 <= j < self.cols):
                raise SchemaValidation(
                    f"coo entry ({i}, {j}) outside {self.rows}x{self.cols}",
                )
            matrix[i, j] = value
        return matrix


class ConstraintsData(BaseModel):
    matrix: MatrixData
    bound: list[float]


class SubModelData(BaseModel):
    observations: list[MatrixData]
    target: list[float]


class ProblemFile(BaseModel):
    schema_version: int = SCHEMA_VERSION
    family: str = "custom"
    seed: int | None = None
    dims: dict[str, int] = {}
    num_params: int
    observations: list[MatrixData]
    target: MatrixData | None = None
    constraints: ConstraintsData | None = None
    models: list[SubModelData] | None = None
    beta: list[float] | None = None

    @property
    def content(self) -> dict[str, Any]:
        """Everything but the header, which is what the hash covers."""
        return self.model_dump(
            mode="json",
            exclude={"schema_version", "family", "seed", "dims"},
        )


class DesignFile(BaseModel):
    schema_version: int = SCHEMA_VERSION
    weights: list[float]
    problem_hash: str
    criterion: str | None = None
    method: str | None = None
    value: float | None = None


def _problem_file(
    problem: DesignProblem, spec: InstanceSpec | None = None,
) -> ProblemFile:
    target = None
    if problem.target is not None:
        target = MatrixData.encode(problem.target_matrix)

    constraints = None
    if problem.constraints is not None:
        constraints = ConstraintsData(
            matrix = MatrixData.encode(problem.constraints.matrix),
            bound = problem.constraints.bound.tolist(),
        )

    models = None
    if problem.models is not None:
        models = [
            SubModelData(
                observations = [
                    MatrixData.encode(a) for a in model.observation_matrices
                ],
                target = model.target.tolist(),
            )
            for model in problem.models
        ]

    matrices = problem.observation_matrices
    r = 0 if problem.target is None else problem.target_matrix.shape[1]
    return ProblemFile(
        family = spec.family.value if spec else "custom",
        seed = spec.seed if spec else None,
        dims = {
            "s": problem.s,
            "m": problem.num_params,
            "l": max(a.shape[0] for a in matrices),
            "r": r,
        },
        num_params = problem.num_params,
        observations = [MatrixData.encode(a) for a in matrices],
        target = target,
        constraints = constraints,
        models = models,
        beta = None if problem.beta is None else problem.beta.tolist(),
    )


def _canonical(document: Any) -> bytes:
    return json.dumps(
        document, sort_keys=True, separators=(",", ":"),
    ).encode()


def problem_hash(problem: DesignProblem) -> str:
    """SHA-256 of the canonical form of a problem's matrices."""
    content = _problem_file(problem).content
    return hashlib.sha256(_canonical(content)).hexdigest()


def _load(path: Path, model: type[ProblemFile | DesignFile]) -> Any:
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from e

    if not isinstance(raw, dict):
        raise ParseError(f"{path}: expected a JSON object")
    version: Any = raw.get("schema_version")  # pyright: ignore
    if version != SCHEMA_VERSION:
        raise SchemaVersionMismatch(
            f"{path} has schema version {version}, expected {SCHEMA_VERSION}",
        )

    try:
        return model.model_validate(raw)
    except ValidationError as e:
        raise SchemaValidation(_describe(path, e)) from e


def _describe(path: Path, error: ValidationError) -> str:
    first = error.errors()[0]
    where = ".".join(str(part) for part in first["loc"]) or "document"
    return f"{path}: {where}: {first['msg']}"


def write_problem(
    problem: DesignProblem, path: Path, spec: InstanceSpec | None = None,
) -> str:
    """Write a problem file and return its hash."""
    document = _problem_file(problem, spec)
    path.write_text(document.model_dump_json(indent=1) + "\n")
    return problem_hash(problem)


def read_problem(path: Path) -> DesignProblem:
    document: ProblemFile = _load(path, ProblemFile)
    try:
        constraints = None
        if document.constraints:
            constraints = Constraints(
                matrix = document.constraints.matrix.decode(),
                bound = document.constraints.bound,
            )
        models = None
        if document.models is not None:
            models = [
                SubModel(
                    observation_matrices = [
                        a.decode() for a in model.observations
                    ],
                    target = model.target,
                )
                for model in document.models
            ]
        target = None
        if document.target is not None:
            target = document.target.decode()
            if target.shape[1] == 1:
                target = target[:, 0]

        return DesignProblem(
            observation_matrices = [a.decode() for a in document.observations],
            num_params = document.num_params,
            target = target,
            constraints = constraints,
            models = models,
            beta = document.beta,
        )
    except ValidationError as e:
        raise SchemaValidation(_describe(path, e)) from e


def write_design(
    design: Design,
    path: Path,
    problem: DesignProblem,
    **metadata: Any,
) -> None:
    document = DesignFile(
        weights = design.weights.tolist(),
        problem_hash = problem_hash(problem),
        **metadata,
    )
    path.write_text(document.model_dump_json(indent=1) + "\n")


def read_design(
    path: Path, problem: DesignProblem | None = None,
) -> tuple[Design, DesignFile]:
    """Read a design, checking it belongs to ``problem`` when given."""
    document: DesignFile = _load(path, DesignFile)
    if problem is not None and document.problem_hash != problem_hash(problem):
        raise HashMismatch(
            f"{path} was computed for problem {document.problem_hash[:12]}, "
            f"not {problem_hash(problem)[:12]}",
        )
    try:
        return Design(weights=document.weights), document
    except ValidationError as e:
        raise SchemaValidation(_describe(path, e)) from e
