# Copyright optdesign authors
# SPDX-License-Identifier: AGPL-3.0-or-later

"""Seeded instance families.

Every generator draws from PCG64 streams spawned from one `SeedSequence`,
one stream per matrix, so a seed fully determines the instance on every
platform.
"""

from __future__ import annotations

import logging as log
from enum import auto

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing_extensions import Self

from optdesign.model import DesignProblem
from optdesign.utils import AutoStrEnum

DEFAULT_INTERVAL = (0.0, 3.0)
DEFAULT_BUDGET = 0.1


class Family(AutoStrEnum):
    random = auto()
    polynomial = auto()
    network = auto()


class Traffic(AutoStrEnum):
    uniform = auto()
    lognormal = auto()


class Interfaces(AutoStrEnum):
    links = auto()  # one experiment per directed link
    nodes = auto()  # all incoming links of a router at once


def streams(seed: int, count: int) -> list[np.random.Generator]:
    """Independent generators, one per matrix to draw."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


class InstanceSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    family: Family
    seed: int = 0
    s: int = Field(default=10, ge=1)
    m: int = Field(default=2, ge=1)
    l: int = Field(default=1, ge=1)  # noqa: E741
    r: int = Field(default=1, ge=0)
    degree: int = Field(default=5, ge=0)
    interval: tuple[float, float] = DEFAULT_INTERVAL
    grid: int = Field(default=300, ge=1)
    nodes: int = Field(default=6, ge=2)
    edges: int = Field(default=10, ge=1)
    traffic: Traffic = Traffic.uniform
    interfaces: Interfaces = Interfaces.links
    budget: float = Field(default=DEFAULT_BUDGET, gt=0)

    @model_validator(mode="after")
    def _check(self) -> Self:
        if self.family == Family.polynomial and self.grid < self.degree + 1:
            raise ValueError(
                f"{self.grid} grid points cannot fit a degree "
                f"{self.degree} polynomial",
            )
        low, high = self.interval
        if not low < high:
            raise ValueError(f"Empty interval {self.interval}")
        return self

    @property
    def dims(self) -> dict[str, int]:
        """Family parameters that identify an instance."""
        match self.family:
            case Family.random:
                return {"s": self.s, "m": self.m, "l": self.l, "r": self.r}
            case Family.polynomial:
                return {"degree": self.degree, "grid": self.grid}
            case Family.network:
                return {"nodes": self.nodes, "edges": self.edges}

    @property
    def instance_id(self) -> str:
        dims = "-".join(f"{k}{v}" for k, v in self.dims.items())
        return f"{self.family.value}-{dims}-seed{self.seed}"

    def generate(self) -> DesignProblem:
        from .network import gen_network

        match self.family:
            case Family.random:
                return gen_random(self.s, self.m, self.l, self.r, self.seed)
            case Family.polynomial:
                return gen_polynomial(self.degree, self.interval, self.grid)
            case Family.network:
                return gen_network(
                    self.nodes,
                    self.edges,
                    self.traffic,
                    self.seed,
                    interfaces = self.interfaces,
                    budget = self.budget,
                )


def gen_random(
    s: int, m: int, l: int, r: int, seed: int,  # noqa: E741
) -> DesignProblem:
    """Experiments with i.i.d. standard normal ``l x m`` matrices.

    The target has ``r`` standard normal columns, ``r = 1`` giving a
    vector and ``r = 0`` no target at all.
    """
    if s * l < m:
        log.warning(
            "%d experiments of %d rows cannot identify %d parameters, "
            "the target will not be estimable", s, l, m,
        )
    matrices, targets = streams(seed, 2)
    observations = matrices.standard_normal((s, l, m))
    target = None
    if r == 1:
        target = targets.standard_normal(m)
    elif r > 1:
        target = targets.standard_normal((m, r))

    return DesignProblem(
        observation_matrices = list(observations),
        num_params = m,
        target = target,
    )


def gen_polynomial(
    degree: int,
    interval: tuple[float, float] = DEFAULT_INTERVAL,
    grid_points: int = 300,
) -> DesignProblem:
    """Polynomial regression ``(1, x, ..., x^degree)`` on a uniform grid."""
    if grid_points < degree + 1:
        raise ValueError(
            f"{grid_points} grid points cannot fit a degree {degree} "
            "polynomial",
        )
    x = np.linspace(*interval, grid_points)
    rows = np.vander(x, degree + 1, increasing=True)
    return DesignProblem(
        observation_matrices = [row[None, :] for row in rows],
        num_params = degree + 1,
        target = np.eye(degree + 1),
    )
