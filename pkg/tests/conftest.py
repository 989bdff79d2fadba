# Copyright optdesign authors
# SPDX-License-Identifier: AGPL-3.0-or-later

from collections.abc import Callable

import numpy as np
import pytest

from optdesign.instances import gen_random
from optdesign.model import DesignProblem


@pytest.fixture
def e1e2() -> DesignProblem:
    """Two unit experiments, ``c = (1, 1)``: optimum ``(1/2, 1/2)``."""
    return DesignProblem(
        observation_matrices = [
            np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]]),
        ],
        num_params = 2,
        target = np.array([1.0, 1.0]),
    )


@pytest.fixture
def identity() -> DesignProblem:
    """A single experiment ``A_1 = I_2`` and ``c = (1, 1)``."""
    return DesignProblem(
        observation_matrices = [np.eye(2)],
        num_params = 2,
        target = np.array([1.0, 1.0]),
    )


@pytest.fixture
def random_problem() -> Callable[..., DesignProblem]:
    def make(
        seed: int = 0,
        s: int = 12,
        m: int = 3,
        l: int = 1,  # noqa: E741
        r: int = 1,
    ) -> DesignProblem:
        return gen_random(s, m, l, r, seed)
    return make
