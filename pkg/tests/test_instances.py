# Copyright optdesign authors
# SPDX-License-Identifier: AGPL-3.0-or-later

import json
import logging
from pathlib import Path

import numpy as np
import pytest
from pydantic import ValidationError

from optdesign.instances import (
    DisconnectedGraph,
    Family,
    HashMismatch,
    InstanceSpec,
    Interfaces,
    ParseError,
    SchemaValidation,
    SchemaVersionMismatch,
    Traffic,
    gen_network,
    gen_polynomial,
    gen_random,
    problem_hash,
    read_design,
    read_problem,
    write_design,
    write_problem,
)
from optdesign.model import Design, DesignProblem, SubModel


def test_random_is_deterministic():
    first = gen_random(8, 3, 2, 1, seed=5)
    again = gen_random(8, 3, 2, 1, seed=5)
    other = gen_random(8, 3, 2, 1, seed=6)

    assert problem_hash(first) == problem_hash(again)
    assert problem_hash(first) != problem_hash(other)
    assert len(first.observation_matrices) == 8
    assert first.observation_matrices[0].shape == (2, 3)
    assert first.target is not None
    assert first.target.shape == (3,)


def test_random_targets():
    assert gen_random(4, 3, 1, 0, seed=0).target is None
    matrix = gen_random(4, 3, 1, 2, seed=0)
    assert matrix.target_matrix.shape == (3, 2)

    # Observations do not depend on the target draw
    np.testing.assert_array_equal(
        gen_random(4, 3, 1, 1, seed=0).observation_matrices[0],
        matrix.observation_matrices[0],
    )


def test_random_underdetermined_warns(caplog):
    with caplog.at_level(logging.WARNING):
        gen_random(2, 5, 1, 1, seed=0)
    assert "cannot identify" in caplog.text


def test_polynomial():
    problem = gen_polynomial(5, (0.0, 3.0), 300)
    assert problem.s == 300
    assert problem.num_params == 6
    np.testing.assert_allclose(
        problem.observation_matrices[0], [[1, 0, 0, 0, 0, 0]],
    )
    np.testing.assert_allclose(
        problem.observation_matrices[-1], [[1, 3, 9, 27, 81, 243]],
    )
    np.testing.assert_array_equal(problem.target_matrix, np.eye(6))

    with pytest.raises(ValueError, match="grid points"):
        gen_polynomial(5, (0.0, 3.0), 5)


def test_network_complete_graph():
    problem = gen_network(4, 6, Traffic.uniform, seed=1)
    assert problem.s == 12
    assert problem.num_params == 12
    assert problem.constraints is not None
    assert problem.constraints.matrix.shape == (4, 12)
    np.testing.assert_allclose(
        problem.constraints.bound,
        0.1 * problem.constraints.matrix.sum(axis=1),
    )
    # Every link of a complete graph is its own shortest route
    for a in problem.observation_matrices:
        assert a.shape[0] == 1
        assert np.count_nonzero(a) == 1


def test_network_rows_scaled_by_volume():
    problem = gen_network(4, 6, Traffic.lognormal, seed=1)
    assert problem.constraints is not None
    # One flow per link: the row entry is 1 / sqrt of its volume
    loads = problem.constraints.matrix.sum(axis=0)
    for a, load in zip(problem.observation_matrices, loads, strict=True):
        assert float(a.sum()) ** 2 * load == pytest.approx(1)


def test_network_traffic_keeps_structure():
    uniform = gen_network(6, 9, Traffic.uniform, seed=3)
    lognormal = gen_network(6, 9, Traffic.lognormal, seed=3)
    assert uniform.s == lognormal.s
    for a, b in zip(
        uniform.observation_matrices, lognormal.observation_matrices,
    ):
        np.testing.assert_array_equal(a != 0, b != 0)
    assert problem_hash(uniform) != problem_hash(lognormal)


def test_network_target_observable():
    problem = gen_network(5, 6, seed=2)
    rows = np.vstack(problem.observation_matrices)
    coefficients = np.linalg.lstsq(rows.T, problem.target, rcond=None)[0]
    projection = rows.T @ coefficients
    np.testing.assert_allclose(projection, problem.target, atol=1e-9)


def test_network_node_interfaces():
    problem = gen_network(5, 7, seed=4, interfaces=Interfaces.nodes)
    assert problem.s == 5
    assert problem.constraints is not None
    np.testing.assert_allclose(
        np.count_nonzero(problem.constraints.matrix, axis=0), 1,
    )


def test_network_errors():
    with pytest.raises(DisconnectedGraph):
        gen_network(6, 4)
    with pytest.raises(ValueError, match="fewer"):
        gen_network(4, 7)


def test_instance_spec():
    spec = InstanceSpec(family=Family.random, seed=3, s=6, m=2)
    assert spec.instance_id == "random-s6-m2-l1-r1-seed3"
    assert problem_hash(spec.generate()) == \
        problem_hash(gen_random(6, 2, 1, 1, 3))

    poly = InstanceSpec(family=Family.polynomial, degree=2, grid=10)
    assert poly.instance_id == "polynomial-degree2-grid10-seed0"
    assert poly.generate().num_params == 3

    with pytest.raises(ValidationError):
        InstanceSpec(family=Family.polynomial, degree=5, grid=3)
    with pytest.raises(ValidationError):
        InstanceSpec(family=Family.random, interval=(1.0, 0.0))
    with pytest.raises(ValidationError):
        InstanceSpec(family=Family.random, s=0)


def test_problem_round_trip(tmp_path: Path):
    problem = gen_network(4, 5, seed=0)
    path = tmp_path / "problem.json"
    digest = write_problem(problem, path)
    loaded = read_problem(path)

    assert problem_hash(loaded) == digest
    assert loaded.constraints is not None
    assert loaded.target is not None
    assert loaded.target.shape == (12,)
    document = json.loads(path.read_text())
    assert document["schema_version"] == 1
    assert document["observations"][0]["encoding"] == "coo"


def test_header_not_hashed(tmp_path: Path):
    spec = InstanceSpec(family=Family.random, seed=1)
    problem = spec.generate()
    with_header = write_problem(problem, tmp_path / "a.json", spec)
    without = write_problem(problem, tmp_path / "b.json")
    assert with_header == without
    document = json.loads((tmp_path / "a.json").read_text())
    assert document["family"] == "random"
    assert document["dims"] == {"s": 10, "m": 2, "l": 1, "r": 1}


def test_models_round_trip(tmp_path: Path, e1e2: DesignProblem):
    problem = DesignProblem(
        observation_matrices = e1e2.observation_matrices,
        num_params = 2,
        models = [SubModel(
            observation_matrices = e1e2.observation_matrices,
            target = [1, 1],
        )],
        beta = [1.0],
    )
    path = tmp_path / "s.json"
    write_problem(problem, path)
    loaded = read_problem(path)
    assert loaded.models is not None
    np.testing.assert_array_equal(loaded.models[0].target, [1, 1])
    assert loaded.target is None


def _rewrite(path: Path, **changes) -> None:
    document = json.loads(path.read_text())
    document.update(changes)
    path.write_text(json.dumps(document))


def test_beta_must_sum_to_one(tmp_path: Path, e1e2: DesignProblem):
    model = SubModel(
        observation_matrices = e1e2.observation_matrices, target = [1, 0],
    )
    problem = DesignProblem(
        observation_matrices = e1e2.observation_matrices,
        num_params = 2,
        models = [model, model],
        beta = [0.5, 0.5],
    )
    path = tmp_path / "s.json"
    write_problem(problem, path)
    _rewrite(path, beta=[0.5, 0.4])
    with pytest.raises(SchemaValidation, match="sum"):
        read_problem(path)


def test_problem_file_errors(tmp_path: Path, e1e2: DesignProblem):
    path = tmp_path / "p.json"
    write_problem(e1e2, path)
    _rewrite(path, schema_version=2)
    with pytest.raises(SchemaVersionMismatch):
        read_problem(path)

    write_problem(e1e2, path)
    _rewrite(path, num_params="two")
    with pytest.raises(SchemaValidation, match="num_params"):
        read_problem(path)

    path.write_text('{"schema_version": 1,\n  "num_params": }')
    with pytest.raises(ParseError, match=r"p\.json:2:"):
        read_problem(path)

    path.write_text("[1, 2]")
    with pytest.raises(ParseError):
        read_problem(path)


def test_bad_coo_entry(tmp_path: Path, e1e2: DesignProblem):
    path = tmp_path / "p.json"
    write_problem(e1e2, path)
    document = json.loads(path.read_text())
    document["observations"][0] = {
        "rows": 1, "cols": 2, "encoding": "coo", "data": [[0, 5, 1.0]],
    }
    path.write_text(json.dumps(document))
    with pytest.raises(SchemaValidation, match="outside"):
        read_problem(path)


def test_design_round_trip(tmp_path: Path, e1e2: DesignProblem):
    path = tmp_path / "d.json"
    write_design(
        Design.uniform(2), path, e1e2, criterion="c", method="socp", value=4,
    )
    design, document = read_design(path, e1e2)
    np.testing.assert_allclose(design.weights, [0.5, 0.5])
    assert document.criterion == "c"
    assert document.value == 4
    assert document.problem_hash == problem_hash(e1e2)


def test_design_errors(tmp_path: Path, e1e2: DesignProblem, identity):
    path = tmp_path / "d.json"
    write_design(Design.uniform(2), path, e1e2)
    with pytest.raises(HashMismatch):
        read_design(path, identity)

    _rewrite(path, weights=[1.2, -0.2])
    with pytest.raises(SchemaValidation):
        read_design(path, e1e2)
