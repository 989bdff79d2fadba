# Copyright optdesign authors
# SPDX-License-Identifier: AGPL-3.0-or-later

from .files import (
    SCHEMA_VERSION,
    HashMismatch,
    ParseError,
    SchemaValidation,
    SchemaVersionMismatch,
    problem_hash,
    read_design,
    read_problem,
    write_design,
    write_problem,
)
from .generators import (
    Family,
    InstanceSpec,
    Interfaces,
    Traffic,
    gen_polynomial,
    gen_random,
)
from .network import DisconnectedGraph, gen_network

__all__ = [
    "SCHEMA_VERSION",
    "DisconnectedGraph",
    "Family",
    "HashMismatch",
    "InstanceSpec",
    "Interfaces",
    "ParseError",
    "SchemaValidation",
    "SchemaVersionMismatch",
    "Traffic",
    "gen_network",
    "gen_polynomial",
    "gen_random",
    "problem_hash",
    "read_design",
    "read_problem",
    "write_design",
    "write_problem",
]
