# Copyright optdesign authors
# SPDX-License-Identifier: AGPL-3.0-or-later

"""Sampling rates for traffic measurement on a synthetic IP network.

The unknowns are the volumes of the ``n (n - 1)`` origin-destination
flows. Sampling at an interface observes, for each destination, the sum
of the flows routed through it; a router budget caps how many packets
its interfaces may sample.
"""

from __future__ import annotations

import itertools
import logging as log
from collections import defaultdict
from dataclasses import dataclass
from typing import TYPE_CHECKING

import backoff
import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, shortest_path

from optdesign.model import Constraints, DesignProblem
from optdesign.utils import OptDesignError

from .generators import DEFAULT_BUDGET, Interfaces, Traffic, streams

if TYPE_CHECKING:
    from numpy.typing import NDArray

    FloatArray = NDArray[np.float64]

MAX_TRIES = 20
UNIFORM_TRAFFIC = (0.5, 1.5)
LINK_WEIGHTS = (1.0, 2.0)

Arc = tuple[int, int]


class DisconnectedGraph(OptDesignError):
    """No connected topology could be drawn."""


@dataclass(frozen=True, slots=True)
class Topology:
    nodes: int
    links: NDArray[np.intp]
    weights: FloatArray

    @property
    def arcs(self) -> list[Arc]:
        """Both directions of every link."""
        return [
            arc for a, b in self.links.tolist() for arc in ((a, b), (b, a))
        ]

    @property
    def pairs(self) -> list[Arc]:
        """Origin-destination pairs, in parameter order."""
        return list(itertools.permutations(range(self.nodes), 2))

    def routes(self) -> dict[Arc, list[Arc]]:
        """Shortest path of every origin-destination pair, as arcs."""
        graph = sp.coo_matrix(
            (self.weights, (self.links[:, 0], self.links[:, 1])),
            shape=(self.nodes, self.nodes),
        ).tocsr()
        _, previous = shortest_path(
            graph, directed=False, return_predecessors=True,
        )
        routes: dict[Arc, list[Arc]] = {}
        for origin, dest in self.pairs:
            path: list[Arc] = []
            node = dest
            while node != origin:
                hop = int(previous[origin, node])
                path.append((hop, node))
                node = hop
            routes[origin, dest] = path[::-1]
        return routes


@backoff.on_exception(
    backoff.constant,
    DisconnectedGraph,
    max_tries = MAX_TRIES,
    interval = 0,
    backoff_log_level = log.WARNING,
)
def random_topology(
    nodes: int, edges: int, rng: np.random.Generator,
) -> Topology:
    """Uniformly chosen links with random routing weights."""
    candidates = np.array(list(itertools.combinations(range(nodes), 2)))
    chosen = np.sort(rng.choice(len(candidates), edges, replace=False))
    links = candidates[chosen]
    weights = rng.uniform(*LINK_WEIGHTS, edges)

    graph = sp.coo_matrix(
        (weights, (links[:, 0], links[:, 1])), shape=(nodes, nodes),
    )
    count, _ = connected_components(graph, directed=False)
    if count > 1:
        raise DisconnectedGraph(
            f"{edges} random links left {count} components on {nodes} nodes",
        )
    return Topology(nodes, links.astype(np.intp), weights)


def _traffic(
    kind: Traffic, size: int, rng: np.random.Generator,
) -> FloatArray:
    match kind:
        case Traffic.uniform:
            return rng.uniform(*UNIFORM_TRAFFIC, size)
        case Traffic.lognormal:
            return rng.lognormal(0.0, 1.0, size)


def _interfaces(
    topology: Topology, interfaces: Interfaces,
) -> tuple[list[dict[int, set[int]]], list[int]]:
    """OD pairs seen per destination at each interface, and its router."""
    index = {pair: k for k, pair in enumerate(topology.pairs)}
    seen: defaultdict[Arc, defaultdict[int, set[int]]] = \
        defaultdict(lambda: defaultdict(set))
    for (origin, dest), path in topology.routes().items():
        for arc in path:
            seen[arc][dest].add(index[origin, dest])

    if interfaces == Interfaces.links:
        arcs = topology.arcs
        return [dict(seen[arc]) for arc in arcs], [b for _, b in arcs]

    merged: list[dict[int, set[int]]] = [{} for _ in range(topology.nodes)]
    for (_, head), flows in seen.items():
        for dest, members in flows.items():
            merged[head].setdefault(dest, set()).update(members)
    return merged, list(range(topology.nodes))


def gen_network(
    n_nodes: int,
    n_edges: int,
    traffic: Traffic = Traffic.uniform,
    seed: int = 0,
    interfaces: Interfaces = Interfaces.links,
    budget: float = DEFAULT_BUDGET,
) -> DesignProblem:
    """Monitoring instance on a random connected network.

    One row per (interface, destination) counts the flows to that
    destination crossing the interface, scaled by the inverse square root
    of their prior volume, interfaces no route crosses being left out.
    ``R`` has one row per router holding the prior load of its interfaces,
    and ``b`` is ``budget`` times that load. The target is a normal draw
    projected on the observable space.
    """
    if n_edges < n_nodes - 1:
        raise DisconnectedGraph(
            f"{n_edges} links cannot connect {n_nodes} nodes",
        )
    if n_edges > n_nodes * (n_nodes - 1) // 2:
        raise ValueError(f"{n_nodes} nodes have fewer than {n_edges} links")

    shape, volumes, target = streams(seed, 3)
    topology = random_topology(n_nodes, n_edges, shape)
    m = n_nodes * (n_nodes - 1)
    prior = _traffic(traffic, m, volumes)

    observed, routers = _interfaces(topology, interfaces)
    # Interfaces that no route crosses are left out
    kept = [i for i, flows in enumerate(observed) if flows]
    observed = [observed[i] for i in kept]
    routers = [routers[i] for i in kept]

    matrices: list[FloatArray] = []
    loads = np.zeros(len(observed))
    for i, flows in enumerate(observed):
        rows = np.zeros((len(flows), m))
        for row, dest in zip(rows, sorted(flows), strict=True):
            members = sorted(flows[dest])
            volume = float(prior[members].sum())
            row[members] = 1 / np.sqrt(volume)
            loads[i] += volume
        matrices.append(rows)

    r = np.zeros((n_nodes, len(observed)))
    r[routers, np.arange(len(observed))] = loads
    basis = scipy.linalg.orth(np.vstack(matrices).T)
    c = basis @ (basis.T @ target.standard_normal(m))

    log.debug(
        "Network with %d nodes, %d links: %d experiments, %d rows",
        n_nodes, n_edges, len(matrices), sum(len(a) for a in matrices),
    )
    return DesignProblem(
        observation_matrices = matrices,
        num_params = m,
        target = c,
        constraints = Constraints(matrix=r, bound=budget * r.sum(axis=1)),
    )
