"""Single-destination shortest-path task on small weighted graphs.

The latent state is a real vector of per-node distance estimates.  The
symbolic check runs a greedy best-first search (priority queue of length one)
that repeatedly moves to the unvisited neighbor minimizing accumulated cost
plus estimated remaining distance; a state is feasible when that search
reaches the destination at exactly the true shortest-path cost.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from ..sampler import Projection
from .base import Task

MAX_WEIGHT = 9


def dijkstra(adjacency: np.ndarray, destination: int) -> np.ndarray:
    """Exact distances from every node to ``destination`` (undirected graph)."""
    n = adjacency.shape[0]
    dist = np.full(n, np.iinfo(np.int64).max, dtype=np.int64)
    dist[destination] = 0
    heap = [(0, destination)]
    done = np.zeros(n, dtype=bool)
    while heap:
        d, node = heapq.heappop(heap)
        if done[node]:
            continue
        done[node] = True
        row = adjacency[node]
        for other in np.flatnonzero(row):
            nd = d + int(row[other])
            if nd < dist[other]:
                dist[other] = nd
                heapq.heappush(heap, (nd, int(other)))
    if not done.all():
        raise ValueError("graph is not connected")
    return dist


def random_connected_graph(n: int, edge_prob: float, rng) -> np.ndarray:
    """Random undirected graph with integer weights 1..9, retried until connected."""
    for _ in range(500):
        coins = rng.random((n, n))
        weights = rng.integers(1, MAX_WEIGHT + 1, size=(n, n))
        upper = np.triu(np.ones((n, n), dtype=bool), k=1)
        adjacency = np.where(upper & (coins < edge_prob), weights, 0).astype(np.int64)
        adjacency = adjacency + adjacency.T
        if _connected(adjacency):
            return adjacency
    raise RuntimeError(f"failed to sample a connected graph (n={n}, p={edge_prob})")


def _connected(adjacency: np.ndarray) -> bool:
    n = adjacency.shape[0]
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        node = stack.pop()
        for other in np.flatnonzero(adjacency[node]):
            if not seen[other]:
                seen[other] = True
                stack.append(int(other))
    return bool(seen.all())


@dataclass(eq=False)
class SdspInstance:
    """One training example: a graph, endpoints, and hidden exact distances."""

    example_id: int
    adjacency: np.ndarray
    source: int
    destination: int
    exact_distances: np.ndarray
    feature_seed: int = 0
    neighbors: list = field(init=False, repr=False)
    shortest_cost: int = field(init=False)

    def __post_init__(self) -> None:
        self.adjacency = np.asarray(self.adjacency, dtype=np.int64)
        self.exact_distances = np.asarray(self.exact_distances, dtype=np.int64)
        n = self.adjacency.shape[0]
        # neighbor ids ascending so argmin tie-breaks toward the lowest id
        self.neighbors = []
        for node in range(n):
            ids = np.flatnonzero(self.adjacency[node])
            self.neighbors.append((ids, self.adjacency[node][ids].astype(float)))
        self.shortest_cost = int(self.exact_distances[self.source])

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    def features(self) -> np.ndarray:
        """Row-major weighted adjacency, scaled to [0, 1]."""
        return self.adjacency.reshape(-1).astype(float) / MAX_WEIGHT


def greedy_astar(instance: SdspInstance, z: np.ndarray):
    """Best-first walk with a length-one frontier.

    From the current node, move to the unvisited neighbor minimizing
    accumulated cost plus the estimate ``z[neighbor]``; ties break toward the
    lowest node id.  Returns (nodes after the source, cost) on reaching the
    destination, or None on a dead end or after n moves.
    """
    source, destination = instance.source, instance.destination
    if source == destination:
        return [], 0
    current = source
    cost = 0.0
    visited = {source}
    path = []
    for _ in range(instance.n):
        ids, weights = instance.neighbors[current]
        best_node = -1
        best_priority = np.inf
        for k in range(ids.shape[0]):
            node = ids[k]
            if node in visited:
                continue
            priority = cost + weights[k] + z[node]
            if priority < best_priority:
                best_priority = priority
                best_node = int(node)
                best_weight = weights[k]
        if best_node < 0:
            return None
        cost += best_weight
        current = best_node
        visited.add(best_node)
        path.append(best_node)
        if current == destination:
            return path, int(cost)
    return None


def _candidate_values(exact: int, max_distance: int):
    """Integer grid ordered by closeness to the exact distance, smaller first."""
    yield exact
    for delta in range(1, max_distance + 1):
        if exact - delta >= 0:
            yield exact - delta
        if exact + delta <= max_distance:
            yield exact + delta


class SdspTask(Task):
    name = "sdsp"
    kind = "continuous"

    def state_dim(self, instance: SdspInstance) -> int:
        return instance.n

    def feasible(self, instance: SdspInstance, state) -> bool:
        result = greedy_astar(instance, state)
        return result is not None and result[1] == instance.shortest_cost

    def initial_solution(self, instance: SdspInstance, rng=None):
        return instance.exact_distances.astype(float)

    def projection(self, instance: SdspInstance, choice: str = "default") -> Projection:
        if choice == "default":
            # drop every fifth component, mirroring the paper-scale pattern
            return Projection(instance.n, tuple(range(4, instance.n, 5)))
        if choice == "identity":
            return Projection(instance.n, ())
        raise ValueError(f"unknown sdsp projection {choice!r}")

    def walk_projected(self, instance, projected, projection, rng):
        out = np.array(projected, dtype=float)
        i = int(rng.integers(out.shape[0]))
        out[i] += rng.uniform(-5.0, 5.0)
        return out

    def invert_projection(self, instance: SdspInstance, projected, projection):
        """Complete dropped components by coordinate search near exact distances.

        Starts from the exact Dijkstra values for every dropped component and,
        only if that joint assignment is infeasible, sweeps each dropped
        coordinate over the integer grid in ascending distance from its exact
        value, keeping the first repair that restores feasibility.  Kept
        components are never altered.
        """
        z = np.empty(instance.n, dtype=float)
        z[list(projection.kept)] = projected
        exact = instance.exact_distances
        for i in projection.dropped:
            z[i] = float(exact[i])
        if self.feasible(instance, z):
            return z
        max_distance = MAX_WEIGHT * (instance.n - 1)
        for i in projection.dropped:
            repaired = False
            for value in _candidate_values(int(exact[i]), max_distance):
                z[i] = float(value)
                if self.feasible(instance, z):
                    repaired = True
                    break
            if not repaired:
                z[i] = float(exact[i])
        if self.feasible(instance, z):
            return z
        return None

    def gold_state(self, instance: SdspInstance):
        return instance.exact_distances.astype(float)

    def symbol_accuracy(self, instance: SdspInstance, state) -> float:
        rounded = np.rint(np.asarray(state, dtype=float))
        return float((rounded == instance.exact_distances).mean())

    def output_correct(self, instance: SdspInstance, state) -> bool:
        return self.feasible(instance, state)
