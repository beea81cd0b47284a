"""Least-latency routing over the controller's topology view."""

from __future__ import annotations

import heapq
from collections.abc import Iterable
from typing import Optional

from .model import NodeId, SdwbanError


class NoRoute(SdwbanError):
    pass


class TopologyView:
    """Undirected graph with positive link costs (seconds of latency)."""

    def __init__(self, links: Iterable[tuple[NodeId, NodeId, float]] = ()):
        self.adj: dict[NodeId, dict[NodeId, float]] = {}
        for a, b, cost in links:
            self.add_link(a, b, cost)

    def add_node(self, n: NodeId) -> None:
        self.adj.setdefault(n, {})

    def add_link(self, a: NodeId, b: NodeId, cost: float) -> None:
        if a == b:
            raise ValueError(f"self-loop on {a}")
        if not cost > 0:
            raise ValueError(f"link {a}-{b} needs a positive cost, got {cost}")
        self.adj.setdefault(a, {})[b] = cost
        self.adj.setdefault(b, {})[a] = cost

    def remove_link(self, a: NodeId, b: NodeId) -> None:
        self.adj.get(a, {}).pop(b, None)
        self.adj.get(b, {}).pop(a, None)

    def has_link(self, a: NodeId, b: NodeId) -> bool:
        return b in self.adj.get(a, {})

    def __contains__(self, n: NodeId) -> bool:
        return n in self.adj

    def nodes(self) -> list[NodeId]:
        return sorted(self.adj)

    def links(self) -> list[tuple[NodeId, NodeId, float]]:
        return [(a, b, c) for a in sorted(self.adj) for b, c in sorted(self.adj[a].items()) if a < b]

    def path_cost(self, path: list[NodeId]) -> float:
        cost = 0.0
        for a, b in zip(path, path[1:]):
            cost += self.adj[a][b]
        return cost

    def copy(self) -> "TopologyView":
        return TopologyView(self.links()) if self.adj else TopologyView()


def _path_key(path: tuple[NodeId, ...]) -> tuple:
    return tuple(n.sort_key() for n in path)


def compute_route(
    view: TopologyView, src: NodeId, dst: NodeId, excluded: Optional[set[NodeId]] = None
) -> list[NodeId]:
    """Minimum-cost path from ``src`` to ``dst`` avoiding excluded intermediates.

    Ties on cost go to the lexicographically smallest node sequence. Labels
    are (cost, path) pairs settled in heap order; with strictly positive
    costs the first settled label of ``dst`` is both cost-optimal and
    lexicographically minimal among optimal paths.
    """
    if src not in view or dst not in view:
        raise NoRoute(f"{src} or {dst} not in topology view")
    if src == dst:
        return [src]
    excluded = set(excluded or ()) - {src, dst}
    heap = [(0.0, _path_key((src,)), (src,))]
    settled: set[NodeId] = set()
    while heap:
        cost, _, path = heapq.heappop(heap)
        node = path[-1]
        if node in settled:
            continue
        settled.add(node)
        if node == dst:
            return list(path)
        for nxt, w in view.adj[node].items():
            if nxt in settled or nxt in excluded:
                continue
            new_path = path + (nxt,)
            heapq.heappush(heap, (cost + w, _path_key(new_path), new_path))
    raise NoRoute(f"no path from {src} to {dst} avoiding {sorted(map(str, excluded))}")
