"""Independent reference calculations used by the tests."""

import random

from sdwban.model import gateway, switch
from sdwban.routing import TopologyView


def brute_force_route(links, src, dst, excluded=()):
    """Enumerate every simple path; return (cost, path) of the best or None.

    Best means lowest summed cost, then the lexicographically smallest
    sequence of (kind rank, index) pairs.
    """
    adj = {}
    for a, b, c in links:
        adj.setdefault(a, {})[b] = c
        adj.setdefault(b, {})[a] = c
    banned = set(excluded) - {src, dst}
    best = None

    def walk(path, cost):
        nonlocal best
        node = path[-1]
        if node == dst:
            cand = (cost, [n.sort_key() for n in path], list(path))
            if best is None or cand[:2] < best[:2]:
                best = cand
            return
        for nxt, w in adj.get(node, {}).items():
            if nxt in path or nxt in banned:
                continue
            path.append(nxt)
            walk(path, cost + w)
            path.pop()

    if src in adj or src == dst:
        walk([src], 0.0)
    return None if best is None else (best[0], best[2])


def random_graph(seed: int, max_nodes: int = 8):
    """Random connected-ish graph of switches plus one gateway, small integer-ish costs."""
    rng = random.Random(f"graph/{seed}")
    n = rng.randint(2, max_nodes)
    nodes = [switch(i) for i in range(n - 1)] + [gateway()]
    links = []
    for i, a in enumerate(nodes):
        for b in nodes[i + 1:]:
            if rng.random() < 0.55:
                # few distinct values so equal-cost ties are common
                links.append((a, b, rng.choice([0.001, 0.002, 0.003, 0.005])))
    excluded = {x for x in nodes[1:-1] if rng.random() < 0.2}
    return nodes, links, excluded


def view_of(nodes, links) -> TopologyView:
    v = TopologyView(links)
    for n in nodes:
        v.add_node(n)
    return v


def reference_latency(bits_body, bits, *, body, uplink, backhaul):
    """Steady-state sensor -> cloud latency over one switch and the gateway.

    Each hop is latency + bits / bandwidth with nothing queued ahead.
    """
    (lb, bb), (lu, bu), (lh, bh) = body, uplink, backhaul
    return (lb + bits_body / bb) + (lu + bits / bu) + (lh + bits / bh)
