import pytest

from oracles import brute_force_route, random_graph, view_of
from sdwban.model import gateway, switch
from sdwban.routing import NoRoute, TopologyView, compute_route

S1, R1, R2, GW = switch(0), switch(1), switch(2), gateway()


def test_single_edge():
    assert compute_route(TopologyView([(S1, GW, 0.01)]), S1, GW) == [S1, GW]


def test_diamond_with_exclusion_takes_other_branch():
    v = TopologyView([(S1, R1, 0.01), (S1, R2, 0.01), (R1, GW, 0.01), (R2, GW, 0.01)])
    assert compute_route(v, S1, GW) == [S1, R1, GW]
    assert compute_route(v, S1, GW, {R1}) == [S1, R2, GW]


def test_no_route_raises():
    v = TopologyView([(S1, R1, 0.01), (R1, GW, 0.01)])
    with pytest.raises(NoRoute):
        compute_route(v, S1, GW, {R1})


def test_endpoints_are_never_excluded():
    v = TopologyView([(S1, GW, 0.01)])
    assert compute_route(v, S1, GW, {S1, GW}) == [S1, GW]


@pytest.mark.parametrize("seed", range(100))
def test_matches_exhaustive_enumeration(seed):
    nodes, links, excluded = random_graph(seed)
    view = view_of(nodes, links)
    src, dst = nodes[0], nodes[-1]
    for excl in (set(), excluded):
        expected = brute_force_route(links, src, dst, excl)
        if expected is None:
            with pytest.raises(NoRoute):
                compute_route(view, src, dst, excl)
        else:
            path = compute_route(view, src, dst, excl)
            assert view.path_cost(path) == expected[0]
            assert path == expected[1]
