import math
import random
from collections import Counter

import pytest

from jtsampler.graph_core import Graph, is_decomposable, vset
from jtsampler.junction_tree import JunctionTree, build_junction_tree, graph_of, validate
from jtsampler.moves import (
    CONNECT,
    DISCONNECT,
    MULTI,
    SINGLE,
    InvalidProposal,
    apply_connect,
    apply_disconnect,
    apply_move,
    classify_neighbors,
    make_connect,
    make_disconnect,
    proposal_probability,
    propose_connect,
    propose_disconnect,
    reverse_move,
    reverse_proposal,
    single_connect_moves,
)
from jtsampler.oracle import seven_vertex_example


def node_of(j, clique):
    return next(i for i in j.active if j.nodes[i] == clique)


def test_connect_rejects_single_clique():
    j = build_junction_tree(Graph.complete(4))
    assert propose_connect(j, SINGLE, random.Random(0)) is None
    assert propose_connect(j, MULTI, random.Random(0)) is None


def test_trivial_graph_single_connect_probability():
    for n in range(2, 8):
        j = build_junction_tree(Graph.edgeless(n))
        for p in single_connect_moves(j):
            assert p.log_q_forward == pytest.approx(-math.log(n - 1))
            assert p.case == "a"


def test_single_connect_probability_formula():
    # C_X = {0,1,2}, C_Y = {2,3}, S = {2}, plus a third clique
    j = JunctionTree(5, [vset((0, 1, 2)), vset((2, 3)), vset((3, 4))], [(0, 1), (1, 2)])
    p = make_connect(j, 0, 1, vset([0]), vset([3]), SINGLE)
    assert p.log_q_forward == pytest.approx(-math.log(2 * 2 * 1))
    assert proposal_probability(j, p) == pytest.approx(p.log_q_forward)


def test_disconnect_rejects_on_edgeless():
    j = build_junction_tree(Graph.edgeless(5))
    rng = random.Random(1)
    for _ in range(50):
        assert propose_disconnect(j, SINGLE, rng) is None
        assert propose_disconnect(j, MULTI, rng) is None


def test_k2_single_disconnect_probability():
    j = build_junction_tree(Graph.complete(2))
    p = make_disconnect(j, 0, 0b01, 0b10, SINGLE)
    assert p.case == "a"
    assert p.S == 0
    assert p.log_q_forward == pytest.approx(0.0)
    new = p.resulting_tree(j)
    assert new.cliques() == [0b01, 0b10]
    assert new.separators() == [0]


def test_disconnect_rejected_when_neighbour_meets_both():
    # clique {0,1,2} next to {0,1,3}; removing 0-1 would break the neighbour
    j = JunctionTree(4, [vset((0, 1, 2)), vset((0, 1, 3))], [(0, 1)])
    assert classify_neighbors(j, 0, 0b01, 0b10) is None
    assert make_disconnect(j, 0, 0b01, 0b10, SINGLE) is None


def test_seven_vertex_connect_and_disconnect():
    ex = seven_vertex_example()
    a2, b_tree = ex["a2"], ex["b_tree"]
    a = node_of(a2, vset((0, 1)))
    b = node_of(a2, vset((1, 6)))
    p = make_connect(a2, a, b, 1 << 0, 1 << 6, SINGLE)
    assert p.case == "a"
    new = apply_connect(a2, p)
    assert new == b_tree
    assert graph_of(new) == ex["b"]
    # the tree a1 has no link joining the two cliques
    assert not any({i, k} == {node_of(ex["a1"], vset((0, 1))), node_of(ex["a1"], vset((1, 6)))}
                   for i, k in ex["a1"].links)
    # reverse: disconnect {0} and {6} from the clique {0,1,6}
    rev = reverse_move(new, p)
    assert rev.direction == DISCONNECT and rev.X == 1 and rev.Y == 1 << 6
    assert new.nodes[rev.anchor] == vset((0, 1, 6))
    back = apply_disconnect(new, rev)
    assert back == a2


def test_trivial_connect_merges():
    j = build_junction_tree(Graph.edgeless(3))
    a, b = j.links[0]
    p = make_connect(j, a, b, j.nodes[a], j.nodes[b], SINGLE)
    new = apply_move(j, p)
    assert p.case == "a"
    assert j.nodes[a] | j.nodes[b] in new.cliques()
    assert new.n_nodes == 2


def test_connect_case_b():
    # C_X = {0,1,2}, S = {1}, C_Y = {1,3}
    j = JunctionTree(4, [vset((0, 1, 2)), vset((1, 3))], [(0, 1)])
    assert validate(j)
    p = make_connect(j, 0, 1, 1 << 0, 1 << 3, SINGLE)
    assert p.case == "b"
    new = apply_move(j, p)
    assert validate(new)
    assert new.cliques() == sorted([vset((0, 1, 2)), vset((0, 1, 3))])
    assert new.separators() == [vset((0, 1))]
    before, after = set(graph_of(j).edges), set(graph_of(new).edges)
    assert after - before == {(0, 3)} and before <= after


def test_connect_case_d_and_reverse():
    # path {0,1}-{1,2,3}-{3,4,5}-{5,6}; connect 2 and 4 across S={3}
    cl = [vset((0, 1)), vset((1, 2, 3)), vset((3, 4, 5)), vset((5, 6))]
    j = JunctionTree(7, cl, [(0, 1), (1, 2), (2, 3)])
    p = make_connect(j, 1, 2, 1 << 2, 1 << 4, SINGLE)
    assert p.case == "d"
    new = apply_move(j, p)
    assert validate(new)
    assert vset((2, 3, 4)) in new.cliques()
    assert new.n_nodes == 5
    rev = reverse_move(new, p)
    assert rev.case == "d"
    back = apply_move(new, rev)
    assert back == j
    assert back.dump() == j.dump()


def test_single_disconnect_probability_case_b():
    # clique {0,1,2} whose neighbour {1,2,3} contains Y u S
    j = JunctionTree(4, [vset((0, 1, 2)), vset((1, 2, 3))], [(0, 1)])
    p = make_disconnect(j, 0, 1 << 0, 1 << 1, SINGLE)
    assert p is not None
    assert p.case in ("b", "c")
    assert p.log_q_forward == pytest.approx(math.log(0.5 * 2 / 6))
    assert proposal_probability(j, p) == pytest.approx(p.log_q_forward)


def test_multi_connect_probability_formula():
    # C_X \ S has two vertices, C_Y \ S one; take all of them
    j = JunctionTree(5, [vset((0, 1, 2)), vset((2, 3)), vset((3, 4))], [(0, 1), (1, 2)])
    p = make_connect(j, 0, 1, vset((0, 1)), 1 << 3, MULTI)
    want = (1 / 2) * (1 / 2) * (math.factorial(2) * math.factorial(0) / math.factorial(2)) * 1 * 1
    assert p.log_q_forward == pytest.approx(math.log(want))


def test_multi_disconnect_two_vertex_clique():
    # {0,1} with two singleton neighbours, both in N0
    j = JunctionTree(4, [vset((0, 1)), vset((2,)), vset((3,))], [(0, 1), (0, 2)])
    p = make_disconnect(j, 0, 1, 2, MULTI, to_y=(1,))
    assert p.case == "a"
    assert p.log_q_forward == pytest.approx(math.log((1 / 3) * 2 ** -2))


def test_reverse_on_two_vertices():
    j = build_junction_tree(Graph.edgeless(2))
    p = make_connect(j, 0, 1, 1, 2, MULTI)
    new = apply_move(j, p)
    assert reverse_proposal(new, p) == pytest.approx(0.0)
    assert p.log_q_reverse == pytest.approx(0.0)


def test_invalid_connect_sets():
    j = JunctionTree(4, [vset((0, 1, 2)), vset((2, 3))], [(0, 1)])
    with pytest.raises(InvalidProposal):
        make_connect(j, 0, 1, 1 << 2, 1 << 3)
    with pytest.raises(InvalidProposal):
        make_connect(j, 0, 1, vset((0, 1)), 1 << 3, SINGLE)
    with pytest.raises(InvalidProposal):
        make_connect(j, 0, 1, 0, 1 << 3)


def test_stale_proposal_rejected():
    rng = random.Random(2)
    j = build_junction_tree(Graph.edgeless(4))
    p = propose_connect(j, MULTI, rng)
    j2 = apply_move(j, p)
    with pytest.raises(InvalidProposal):
        apply_move(j2, p)


def _random_walk(v, steps, rng, arity):
    j = build_junction_tree(Graph.edgeless(v))
    for _ in range(steps):
        p = propose_connect(j, arity, rng) if rng.random() < 0.5 else propose_disconnect(j, arity, rng)
        if p is not None:
            yield j, p
            j = apply_move(j, p)


def test_round_trip_and_edge_delta():
    rng = random.Random(3)
    for v in (5, 6, 8, 10, 12):
        for arity in (SINGLE, MULTI):
            for j, p in _random_walk(v, 300, rng, arity):
                before = set(graph_of(j).edges)
                new = apply_move(j, p)
                assert validate(new)
                after = set(graph_of(new).edges)
                assert is_decomposable(graph_of(new))
                pairs = {(min(x, y), max(x, y))
                         for x in range(v) if p.X >> x & 1 for y in range(v) if p.Y >> y & 1}
                if p.direction == CONNECT:
                    assert after - before == pairs and before <= after
                else:
                    assert before - after == pairs and after <= before
                assert len(after) - len(before) == p.n_edges_delta
                rev = reverse_move(new, p)
                assert rev.log_q_forward == pytest.approx(p.log_q_reverse, abs=1e-12)
                assert rev.log_q_reverse == pytest.approx(p.log_q_forward, abs=1e-12)
                back = apply_move(new, rev)
                assert back == j
                assert back.nodes == j.nodes


def test_input_tree_untouched():
    rng = random.Random(4)
    for j, p in _random_walk(7, 200, rng, MULTI):
        snap = j.dump()
        p.resulting_tree(j)
        assert j.dump() == snap


def test_single_matches_multi_with_singletons():
    rng = random.Random(5)
    for j, p in _random_walk(8, 300, rng, SINGLE):
        if p.direction == CONNECT:
            a, b = p.anchor
            q = make_connect(j, a, b, p.X, p.Y, MULTI)
        else:
            q = make_disconnect(j, p.anchor, p.X, p.Y, MULTI, p.to_y)
        assert q.resulting_tree(j) == p.resulting_tree(j)


def _outcome(p):
    return (p.direction, p.anchor if p.direction == DISCONNECT else tuple(sorted(p.anchor)),
            p.X, p.Y, tuple(sorted(p.to_y)))


@pytest.mark.parametrize("arity", [SINGLE, MULTI])
def test_proposal_frequencies_match_log_q(arity):
    # a tree with separators of several sizes and a case (a) disconnect with N0 members
    cl = [vset((0, 1, 2)), vset((1, 2, 3)), vset((3, 4)), vset((5,)), vset((6,))]
    j = JunctionTree(7, cl, [(0, 1), (1, 2), (2, 3), (0, 4)])
    assert validate(j)
    rng = random.Random(6)
    n = 100_000
    for maker in (propose_connect, propose_disconnect):
        freq = Counter()
        logq = {}
        for _ in range(n):
            p = maker(j, arity, rng)
            if p is None:
                continue
            key = _outcome(p)
            freq[key] += 1
            logq[key] = p.log_q_forward
            assert proposal_probability(j, p) == pytest.approx(p.log_q_forward, abs=1e-12)
        for key, c in freq.items():
            q = math.exp(logq[key])
            sd = math.sqrt(q * (1 - q) / n)
            assert abs(c / n - q) < 5 * sd + 1e-4, (key, c / n, q)
