import math
import random

import numpy as np
import pytest

from jtsampler.graph_core import Graph
from jtsampler.junction_tree import build_junction_tree, count_junction_trees, graph_of, validate
from jtsampler.moves import MULTI, SINGLE, apply_move, propose_connect, propose_disconnect, reverse_move
from jtsampler.oracle import all_junction_trees, randomization_matrix, transition_matrix
from jtsampler.sampler import (
    STANDARD,
    TRACE_COLUMNS,
    TWO_STAGE,
    AnnealOptions,
    ChainError,
    ChainOptions,
    EdgeOccupancy,
    EdgePenaltyScore,
    GraphFunctionScore,
    Hooks,
    TargetDistribution,
    UniformScore,
    acceptance_probability,
    anneal,
    edge_penalty,
    irreducibility_path,
    mh_step,
    run_chain,
    two_stage_accept,
    write_trace,
)

from conftest import random_decomposable


def test_zero_sweeps():
    j0 = build_junction_tree(Graph.edgeless(4))
    res = run_chain(j0, TargetDistribution(), ChainOptions(sweeps=0, thin=1))
    assert res.trace == []
    assert res.state == j0
    assert res.columns == TRACE_COLUMNS
    assert res.acceptance_rate == 0.0


def test_options_validation():
    with pytest.raises(ValueError):
        ChainOptions(thin=0)
    with pytest.raises(ValueError):
        ChainOptions(param_update_every=0)
    with pytest.raises(ValueError):
        ChainOptions(randomize_tree_every=0)
    with pytest.raises(ValueError):
        ChainOptions(acceptance_rule="greedy")
    with pytest.raises(ValueError):
        ChainOptions(move_arity="triple")
    with pytest.raises(ValueError):
        ChainOptions(sweeps=-1)
    with pytest.raises(ValueError):
        AnnealOptions(cooling_factor=1.5)
    with pytest.raises(ValueError):
        AnnealOptions(initial_temperature=0)
    ChainOptions(randomize_tree_every=None)


def test_edge_penalty():
    assert edge_penalty(15, 1) == pytest.approx(math.log(13))
    assert edge_penalty(15, 2) == pytest.approx(math.log(6))
    with pytest.raises(ValueError):
        edge_penalty(3, 2)


def test_acceptance_probability_rules():
    assert acceptance_probability(0.5, 0.2) == 1.0
    assert acceptance_probability(-1.0, 0.5) == pytest.approx(math.exp(-0.5))
    assert acceptance_probability(-1.0, 0.5, TWO_STAGE) == pytest.approx(math.exp(-1.0))
    assert acceptance_probability(1.0, -1.0, TWO_STAGE) == pytest.approx(math.exp(-1.0))
    grid = np.linspace(-3, 3, 25)
    for a in grid:
        for b in grid:
            assert acceptance_probability(a, b, TWO_STAGE) <= acceptance_probability(a, b, STANDARD) + 1e-15


def test_two_stage_accept_is_lazy_and_calibrated():
    rng = random.Random(1)
    calls = []

    def lp():
        calls.append(1)
        return math.log(0.5)

    n = 100_000
    hits = sum(two_stage_accept(lp, math.log(0.4), rng) for _ in range(n))
    assert abs(hits / n - 0.2) < 0.006
    # the target ratio is only evaluated when the proposal test passes
    assert abs(len(calls) / n - 0.4) < 0.006


def test_two_state_chain():
    # v=2: edge absent or present, pi(present) / pi(absent) = exp(-c)
    c = 0.7
    for rule in (STANDARD, TWO_STAGE):
        for arity in (SINGLE, MULTI):
            present = []
            opts = ChainOptions(sweeps=60_000, thin=1, acceptance_rule=rule, move_arity=arity, seed=3)
            res = run_chain(build_junction_tree(Graph.edgeless(2)),
                            TargetDistribution(EdgePenaltyScore(c)), opts,
                            Hooks(observer=lambda s, st: present.append(st.n_edges())))
            want = math.exp(-c) / (1 + math.exp(-c))
            assert abs(np.mean(present) - want) < 0.02
            assert [row[2] for row in res.trace] == present


def _kernels(v, mu):
    t = TargetDistribution(EdgePenaltyScore(0.3), mu)
    states = all_junction_trees(v)
    out = {}
    for arity in (SINGLE, MULTI):
        for rule in (STANDARD, TWO_STAGE):
            out[arity, rule] = transition_matrix(v, t, arity, rule, states)
    return out


@pytest.mark.parametrize("v", [2, 3, 4])
@pytest.mark.parametrize("mu", [False, True])
def test_exact_stationarity(v, mu):
    for (arity, rule), (states, pi, P) in _kernels(v, mu).items():
        assert np.allclose(P.sum(axis=1), 1.0, atol=1e-13)
        assert np.max(np.abs(pi @ P - pi)) < 1e-12
        # detailed balance, not just stationarity
        flow = pi[:, None] * P
        assert np.max(np.abs(flow - flow.T)) < 1e-12


def test_peskun_ordering():
    kern = _kernels(4, True)
    for arity in (SINGLE, MULTI):
        _, _, ps = kern[arity, STANDARD]
        _, _, pt = kern[arity, TWO_STAGE]
        off = ~np.eye(len(ps), dtype=bool)
        assert np.all(pt[off] <= ps[off] + 1e-15)
        assert np.any(pt[off] < ps[off] - 1e-9)


def test_target_mu_correction_values():
    j = build_junction_tree(Graph.edgeless(5))
    assert TargetDistribution(UniformScore(), True).log_value(j) == pytest.approx(-3 * math.log(5))
    assert TargetDistribution(UniformScore(), False).log_value(j) == 0.0
    g = GraphFunctionScore(lambda graph: float(graph.n_edges))
    assert TargetDistribution(g, False).log_value(build_junction_tree(Graph.complete(4))) == 6.0


def test_log_ratio_matches_difference():
    rng = random.Random(4)
    t = TargetDistribution(GraphFunctionScore(lambda g: 0.1 * g.n_edges ** 2), True)
    j = build_junction_tree(Graph.edgeless(6))
    opts = ChainOptions(move_arity=MULTI)
    for _ in range(300):
        p = propose_connect(j, MULTI, rng) if rng.random() < 0.5 else propose_disconnect(j, MULTI, rng)
        if p is None:
            continue
        new = p.resulting_tree(j)
        assert t.log_ratio(j, p) == pytest.approx(t.log_value(new) - t.log_value(j), abs=1e-9)
        j, _ = mh_step(j, t, opts, rng)


def test_randomization_preserves_graph_level_targets():
    states = all_junction_trees(4)
    _, R = randomization_matrix(4, states)
    f = GraphFunctionScore(lambda g: 0.4 * g.n_edges - 0.1 * g.n_edges ** 2)
    for mu in (False, True):
        t = TargetDistribution(f, mu)
        logp = np.array([t.log_value(s) for s in states])
        pi = np.exp(logp - logp.max())
        pi /= pi.sum()
        assert np.max(np.abs(pi @ R - pi)) < 1e-12


def test_mh_step_not_inplace():
    rng = random.Random(5)
    j = build_junction_tree(Graph.edgeless(5))
    snap = j.dump()
    opts = ChainOptions()
    for _ in range(50):
        new, ok = mh_step(j, TargetDistribution(), opts, rng)
        assert j.dump() == snap
        if ok:
            assert new != j
        else:
            assert new is j


def test_anneal_without_cooling_is_mh():
    score = EdgePenaltyScore(0.5)
    j0 = build_junction_tree(Graph.edgeless(6))
    opts = ChainOptions(sweeps=3000, randomize_tree_every=None, seed=9)
    res = anneal(j0, score, AnnealOptions(cooling_factor=1.0, initial_temperature=1.0), opts,
                 random.Random(9))
    rng = random.Random(9)
    t = TargetDistribution(score, mu_correction=False)
    j = j0
    n_acc = 0
    for _ in range(3000):
        j, ok = mh_step(j, t, opts, rng)
        n_acc += ok
    assert res.state == j
    assert res.n_accepted == n_acc
    assert res.final_temperature == 1.0


def test_anneal_temperature_trace_monotone():
    score = EdgePenaltyScore(0.5)
    opts = ChainOptions(sweeps=2000, thin=100, seed=1)
    res = anneal(build_junction_tree(Graph.edgeless(5)), score, AnnealOptions(0.999), opts)
    temps = [row[1] for row in res.trace]
    assert all(a > b for a, b in zip(temps, temps[1:]))
    assert res.final_temperature == pytest.approx(0.999 ** 2000)
    assert res.best_score >= res.final_score - 1e-12
    assert res.best_score == pytest.approx(-0.5 * res.best_tree.n_edges())


def test_irreducibility_path():
    rng = random.Random(6)
    for _ in range(50):
        g = random_decomposable(rng.randint(1, 8), rng, rng.random())
        j = build_junction_tree(g)
        path = irreducibility_path(j)
        state = j
        trail = [j]
        for p in path:
            state = apply_move(state, p)
            assert validate(state)
            trail.append(state)
        assert graph_of(state) == Graph.complete(g.v)
        assert len(path) == g.v * (g.v - 1) // 2 - g.n_edges
        # walking back with the reverse moves recovers the start
        for p, before in zip(reversed(path), reversed(trail[:-1])):
            state = apply_move(state, reverse_move(state, p))
            assert state == before


def test_run_chain_cadences_and_trace():
    calls = {"param": [], "obs": 0}

    def param_update(state, rng):
        calls["param"].append(state.n_edges())

    def observer(sweep, state):
        calls["obs"] += 1

    opts = ChainOptions(sweeps=1000, thin=50, param_update_every=200, randomize_tree_every=100, seed=2)
    hooks = Hooks(param_update=param_update, scalars=lambda: (1.5,), scalar_names=("x",),
                  observer=observer)
    res = run_chain(build_junction_tree(Graph.edgeless(6)), TargetDistribution(), opts, hooks)
    assert len(calls["param"]) == 5
    assert calls["obs"] == 1000
    assert len(res.trace) == 20
    assert res.columns == TRACE_COLUMNS + ("x",)
    assert [r[0] for r in res.trace] == list(range(50, 1001, 50))
    assert all(r[-1] == 1.5 for r in res.trace)
    last = res.trace[-1]
    assert last[2] == res.state.n_edges()
    assert last[3] == res.state.n_nodes
    t = TargetDistribution()
    assert last[1] == pytest.approx(t.log_value(res.state))


def test_run_chain_is_deterministic():
    t = TargetDistribution(EdgePenaltyScore(0.2), True)
    opts = ChainOptions(sweeps=2000, thin=10, seed=77)
    a = run_chain(build_junction_tree(Graph.edgeless(7)), t, opts)
    b = run_chain(build_junction_tree(Graph.edgeless(7)), t, opts)
    assert a.trace == b.trace
    assert a.state.dump() == b.state.dump()


def test_hook_failure_wrapped():
    def boom(state, rng):
        raise RuntimeError("bad update")

    opts = ChainOptions(sweeps=20, thin=1, param_update_every=10)
    with pytest.raises(ChainError, match="sweep 10"):
        run_chain(build_junction_tree(Graph.edgeless(3)), TargetDistribution(), opts,
                  Hooks(param_update=boom))


def test_edge_occupancy_matches_observer():
    v = 6
    j0 = build_junction_tree(Graph.edgeless(v))
    occ = EdgeOccupancy(j0, start=500)
    brute = np.zeros((v, v))

    def observe(sweep, state):
        if sweep > 500:
            for a, b in graph_of(state).edges:
                brute[a, b] += 1
                brute[b, a] += 1

    opts = ChainOptions(sweeps=3000, thin=100, seed=4)
    run_chain(j0, TargetDistribution(EdgePenaltyScore(-0.2)), opts,
              Hooks(on_accept=occ.on_accept, observer=observe))
    assert np.allclose(occ.frequencies(3000), brute / 2500)


def test_mu_corrected_uniform_at_v3():
    # under the mu correction every graph on 3 vertices is equally likely
    counts = {}
    opts = ChainOptions(sweeps=80_000, thin=80_000, seed=8)

    def observe(sweep, state):
        key = tuple(state.cliques())
        counts[key] = counts.get(key, 0) + 1

    run_chain(build_junction_tree(Graph.edgeless(3)), TargetDistribution(UniformScore(), True), opts,
              Hooks(observer=observe))
    assert len(counts) == 8
    freq = np.array(list(counts.values())) / 80_000
    assert np.max(np.abs(freq - 1 / 8)) < 0.015
    j = build_junction_tree(Graph.edgeless(3))
    assert count_junction_trees(j) == 3


def test_write_trace(tmp_path):
    opts = ChainOptions(sweeps=100, thin=10, seed=1)
    res = run_chain(build_junction_tree(Graph.edgeless(4)), TargetDistribution(), opts)
    path = tmp_path / "trace.csv"
    write_trace(res, path, {"seed": 1})
    lines = path.read_text().splitlines()
    assert lines[0] == "# seed: 1"
    assert lines[1] == ",".join(TRACE_COLUMNS)
    assert len(lines) == 12
