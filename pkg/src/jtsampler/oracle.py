"""Brute-force references used to check the fast code paths.

Everything here is deliberately simple and slow: exhaustive enumeration of
graphs and of labelled trees, induced-cycle chordality tests, dense linear
algebra for the Gaussian density, a graph-state sampler that tests
decomposability from scratch, and exact transition matrices for tiny
state spaces.
"""

from __future__ import annotations

import itertools
import math
import random
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .graph_core import (
    Graph,
    _mcs,
    iter_bits,
    maximum_cardinality_search,
    members,
    vset,
)
from .junction_tree import (
    JunctionTree,
    count_junction_trees_cliques,
    from_cliques,
    randomize_junction_tree,
    validate,
)
from .moves import (
    MULTI,
    SINGLE,
    classify_neighbors,
    disconnect_case,
    make_connect,
    make_disconnect,
)
from .sampler import STANDARD, TargetDistribution, acceptance_probability

# -- exhaustive graph table ---------------------------------------------------


@dataclass
class GraphTable:
    """All decomposable graphs on ``v`` labelled vertices.

    ``keys[k]`` is the sorted clique tuple of graph ``k`` (the table index),
    ``mu[k]`` its number of junction trees and ``codes[k]`` its edge code.
    """

    v: int
    keys: list = field(default_factory=list)
    mu: list = field(default_factory=list)
    codes: list = field(default_factory=list)
    index: dict = field(default_factory=dict)
    n_scanned: int = 0

    def __len__(self):
        return len(self.keys)

    def lookup(self, j: JunctionTree) -> int:
        return self.index[tuple(j.cliques())]

    def graph(self, k: int) -> Graph:
        return Graph.from_code(self.v, self.codes[k])

    def order_by_mu(self) -> np.ndarray:
        """Indices from most junction trees to fewest (ties by table index)."""
        mu = np.array([float(m) for m in self.mu])
        return np.lexsort((np.arange(len(mu)), -mu))

    def expected(self, mode: str) -> np.ndarray:
        """Exact graph probabilities: 'jt' (proportional to mu) or 'graph' (uniform)."""
        if mode == "graph":
            return np.full(len(self), 1.0 / len(self))
        if mode == "jt":
            total = sum(self.mu)
            return np.array([m / total for m in self.mu])
        raise ValueError("mode must be 'jt' or 'graph'")


def _pairs(v):
    return [(i, j) for i in range(v) for j in range(i + 1, v)]


def enumerate_decomposable(v: int) -> GraphTable:
    """Scan all 2^(v(v-1)/2) labelled graphs (Gray-code order)."""
    if not 1 <= v <= 8:
        raise ValueError("enumeration is limited to 1 <= v <= 8")
    pairs = _pairs(v)
    rows = [0] * v
    code = 0
    table = GraphTable(v)
    keys, mus, codes, index = table.keys, table.mu, table.codes, table.index
    total = 1 << len(pairs)
    for step in range(total):
        if step:
            b = (step & -step).bit_length() - 1
            i, j = pairs[b]
            rows[i] ^= 1 << j
            rows[j] ^= 1 << i
            code ^= 1 << b
        cl = _mcs(rows, v)[1]
        if cl is None:
            continue
        key = tuple(sorted(cl))
        index[key] = len(keys)
        keys.append(key)
        mus.append(count_junction_trees_cliques(key))
        codes.append(code)
    table.n_scanned = total
    return table


# -- brute-force graph properties -------------------------------------------------


def _is_cycle(g: Graph, sub: int) -> bool:
    rows = g.rows
    for i in iter_bits(sub):
        if (rows[i] & sub).bit_count() != 2:
            return False
    start = sub & -sub
    seen = start
    frontier = start
    while frontier:
        nxt = 0
        for i in iter_bits(frontier):
            nxt |= rows[i] & sub
        frontier = nxt & ~seen
        seen |= frontier
    return seen == sub


def brute_force_is_chordal(g: Graph) -> bool:
    """No vertex subset of size >= 4 induces a cycle."""
    for k in range(4, g.v + 1):
        for sub in itertools.combinations(range(g.v), k):
            if _is_cycle(g, vset(sub)):
                return False
    return True


def brute_force_maximal_cliques(g: Graph) -> list[int]:
    complete = [m for m in range(1, 1 << g.v) if g.is_complete(m)]
    cset = set(complete)
    out = []
    for m in complete:
        if not any((m | (1 << i)) in cset for i in range(g.v) if not m >> i & 1):
            out.append(m)
    return sorted(out)


# -- junction trees by exhaustive spanning-tree enumeration --------------------


def labelled_trees(k: int):
    """All k^(k-2) labelled trees on 0..k-1 as edge lists (via Pruefer codes)."""
    if k == 1:
        yield []
        return
    if k == 2:
        yield [(0, 1)]
        return
    for seq in itertools.product(range(k), repeat=k - 2):
        degree = [1] * k
        for x in seq:
            degree[x] += 1
        edges = []
        for x in seq:
            leaf = min(i for i in range(k) if degree[i] == 1)
            edges.append((leaf, x))
            degree[leaf] -= 1
            degree[x] -= 1
        a, b = (i for i in range(k) if degree[i] == 1)
        edges.append((a, b))
        yield edges


def brute_force_junction_trees(g: Graph) -> list[JunctionTree]:
    cl = brute_force_maximal_cliques(g)
    out = []
    for edges in labelled_trees(len(cl)):
        j = from_cliques(g.v, cl, edges)
        if validate(j):
            out.append(j)
    return out


def all_junction_trees(v: int) -> list[JunctionTree]:
    table = enumerate_decomposable(v)
    out = []
    for k in range(len(table)):
        out.extend(brute_force_junction_trees(table.graph(k)))
    return out


def seven_vertex_example() -> dict:
    """Two 7-vertex decomposable graphs differing only in edge (0, 6).

    Graph ``a`` has cliques {0,1} {1,2,3} {1,6} {3,4} {4,5}.  In tree ``a1``
    the cliques {0,1} and {1,6} are not adjacent; in ``a2`` they are, so a
    single-edge connect of 0 and 6 is available and yields tree ``b`` for
    graph ``b`` = ``a`` plus (0, 6).
    """
    c01, c123, c16, c34, c45 = (vset(s) for s in ((0, 1), (1, 2, 3), (1, 6), (3, 4), (4, 5)))
    cliques = [c01, c123, c16, c34, c45]
    a1 = JunctionTree(7, cliques, [(0, 1), (1, 2), (1, 3), (3, 4)])
    a2 = JunctionTree(7, cliques, [(0, 2), (0, 1), (1, 3), (3, 4)])
    b_tree = JunctionTree(7, [vset((0, 1, 6)), c123, c34, c45], [(0, 1), (1, 2), (2, 3)])
    ga = Graph.from_cliques(7, cliques)
    gb = Graph.from_cliques(7, [vset((0, 1, 6)), c123, c34, c45])
    return {"a": ga, "b": gb, "a1": a1, "a2": a2, "b_tree": b_tree, "x": 0, "y": 6}


# -- Gaussian density oracle ------------------------------------------------------


def _intra_class(k: int, sigma2: float, rho: float) -> np.ndarray:
    return sigma2 * ((1.0 - rho) * np.eye(k) + rho * np.ones((k, k)))


def precision_matrix_oracle(g: Graph, p) -> tuple[np.ndarray, float]:
    """K = sum_C pad(Sigma_C^-1) - sum_S pad(Sigma_S^-1) and log det K."""
    res = maximum_cardinality_search(g)
    if not res.decomposable:
        raise ValueError("graph is not decomposable")
    dec = res.decomposition
    v = g.v
    K = np.zeros((v, v))
    for c in dec.cliques:
        idx = list(members(c))
        K[np.ix_(idx, idx)] += np.linalg.inv(_intra_class(len(idx), p.sigma2, p.rho))
    for s in dec.separators[1:]:
        if s:
            idx = list(members(s))
            K[np.ix_(idx, idx)] -= np.linalg.inv(_intra_class(len(idx), p.sigma2, p.rho))
    sign, logdet = np.linalg.slogdet(K)
    if sign <= 0:
        raise np.linalg.LinAlgError("completed precision matrix is not positive definite")
    return K, float(logdet)


def mvn_log_density(y, K: np.ndarray, logdet_k: float) -> float:
    """Sum over rows of log N(y_r; 0, K^-1)."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    n, v = y.shape
    quad = float(np.einsum("ri,ij,rj->", y, K, y))
    return -0.5 * n * v * math.log(2 * math.pi) + 0.5 * n * logdet_k - 0.5 * quad


# -- reference graph-state sampler -------------------------------------------------


@dataclass
class GGResult:
    state: Graph
    counts: Counter
    n_accepted: int
    n_decomposable_proposals: int


def reference_gg_sampler(g0: Graph, target, sweeps: int, rng=None, observer=None) -> GGResult:
    """Graph-state MH: toggle a uniform vertex pair, keep only decomposable graphs.

    ``target(graph) -> log pi(graph)``.  ``counts`` records the sorted clique
    tuple of the state after every sweep.
    """
    rng = rng if rng is not None else random.Random(0)
    pairs = _pairs(g0.v)
    rows = list(g0.rows)
    v = g0.v
    memo = {}

    def score(rws):
        key = tuple(rws)
        out = memo.get(key)
        if out is None:
            out = target(Graph.from_rows(rws))
            memo[key] = out
        return out

    cur = score(rows)
    cur_key = tuple(sorted(_mcs(rows, v)[1]))
    counts = Counter()
    n_acc = 0
    n_dec = 0
    for sweep in range(1, sweeps + 1):
        i, j = pairs[int(rng.random() * len(pairs))]
        rows[i] ^= 1 << j
        rows[j] ^= 1 << i
        cl = _mcs(rows, v)[1]
        accepted = False
        if cl is not None:
            n_dec += 1
            new = score(rows)
            d = new - cur
            if d >= 0 or rng.random() < math.exp(d):
                accepted = True
                cur = new
                cur_key = tuple(sorted(cl))
                n_acc += 1
        if not accepted:
            rows[i] ^= 1 << j
            rows[j] ^= 1 << i
        counts[cur_key] += 1
        if observer is not None:
            observer(sweep, rows)
    return GGResult(Graph.from_rows(rows), counts, n_acc, n_dec)


# -- exact transition matrices ------------------------------------------------------


def _subsets_of_size(bits, k):
    for c in itertools.combinations(bits, k):
        yield vset(c)


def _connect_draws(j: JunctionTree, arity: str):
    """(probability, a, b, X, Y) for every outcome of the connect sampler."""
    links = j.links
    if not links:
        return
    pl = 1.0 / len(links)
    for a, b in links:
        s = j.adj[a][b]
        ra = members(j.nodes[a] & ~s)
        rb = members(j.nodes[b] & ~s)
        if arity == SINGLE:
            pr = pl / (len(ra) * len(rb))
            for x in ra:
                for y in rb:
                    yield pr, a, b, 1 << x, 1 << y
        else:
            for nx in range(1, len(ra) + 1):
                px = 1.0 / len(ra) / math.comb(len(ra), nx)
                for X in _subsets_of_size(ra, nx):
                    for ny in range(1, len(rb) + 1):
                        py = 1.0 / len(rb) / math.comb(len(rb), ny)
                        for Y in _subsets_of_size(rb, ny):
                            yield pl * px * py, a, b, X, Y


def _disconnect_draws(j: JunctionTree, arity: str):
    """(probability, c, X, Y) over ordered draws of the disconnect sampler."""
    pc = 1.0 / j.n_nodes
    for c in j.active:
        bits = members(j.nodes[c])
        m = len(bits)
        if m < 2:
            continue
        if arity == SINGLE:
            pr = pc / (m * (m - 1))
            for x, y in itertools.permutations(bits, 2):
                yield pr, c, 1 << x, 1 << y
            continue
        for big_m in range(2, m + 1):
            for n in range(1, big_m):
                # the partial shuffle gives each ordered M-tuple probability (m-M)!/m!
                pr = pc / (m - 1) / (big_m - 1) * (
                    math.factorial(n) * math.factorial(big_m - n)
                    * math.factorial(m - big_m) / math.factorial(m))
                for xs in itertools.combinations(bits, n):
                    rest = [b for b in bits if b not in xs]
                    for ys in itertools.combinations(rest, big_m - n):
                        yield pr, c, vset(xs), vset(ys)


def transition_matrix(v: int, target: TargetDistribution, arity: str = MULTI,
                      rule: str = STANDARD, states: list | None = None):
    """Exact kernel over all junction trees on ``v`` vertices.

    Returns (states, pi, P) with ``pi`` the normalized target computed from
    ``target.log_value``.  Proposal draws are enumerated from the sampling
    procedure; acceptance uses each move's own forward/reverse log q.
    """
    states = states if states is not None else all_junction_trees(v)
    index = {s.key(): k for k, s in enumerate(states)}
    logp = np.array([target.log_value(s) for s in states])
    pi = np.exp(logp - logp.max())
    pi /= pi.sum()
    n = len(states)
    P = np.zeros((n, n))
    for k, j in enumerate(states):
        out = 0.0
        for pr, a, b, X, Y in _connect_draws(j, arity):
            p = make_connect(j, a, b, X, Y, arity)
            new = p.resulting_tree(j)
            t = index[new.key()]
            acc = acceptance_probability(logp[t] - logp[k], p.log_q_reverse - p.log_q_forward, rule)
            P[k, t] += 0.5 * pr * acc
            out += 0.5 * pr * acc
        for pr, c, X, Y in _disconnect_draws(j, arity):
            if (Y & -Y) < (X & -X):
                X, Y = Y, X
            cls = classify_neighbors(j, c, X, Y)
            if cls is None:
                continue
            case = disconnect_case(cls)
            if case is None:
                continue
            n0 = list(cls.n0) if case == "a" else []
            for mask in range(1 << len(n0)):
                to_y = tuple(n0[i] for i in range(len(n0)) if mask >> i & 1)
                p = make_disconnect(j, c, X, Y, arity, to_y, cls)
                new = p.resulting_tree(j)
                t = index[new.key()]
                w = 0.5 * pr / (1 << len(n0))
                acc = acceptance_probability(logp[t] - logp[k], p.log_q_reverse - p.log_q_forward, rule)
                P[k, t] += w * acc
                out += w * acc
        P[k, k] += 1.0 - out
    return states, pi, P


def transition_matrix_check(v: int, target: TargetDistribution, arity: str = MULTI,
                            rule: str = STANDARD) -> float:
    """max |pi P - pi| for the exact kernel."""
    _, pi, P = transition_matrix(v, target, arity, rule)
    return float(np.max(np.abs(pi @ P - pi)))


def randomization_matrix(v: int, states: list | None = None):
    """Kernel of uniform re-randomization: each tree moves to a uniform equivalent."""
    states = states if states is not None else all_junction_trees(v)
    groups = {}
    for k, s in enumerate(states):
        groups.setdefault(tuple(s.cliques()), []).append(k)
    P = np.zeros((len(states), len(states)))
    for members_ in groups.values():
        w = 1.0 / len(members_)
        for a in members_:
            for b in members_:
                P[a, b] = w
    return states, P


def randomization_frequencies(j: JunctionTree, draws: int, rng) -> Counter:
    """Counts of structural keys over repeated :func:`randomize_junction_tree` calls."""
    out = Counter()
    for _ in range(draws):
        out[randomize_junction_tree(j, rng).key()] += 1
    return out


__all__ = [
    "GGResult", "GraphTable", "all_junction_trees", "brute_force_is_chordal",
    "brute_force_junction_trees", "brute_force_maximal_cliques", "enumerate_decomposable",
    "labelled_trees", "mvn_log_density", "precision_matrix_oracle", "randomization_matrix",
    "randomization_frequencies", "reference_gg_sampler", "seven_vertex_example",
    "transition_matrix", "transition_matrix_check",
]
