"""Generalized junction trees (one tree spanning all components).

Nodes are cliques stored as vertex bitmasks; a link stores its separator,
which may be empty.  The tree is edited through :class:`Patch` objects that
describe replacement node sets and adjacency dicts for the touched nodes,
so a proposed move can be inspected without mutating the tree.
"""

from __future__ import annotations

import math
from collections import defaultdict
from fractions import Fraction

from .graph_core import (
    Graph,
    NotDecomposable,
    fmt_set,
    iter_bits,
    members,
    maximum_cardinality_search,
    vset,
)


class Patch:
    """Replacement state for the nodes touched by a move.

    ``sets[i]`` is the new vertex set of node ``i`` (0 removes the node);
    ``adj[i]`` is the complete new adjacency dict of node ``i``.  Every
    endpoint of a changed link must appear in ``adj``.
    """

    __slots__ = ("sets", "adj", "_diff", "fnew")

    def __init__(self, sets=None, adj=None):
        self.sets = sets if sets is not None else {}
        self.adj = adj if adj is not None else {}
        self._diff = None
        self.fnew = None

    def link_changes(self, tree: "JunctionTree"):
        """(removed, added) lists of ``(i, j, separator)`` with ``i < j``."""
        if self._diff is None:
            removed = []
            added = []
            nadj = len(tree.adj)
            padj = self.adj
            for i, new in padj.items():
                old = tree.adj[i] if i < nadj else {}
                for j, s in old.items():
                    if (i < j or j not in padj) and new.get(j, -1) != s:
                        removed.append((i, j, s) if i < j else (j, i, s))
                for j, s in new.items():
                    if (i < j or j not in padj) and old.get(j, -1) != s:
                        added.append((i, j, s) if i < j else (j, i, s))
            self._diff = (removed, added)
        return self._diff


class JunctionTree:
    """Junction tree whose nodes are cliques (bitmasks) of a decomposable graph.

    Node indices are stable; a removed node leaves a free slot that is
    reused (most recently freed first) by the next node created.
    """

    __slots__ = ("v", "nodes", "adj", "links", "_link_pos", "active",
                 "_active_pos", "_free", "sep_count", "_fcache")

    def __init__(self, v: int, nodes, links):
        """``nodes``: list of bitmasks (0 for a free slot); ``links``: node pairs."""
        self.v = v
        self.nodes = list(nodes)
        self.adj = [dict() for _ in self.nodes]
        self.links = []
        self._link_pos = {}
        self.sep_count = defaultdict(int)
        self.active = []
        self._active_pos = {}
        self._free = []
        self._fcache = {}
        for i, c in enumerate(self.nodes):
            if c:
                self._active_pos[i] = len(self.active)
                self.active.append(i)
            else:
                self._free.append(i)
        # free slots form a stack: the most recently freed index is reused first,
        # so a move followed by its reverse restores every node index
        self._free.reverse()
        for i, j in links:
            s = self.nodes[i] & self.nodes[j]
            self._add_link(i, j, s)

    # -- basic access -------------------------------------------------
    def copy(self) -> "JunctionTree":
        t = JunctionTree.__new__(JunctionTree)
        t.v = self.v
        t.nodes = list(self.nodes)
        t.adj = [dict(d) for d in self.adj]
        t.links = list(self.links)
        t._link_pos = dict(self._link_pos)
        t.active = list(self.active)
        t._active_pos = dict(self._active_pos)
        t._free = list(self._free)
        t.sep_count = defaultdict(int, self.sep_count)
        t._fcache = dict(self._fcache)
        return t

    @property
    def n_nodes(self) -> int:
        return len(self.active)

    @property
    def n_links(self) -> int:
        return len(self.links)

    def separator(self, i: int, j: int) -> int:
        return self.adj[i][j]

    def cliques(self) -> list[int]:
        return sorted(self.nodes[i] for i in self.active)

    def separators(self) -> list[int]:
        return sorted(self.adj[i][j] for i, j in self.links)

    def link_sets(self):
        """Links as (clique, clique, separator) with the smaller clique first."""
        out = []
        for i, j in self.links:
            a, b = self.nodes[i], self.nodes[j]
            if a > b:
                a, b = b, a
            out.append((a, b, self.adj[i][j]))
        return sorted(out)

    def key(self):
        """Canonical structural key: two trees are equal iff keys are equal."""
        return (tuple(self.cliques()), tuple(self.link_sets()))

    def __eq__(self, other):
        return isinstance(other, JunctionTree) and self.v == other.v and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def n_edges(self) -> int:
        """Edge count of the represented graph."""
        total = 0
        for i in self.active:
            k = self.nodes[i].bit_count()
            total += k * (k - 1) // 2
        for i, j in self.links:
            k = self.adj[i][j].bit_count()
            total -= k * (k - 1) // 2
        return total

    def next_index(self) -> int:
        return self._free[-1] if self._free else len(self.nodes)

    def nodes_containing(self, vertex: int) -> set[int]:
        bit = 1 << vertex
        return {i for i in self.active if self.nodes[i] & bit}

    @property
    def vertex_index(self) -> dict[int, set[int]]:
        out = {z: set() for z in range(self.v)}
        for i in self.active:
            for z in iter_bits(self.nodes[i]):
                out[z].add(i)
        return out

    # -- mutation ------------------------------------------------------
    def _add_link(self, i, j, s):
        if i > j:
            i, j = j, i
        self.adj[i][j] = s
        self.adj[j][i] = s
        self._link_pos[(i, j)] = len(self.links)
        self.links.append((i, j))
        self.sep_count[s] += 1

    def _drop_link(self, i, j, s):
        pos = self._link_pos.pop((i, j))
        last = self.links.pop()
        if pos < len(self.links):
            self.links[pos] = last
            self._link_pos[last] = pos
        n = self.sep_count[s] - 1
        if n:
            self.sep_count[s] = n
        else:
            del self.sep_count[s]

    def apply_patch(self, patch: Patch) -> None:
        removed, added = patch.link_changes(self)
        for i, j, s in removed:
            self._drop_link(i, j, s)
        for i, s in patch.sets.items():
            if i >= len(self.nodes):
                while len(self.nodes) <= i:
                    self.nodes.append(0)
                    self.adj.append({})
            old = self.nodes[i]
            if s and not old:
                self._active_pos[i] = len(self.active)
                self.active.append(i)
                if self._free and self._free[-1] == i:
                    self._free.pop()
                elif i in self._free:
                    self._free.remove(i)
            elif old and not s:
                pos = self._active_pos.pop(i)
                last = self.active.pop()
                if pos < len(self.active):
                    self.active[pos] = last
                    self._active_pos[last] = pos
                self._free.append(i)
            self.nodes[i] = s
        for i, d in patch.adj.items():
            self.adj[i] = d
        for i, j, s in added:
            self._link_pos[(i, j)] = len(self.links)
            self.links.append((i, j))
            self.sep_count[s] += 1
        fc = self._fcache
        if patch.fnew is None:
            fc.clear()
        else:
            for s, f in patch.fnew.items():
                if f is None:
                    fc.pop(s, None)
                else:
                    fc[s] = f

    def set_links(self, links) -> None:
        """Replace all links, keeping the nodes and their indices."""
        self.adj = [dict() for _ in self.nodes]
        self.links = []
        self._link_pos = {}
        self.sep_count = defaultdict(int)
        self._fcache = {}
        for i, j in links:
            self._add_link(i, j, self.nodes[i] & self.nodes[j])

    # -- text dump -----------------------------------------------------
    def dump(self) -> str:
        lines = [f"N{i}: " + " ".join(map(str, members(self.nodes[i])))
                 for i in sorted(self.active)]
        for i, j in sorted(self.links):
            lines.append(f"L: {i} {j} | " + " ".join(map(str, members(self.adj[i][j]))))
        return "\n".join(line.rstrip() for line in lines) + "\n"

    @classmethod
    def parse(cls, text: str, v: int | None = None) -> "JunctionTree":
        nodes = {}
        links = []
        for raw in text.splitlines():
            line = raw.strip()
            if not line:
                continue
            if line.startswith("N"):
                head, _, rest = line.partition(":")
                nodes[int(head[1:])] = vset(int(x) for x in rest.split())
            elif line.startswith("L:"):
                body, _, _sep = line[2:].partition("|")
                i, j = (int(x) for x in body.split())
                links.append((i, j))
            else:
                raise ValueError(f"bad junction tree line: {raw!r}")
        size = max(nodes) + 1 if nodes else 0
        if v is None:
            v = max((c.bit_length() for c in nodes.values()), default=0)
        slots = [nodes.get(i, 0) for i in range(size)]
        return cls(v, slots, links)

    def __repr__(self):
        body = ", ".join(fmt_set(self.nodes[i]) for i in sorted(self.active))
        return f"JunctionTree(v={self.v}, nodes=[{body}], links={len(self.links)})"


def build_junction_tree(g: Graph) -> JunctionTree:
    """Junction tree from maximum cardinality search.

    Components are joined by empty-separator links, so the result is a
    single tree.
    """
    res = maximum_cardinality_search(g)
    if not res.decomposable:
        raise NotDecomposable("graph is not chordal")
    dec = res.decomposition
    links = [(dec.parents[i], i) for i in range(1, len(dec.cliques))]
    return JunctionTree(g.v, dec.cliques, links)


def from_cliques(v: int, cliques, links=None) -> JunctionTree:
    """Junction tree over the given cliques; ``links`` default to any valid tree."""
    if links is not None:
        return JunctionTree(v, cliques, links)
    g = Graph.from_cliques(v, cliques)
    return build_junction_tree(g)


def graph_of(j: JunctionTree) -> Graph:
    return Graph.from_cliques(j.v, (j.nodes[i] for i in j.active))


def validate(j: JunctionTree) -> bool:
    """Check every structural invariant directly."""
    act = j.active
    c = len(act)
    if c == 0 or len(j.links) != c - 1:
        return False
    if len(set(act)) != c or any(not j.nodes[i] for i in act):
        return False
    covered = 0
    for i in act:
        covered |= j.nodes[i]
    if covered != (1 << j.v) - 1:
        return False
    # links consistent with adjacency and separators equal to intersections
    seen = 0
    for i in act:
        for k, s in j.adj[i].items():
            if not j.nodes[k] or j.adj[k].get(i) != s:
                return False
            if s != j.nodes[i] & j.nodes[k]:
                return False
            seen += 1
    if seen != 2 * len(j.links):
        return False
    for i, k in j.links:
        if k not in j.adj[i]:
            return False
    # spanning tree: connected with c-1 links
    start = act[0]
    stack = [start]
    reached = {start}
    while stack:
        i = stack.pop()
        for k in j.adj[i]:
            if k not in reached:
                reached.add(k)
                stack.append(k)
    if len(reached) != c:
        return False
    # junction property: nodes containing each vertex form a subtree
    for z in range(j.v):
        bit = 1 << z
        holders = [i for i in act if j.nodes[i] & bit]
        stack = [holders[0]]
        got = {holders[0]}
        while stack:
            i = stack.pop()
            for k in j.adj[i]:
                if k not in got and j.nodes[k] & bit:
                    got.add(k)
                    stack.append(k)
        if len(got) != len(holders):
            return False
    # nodes are exactly the cliques: pairwise non-nested
    sets = [j.nodes[i] for i in act]
    if len(set(sets)) != c:
        return False
    for a in sets:
        for b in sets:
            if a != b and a & b == a:
                return False
    return True


# -- counting and randomization ----------------------------------------

def _bareiss_det(m):
    n = len(m)
    if n == 0:
        return 1
    a = [row[:] for row in m]
    sign = 1
    prev = 1
    for k in range(n - 1):
        if a[k][k] == 0:
            for r in range(k + 1, n):
                if a[r][k] != 0:
                    a[k], a[r] = a[r], a[k]
                    sign = -sign
                    break
            else:
                return 0
        akk = a[k][k]
        for i in range(k + 1, n):
            aik = a[i][k]
            row_i = a[i]
            row_k = a[k]
            for jj in range(k + 1, n):
                row_i[jj] = (row_i[jj] * akk - aik * row_k[jj]) // prev
        prev = akk
    return sign * a[n - 1][n - 1]


def spanning_tree_count(k: int, edges) -> int:
    """Kirchhoff count for a multigraph on nodes ``0..k-1``."""
    if k <= 1:
        return 1
    lap = [[0] * k for _ in range(k)]
    for a, b in edges:
        lap[a][a] += 1
        lap[b][b] += 1
        lap[a][b] -= 1
        lap[b][a] -= 1
    minor = [row[1:] for row in lap[1:]]
    return _bareiss_det(minor)


def _weight_classes(cliques):
    """Clique pairs sharing at least one vertex, grouped by intersection size."""
    holders = defaultdict(list)
    for k, c in enumerate(cliques):
        m = c
        while m:
            low = m & -m
            holders[low].append(k)
            m ^= low
    pairs = set()
    for lst in holders.values():
        n = len(lst)
        for x in range(n):
            a = lst[x]
            for y in range(x + 1, n):
                pairs.add((a, lst[y]))
    classes = defaultdict(list)
    for a, b in pairs:
        classes[(cliques[a] & cliques[b]).bit_count()].append((a, b))
    return classes


class _DSU:
    __slots__ = ("parent",)

    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, x):
        p = self.parent
        while p[x] != x:
            p[x] = p[p[x]]
            x = p[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra
        return ra != rb


def _class_components(edges, dsu):
    """Group admissible edges of one weight class by multigraph component."""
    local = {}
    adm = []
    for a, b in edges:
        ra, rb = dsu.find(a), dsu.find(b)
        if ra == rb:
            continue
        adm.append((a, b, ra, rb))
        local.setdefault(ra, ra)
        local.setdefault(rb, rb)
    if not adm:
        return []
    comp = _DSU(0)
    ids = {r: k for k, r in enumerate(local)}
    comp.parent = list(range(len(ids)))
    for _, _, ra, rb in adm:
        comp.union(ids[ra], ids[rb])
    groups = defaultdict(list)
    for e in adm:
        groups[comp.find(ids[e[2]])].append(e)
    return list(groups.values())


def count_junction_trees_cliques(cliques) -> int:
    """Number of junction trees of the decomposable graph with these cliques.

    Counts maximum-weight spanning trees of the clique intersection graph:
    weight classes are processed from heaviest to lightest, each component
    of the contracted multigraph contributing its Kirchhoff count.
    """
    c = len(cliques)
    if c <= 1:
        return 1
    classes = _weight_classes(cliques)
    dsu = _DSU(c)
    total = 1
    for w in sorted(classes, reverse=True):
        for group in _class_components(classes[w], dsu):
            supers = {}
            for _, _, ra, rb in group:
                supers.setdefault(ra, len(supers))
                supers.setdefault(rb, len(supers))
            total *= spanning_tree_count(len(supers), [(supers[ra], supers[rb]) for _, _, ra, rb in group])
        for a, b in classes[w]:
            dsu.union(a, b)
    # empty-separator class: complete multipartite between graph components
    sizes = defaultdict(int)
    for k in range(c):
        sizes[dsu.find(k)] += 1
    comps = len(sizes)
    if comps >= 2:
        total *= c ** (comps - 2)
        for t in sizes.values():
            total *= t
    return total


def count_junction_trees(j: JunctionTree) -> int:
    return count_junction_trees_cliques([j.nodes[i] for i in j.active])


def log_count_junction_trees(j: JunctionTree) -> float:
    return math.log(count_junction_trees(j))


def _wilson(roots, incident, other_end, rng):
    """Uniform spanning tree of a multigraph by loop-erased random walks.

    ``incident(u)`` draws a uniform edge at super-node ``u``; ``other_end``
    maps (edge, u) to the far super-node.  Returns chosen edges.
    """
    in_tree = {roots[0]}
    nxt = {}
    for s in roots[1:]:
        u = s
        while u not in in_tree:
            e = incident(u)
            nxt[u] = e
            u = other_end(e, u)
        u = s
        while u not in in_tree:
            in_tree.add(u)
            u = other_end(nxt[u], u)
    return [nxt[u] for u in roots[1:]]


def randomize_junction_tree(j: JunctionTree, rng) -> JunctionTree:
    """Equivalent junction tree drawn uniformly from all ``mu(G)`` of them.

    ``rng`` is a :class:`random.Random`.  Node indices are preserved.
    """
    out = j.copy()
    act = list(j.active)
    c = len(act)
    if c <= 1:
        return out
    cliques = [j.nodes[i] for i in act]
    classes = _weight_classes(cliques)
    dsu = _DSU(c)
    chosen = []
    for w in sorted(classes, reverse=True):
        for group in _class_components(classes[w], dsu):
            by_node = defaultdict(list)
            for e in group:
                by_node[e[2]].append(e)
                by_node[e[3]].append(e)
            roots = sorted(by_node)

            def incident(u, by_node=by_node):
                lst = by_node[u]
                return lst[int(rng.random() * len(lst))]

            def other_end(e, u):
                return e[3] if e[2] == u else e[2]

            for e in _wilson(roots, incident, other_end, rng):
                chosen.append((e[0], e[1]))
        for a, b in classes[w]:
            dsu.union(a, b)
    comp_of = [dsu.find(k) for k in range(c)]
    members_of = defaultdict(list)
    for k, r in enumerate(comp_of):
        members_of[r].append(k)
    roots = sorted(members_of)
    if len(roots) >= 2:
        def incident0(u):
            inside = members_of[u]
            while True:
                b = int(rng.random() * c)
                if comp_of[b] != u:
                    break
            a = inside[int(rng.random() * len(inside))]
            return (a, b)

        def other_end0(e, u):
            a, b = e
            return comp_of[b] if comp_of[a] == u else comp_of[a]

        chosen.extend(_wilson(roots, incident0, other_end0, rng))
    out.set_links([(act[a], act[b]) for a, b in chosen])
    return out


# -- per-separator factorisation, used for local mu ratios ---------------

def _factor(get_set, get_adj, start, s):
    """t**(m-1) * prod(t_i) for the subtree of nodes containing ``s``."""
    seen = {start}
    pending = [start]
    sizes = []
    while pending:
        stack = [pending.pop()]
        size = 0
        while stack:
            i = stack.pop()
            size += 1
            for k, sep in get_adj(i).items():
                if k in seen or sep & s != s:
                    continue
                seen.add(k)
                if sep == s:
                    pending.append(k)
                else:
                    stack.append(k)
        sizes.append(size)
    m = len(sizes) - 1
    if m == 0:
        return 1
    out = len(seen) ** (m - 1)
    for t in sizes:
        out *= t
    return out


def _component_sizes(get_adj, starts):
    """Product of the sizes of the components (joined by non-empty
    separators) that contain any of ``starts``."""
    seen = set()
    out = 1
    for s0 in starts:
        if s0 in seen:
            continue
        seen.add(s0)
        stack = [s0]
        size = 0
        while stack:
            i = stack.pop()
            size += 1
            for k, sep in get_adj(i).items():
                if sep and k not in seen:
                    seen.add(k)
                    stack.append(k)
        out *= size
    return out


def separator_factor(j: JunctionTree, s: int) -> int:
    if s not in j.sep_count:
        return 1
    for i, k in j.links:
        if j.adj[i][k] == s:
            return _factor(j.nodes.__getitem__, j.adj.__getitem__, i, s)
    return 1


def count_by_separators(j: JunctionTree) -> int:
    """mu(G) as a product of one factor per distinct separator."""
    out = 1
    for s in j.sep_count:
        out *= separator_factor(j, s)
    return out


def _find_holder(candidates, get_set, s):
    for i in candidates:
        if get_set(i) & s == s:
            return i
    return None


def mu_ratio(j: JunctionTree, patch: Patch) -> Fraction:
    """Exact mu(G') / mu(G) for the tree obtained by applying ``patch``.

    A separator's factor depends only on the subtree of nodes containing it,
    and every link a move changes has its separator inside a node the move
    changes, so only separators contained in a changed node set (old or new
    value) are re-evaluated.  Factors of the current tree are cached on the
    tree; the new factors are stored on the patch and adopted when the patch
    is applied.
    """
    removed, added = patch.link_changes(j)
    nodes = j.nodes
    adj = j.adj
    nn = len(nodes)
    psets = patch.sets
    padj = patch.adj

    def new_set(i):
        return psets[i] if i in psets else (nodes[i] if i < nn else 0)

    def new_adj(i):
        return padj[i] if i in padj else adj[i]

    old_nodes = [i for i in psets if i < nn and nodes[i]]
    new_nodes = [i for i, s in psets.items() if s]
    changed = {nodes[i] for i in old_nodes}
    changed.update(psets[i] for i in new_nodes)
    union = 0
    for c in changed:
        union |= c
    sep_old = j.sep_count
    delta = {}
    for _, _, s in removed:
        delta[s] = delta.get(s, 0) - 1
    for _, _, s in added:
        delta[s] = delta.get(s, 0) + 1

    cands = set()
    for s in list(sep_old) + [s for s, d in delta.items() if d > 0]:
        if s and not s & ~union and s not in cands:
            for c in changed:
                if s & c == s:
                    cands.add(s)
                    break

    ends_old = [i for i, k, _ in removed] + [k for i, k, _ in removed]
    ends_new = [i for i, k, _ in added] + [k for i, k, _ in added]
    fcache = j._fcache
    fnew = {}
    num = 1
    den = 1
    for s in cands:
        n_old = sep_old.get(s, 0)
        if n_old > 0:
            f = fcache.get(s)
            if f is None:
                start = _find_holder(old_nodes, nodes.__getitem__, s)
                if start is None:
                    start = _find_holder(ends_old, nodes.__getitem__, s)
                if start is None:
                    start = _find_holder(j.active, nodes.__getitem__, s)
                f = _factor(nodes.__getitem__, adj.__getitem__, start, s)
                fcache[s] = f
            den *= f
        if n_old + delta.get(s, 0) > 0:
            start = _find_holder(new_nodes, new_set, s)
            if start is None:
                start = _find_holder(ends_new, new_set, s)
            if start is None:
                start = _find_holder(j.active, new_set, s)
            f = _factor(new_set, new_adj, start, s)
            num *= f
            fnew[s] = f
        else:
            fnew[s] = None
    patch.fnew = fnew

    if sep_old.get(0, 0) or delta.get(0, 0) > 0:
        # empty separator: N**(k-2) * prod(component sizes); only components
        # holding a changed node or a changed link can change size
        k_new = sep_old.get(0, 0) + delta.get(0, 0) + 1
        k_old = sep_old.get(0, 0) + 1
        n_new = len(j.active) + sum(1 for i, s in psets.items() if s and not (i < nn and nodes[i])) \
            - sum(1 for i, s in psets.items() if not s and i < nn and nodes[i])
        n_old = len(j.active)
        num = Fraction(num * _component_sizes(new_adj, new_nodes + ends_new))
        den = Fraction(den * _component_sizes(adj.__getitem__, old_nodes + ends_old))
        num *= Fraction(n_new) ** (k_new - 2)
        den *= Fraction(n_old) ** (k_old - 2)
    return Fraction(num, den)
