"""Labelled undirected graphs, chordality testing and clique decompositions.

Vertex sets are plain Python ints used as bitmasks (bit ``i`` set means
vertex ``i`` is a member).  A bitmask is canonical, hashable and cheap to
intersect, so it doubles as the cache key for per-subset statistics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator


class NotDecomposable(ValueError):
    """Raised when an operation requires a chordal graph."""


class UnknownVertex(ValueError):
    pass


def vset(vertices: Iterable[int]) -> int:
    """Bitmask of an iterable of vertex labels."""
    mask = 0
    for i in vertices:
        mask |= 1 << i
    return mask


def members(mask: int) -> tuple[int, ...]:
    """Sorted vertex labels of a bitmask."""
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return tuple(out)


def iter_bits(mask: int) -> Iterator[int]:
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def fmt_set(mask: int) -> str:
    return "{" + ",".join(map(str, members(mask))) + "}"


class Graph:
    """Undirected simple graph on vertices ``0..v-1``.

    Stored as one adjacency bitmask per vertex.  Instances are immutable.
    """

    __slots__ = ("v", "rows")

    def __init__(self, v: int, edges: Iterable[tuple[int, int]] = ()):
        if v < 1:
            raise ValueError("a graph needs at least one vertex")
        rows = [0] * v
        for i, j in edges:
            if not (0 <= i < v and 0 <= j < v):
                raise UnknownVertex(f"edge ({i},{j}) outside 0..{v - 1}")
            if i == j:
                raise ValueError(f"self-loop at vertex {i}")
            rows[i] |= 1 << j
            rows[j] |= 1 << i
        self.v = v
        self.rows = tuple(rows)

    @classmethod
    def from_rows(cls, rows) -> "Graph":
        g = cls.__new__(cls)
        g.v = len(rows)
        g.rows = tuple(rows)
        return g

    @classmethod
    def from_cliques(cls, v: int, cliques: Iterable[int]) -> "Graph":
        rows = [0] * v
        for c in cliques:
            for i in iter_bits(c):
                rows[i] |= c
        for i in range(v):
            rows[i] &= ~(1 << i)
        return cls.from_rows(rows)

    @classmethod
    def edgeless(cls, v: int) -> "Graph":
        return cls.from_rows([0] * v)

    @classmethod
    def complete(cls, v: int) -> "Graph":
        full = (1 << v) - 1
        return cls.from_rows([full & ~(1 << i) for i in range(v)])

    @classmethod
    def from_code(cls, v: int, code: int) -> "Graph":
        """Inverse of :meth:`code` (bit k indexes the k-th pair in row-major order)."""
        rows = [0] * v
        k = 0
        for i in range(v):
            for j in range(i + 1, v):
                if code >> k & 1:
                    rows[i] |= 1 << j
                    rows[j] |= 1 << i
                k += 1
        return cls.from_rows(rows)

    def code(self) -> int:
        out = 0
        k = 0
        for i in range(self.v):
            r = self.rows[i]
            for j in range(i + 1, self.v):
                if r >> j & 1:
                    out |= 1 << k
                k += 1
        return out

    @property
    def edges(self) -> list[tuple[int, int]]:
        out = []
        for i, r in enumerate(self.rows):
            for j in iter_bits(r >> (i + 1)):
                out.append((i, i + 1 + j))
        return out

    @property
    def n_edges(self) -> int:
        return sum(r.bit_count() for r in self.rows) // 2

    def has_edge(self, i: int, j: int) -> bool:
        return bool(self.rows[i] >> j & 1)

    def is_complete(self, mask: int) -> bool:
        for i in iter_bits(mask):
            if (mask & ~(1 << i)) & ~self.rows[i]:
                return False
        return True

    def __eq__(self, other):
        return isinstance(other, Graph) and self.v == other.v and self.rows == other.rows

    def __hash__(self):
        return hash((self.v, self.rows))

    def __repr__(self):
        return f"Graph(v={self.v}, edges={self.edges})"


@dataclass
class CliqueDecomposition:
    """Cliques in a running-intersection order.

    ``separators[i]`` and ``parents[i]`` belong to ``cliques[i]`` for
    ``i >= 1``; entry 0 is a placeholder (the first clique has no separator).
    ``parents[i]`` is an earlier clique containing ``separators[i]``.
    """

    cliques: list[int]
    separators: list[int] = field(default_factory=list)
    parents: list[int] = field(default_factory=list)

    def separator_multiset(self) -> list[int]:
        return self.separators[1:]


@dataclass
class MCSResult:
    ordering: list[int]
    decomposable: bool
    decomposition: CliqueDecomposition | None


def _mcs(rows, v):
    # Returns (ordering, cliques, separators, parents) or (ordering, None, ...)
    # when a vertex's numbered neighbourhood is not complete.
    labels = [0] * v
    unnumbered = (1 << v) - 1
    numbered = 0
    ordering = []
    cliques: list[int] = []
    seps: list[int] = []
    parents: list[int] = []
    clique_of = [0] * v
    pos = [0] * v
    prev_card = -1
    for step in range(v):
        best = -1
        u = -1
        m = unnumbered
        while m:
            low = m & -m
            i = low.bit_length() - 1
            if labels[i] > best:
                best = labels[i]
                u = i
            m ^= low
        nb = rows[u] & numbered
        card = best
        if nb:
            # zero fill-in: earlier neighbours minus the latest one must be
            # adjacent to the latest one
            p = -1
            pp = -1
            m = nb
            while m:
                low = m & -m
                i = low.bit_length() - 1
                if pos[i] > pp:
                    pp = pos[i]
                    p = i
                m ^= low
            if (nb & ~(1 << p)) & ~rows[p]:
                ordering.append(u)
                return ordering, None, None, None
        bit = 1 << u
        if card <= prev_card or not cliques:
            if cliques:
                parents.append(clique_of[p] if nb else len(cliques) - 1)
            else:
                parents.append(-1)
            seps.append(nb)
            cliques.append(nb | bit)
        else:
            cliques[-1] |= bit
        clique_of[u] = len(cliques) - 1
        pos[u] = step
        prev_card = card
        ordering.append(u)
        numbered |= bit
        unnumbered ^= bit
        m = rows[u] & unnumbered
        while m:
            low = m & -m
            labels[low.bit_length() - 1] += 1
            m ^= low
    return ordering, cliques, seps, parents


def maximum_cardinality_search(g: Graph) -> MCSResult:
    """Maximum cardinality search with smallest-index tie breaking.

    For chordal graphs the cliques come out in a running-intersection order.
    """
    ordering, cliques, seps, parents = _mcs(g.rows, g.v)
    if cliques is None:
        return MCSResult(ordering, False, None)
    return MCSResult(ordering, True, CliqueDecomposition(cliques, seps, parents))


def is_decomposable(g: Graph) -> bool:
    return _mcs(g.rows, g.v)[1] is not None


def cliques_of(g: Graph) -> list[int]:
    """Cliques (as bitmasks) of a decomposable graph."""
    res = _mcs(g.rows, g.v)[1]
    if res is None:
        raise NotDecomposable("graph is not chordal")
    return res


def induced_subgraph(g: Graph, u) -> Graph:
    """Subgraph induced by ``u``, relabelled to ``0..|u|-1`` in sorted order.

    ``u`` may be a bitmask or an iterable of labels.
    """
    if isinstance(u, int):
        verts = members(u)
    else:
        verts = tuple(sorted(set(u)))
    for i in verts:
        if not 0 <= i < g.v:
            raise UnknownVertex(f"vertex {i} not in graph on {g.v} vertices")
    if not verts:
        raise ValueError("empty vertex set")
    index = {x: k for k, x in enumerate(verts)}
    keep = vset(verts)
    rows = []
    for x in verts:
        r = 0
        for y in iter_bits(g.rows[x] & keep):
            r |= 1 << index[y]
        rows.append(r)
    return Graph.from_rows(rows)


def parse_edge_list(text: str) -> Graph:
    """Parse the ``v <count>`` + ``i j`` per line edge-list format."""
    v = None
    edges = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if v is None:
            if len(parts) != 2 or parts[0] != "v":
                raise ValueError(f"line {lineno}: expected 'v <count>' header")
            v = int(parts[1])
            continue
        if len(parts) != 2:
            raise ValueError(f"line {lineno}: expected 'i j'")
        edges.append((int(parts[0]), int(parts[1])))
    if v is None:
        raise ValueError("missing 'v <count>' header")
    return Graph(v, edges)


def format_edge_list(g: Graph, comments: Iterable[str] = ()) -> str:
    lines = [f"# {c}" for c in comments]
    lines.append(f"v {g.v}")
    lines.extend(f"{i} {j}" for i, j in g.edges)
    return "\n".join(lines) + "\n"


def read_edge_list(path) -> Graph:
    with open(path) as fh:
        return parse_edge_list(fh.read())


def write_edge_list(g: Graph, path, comments: Iterable[str] = ()) -> None:
    with open(path, "w") as fh:
        fh.write(format_edge_list(g, comments))
