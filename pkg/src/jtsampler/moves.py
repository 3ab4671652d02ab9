"""Connect and disconnect moves applied directly to a junction tree.

A connect move picks a link with separator S between cliques C_X and C_Y and
completely connects X in C_X \\ S to Y in C_Y \\ S.  A disconnect move picks
a clique C, splits it into X, Y, S and removes every X-Y edge.  Either move
is one of four cases depending on whether C_X equals X u S and whether C_Y
equals Y u S; the tree edit for each case is local.

Moves are built as :class:`Patch` deltas; the input tree is not modified
until :func:`apply_move` (or the ``apply_*`` helpers) is called.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .graph_core import members
from .junction_tree import JunctionTree, Patch

CONNECT = "connect"
DISCONNECT = "disconnect"
SINGLE = "single"
MULTI = "multi"


class InvalidProposal(ValueError):
    pass


_LOG_FACT = [0.0]
for _k in range(1, 2048):
    _LOG_FACT.append(_LOG_FACT[-1] + math.log(_k))
_LOG2 = math.log(2.0)


def _lf(k):
    return _LOG_FACT[k] if k < len(_LOG_FACT) else math.lgamma(k + 1)


@dataclass
class NeighborClassification:
    n0: list
    nx: list
    ny: list
    cx: int | None = None
    cy: int | None = None


@dataclass(eq=False)
class MoveProposal:
    direction: str
    arity: str
    anchor: object          # (i, j) link for connect, node index for disconnect
    X: int
    Y: int
    S: int
    case: str
    cx: int                 # node index holding X u S (before connect / after disconnect)
    cy: int
    patch: Patch = field(repr=False)
    n_x_side: int = 0       # connect: |C_X \ S|; disconnect: unused
    n_y_side: int = 0
    n0: int = 0             # |N0| for the disconnect side of the pair (case a)
    to_y: tuple = ()        # disconnect case (a): N0 nodes attached to Y u S
    log_q_forward: float = 0.0
    log_q_reverse: float = 0.0
    expect: tuple = field(default=(), repr=False)

    @property
    def n_edges_delta(self) -> int:
        k = self.X.bit_count() * self.Y.bit_count()
        return k if self.direction == CONNECT else -k

    def resulting_tree(self, j: JunctionTree) -> JunctionTree:
        out = j.copy()
        out.apply_patch(self.patch)
        return out


def _connect_log_q(arity, n_links, mx, my, nx, ny):
    out = -math.log(n_links) - math.log(mx) - math.log(my)
    if arity == MULTI:
        out += _lf(nx) + _lf(mx - nx) - _lf(mx) + _lf(ny) + _lf(my - ny) - _lf(my)
    return out


def _disconnect_log_q(arity, n_nodes, m, nx, ny, n0, case):
    if arity == SINGLE:
        out = -math.log(n_nodes) + _LOG2 - math.log(m) - math.log(m - 1)
    else:
        big_m = nx + ny
        out = (-math.log(n_nodes) + _LOG2 - math.log(m - 1) - math.log(big_m - 1)
               + _lf(nx) + _lf(ny) + _lf(m - big_m) - _lf(m))
    if case == "a":
        out -= n0 * _LOG2
    return out


def make_connect(j: JunctionTree, a: int, b: int, X: int, Y: int, arity: str = MULTI) -> MoveProposal:
    """Connect move across link (a, b) joining X (from node a) to Y (from node b)."""
    nodes = j.nodes
    adj = j.adj
    S = adj[a][b]
    ca = nodes[a]
    cb = nodes[b]
    if not X or not Y or X & ~(ca & ~S) or Y & ~(cb & ~S):
        raise InvalidProposal("X and Y must be non-empty subsets of the link's cliques minus S")
    if arity == SINGLE and (X.bit_count() != 1 or Y.bit_count() != 1):
        raise InvalidProposal("single-edge moves need singleton X and Y")
    # canonical orientation: the smallest vertex of X u Y lies in X
    if (Y & -Y) < (X & -X):
        a, b, ca, cb, X, Y = b, a, cb, ca, Y, X
    XS = X | S
    YS = Y | S
    new = XS | Y
    ex = ca == XS
    ey = cb == YS
    patch = Patch()
    if ex and ey:
        case = "a"
        da = {k: s for k, s in adj[a].items() if k != b}
        for k, s in adj[b].items():
            if k != a:
                da[k] = s
                dk = dict(adj[k])
                del dk[b]
                dk[a] = s
                patch.adj[k] = dk
        patch.sets[a] = new
        patch.sets[b] = 0
        patch.adj[a] = da
        patch.adj[b] = {}
        n_nodes_after = j.n_nodes - 1
    elif ey:
        case = "b"
        sep = S | X
        da = dict(adj[a])
        da[b] = sep
        db = dict(adj[b])
        db[a] = sep
        patch.sets[b] = cb | X
        patch.adj[a] = da
        patch.adj[b] = db
        n_nodes_after = j.n_nodes
    elif ex:
        case = "c"
        sep = S | Y
        da = dict(adj[a])
        da[b] = sep
        db = dict(adj[b])
        db[a] = sep
        patch.sets[a] = ca | Y
        patch.adj[a] = da
        patch.adj[b] = db
        n_nodes_after = j.n_nodes
    else:
        case = "d"
        k = j.next_index()
        da = dict(adj[a])
        del da[b]
        da[k] = XS
        db = dict(adj[b])
        del db[a]
        db[k] = YS
        patch.sets[k] = new
        patch.adj[a] = da
        patch.adj[b] = db
        patch.adj[k] = {a: XS, b: YS}
        n_nodes_after = j.n_nodes + 1
    mx = (ca & ~S).bit_count()
    my = (cb & ~S).bit_count()
    nx = X.bit_count()
    ny = Y.bit_count()
    # reverse disconnect acts on the clique X u Y u S
    n0 = 0
    if case == "a":
        XY = X | Y
        for k in patch.adj[a]:
            if not nodes[k] & XY:
                n0 += 1
    p = MoveProposal(CONNECT, arity, (a, b), X, Y, S, case, a, b, patch,
                     n_x_side=mx, n_y_side=my, n0=n0, expect=(ca, cb, S))
    p.log_q_forward = _connect_log_q(arity, j.n_links, mx, my, nx, ny)
    m = new.bit_count()
    p.log_q_reverse = _disconnect_log_q(arity, n_nodes_after, m, nx, ny, n0, case)
    return p


def classify_neighbors(j: JunctionTree, c: int, X: int, Y: int) -> NeighborClassification | None:
    """Split the neighbours of node ``c``; None if one meets both X and Y."""
    nodes = j.nodes
    C = nodes[c]
    S = C & ~(X | Y)
    XS = X | S
    YS = Y | S
    n0 = []
    nx = []
    ny = []
    cx = cy = None
    for k in sorted(j.adj[c]):
        d = nodes[k]
        hx = d & X
        hy = d & Y
        if hx:
            if hy:
                return None
            nx.append(k)
            if cx is None and d & XS == XS:
                cx = k
        elif hy:
            ny.append(k)
            if cy is None and d & YS == YS:
                cy = k
        else:
            n0.append(k)
    return NeighborClassification(n0, nx, ny, cx, cy)


def disconnect_case(cls: NeighborClassification) -> str | None:
    if cls.cx is None and cls.cy is None:
        return "a"
    if cls.cy is None:
        return "b" if len(cls.nx) == 1 else None
    if cls.cx is None:
        return "c" if len(cls.ny) == 1 else None
    if not cls.n0 and len(cls.nx) == 1 and len(cls.ny) == 1:
        return "d"
    return None


def make_disconnect(j: JunctionTree, c: int, X: int, Y: int, arity: str = MULTI,
                    to_y=(), cls: NeighborClassification | None = None) -> MoveProposal | None:
    """Disconnect X from Y inside node ``c``; None when the move is not allowed.

    ``to_y`` lists the N0 neighbours re-attached to the Y u S half in case (a);
    the rest go to the X u S half.
    """
    nodes = j.nodes
    adj = j.adj
    C = nodes[c]
    if not X or not Y or X & Y or (X | Y) & ~C:
        raise InvalidProposal("X, Y must be disjoint non-empty subsets of the clique")
    if arity == SINGLE and (X.bit_count() != 1 or Y.bit_count() != 1):
        raise InvalidProposal("single-edge moves need singleton X and Y")
    if (Y & -Y) < (X & -X):
        X, Y = Y, X
        cls = None
    if cls is None:
        cls = classify_neighbors(j, c, X, Y)
        if cls is None:
            return None
    case = disconnect_case(cls)
    if case is None:
        return None
    S = C & ~(X | Y)
    XS = X | S
    YS = Y | S
    patch = Patch()
    cx = cy = -1
    n0 = 0
    to_y = tuple(sorted(to_y)) if case == "a" else ()
    if case == "a":
        k = j.next_index()
        ys = set(cls.ny)
        ys.update(to_y)
        dc = {k: S}
        dk = {c: S}
        for nb, s in adj[c].items():
            if nb in ys:
                dk[nb] = s
                dn = dict(adj[nb])
                del dn[c]
                dn[k] = s
                patch.adj[nb] = dn
            else:
                dc[nb] = s
        patch.sets[c] = XS
        patch.sets[k] = YS
        patch.adj[c] = dc
        patch.adj[k] = dk
        cx, cy = c, k
        n0 = len(cls.n0)
        n_links_after = j.n_links + 1
        mx = X.bit_count()
        my = Y.bit_count()
    elif case == "b":
        cx = cls.cx
        dc = dict(adj[c])
        dc[cx] = S
        dn = dict(adj[cx])
        dn[c] = S
        patch.sets[c] = YS
        patch.adj[c] = dc
        patch.adj[cx] = dn
        cy = c
        n_links_after = j.n_links
        mx = (nodes[cx] & ~S).bit_count()
        my = Y.bit_count()
    elif case == "c":
        cy = cls.cy
        dc = dict(adj[c])
        dc[cy] = S
        dn = dict(adj[cy])
        dn[c] = S
        patch.sets[c] = XS
        patch.adj[c] = dc
        patch.adj[cy] = dn
        cx = c
        n_links_after = j.n_links
        mx = X.bit_count()
        my = (nodes[cy] & ~S).bit_count()
    else:
        cx, cy = cls.cx, cls.cy
        dx = dict(adj[cx])
        del dx[c]
        dx[cy] = S
        dy = dict(adj[cy])
        del dy[c]
        dy[cx] = S
        patch.sets[c] = 0
        patch.adj[c] = {}
        patch.adj[cx] = dx
        patch.adj[cy] = dy
        n_links_after = j.n_links - 1
        mx = (nodes[cx] & ~S).bit_count()
        my = (nodes[cy] & ~S).bit_count()
    nx = X.bit_count()
    ny = Y.bit_count()
    p = MoveProposal(DISCONNECT, arity, c, X, Y, S, case, cx, cy, patch,
                     n_x_side=mx, n_y_side=my, n0=n0, to_y=to_y, expect=(C,))
    p.log_q_forward = _disconnect_log_q(arity, j.n_nodes, C.bit_count(), nx, ny, n0, case)
    p.log_q_reverse = _connect_log_q(arity, n_links_after, mx, my, nx, ny)
    return p


def _random_bit(mask, rng):
    bits = members(mask)
    return 1 << bits[int(rng.random() * len(bits))]


def _sample(bits, k, rng):
    # partial Fisher-Yates; random.sample is slow for tiny populations
    pool = list(bits)
    n = len(pool)
    for i in range(k):
        r = i + int(rng.random() * (n - i))
        pool[i], pool[r] = pool[r], pool[i]
    return pool[:k]


def _random_subset(mask, rng):
    bits = members(mask)
    k = 1 + int(rng.random() * len(bits))
    out = 0
    for i in _sample(bits, k, rng):
        out |= 1 << i
    return out


def propose_connect(j: JunctionTree, arity: str, rng) -> MoveProposal | None:
    """Random connect proposal, or None (reject) when the tree has no links."""
    links = j.links
    if not links:
        return None
    a, b = links[int(rng.random() * len(links))]
    S = j.adj[a][b]
    ra = j.nodes[a] & ~S
    rb = j.nodes[b] & ~S
    if arity == SINGLE:
        X = _random_bit(ra, rng)
        Y = _random_bit(rb, rng)
    else:
        X = _random_subset(ra, rng)
        Y = _random_subset(rb, rng)
    return make_connect(j, a, b, X, Y, arity)


def propose_disconnect(j: JunctionTree, arity: str, rng) -> MoveProposal | None:
    """Random disconnect proposal, or None (reject)."""
    act = j.active
    c = act[int(rng.random() * len(act))]
    C = j.nodes[c]
    bits = members(C)
    m = len(bits)
    if m == 1:
        return None
    if arity == SINGLE:
        x, y = _sample(bits, 2, rng)
        X = 1 << x
        Y = 1 << y
    else:
        big_m = 2 + int(rng.random() * (m - 1))
        n = 1 + int(rng.random() * (big_m - 1))
        chosen = _sample(bits, big_m, rng)
        X = 0
        Y = 0
        for i in chosen[:n]:
            X |= 1 << i
        for i in chosen[n:]:
            Y |= 1 << i
    if (Y & -Y) < (X & -X):
        X, Y = Y, X
    cls = classify_neighbors(j, c, X, Y)
    if cls is None:
        return None
    case = disconnect_case(cls)
    if case is None:
        return None
    to_y = ()
    if case == "a" and cls.n0:
        to_y = tuple(k for k in cls.n0 if rng.random() < 0.5)
    return make_disconnect(j, c, X, Y, arity, to_y, cls)


def check_proposal(j: JunctionTree, p: MoveProposal) -> None:
    """Raise InvalidProposal unless ``p`` was built against the current state of ``j``."""
    nodes = j.nodes
    if p.X & p.Y or p.X & p.S or p.Y & p.S or not p.X or not p.Y:
        raise InvalidProposal("X, Y, S must be pairwise disjoint with X, Y non-empty")
    if p.direction == CONNECT:
        a, b = p.anchor
        if not (0 <= a < len(nodes) and 0 <= b < len(nodes)) or b not in j.adj[a]:
            raise InvalidProposal("anchor link not in tree")
        if (nodes[a], nodes[b], j.adj[a][b]) != p.expect:
            raise InvalidProposal("tree changed since the proposal was made")
    else:
        c = p.anchor
        if not (0 <= c < len(nodes)) or nodes[c] != p.expect[0]:
            raise InvalidProposal("anchor clique not in tree")
        if p.X | p.Y | p.S != nodes[c]:
            raise InvalidProposal("X u Y u S must equal the clique")


def apply_move(j: JunctionTree, p: MoveProposal, inplace: bool = False) -> JunctionTree:
    check_proposal(j, p)
    out = j if inplace else j.copy()
    out.apply_patch(p.patch)
    return out


def apply_connect(j: JunctionTree, p: MoveProposal, inplace: bool = False) -> JunctionTree:
    if p.direction != CONNECT:
        raise InvalidProposal("not a connect move")
    return apply_move(j, p, inplace)


def apply_disconnect(j: JunctionTree, p: MoveProposal, inplace: bool = False) -> JunctionTree:
    if p.direction != DISCONNECT:
        raise InvalidProposal("not a disconnect move")
    return apply_move(j, p, inplace)


def proposal_probability(j: JunctionTree, p: MoveProposal) -> float:
    """log q(J, J') recomputed from ``j`` and the move's sets."""
    check_proposal(j, p)
    nx = p.X.bit_count()
    ny = p.Y.bit_count()
    if p.direction == CONNECT:
        a, b = p.anchor
        mx = (j.nodes[a] & ~p.S).bit_count()
        my = (j.nodes[b] & ~p.S).bit_count()
        return _connect_log_q(p.arity, j.n_links, mx, my, nx, ny)
    c = p.anchor
    cls = classify_neighbors(j, c, p.X, p.Y)
    if cls is None or disconnect_case(cls) != p.case:
        raise InvalidProposal("move not valid for this tree")
    return _disconnect_log_q(p.arity, j.n_nodes, j.nodes[c].bit_count(), nx, ny, len(cls.n0), p.case)


def reverse_move(j_new: JunctionTree, p: MoveProposal) -> MoveProposal:
    """The move that undoes ``p`` when applied to ``j_new``."""
    if p.direction == CONNECT:
        XY = p.X | p.Y
        c = next(i for i in j_new.active if j_new.nodes[i] == XY | p.S)
        to_y = ()
        if p.case == "a":
            # neighbours re-pointed by the merge were attached to C_Y before
            a, b = p.anchor
            to_y = tuple(k for k in p.patch.adj
                         if k != a and k != b and not j_new.nodes[k] & XY)
        rev = make_disconnect(j_new, c, p.X, p.Y, p.arity, to_y)
        if rev is None:
            raise InvalidProposal("reverse disconnect not allowed")
        return rev
    return make_connect(j_new, p.cx, p.cy, p.X, p.Y, p.arity)


def reverse_proposal(j_new: JunctionTree, p: MoveProposal) -> float:
    """log q(J', J) for the unique reverse move, evaluated on ``j_new``."""
    return proposal_probability(j_new, reverse_move(j_new, p))


def single_connect_moves(j: JunctionTree):
    """All single-edge connect moves available from ``j`` (deterministic order)."""
    out = []
    for a, b in sorted(j.links):
        S = j.adj[a][b]
        for x in members(j.nodes[a] & ~S):
            for y in members(j.nodes[b] & ~S):
                out.append(make_connect(j, a, b, 1 << x, 1 << y, SINGLE))
    return out
