"""Metropolis-Hastings on junction trees, plus a simulated-annealing driver.

The chain state is a :class:`JunctionTree`.  The target on trees is
``pi(G(J)) / mu(G(J))`` when the mu correction is on (so graphs are visited
in proportion to ``pi``) and ``pi(G(J))`` when it is off (graphs then appear
in proportion to ``pi(G) * mu(G)``).

A graph score object supplies ``log_score(tree)`` and
``move_delta(tree, proposal)``, the change in ``log pi`` caused by the
proposal.  Scores in this module and in :mod:`jtsampler.ggim` and
:mod:`jtsampler.profile` compute the delta from the four subsets
``X u Y u S``, ``X u S``, ``Y u S`` and ``S`` alone.
"""

from __future__ import annotations

import csv
import math
import random
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .graph_core import members
from .junction_tree import (
    JunctionTree,
    graph_of,
    log_count_junction_trees,
    mu_ratio,
    randomize_junction_tree,
)
from .moves import (
    CONNECT,
    MULTI,
    SINGLE,
    MoveProposal,
    make_connect,
    propose_connect,
    propose_disconnect,
)

STANDARD = "standard"
TWO_STAGE = "two_stage"
RULES = (STANDARD, TWO_STAGE)

TRACE_COLUMNS = ("sweep", "log_target", "n_edges", "n_cliques", "accepted")


class ChainError(RuntimeError):
    pass


# -- graph scores ---------------------------------------------------------

class UniformScore:
    """log pi(G) = 0 for every decomposable graph."""

    def log_score(self, j: JunctionTree) -> float:
        return 0.0

    def move_delta(self, j: JunctionTree, p: MoveProposal) -> float:
        return 0.0


class EdgePenaltyScore:
    """log pi(G) = -c |E|."""

    def __init__(self, c: float):
        self.c = float(c)

    def log_score(self, j: JunctionTree) -> float:
        return -self.c * j.n_edges()

    def move_delta(self, j: JunctionTree, p: MoveProposal) -> float:
        return -self.c * p.n_edges_delta


class GraphFunctionScore:
    """Wraps an arbitrary ``fn(Graph) -> log pi``; deltas use full rescoring."""

    def __init__(self, fn: Callable):
        self.fn = fn

    def log_score(self, j: JunctionTree) -> float:
        return float(self.fn(graph_of(j)))

    def move_delta(self, j: JunctionTree, p: MoveProposal) -> float:
        return self.log_score(p.resulting_tree(j)) - self.log_score(j)


@dataclass
class TargetDistribution:
    """log pi~(J) = score.log_score(J) - [mu_correction] log mu(G(J))."""

    score: object = field(default_factory=UniformScore)
    mu_correction: bool = True

    def log_value(self, j: JunctionTree) -> float:
        out = self.score.log_score(j)
        if self.mu_correction:
            out -= log_count_junction_trees(j)
        return out

    def log_ratio(self, j: JunctionTree, p: MoveProposal) -> float:
        """log pi~(J') - log pi~(J) for the tree J' produced by ``p``."""
        out = self.score.move_delta(j, p)
        if self.mu_correction:
            r = mu_ratio(j, p.patch)
            out -= math.log(r.numerator) - math.log(r.denominator)
        return out


@dataclass
class ChainOptions:
    sweeps: int = 1000
    thin: int = 100
    param_update_every: int = 1000
    randomize_tree_every: int | None = 1000
    acceptance_rule: str = STANDARD
    move_arity: str = MULTI
    seed: int = 0

    def __post_init__(self):
        if self.sweeps < 0:
            raise ValueError("sweeps must be >= 0")
        for name in ("thin", "param_update_every"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.randomize_tree_every is not None and self.randomize_tree_every < 1:
            raise ValueError("randomize_tree_every must be >= 1 (or None to disable)")
        if self.acceptance_rule not in RULES:
            raise ValueError(f"acceptance_rule must be one of {RULES}")
        if self.move_arity not in (SINGLE, MULTI):
            raise ValueError("move_arity must be 'single' or 'multi'")


@dataclass
class AnnealOptions:
    cooling_factor: float = 0.999999
    penalty_per_edge: float = 0.0
    initial_temperature: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.cooling_factor <= 1.0:
            raise ValueError("cooling_factor must lie in (0, 1]")
        if self.initial_temperature <= 0:
            raise ValueError("initial_temperature must be positive")


def edge_penalty(v: int, d: float) -> float:
    """Per-edge penalty log((v-1)/d - 1) for expected average degree ``d``."""
    r = (v - 1) / d - 1.0
    if r <= 0:
        raise ValueError("need d < v - 1")
    return math.log(r)


# -- acceptance -------------------------------------------------------------

def acceptance_probability(log_pi_ratio: float, log_q_ratio: float, rule: str = STANDARD) -> float:
    if rule == STANDARD:
        a = log_pi_ratio + log_q_ratio
        return 1.0 if a >= 0 else math.exp(a)
    a = 1.0 if log_pi_ratio >= 0 else math.exp(log_pi_ratio)
    b = 1.0 if log_q_ratio >= 0 else math.exp(log_q_ratio)
    return a * b


def two_stage_accept(log_pi_ratio, log_q_ratio: float, rng) -> bool:
    """Accept with probability min(1, pi ratio) * min(1, q ratio).

    The q test runs first; ``log_pi_ratio`` may be a zero-argument callable
    so that the target ratio is only computed when the q test passes.
    """
    if log_q_ratio < 0 and rng.random() >= math.exp(log_q_ratio):
        return False
    lp = log_pi_ratio() if callable(log_pi_ratio) else log_pi_ratio
    return lp >= 0 or rng.random() < math.exp(lp)


def _standard_accept(log_a: float, rng) -> bool:
    return log_a >= 0 or rng.random() < math.exp(log_a)


def _step(j, target, arity, rule, rng, temperature=1.0):
    """One in-place MH step.  Returns (proposal or None, accepted, log pi~ ratio)."""
    if rng.random() < 0.5:
        p = propose_connect(j, arity, rng)
    else:
        p = propose_disconnect(j, arity, rng)
    if p is None:
        return None, False, 0.0
    log_q = p.log_q_reverse - p.log_q_forward
    if rule == STANDARD:
        lp = target.log_ratio(j, p)
        ok = _standard_accept(lp / temperature + log_q, rng)
    else:
        box = []

        def lazy():
            box.append(target.log_ratio(j, p))
            return box[0] / temperature

        ok = two_stage_accept(lazy, log_q, rng)
        lp = box[0] if box else 0.0
    if ok:
        j.apply_patch(p.patch)
    return p, ok, lp


def mh_step(j: JunctionTree, t: TargetDistribution, opts: ChainOptions, rng,
            inplace: bool = False) -> tuple[JunctionTree, bool]:
    """One Metropolis-Hastings step; connect or disconnect chosen by a fair coin."""
    state = j if inplace else j.copy()
    _, ok, _ = _step(state, t, opts.move_arity, opts.acceptance_rule, rng)
    if not ok and not inplace:
        return j, False
    return state, ok


# -- chains -------------------------------------------------------------------

@dataclass
class Hooks:
    """Optional callbacks for :func:`run_chain`.

    ``param_update(state, rng)`` runs every ``param_update_every`` sweeps and
    may change the target; ``scalars()`` returns extra trace columns;
    ``on_accept(sweep, proposal)`` runs after each accepted move;
    ``observer(sweep, state)`` sees the state after every sweep.
    """

    param_update: Callable | None = None
    scalars: Callable | None = None
    scalar_names: tuple = ()
    on_accept: Callable | None = None
    observer: Callable | None = None


@dataclass
class ChainResult:
    state: JunctionTree
    trace: list
    columns: tuple
    n_proposed: int = 0
    n_accepted: int = 0
    n_early_reject: int = 0
    seed: int | None = None

    @property
    def acceptance_rate(self) -> float:
        return self.n_accepted / self.n_proposed if self.n_proposed else 0.0


def run_chain(j0: JunctionTree, t: TargetDistribution, opts: ChainOptions,
              hooks: Hooks | None = None, rng=None) -> ChainResult:
    """Run ``opts.sweeps`` MH steps (one step per sweep) from a copy of ``j0``."""
    hooks = hooks or Hooks()
    rng = rng if rng is not None else random.Random(opts.seed)
    state = j0.copy()
    columns = TRACE_COLUMNS + tuple(hooks.scalar_names)
    trace = []
    log_target = t.log_value(state)
    n_edges = state.n_edges()
    n_acc = 0
    n_early = 0
    arity = opts.move_arity
    rule = opts.acceptance_rule
    thin = opts.thin
    pe = opts.param_update_every
    re_ = opts.randomize_tree_every
    observer = hooks.observer
    on_accept = hooks.on_accept
    for sweep in range(1, opts.sweeps + 1):
        p, ok, lp = _step(state, t, arity, rule, rng)
        if p is None:
            n_early += 1
        elif ok:
            n_acc += 1
            log_target += lp
            n_edges += p.n_edges_delta
            if on_accept is not None:
                on_accept(sweep, p)
        if hooks.param_update is not None and sweep % pe == 0:
            try:
                hooks.param_update(state, rng)
            except Exception as exc:  # noqa: BLE001
                raise ChainError(f"parameter update failed at sweep {sweep}: {exc}") from exc
            log_target = t.log_value(state)
        if re_ is not None and sweep % re_ == 0:
            state = randomize_junction_tree(state, rng)
        if observer is not None:
            try:
                observer(sweep, state)
            except Exception as exc:  # noqa: BLE001
                raise ChainError(f"observer failed at sweep {sweep}: {exc}") from exc
        if sweep % thin == 0:
            row = (sweep, log_target, n_edges, state.n_nodes, int(ok))
            if hooks.scalars is not None:
                row = row + tuple(hooks.scalars())
            trace.append(row)
    return ChainResult(state, trace, columns, opts.sweeps, n_acc, n_early, opts.seed)


class EdgeOccupancy:
    """Fraction of sweeps in ``[start, stop]`` during which each edge was present.

    Updated from accepted moves only, so the cost per sweep is independent
    of the graph size.
    """

    def __init__(self, j: JunctionTree, start: int = 0):
        v = j.v
        self.v = v
        self.start = start
        self.total = np.zeros((v, v))
        self.since = {}
        g = graph_of(j)
        for e in g.edges:
            self.since[e] = 0

    def on_accept(self, sweep: int, p: MoveProposal) -> None:
        t = max(sweep - 1, self.start)
        for x in members(p.X):
            for y in members(p.Y):
                e = (x, y) if x < y else (y, x)
                if p.direction == CONNECT:
                    self.since[e] = sweep - 1
                else:
                    t0 = max(self.since.pop(e), self.start)
                    if t > t0:
                        self.total[e] += t - t0

    def frequencies(self, stop: int) -> np.ndarray:
        out = self.total.copy()
        for e, t0 in self.since.items():
            t0 = max(t0, self.start)
            if stop > t0:
                out[e] += stop - t0
        span = max(stop - self.start, 1)
        out = out / span
        return out + out.T


def write_trace(result: ChainResult, path, metadata: dict | None = None) -> None:
    with open(path, "w", newline="") as fh:
        for k, val in (metadata or {}).items():
            fh.write(f"# {k}: {val}\n")
        w = csv.writer(fh)
        w.writerow(result.columns)
        for row in result.trace:
            w.writerow([f"{x:.10g}" if isinstance(x, float) else x for x in row])


# -- annealing ------------------------------------------------------------

@dataclass
class AnnealResult:
    state: JunctionTree
    best_tree: JunctionTree
    best_score: float
    final_score: float
    final_temperature: float
    best_sweep: int
    trace: list
    n_accepted: int = 0


def anneal(j0: JunctionTree, log_penalized_likelihood, a_opts: AnnealOptions,
           opts: ChainOptions, rng=None, trace_every: int | None = None) -> AnnealResult:
    """Simulated annealing over graphs.

    ``log_penalized_likelihood`` is a score object (``log_score`` /
    ``move_delta``) for the penalized log-likelihood.  The chain targets
    ``exp(score / T)`` without the mu correction; ``T`` is multiplied by the
    cooling factor after every sweep, and only the target ratio is tempered.
    """
    rng = rng if rng is not None else random.Random(opts.seed)
    target = TargetDistribution(log_penalized_likelihood, mu_correction=False)
    state = j0.copy()
    score = target.log_value(state)
    best = score
    best_tree = state.copy()
    best_sweep = 0
    temp = a_opts.initial_temperature
    cool = a_opts.cooling_factor
    arity = opts.move_arity
    rule = opts.acceptance_rule
    re_ = opts.randomize_tree_every
    every = trace_every or opts.thin
    trace = []
    n_acc = 0
    for sweep in range(1, opts.sweeps + 1):
        p, ok, lp = _step(state, target, arity, rule, rng, temp)
        if ok:
            n_acc += 1
            score += lp
            if score > best + 1e-9:
                best = score
                best_tree = state.copy()
                best_sweep = sweep
        temp *= cool
        if re_ is not None and sweep % re_ == 0:
            state = randomize_junction_tree(state, rng)
        if sweep % every == 0:
            trace.append((sweep, temp, score, best))
    # guard against accumulated rounding in the running score
    best = target.log_value(best_tree)
    return AnnealResult(state, best_tree, best, target.log_value(state), temp,
                        best_sweep, trace, n_acc)


# -- irreducibility ---------------------------------------------------------

def irreducibility_path(j: JunctionTree) -> list[MoveProposal]:
    """Single-edge connect moves leading from ``j`` to the one-clique tree.

    Each proposal is valid for the tree produced by applying the previous
    ones in order; the input is not modified.
    """
    state = j.copy()
    path = []
    while state.links:
        a, b = min(state.links)
        S = state.adj[a][b]
        x = (state.nodes[a] & ~S)
        y = (state.nodes[b] & ~S)
        p = make_connect(state, a, b, x & -x, y & -y, SINGLE)
        path.append(p)
        state.apply_patch(p.patch)
    return path


__all__ = [
    "AnnealOptions", "AnnealResult", "ChainError", "ChainOptions", "ChainResult",
    "EdgePenaltyScore", "GraphFunctionScore", "Hooks", "STANDARD", "TWO_STAGE",
    "TargetDistribution", "UniformScore", "acceptance_probability", "anneal",
    "edge_penalty", "irreducibility_path", "mh_step", "run_chain", "two_stage_accept",
    "write_trace", "EdgeOccupancy",
]
