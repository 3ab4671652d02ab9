"""Graphical Gaussian intra-class model.

Every variable has variance ``sigma2`` and every edge of the decomposable
graph ``G`` carries covariance ``rho * sigma2``; the remaining entries of the
covariance are fixed by requiring zero precision off the graph.  Every
clique (and separator) marginal is then intra-class, and the joint density
factorises over cliques and separators.

The only data-dependent quantities are, for a vertex subset ``D``,

    q1(D) = sum_r (sum_{i in D} y_i^(r))^2     q2(D) = sum_r sum_{i in D} (y_i^(r))^2

both read off the Gram matrix ``Y'Y``, so once the Gram matrix is built the
cost of a likelihood ratio does not depend on the number of replicates.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .graph_core import members
from .junction_tree import JunctionTree, count_junction_trees
from .moves import CONNECT, MoveProposal

LOG_2PI = math.log(2.0 * math.pi)


class ParamOutOfRange(ValueError):
    pass


@dataclass
class GgimParams:
    sigma2: float
    rho: float
    v: int

    def __post_init__(self):
        check_params(self.sigma2, self.rho, self.v)


def rho_lower(v: int) -> float:
    return -1.0 / (v - 1) if v > 1 else -math.inf


def check_params(sigma2: float, rho: float, v: int) -> None:
    if not sigma2 > 0 or not math.isfinite(sigma2):
        raise ParamOutOfRange(f"sigma2 must be positive, got {sigma2}")
    if not (rho_lower(v) < rho < 1.0):
        raise ParamOutOfRange(f"rho={rho} outside ({rho_lower(v)}, 1) for v={v}")


@dataclass(frozen=True)
class SubsetStats:
    key: int
    v_d: int
    q1: float
    q2: float
    n: int = 1


@dataclass
class PriorSpec:
    """sigma^-2 ~ Gamma(alpha, rate=beta); rho uniform; log p(G) = -edge_penalty |E|."""

    alpha: float = 1.0
    beta: float = 1.0
    edge_penalty: float = 0.0

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be positive")


class Dataset:
    """n x v data matrix together with its Gram matrix."""

    def __init__(self, y):
        y = np.asarray(y, dtype=float)
        if y.ndim != 2:
            raise ValueError("data must be a 2-d array (replicates x variables)")
        if y.shape[0] < 1:
            raise ValueError("data has no rows")
        self.y = y
        self.n, self.v = y.shape
        self.gram = y.T @ y
        self.total_ss = float(np.trace(self.gram))

    @classmethod
    def from_gram(cls, gram, n: int) -> "Dataset":
        d = cls.__new__(cls)
        d.y = None
        d.gram = np.asarray(gram, dtype=float)
        d.n = int(n)
        d.v = d.gram.shape[0]
        d.total_ss = float(np.trace(d.gram))
        return d


class StatsCache:
    """Per-subset sufficient statistics keyed by the subset's bitmask.

    Entries depend only on the data and the subset.  Beyond ``max_entries``
    the least recently used entry is dropped; ``enabled=False`` recomputes
    every time (used to check that caching changes nothing).
    """

    def __init__(self, data: Dataset, max_entries: int = 10**6, enabled: bool = True):
        self.data = data
        self.max_entries = max_entries
        self.enabled = enabled
        self._d: OrderedDict[int, SubsetStats] = OrderedDict()
        self.hits = 0
        self.misses = 0

    def __len__(self):
        return len(self._d)

    def compute(self, key: int) -> SubsetStats:
        if not key:
            return SubsetStats(0, 0, 0.0, 0.0, self.data.n)
        idx = list(members(key))
        g = self.data.gram[np.ix_(idx, idx)]
        return SubsetStats(key, len(idx), float(g.sum()), float(np.trace(g)), self.data.n)

    def get(self, key: int) -> SubsetStats:
        if not self.enabled:
            return self.compute(key)
        d = self._d
        s = d.get(key)
        if s is not None:
            self.hits += 1
            d.move_to_end(key)
            return s
        self.misses += 1
        s = self.compute(key)
        d[key] = s
        if len(d) > self.max_entries:
            d.popitem(last=False)
        return s


def _denom(v_d: int, rho: float) -> float:
    den = 1.0 - rho + v_d * rho
    if not den > 0:
        raise ParamOutOfRange(f"1 - rho + v_D rho = {den} is not positive")
    return den


def subset_log_density(stats: SubsetStats, p: GgimParams) -> float:
    """Replicate-summed log density of the intra-class normal on one subset."""
    k = stats.v_d
    n = stats.n
    if k == 0:
        return 0.0
    s2, rho = p.sigma2, p.rho
    den = _denom(k, rho)
    quad = stats.q2 - rho * stats.q1 / den
    return (-0.5 * n * k * (LOG_2PI + math.log(s2))
            - 0.5 * n * ((k - 1) * math.log(1.0 - rho) + math.log(den))
            - quad / (2.0 * s2 * (1.0 - rho)))


def _log_f(v_d: int, rho: float) -> float:
    # f(D) = 1 + v_D rho / (1 - rho)
    return math.log(_denom(v_d, rho)) - math.log(1.0 - rho)


def _h(stats: SubsetStats, rho: float) -> float:
    return stats.q1 / _denom(stats.v_d, rho) if stats.v_d else 0.0


def _cliques_and_separators(j: JunctionTree):
    cl = [j.nodes[i] for i in j.active]
    sp = [j.adj[a][b] for a, b in j.links]
    return cl, sp


def joint_log_density(data: Dataset, j: JunctionTree, p: GgimParams, cache: StatsCache | None = None) -> float:
    """log p(y | G, sigma2, rho) through the clique-separator factorisation."""
    if cache is None:
        cache = StatsCache(data, enabled=False)
    check_params(p.sigma2, p.rho, p.v)
    n, v = data.n, p.v
    rho, s2 = p.rho, p.sigma2
    cl, sp = _cliques_and_separators(j)
    sum_lf = 0.0
    sum_h = 0.0
    for c in cl:
        st = cache.get(c)
        sum_lf += _log_f(st.v_d, rho)
        sum_h += _h(st, rho)
    for s in sp:
        if s:
            st = cache.get(s)
            sum_lf -= _log_f(st.v_d, rho)
            sum_h -= _h(st, rho)
    q = data.total_ss - rho * sum_h
    return (-0.5 * n * v * (LOG_2PI + math.log(s2) + math.log(1.0 - rho))
            - 0.5 * n * sum_lf - q / (2.0 * s2 * (1.0 - rho)))


def log_cross_ratio(A: int, B: int, S: int, data: Dataset, p: GgimParams, cache: StatsCache) -> float:
    """Change in log density when {A u S, B u S} are replaced by {A u B u S, S}."""
    if not A or not B or A & B or A & S or B & S:
        raise ValueError("A, B must be non-empty and A, B, S pairwise disjoint")
    rho = p.rho
    if rho == 0.0:
        return 0.0
    s_abs = cache.get(A | B | S)
    s_as = cache.get(A | S)
    s_bs = cache.get(B | S)
    s_s = cache.get(S)
    lf = (_log_f(s_as.v_d, rho) + _log_f(s_bs.v_d, rho)
          - _log_f(s_abs.v_d, rho) - (_log_f(s_s.v_d, rho) if S else 0.0))
    dh = _h(s_abs, rho) + _h(s_s, rho) - _h(s_as, rho) - _h(s_bs, rho)
    return 0.5 * data.n * lf + rho / (2.0 * p.sigma2 * (1.0 - rho)) * dh


def compute_q(data: Dataset, j: JunctionTree, rho: float, cache: StatsCache) -> float:
    cl, sp = _cliques_and_separators(j)
    h = sum(_h(cache.get(c), rho) for c in cl) - sum(_h(cache.get(s), rho) for s in sp if s)
    return data.total_ss - rho * h


def gibbs_update_sigma2(data: Dataset, j: JunctionTree, rho: float, prior: PriorSpec,
                        cache: StatsCache, rng) -> float:
    """Draw sigma2 from its full conditional (sigma^-2 is Gamma distributed)."""
    check_params(1.0, rho, data.v)
    q = compute_q(data, j, rho, cache)
    shape = prior.alpha + 0.5 * data.n * data.v
    rate = prior.beta + q / (2.0 * (1.0 - rho))
    prec = rng.gammavariate(shape, 1.0 / rate)
    return 1.0 / prec


def g_transform(rho: float, v: int) -> float:
    return math.log((rho + 1.0 / (v - 1)) / (1.0 - rho))


def g_inverse(x: float, v: int) -> float:
    # lo + (1 - lo) * logistic(x), arranged so rounding never leaves [lo, 1]
    lo = -1.0 / (v - 1)
    if x > 0:
        e = math.exp(-x)
        return 1.0 - (1.0 - lo) * e / (1.0 + e)
    e = math.exp(x)
    return lo + (1.0 - lo) * e / (1.0 + e)


def mh_update_rho(data: Dataset, j: JunctionTree, sigma2: float, p: GgimParams, rng,
                  step: float = 0.5, cache: StatsCache | None = None) -> float:
    """One random-walk MH step for rho on the transformed scale."""
    v = p.v
    if cache is None:
        cache = StatsCache(data)
    rho = p.rho
    z = rng.gauss(0.0, step)
    prop = g_inverse(g_transform(rho, v) + z, v)
    lo = rho_lower(v)
    if not (lo < prop < 1.0):
        return rho
    cur = joint_log_density(data, j, GgimParams(sigma2, rho, v), cache)
    new = joint_log_density(data, j, GgimParams(sigma2, prop, v), cache)
    log_a = (new - cur + math.log((prop - lo) * (1.0 - prop))
             - math.log((rho - lo) * (1.0 - rho)))
    if log_a >= 0 or rng.random() < math.exp(log_a):
        return prop
    return rho


class GgimScore:
    """Graph score log p(y | G, sigma2, rho) + log p(G) at the current parameters.

    ``params`` may be replaced between sweeps (parameter updates); the
    cache holds data statistics only and stays valid.
    """

    def __init__(self, data: Dataset, params: GgimParams, prior: PriorSpec | None = None,
                 cache: StatsCache | None = None):
        if params.v != data.v:
            raise ValueError(f"model has v={params.v} but data has {data.v} columns")
        self.data = data
        self.prior = prior or PriorSpec()
        self.cache = cache if cache is not None else StatsCache(data)
        self.params = params

    @property
    def params(self) -> GgimParams:
        return self._params

    @params.setter
    def params(self, p: GgimParams) -> None:
        self._params = p
        self._terms = {0: 0.0}
        self._coef = p.rho / (2.0 * p.sigma2 * (1.0 - p.rho))

    def _term(self, d: int) -> float:
        # the part of a subset's log density that varies with the graph
        out = self._terms.get(d)
        if out is None:
            st = self.cache.get(d)
            rho = self._params.rho
            out = -0.5 * self.data.n * _log_f(st.v_d, rho) + self._coef * _h(st, rho)
            self._terms[d] = out
        return out

    def log_score(self, j: JunctionTree) -> float:
        out = joint_log_density(self.data, j, self.params, self.cache)
        if self.prior.edge_penalty:
            out -= self.prior.edge_penalty * j.n_edges()
        return out

    def move_delta(self, j: JunctionTree, p: MoveProposal) -> float:
        X, Y, S = p.X, p.Y, p.S
        t = self._term
        d = t(X | Y | S) + t(S) - t(X | S) - t(Y | S)
        if p.direction != CONNECT:
            d = -d
        if self.prior.edge_penalty:
            d -= self.prior.edge_penalty * p.n_edges_delta
        return d

    def update_params(self, j: JunctionTree, rng, step: float = 0.5) -> None:
        """Gibbs step for sigma2 followed by one MH step for rho."""
        s2 = gibbs_update_sigma2(self.data, j, self.params.rho, self.prior, self.cache, rng)
        self.params = GgimParams(s2, self.params.rho, self.params.v)
        rho = mh_update_rho(self.data, j, s2, self.params, rng, step, self.cache)
        self.params = GgimParams(s2, rho, self.params.v)


def graph_log_target(j: JunctionTree, data: Dataset, p: GgimParams, prior: PriorSpec,
                     cache: StatsCache, mu_correction: bool = True) -> float:
    out = GgimScore(data, p, prior, cache).log_score(j)
    if mu_correction:
        mu = count_junction_trees(j)
        out -= math.log(mu)
    return out


def simulate_data(j: JunctionTree, p: GgimParams, n: int, rng) -> Dataset:
    """Draw ``n`` replicates along the junction tree from the lowest-index node.

    Each node's new vertices are drawn given the separator with its parent:
    mean  b * sum(y_S)  and covariance  (1 - rho) sigma2 (I + b J),
    where b = rho / (1 - rho + v_S rho).  ``rng`` is a numpy Generator.
    """
    check_params(p.sigma2, p.rho, p.v)
    if n < 1:
        raise ValueError("n must be >= 1")
    v = p.v
    rho, s2 = p.rho, p.sigma2
    y = np.zeros((n, v))
    root = min(j.active)
    order = [(root, -1)]
    seen = {root}
    k = 0
    while k < len(order):
        i, _ = order[k]
        k += 1
        for nb in sorted(j.adj[i]):
            if nb not in seen:
                seen.add(nb)
                order.append((nb, i))
    for i, parent in order:
        c = j.nodes[i]
        s = j.adj[i][parent] if parent >= 0 else 0
        new = list(members(c & ~s))
        sep = list(members(s))
        a = len(new)
        b = rho / _denom(len(sep), rho)
        z = rng.standard_normal((n, a))
        # (I + bJ)^(1/2) z = z + (sqrt(1 + a b) - 1) * mean(z) * 1
        scale = math.sqrt(1.0 + a * b)
        z = z + (scale - 1.0) * z.mean(axis=1, keepdims=True)
        z *= math.sqrt((1.0 - rho) * s2)
        if sep:
            z += b * y[:, sep].sum(axis=1, keepdims=True)
        y[:, new] = z
    return Dataset(y)


def read_data(path) -> Dataset:
    """CSV data matrix, one replicate per row; '#' comments and a header row are allowed."""
    rows = []
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            try:
                rows.append([float(x) for x in parts])
            except ValueError:
                if rows:
                    raise
                continue  # header
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return Dataset(np.array(rows))


def write_data(data: Dataset, path, metadata: dict | None = None) -> None:
    with open(path, "w") as fh:
        for k, val in (metadata or {}).items():
            fh.write(f"# {k}: {val}\n")
        fh.write(",".join(f"y{i}" for i in range(data.v)) + "\n")
        np.savetxt(fh, data.y, delimiter=",", fmt="%.17g")
