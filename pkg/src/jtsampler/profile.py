"""Penalized Gaussian profile log-likelihood of a decomposable graph.

With the covariance set to its maximum likelihood estimate under ``G`` the
zero-mean Gaussian log-likelihood is

    sum_C phi(C) - sum_S phi(S) - n v (log(2 pi) + 1) / 2,
    phi(D) = -(n / 2) log det(W_D / n),

where ``W = Y'Y``.  Used as the annealing objective with a penalty
``alpha`` per edge.
"""

from __future__ import annotations

import math

import numpy as np

from .graph_core import members
from .junction_tree import JunctionTree
from .moves import MoveProposal

LOG_2PI = math.log(2.0 * math.pi)


class ProfileScore:
    def __init__(self, gram, n: int, penalty: float = 0.0, max_entries: int = 10**6):
        self.gram = np.asarray(gram, dtype=float)
        self.n = int(n)
        self.v = self.gram.shape[0]
        self.penalty = float(penalty)
        self.max_entries = max_entries
        self._phi: dict[int, float] = {0: 0.0}

    @classmethod
    def from_data(cls, y, penalty: float = 0.0) -> "ProfileScore":
        y = np.asarray(y, dtype=float)
        return cls(y.T @ y, y.shape[0], penalty)

    def phi(self, d: int) -> float:
        out = self._phi.get(d)
        if out is None:
            idx = list(members(d))
            sign, logdet = np.linalg.slogdet(self.gram[np.ix_(idx, idx)] / self.n)
            if sign <= 0:
                raise np.linalg.LinAlgError(f"sample covariance on {idx} is not positive definite")
            out = -0.5 * self.n * logdet
            if len(self._phi) >= self.max_entries:
                self._phi.clear()
                self._phi[0] = 0.0
            self._phi[d] = out
        return out

    def log_likelihood(self, j: JunctionTree) -> float:
        tot = sum(self.phi(j.nodes[i]) for i in j.active)
        tot -= sum(self.phi(j.adj[a][b]) for a, b in j.links)
        return tot - 0.5 * self.n * self.v * (LOG_2PI + 1.0)

    def log_score(self, j: JunctionTree) -> float:
        return self.log_likelihood(j) - self.penalty * j.n_edges()

    def move_delta(self, j: JunctionTree, p: MoveProposal) -> float:
        X, Y, S = p.X, p.Y, p.S
        phi = self.phi
        d = phi(X | Y | S) + phi(S) - phi(X | S) - phi(Y | S)
        if p.direction != "connect":
            d = -d
        return d - self.penalty * p.n_edges_delta
