"""Chain state, move bookkeeping, the joint density and the u update."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from ..crm import log_kappa, log_kappa_array, log_u_terms, psi
from ..errors import ContractViolation
from ..tree import canonical_partition


@dataclass
class MoveOutcome:
    accepted: bool
    log_r: float | None
    kind: str  # "split", "merge" or "noop"
    proposal_sizes: tuple = ()
    log_q_fwd: float = 0.0
    log_q_rev: float = 0.0
    # proposed-side clusters: S after a split, the merged group before a merge
    parts: list = field(default_factory=list, repr=False)


@dataclass
class MoveStats:
    proposals: int = 0
    accepts: int = 0
    sum_log_r: float = 0.0

    def add(self, outcome):
        self.proposals += 1
        self.accepts += int(outcome.accepted)
        if outcome.log_r is not None and math.isfinite(outcome.log_r):
            self.sum_log_r += outcome.log_r


class FlatPartition:
    """Plain cluster bookkeeping (no trees) for the Gibbs and split-merge
    baselines.  Shares the ``table``/``u``/``partition`` surface of a Forest."""

    def __init__(self, data, model, prior, u, labels):
        self.data = data
        self.model = model
        self.prior = prior
        self.u = float(u)
        self.n = len(data)
        labels = np.asarray(labels)
        if labels.shape != (self.n,):
            raise ContractViolation("need one label per data point")
        self.single_ml = np.array([model.log_marginal(x) for x in data])
        self.table = model.new_table(16)
        self.members = []
        self.stats = []
        self.label = np.full(self.n, -1, dtype=int)
        for lab in np.unique(labels):
            idx = np.flatnonzero(labels == lab)
            self._new_row(set(idx.tolist()), model.stats_of(data, idx))

    @classmethod
    def from_forest(cls, forest):
        return cls(forest.data, forest.model, forest.prior, forest.u, forest.labels())

    def _new_row(self, members, stats):
        k = self.table.append(stats, self.model.log_marginal(stats))
        self.members.append(members)
        self.stats.append(stats)
        self.label[list(members)] = k
        return k

    def _drop_row(self, k):
        moved = self.table.remove(k)
        last_members = self.members.pop()
        last_stats = self.stats.pop()
        if moved != -1:
            self.members[k] = last_members
            self.stats[k] = last_stats
            self.label[list(last_members)] = k

    def _set_row(self, k, stats):
        self.stats[k] = stats
        self.table.set(k, stats, self.model.log_marginal(stats))

    def remove_point(self, i):
        k = self.label[i]
        self.members[k].discard(i)
        self.label[i] = -1
        if not self.members[k]:
            self._drop_row(k)
        else:
            self._set_row(k, self.stats[k] - self.data[i])

    def add_point(self, i, k=None):
        """Put ``i`` into row ``k`` or into a new cluster when ``k`` is None."""
        if k is None:
            return self._new_row({i}, self.data[i])
        self.members[k].add(i)
        self.label[i] = k
        self._set_row(k, self.stats[k] + self.data[i])
        return k

    def replace_clusters(self, rows, groups):
        """Swap the clusters in ``rows`` for new clusters with member ``groups``."""
        for k in sorted(rows, reverse=True):
            self._drop_row(k)
        for g in groups:
            self._new_row(set(g), self.model.stats_of(self.data, sorted(g)))

    def set_u(self, u):
        self.u = float(u)

    @property
    def num_clusters(self):
        return self.table.K

    def labels(self):
        return self.label.copy()

    def blocks(self):
        return [sorted(m) for m in self.members]

    def partition(self):
        return canonical_partition(self.members)

    def audit(self, tol=1e-8):
        seen = np.zeros(self.n, dtype=int)
        for k, m in enumerate(self.members):
            for i in m:
                seen[i] += 1
                if self.label[i] != k:
                    raise AssertionError("label map out of sync")
            want = self.model.log_marginal(self.model.stats_of(self.data, sorted(m)))
            if abs(self.table.log_ml[k] - want) > tol * max(1.0, abs(want)):
                raise AssertionError(f"stale evidence in row {k}")
        if not np.all(seen == 1):
            raise AssertionError("clusters do not partition the data")
        return True


class ChainState:
    """One Markov chain: a clustering (Forest or FlatPartition) plus u."""

    def __init__(self, forest, rng, resample_u=True, u_steps=5, u_scale=0.5, debug=False):
        self.forest = forest
        self.rng = rng
        self.resample_u_enabled = resample_u
        self.u_steps = u_steps
        self.u_scale = u_scale
        self.debug = debug
        self.move_stats = {}
        self.u_accepts = 0
        self.u_proposals = 0

    @property
    def u(self):
        return self.forest.u

    @property
    def prior(self):
        return self.forest.prior

    @property
    def model(self):
        return self.forest.model

    @property
    def n(self):
        return self.forest.n

    def record(self, outcome):
        self.move_stats.setdefault(outcome.kind, MoveStats()).add(outcome)


def cluster_log_weight(prior, u, size, log_ml):
    return log_kappa(prior, size, u) + log_ml


def joint_log_prob(state):
    """``log p(X, Pi, u)`` up to constants shared by every partition."""
    f = state.forest if isinstance(state, ChainState) else state
    t = f.table
    return (log_u_terms(f.prior, f.u, f.n)
            + float(np.sum(log_kappa_array(f.prior, t.sizes, f.u)))
            + float(np.sum(t.log_ml[:t.K])))


def _log_u_target(prior, n, sizes, v):
    u = math.exp(v)
    return n * v - psi(prior, u) + float(np.sum(log_kappa_array(prior, sizes, u)))


def resample_u(state, inner_steps=None, scale=None):
    """Random-walk Metropolis on ``log u`` given the partition, then refresh
    every u-dependent cache."""
    steps = state.u_steps if inner_steps is None else inner_steps
    scale = state.u_scale if scale is None else scale
    if steps < 1:
        raise ContractViolation("inner_steps must be >= 1")
    f = state.forest
    sizes = f.table.sizes.copy()
    v = math.log(f.u)
    cur = _log_u_target(f.prior, f.n, sizes, v)
    rng = state.rng
    for _ in range(steps):
        prop = v + scale * rng.standard_normal()
        new = _log_u_target(f.prior, f.n, sizes, prop)
        state.u_proposals += 1
        if math.log(rng.random()) < new - cur:
            v, cur = prop, new
            state.u_accepts += 1
    f.set_u(math.exp(v))
    return state


def optimal_u(prior, n, sizes=None):
    """Mode of ``p(u | Pi)``; with ``sizes`` omitted the single-cluster
    partition is used."""
    sizes = np.array([n] if sizes is None else sizes, dtype=float)
    res = minimize_scalar(lambda v: -_log_u_target(prior, n, sizes, v),
                          bounds=(-30.0, 30.0), method="bounded")
    return math.exp(res.x)
