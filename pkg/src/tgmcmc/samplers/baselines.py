"""Marginal Gibbs and random-pair split-merge samplers on flat partitions."""
from __future__ import annotations

import math

import numpy as np

from ..crm import log_kappa
from ..errors import ContractViolation
from .state import MoveOutcome, resample_u

__all__ = ["gibbs_weights", "gibbs_sweep", "marginal_gibbs_iteration",
           "split_merge_iteration", "subset_wrap"]


def gibbs_weights(part, x, single_ml):
    """Unnormalised log weights of existing clusters (in row order) and a new
    cluster (last entry) for a datum that is not currently assigned."""
    t = part.table
    s = 0.0 if part.prior.is_dp else part.prior.sigma
    logw = np.empty(t.K + 1)
    if t.K:
        logw[:-1] = np.log(t.sizes - s) - math.log1p(part.u) + t.log_predictive(x)
    logw[-1] = log_kappa(part.prior, 1, part.u) + single_ml
    return logw


def _draw(rng, logw):
    p = np.exp(logw - logw.max())
    cdf = np.cumsum(p)
    return min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), logw.size - 1)


def gibbs_sweep(state, subset=None):
    part = state.forest
    rng = state.rng
    idx = range(part.n) if subset is None else subset
    for i in idx:
        i = int(i)
        part.remove_point(i)
        logw = gibbs_weights(part, part.data[i], part.single_ml[i])
        k = _draw(rng, logw)
        part.add_point(i, None if k == part.table.K else k)


def marginal_gibbs_iteration(state, subset=None):
    """One Gibbs sweep (over ``subset`` if given) followed by a u update."""
    gibbs_sweep(state, subset)
    if state.resample_u_enabled:
        resample_u(state)
    return None


# ------------------------------------------------------------- split-merge
def _restricted_scan(part, rng, items, assign, stats, forced=None):
    """One restricted Gibbs scan over ``items`` between two clusters.

    ``assign`` maps item -> 0/1 and ``stats`` holds the two cluster stats; both
    are updated in place.  With ``forced`` the scan does not sample but follows
    the given assignment.  Returns the log probability of the scan's choices.
    """
    model = part.model
    s = 0.0 if part.prior.is_dp else part.prior.sigma
    total = 0.0
    for k in items:
        x = part.data[k]
        a = assign[k]
        stats[a] = stats[a] - x
        lw0 = math.log(stats[0].n - s) + model.log_predictive(stats[0], x)
        lw1 = math.log(stats[1].n - s) + model.log_predictive(stats[1], x)
        m = max(lw0, lw1)
        lse = m + math.log(math.exp(lw0 - m) + math.exp(lw1 - m))
        if forced is None:
            b = 0 if rng.random() < math.exp(lw0 - lse) else 1
        else:
            b = forced[k]
        total += (lw0 if b == 0 else lw1) - lse
        assign[k] = b
        stats[b] = stats[b] + x
    return total


def _launch(part, rng, i, j, items, t_restricted):
    assign = {i: 0, j: 1}
    stats = [part.data[i], part.data[j]]
    for k in items:
        b = int(rng.random() < 0.5)
        assign[k] = b
        stats[b] = stats[b] + part.data[k]
    for _ in range(t_restricted):
        _restricted_scan(part, rng, items, assign, stats)
    return assign, stats


def _score(part, stats):
    return log_kappa(part.prior, stats.n, part.u) + part.model.log_marginal(stats)


def split_merge_proposal(state, t_restricted=5):
    """One random-pair split-merge Metropolis-Hastings step."""
    part = state.forest
    rng = state.rng
    if part.n < 2:
        raise ContractViolation("split-merge needs at least two data points")
    i, j = (int(v) for v in rng.choice(part.n, size=2, replace=False))
    ci, cj = part.label[i], part.label[j]
    if ci == cj:
        items = sorted(part.members[ci] - {i, j})
    else:
        items = sorted((part.members[ci] | part.members[cj]) - {i, j})
    assign, stats = _launch(part, rng, i, j, items, t_restricted)
    if ci == cj:
        log_q = _restricted_scan(part, rng, items, assign, stats)
        merged = part.stats[ci]
        delta = _score(part, stats[0]) + _score(part, stats[1]) - _score(part, merged)
        log_r = delta - log_q
        kind = "split"
        sizes = (stats[0].n, stats[1].n)
    else:
        forced = {k: 0 if part.label[k] == ci else 1 for k in items}
        log_q = _restricted_scan(part, rng, items, assign, stats, forced)
        merged = part.stats[ci] + part.stats[cj]
        delta = _score(part, merged) - _score(part, part.stats[ci]) - _score(part, part.stats[cj])
        log_r = delta + log_q
        kind = "merge"
        sizes = (part.stats[ci].n, part.stats[cj].n)
    accept = math.log(rng.random()) < log_r
    if accept:
        if kind == "split":
            g0 = [i] + [k for k in items if assign[k] == 0]
            g1 = [j] + [k for k in items if assign[k] == 1]
            part.replace_clusters([ci], [g0, g1])
        else:
            part.replace_clusters([ci, cj], [part.members[ci] | part.members[cj]])
    out = MoveOutcome(accept, log_r, kind, sizes, 0.0, 0.0)
    state.record(out)
    return out


def split_merge_iteration(state, t_restricted=5, subset=None, gibbs=True):
    """A split-merge proposal, a Gibbs sweep (over ``subset`` if given) and a
    u update."""
    out = split_merge_proposal(state, t_restricted)
    if gibbs:
        gibbs_sweep(state, subset)
    if state.resample_u_enabled:
        resample_u(state)
    return out


def subset_wrap(kernel, state, subset_fraction, **kwargs):
    """Run ``kernel`` with its per-point sweep restricted to a uniformly drawn
    subset of ``round(fraction * n)`` points (all points when fraction is 1)."""
    if not 0 < subset_fraction <= 1:
        raise ContractViolation("subset_fraction must lie in (0, 1]")
    n = state.forest.n
    if subset_fraction >= 1:
        return kernel(state, subset=None, **kwargs)
    size = max(1, int(round(subset_fraction * n)))
    subset = np.sort(state.rng.choice(n, size=size, replace=False))
    return kernel(state, subset=subset, **kwargs)
