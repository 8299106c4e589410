"""Tree-guided MCMC: global split/merge proposals and subtree-local Gibbs moves."""
from __future__ import annotations

import math

import numpy as np

from ..crm import log_kappa
from ..errors import ContractViolation
from ..tree import (NEW_CLUSTER, Journal, _logsumexp, leaves_of, preorder, sample_sub,
                    sample_sub_prob, stoc_insert, stoc_insert_prob)
from .state import MoveOutcome, resample_u

__all__ = ["global_move", "propose_global", "local_move_sweep", "tgmcmc_iteration",
           "split_log_prob", "merge_log_prob", "gibbs_move_leaf", "iteration_log_r"]


def _softplus(x):
    return np.logaddexp(0.0, x)


def _score(f, node):
    return log_kappa(f.prior, node.size, f.u) + node.log_ml


def _pick_log_prob(f, x, group, skip_rows):
    """``log`` of choosing root ``x`` uniformly and then drawing exactly
    ``group`` (the other proposal-side clusters) into M.

    ``x`` and ``group`` may be detached trees; table rows in ``skip_rows``
    belong to clusters that are not part of the target partition.
    """
    total = 0.0
    for y in group:
        if y is not x:
            total -= float(_softplus(f._dissimilarity(x, y)))
    logd = f.root_dissimilarities(x)
    keep = np.ones(logd.shape[0], dtype=bool)
    keep[list(skip_rows)] = False
    ld = logd[keep]
    total += float(np.sum(ld - _softplus(ld)))
    return total


def merge_log_prob(forest, roots):
    """Log probability that one global move proposes merging ``roots`` (all
    current roots of ``forest``), summed over which of them is picked first."""
    if len(roots) < 2:
        raise ContractViolation("a merge needs at least two clusters")
    K = forest.num_clusters
    rows = [r.row for r in roots]
    terms = [_pick_log_prob(forest, x, roots, rows) for x in roots]
    return _logsumexp(terms) - math.log(K)


def _merge_reverse(f, group, merged, others_skip):
    # Probability of splitting the cascade back into ``group`` (sorted).
    K_new = f.num_clusters - len(group) + 1
    lp = -math.log(K_new) + _pick_log_prob(f, merged, [merged], others_skip)
    first = group[0].parent
    lp += sample_sub_prob(merged, first, nonleaf_only=True)
    S = [group[0], group[1]]
    for b in group[2:]:
        lp += stoc_insert_prob(f, S, b, NEW_CLUSTER)
        S.append(b)
    return lp


def _split_reverse(f, c, S):
    K_new = f.num_clusters - 1 + len(S)
    terms = [_pick_log_prob(f, x, S, [c.row]) for x in S]
    return _logsumexp(terms) - math.log(K_new)


def _cut_at(f, cstar, journal):
    chain = [cstar]
    while chain[-1].parent is not None:
        chain.append(chain[-1].parent)
    pieces = f._cut(chain, journal)
    return pieces[:2], pieces[2:]


def propose_global(state, journal, compute_reverse=True):
    """Draw a global proposal and build it under ``journal``.

    Returns ``(kind, info)``.  For split/merge proposals the forest roots and
    table are untouched; the caller applies or rolls back.
    """
    f = state.forest
    rng = state.rng
    K = f.num_clusters
    k = int(rng.integers(K))
    c = f.roots[k]
    logd = f.root_dissimilarities(c)
    p_in = np.exp(-_softplus(logd))
    draws = rng.random(K)
    in_m = draws < p_in
    in_m[k] = False
    if in_m.any():
        group = [c] + [f.roots[j] for j in np.flatnonzero(in_m)]
        group.sort(key=lambda x: x.node_id)
        rows = [x.row for x in group]
        q_fwd = _logsumexp([_pick_log_prob(f, x, group, rows) for x in group]) - math.log(K)
        merged = group[0]
        for b in group[1:]:
            merged = f._join(merged, b, journal)
        delta = _score(f, merged) - sum(_score(f, x) for x in group)
        q_rev = _merge_reverse(f, group, merged, rows) if compute_reverse else 0.0
        return "merge", dict(group=group, merged=merged, q_fwd=q_fwd, q_rev=q_rev,
                             delta=delta, c=c)
    if c.left is None:
        return "noop", dict(c=c)
    out = np.ones(K, dtype=bool)
    out[k] = False
    ld = logd[out]
    q_fwd = float(np.sum(ld - _softplus(ld))) - math.log(K)
    cstar, lp = sample_sub(c, rng, nonleaf_only=True)
    q_fwd += lp
    S, Q = _cut_at(f, cstar, journal)
    for piece in Q:
        S, lp, _ = stoc_insert(f, S, piece, rng, journal)
        q_fwd += lp
    delta = sum(_score(f, x) for x in S) - _score(f, c)
    q_rev = _split_reverse(f, c, S) if compute_reverse else 0.0
    return "split", dict(c=c, S=S, q_fwd=q_fwd, q_rev=q_rev, delta=delta)


def _apply(f, kind, info):
    if kind == "merge":
        for x in info["group"]:
            f.remove_root(x)
        f.add_root(info["merged"])
    else:
        S = info["S"]
        f.replace_root(info["c"], S[0])
        for x in S[1:]:
            f.add_root(x)


def global_move(state):
    """One Metropolis-Hastings split or merge proposal."""
    f = state.forest
    if f.n < 2:
        raise ContractViolation("global moves need at least two data points")
    journal = Journal()
    before = f.signature() if state.debug else None
    kind, info = propose_global(state, journal)
    if kind == "noop":
        out = MoveOutcome(False, None, "noop", (info["c"].size,))
        state.record(out)
        return out
    log_r = info["delta"] + info["q_rev"] - info["q_fwd"]
    accept = math.log(state.rng.random()) < log_r
    if kind == "merge":
        parts = info["group"]
    else:
        parts = list(info["S"])
    out = MoveOutcome(accept, log_r, kind, tuple(x.size for x in parts),
                      info["q_fwd"], info["q_rev"], parts)
    if accept:
        _apply(f, kind, info)
    else:
        journal.rollback()
        if state.debug and f.signature() != before:
            raise AssertionError("rollback did not restore the forest")
    if state.debug:
        f.audit()
    state.record(out)
    return out


def split_log_prob(forest, c, blocks):
    """Log probability that one global move splits root ``c`` into exactly
    ``blocks`` (collections of data indices); ``-inf`` when unreachable."""
    where = {}
    for b, block in enumerate(blocks):
        for i in block:
            where[int(i)] = b
    if sorted(where) != sorted(leaves_of(c)) or len(blocks) < 2:
        raise ContractViolation("blocks must partition the leaves of c into >= 2 parts")
    # the cut node is the unique node whose children lie in different blocks
    # while every ancestor sibling lies inside one block
    block_of = {}
    for node in reversed(preorder(c)):
        if node.left is None:
            block_of[id(node)] = where[node.leaf_index]
        else:
            a, b = block_of[id(node.left)], block_of[id(node.right)]
            block_of[id(node)] = a if a == b and a is not None else None
    cstar = None
    for node in preorder(c):
        if node.left is not None and block_of[id(node)] is None:
            l, r = block_of[id(node.left)], block_of[id(node.right)]
            if l is not None and r is not None:
                cstar = node
                break
    if cstar is None:
        return -math.inf
    x = cstar
    while x.parent is not None:
        p = x.parent
        sib = p.right if p.left is x else p.left
        if block_of[id(sib)] is None:
            return -math.inf
        x = p
    K = forest.num_clusters
    logd = forest.root_dissimilarities(c)
    keep = np.ones(K, dtype=bool)
    keep[c.row] = False
    ld = logd[keep]
    lp = float(np.sum(ld - _softplus(ld))) - math.log(K)
    lp += sample_sub_prob(c, cstar, nonleaf_only=True)
    journal = Journal()
    try:
        S, Q = _cut_at(forest, cstar, journal)
        owner = [block_of[id(S[0])], block_of[id(S[1])]]
        for piece in Q:
            b = block_of[id(piece)]
            dest = owner.index(b) if b in owner else NEW_CLUSTER
            lp += stoc_insert_prob(forest, S, piece, dest)
            if dest is NEW_CLUSTER:
                S.append(piece)
                owner.append(b)
            else:
                S[dest], _ = forest.seq_insert(S[dest], piece, allow_split=False,
                                               journal=journal)
        if len(S) != len(blocks):
            return -math.inf
    finally:
        journal.rollback()
    return lp


# ------------------------------------------------------------- local moves
def gibbs_move_leaf(f, i, rng):
    """Reassign data point ``i`` by its full conditional given the others."""
    leaf = f.detach_leaf(i)
    t = f.table
    s = 0.0 if f.prior.is_dp else f.prior.sigma
    logw = np.empty(t.K + 1)
    if t.K:
        logw[:-1] = np.log(t.sizes - s) - math.log1p(f.u) + t.log_predictive(leaf.stats)
    logw[-1] = log_kappa(f.prior, 1, f.u) + leaf.log_ml
    k = _draw(rng, logw)
    if k == t.K:
        f.add_root(leaf)
        return
    c = f.roots[k]
    root, _ = f.seq_insert(c, leaf, allow_split=False)
    if root is c:
        f.update_root(c)
    else:
        f.replace_root(c, root)


def _draw(rng, logw):
    p = np.exp(logw - logw.max())
    cdf = np.cumsum(p)
    return min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), logw.size - 1)


def local_move_sweep(state, D=2):
    """Gibbs updates for leaves of subtrees reached by ``D`` nested SampleSub
    draws from every root."""
    if D < 1:
        raise ContractViolation("D must be >= 1")
    f = state.forest
    rng = state.rng
    chosen = []
    for root in list(f.roots):
        node = root
        for _ in range(D):
            node, _ = sample_sub(node, rng)
        chosen.extend(leaves_of(node))
    for i in sorted(chosen):
        gibbs_move_leaf(f, i, rng)
    if state.debug:
        f.audit()
    return state


def tgmcmc_iteration(state, G=20, D=2):
    """``G`` global moves, one local sweep and (optionally) a u update."""
    if G < 0:
        raise ContractViolation("G must be >= 0")
    outcomes = []
    if state.forest.n >= 2:
        for _ in range(G):
            outcomes.append(global_move(state))
    local_move_sweep(state, D)
    if state.resample_u_enabled:
        resample_u(state)
    return outcomes


def iteration_log_r(outcomes):
    vals = [o.log_r for o in outcomes if o.kind != "noop"]
    return float(np.mean(vals)) if vals else None

