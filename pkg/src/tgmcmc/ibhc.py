"""Incremental Bayesian hierarchical clustering (forest construction)."""
from __future__ import annotations

from collections import deque

import numpy as np

from .crm import log_u_terms
from .errors import ContractViolation
from .tree import Forest


class SplitCascadeError(RuntimeError):
    """Re-insertion of severed subtrees did not settle."""


def _nearest_root(forest, node):
    logd = forest.root_dissimilarities(node)
    k = int(np.argmin(logd))
    return k, float(logd[k])


def _place(forest, node, queue):
    """Nearest-root placement of one subtree; severed pieces go to ``queue``."""
    if not forest.roots:
        forest.add_root(node)
        return
    k, logd = _nearest_root(forest, node)
    if logd > 0.0:
        forest.add_root(node)
        return
    c = forest.roots[k]
    root, severed = forest.seq_insert(c, node, allow_split=True)
    if severed:
        forest.remove_root(c)
        queue.extend(severed)
    elif root is c:
        forest.update_root(c)
    else:
        forest.replace_root(c, root)


def ibhc_insert(forest, i):
    """Insert data point ``i`` into ``forest``, splitting trees whose updated
    dissimilarities exceed one and re-inserting the pieces."""
    if forest.leaves[i] is not None:
        raise ContractViolation(f"data index {i} is already in the forest")
    queue = deque([forest.make_leaf(i)])
    guard = 10 * forest.n
    placed = 0
    while queue:
        placed += 1
        if placed > guard + 1:
            raise SplitCascadeError(f"split cascade did not terminate after {guard} re-insertions")
        _place(forest, queue.popleft(), queue)
    return forest


def forest_score(forest):
    """``sum_roots log_phi`` plus the partition-free u terms."""
    return forest.sum_log_phi() + log_u_terms(forest.prior, forest.u, forest.n)


def ibhc_build(data, model, prior, u, order=None, restarts=1, rng=None):
    """Best of ``restarts`` IBHC constructions.

    The first construction uses ``order`` (identity when omitted); the others
    use random permutations drawn from ``rng``.
    """
    n = len(data)
    if order is None:
        order = np.arange(n)
    elif sorted(order) != list(range(n)):
        raise ContractViolation("order must be a permutation of the data indices")
    if restarts > 1 and rng is None:
        raise ContractViolation("restarts > 1 needs an rng")
    best, best_score = None, -np.inf
    for r in range(max(1, restarts)):
        perm = order if r == 0 else rng.permutation(n)
        forest = Forest(data, model, prior, u)
        for i in perm:
            ibhc_insert(forest, int(i))
        score = forest_score(forest)
        if score > best_score:
            best, best_score = forest, score
    return best


def flat_init(data, model, prior, u, order=None):
    """Deliberately poor trees: each point goes to its nearest root (or a new
    one) and is always joined at the top, so trees are caterpillars."""
    n = len(data)
    forest = Forest(data, model, prior, u)
    for i in (range(n) if order is None else order):
        leaf = forest.make_leaf(int(i))
        if not forest.roots:
            forest.add_root(leaf)
            continue
        k, logd = _nearest_root(forest, leaf)
        if logd > 0.0:
            forest.add_root(leaf)
            continue
        c = forest.roots[k]
        forest.replace_root(c, forest.join(c, leaf))
    return forest
