"""Binary cluster trees with cached potentials, and the forest that owns them.

Every node caches

* ``log_ml``    log evidence of its leaves as one cluster (independent of u),
* ``log_phi_h`` ``log kappa(|c|, u) + log_ml``,
* ``log_phi``   ``logaddexp(log_phi_h, left.log_phi + right.log_phi)``,
* ``log_d``     ``left.log_phi + right.log_phi - log_phi_h`` (``-inf`` at leaves).

The roots of a :class:`Forest` are the clusters of the current partition.  The
forest keeps one row of a likelihood ``ClusterTable`` per root so that
batched scores against all clusters are cheap.

Trees are mutated in place.  Proposals that may be rejected pass a
:class:`Journal`, which records the fields of every existing node before its
first change and can put them all back.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from .crm import log_kappa, log_kappa_array
from .errors import ContractViolation

NEG_INF = -math.inf
# d is floored at 1e-300 before it is inverted
LOG_D_FLOOR = math.log(1e-300)

_ids = itertools.count()


def _logaddexp(a, b):
    if a < b:
        a, b = b, a
    if b == NEG_INF:
        return a
    return a + math.log1p(math.exp(b - a))


def _logsumexp(xs):
    m = max(xs)
    if m == NEG_INF:
        return m
    return m + math.log(sum(math.exp(x - m) for x in xs))


class TreeNode:
    __slots__ = ("node_id", "left", "right", "parent", "leaf_index", "size", "stats",
                 "log_ml", "log_phi_h", "log_phi", "log_d", "row")

    def __init__(self, left=None, right=None, leaf_index=-1):
        self.node_id = next(_ids)
        self.left = left
        self.right = right
        self.parent = None
        self.leaf_index = leaf_index
        self.row = -1

    @property
    def is_leaf(self):
        return self.left is None

    def __repr__(self):
        kind = f"leaf {self.leaf_index}" if self.is_leaf else f"size {self.size}"
        return f"<TreeNode {self.node_id} {kind}>"


_SAVED = ("left", "right", "parent", "size", "stats", "log_ml", "log_phi_h", "log_phi",
          "log_d")


class Journal:
    """Undo log of node edits made while a proposal is pending."""

    def __init__(self):
        self._saved = {}

    def save(self, node):
        key = id(node)
        if key not in self._saved:
            self._saved[key] = (node, tuple(getattr(node, f) for f in _SAVED))

    def rollback(self):
        for node, values in self._saved.values():
            for f, val in zip(_SAVED, values):
                setattr(node, f, val)
        self._saved.clear()

    def clear(self):
        self._saved.clear()


def _touch(journal, node):
    if journal is not None:
        journal.save(node)


def preorder(node):
    """All nodes of the subtree rooted at ``node`` (root, left, right)."""
    out = []
    stack = [node]
    while stack:
        x = stack.pop()
        out.append(x)
        if x.left is not None:
            stack.append(x.right)
            stack.append(x.left)
    return out


def leaves_of(node):
    return [x.leaf_index for x in preorder(node) if x.left is None]


def is_ancestor(a, b):
    """True when ``a`` is ``b`` or lies on the path from ``b`` to its root."""
    x = b
    while x is not None:
        if x is a:
            return True
        x = x.parent
    return False


class Forest:
    """Partition of ``[n]`` represented by binary trees, one per cluster."""

    def __init__(self, data, model, prior, u):
        self.data = data
        self.model = model
        self.prior = prior
        self.u = float(u)
        self.n = len(data)
        self.leaves = [None] * self.n
        self.roots = []
        self.table = model.new_table(16)
        self._kappa_constants()

    def _kappa_constants(self):
        # log kappa(m, u) = kc + lgamma(m - ks) - (m - ks) * l1u for both priors
        p = self.prior
        self._ks = 0.0 if p.is_dp else p.sigma
        self._kc = p._log_c
        self._l1u = math.log1p(self.u)

    def _log_kappa(self, m):
        return self._kc + math.lgamma(m - self._ks) - (m - self._ks) * self._l1u

    # ------------------------------------------------------------------ nodes
    def make_leaf(self, i):
        if not 0 <= i < self.n:
            raise ContractViolation(f"data index {i} out of range")
        node = TreeNode(leaf_index=i)
        node.size = 1
        node.stats = self.data[i]
        node.log_ml = self.model.log_marginal(node.stats)
        self._potentials(node)
        self.leaves[i] = node
        return node

    def _potentials(self, node):
        node.log_phi_h = self._log_kappa(node.size) + node.log_ml
        if node.left is None:
            node.log_phi = node.log_phi_h
            node.log_d = NEG_INF
        else:
            lr = node.left.log_phi + node.right.log_phi
            node.log_phi = _logaddexp(node.log_phi_h, lr)
            node.log_d = lr - node.log_phi_h

    def _recompute(self, node):
        l, r = node.left, node.right
        node.size = l.size + r.size
        node.stats = l.stats + r.stats
        node.log_ml = self.model.log_marginal(node.stats)
        self._potentials(node)

    def _join(self, a, b, journal=None):
        if b.node_id < a.node_id:
            a, b = b, a
        _touch(journal, a)
        _touch(journal, b)
        node = TreeNode(a, b)
        a.parent = node
        b.parent = node
        self._recompute(node)
        return node

    def join(self, a, b):
        """New parent of the disjoint subtrees ``a`` and ``b``."""
        if is_ancestor(a, b) or is_ancestor(b, a):
            raise ContractViolation("cannot join overlapping subtrees")
        return self._join(a, b)

    def _dissimilarity(self, a, b):
        if b.node_id < a.node_id:
            a, b = b, a
        return (a.log_phi + b.log_phi - self._log_kappa(a.size + b.size)
                - self.model.log_marginal_pair(a.stats, b.stats))

    def dissimilarity(self, a, b):
        """``log d(a, b)``: both as separate trees vs. one cluster."""
        if is_ancestor(a, b) or is_ancestor(b, a):
            raise ContractViolation("dissimilarity of overlapping subtrees")
        return self._dissimilarity(a, b)

    def root_dissimilarities(self, node):
        """``log d(node, root)`` against every table row (``node`` need not
        be a root; its own row, if any, is meaningless)."""
        t = self.table
        merged = t.merged_log_ml(node.stats)
        lk = log_kappa_array(self.prior, t.sizes + node.size, self.u)
        return t.log_phi[:t.K] + node.log_phi - lk - merged

    def refresh_potentials(self, root):
        """Recompute u-dependent caches bottom-up; evidence is untouched."""
        for node in reversed(preorder(root)):
            self._potentials(node)
        return root

    def set_u(self, u):
        self.u = float(u)
        self._kappa_constants()
        for root in self.roots:
            self.refresh_potentials(root)
            self.table.log_phi[root.row] = root.log_phi

    # ------------------------------------------------------------ root table
    def add_root(self, node):
        node.parent = None
        node.row = self.table.append(node.stats, node.log_ml, node.log_phi)
        self.roots.append(node)

    def remove_root(self, node):
        k = node.row
        if k < 0 or self.roots[k] is not node:
            raise ContractViolation(f"{node!r} is not a root of this forest")
        self.table.remove(k)
        last = self.roots.pop()
        if last is not node:
            self.roots[k] = last
            last.row = k
        node.row = -1

    def replace_root(self, old, new):
        k = old.row
        old.row = -1
        new.parent = None
        new.row = k
        self.roots[k] = new
        self.table.set(k, new.stats, new.log_ml, new.log_phi)

    def update_root(self, node):
        self.table.set(node.row, node.stats, node.log_ml, node.log_phi)

    # --------------------------------------------------------------- queries
    def root_of(self, i):
        x = self.leaves[i]
        if x is None:
            raise ContractViolation(f"data index {i} is not in the forest")
        while x.parent is not None:
            x = x.parent
        return x

    @property
    def num_clusters(self):
        return len(self.roots)

    def labels(self):
        out = np.full(self.n, -1, dtype=int)
        for k, root in enumerate(self.roots):
            out[leaves_of(root)] = k
        return out

    def blocks(self):
        return [sorted(leaves_of(r)) for r in self.roots]

    def partition(self):
        return canonical_partition(self.blocks())

    def sum_log_phi(self):
        return float(np.sum(self.table.log_phi[:self.table.K]))

    # ------------------------------------------------------------ tree edits
    def seq_insert(self, c, s, allow_split=False, journal=None):
        """Insert the tree ``s`` into the tree rooted at ``c``.

        Descends while a child is closer to ``s`` than the two children are
        to each other; ties prefer stopping, then the left child.  Returns
        ``(root, severed)``.  ``severed`` is empty unless ``allow_split`` is
        set and some updated node ended with ``d > 1``; the whole tree is then
        dissolved into the returned pieces and ``root`` is None.
        """
        if c.parent is not None:
            raise ContractViolation("seq_insert expects the root of a tree")
        if is_ancestor(c, s) or is_ancestor(s, c):
            raise ContractViolation("cannot insert a tree into itself")
        path = []
        node = c
        while node.left is not None:
            d_lr = node.log_d
            d_ls = self._dissimilarity(node.left, s)
            d_rs = self._dissimilarity(node.right, s)
            if d_lr <= d_ls and d_lr <= d_rs:
                break
            path.append(node)
            node = node.left if d_ls <= d_rs else node.right
        j = self._join(node, s, journal)
        if path:
            p = path[-1]
            _touch(journal, p)
            if p.left is node:
                p.left = j
            else:
                p.right = j
            j.parent = p
            for q in reversed(path):
                _touch(journal, q)
                self._recompute(q)
            root = c
        else:
            root = j
        if not allow_split:
            return root, []
        updated = [j] + path[::-1]
        for level, p in enumerate(updated):
            if p.log_d > 0.0:
                return None, self._cut(updated[level:], journal)
        return root, []

    def _cut(self, chain, journal):
        # chain: bottom-up path from the cut node to the root, all destroyed
        p = chain[0]
        pieces = [p.left, p.right]
        below = p
        for a in chain[1:]:
            pieces.append(a.right if a.left is below else a.left)
            below = a
        for x in pieces:
            _touch(journal, x)
            x.parent = None
        return pieces

    def detach_leaf(self, i):
        """Remove leaf ``i`` from its tree; its sibling takes the parent's slot."""
        leaf = self.leaves[i]
        if leaf is None:
            raise ContractViolation(f"data index {i} is not in the forest")
        p = leaf.parent
        if p is None:
            self.remove_root(leaf)
            return leaf
        sib = p.left if p.right is leaf else p.right
        g = p.parent
        leaf.parent = None
        sib.parent = g
        if g is None:
            self.replace_root(p, sib)
            return leaf
        if g.left is p:
            g.left = sib
        else:
            g.right = sib
        x = g
        while True:
            self._recompute(x)
            if x.parent is None:
                break
            x = x.parent
        self.update_root(x)
        return leaf

    def audit(self, tol=1e-8):
        """Check every structural and cached-value invariant; raise on failure."""
        seen = np.zeros(self.n, dtype=int)
        if len(self.roots) != self.table.K:
            raise AssertionError("root list and table disagree")
        for k, root in enumerate(self.roots):
            if root.parent is not None or root.row != k:
                raise AssertionError(f"bad root bookkeeping at row {k}")
            if abs(self.table.log_phi[k] - root.log_phi) > tol or self.table.n[k] != root.size:
                raise AssertionError(f"stale table row {k}")
            for node in reversed(preorder(root)):
                if node.left is None:
                    seen[node.leaf_index] += 1
                    if self.leaves[node.leaf_index] is not node or node.size != 1:
                        raise AssertionError("leaf bookkeeping")
                    want_ml = self.model.log_marginal(self.data[node.leaf_index])
                    want_phi = log_kappa(self.prior, 1, self.u) + want_ml
                    if abs(node.log_phi - want_phi) > tol or node.log_d != NEG_INF:
                        raise AssertionError(f"leaf potential {node!r}")
                    continue
                if node.left.parent is not node or node.right.parent is not node:
                    raise AssertionError(f"parent pointers under {node!r}")
                if node.size != node.left.size + node.right.size:
                    raise AssertionError(f"size of {node!r}")
                want_ml = self.model.log_marginal(node.left.stats + node.right.stats)
                want_h = log_kappa(self.prior, node.size, self.u) + want_ml
                lr = node.left.log_phi + node.right.log_phi
                if (abs(node.log_ml - want_ml) > tol * max(1.0, abs(want_ml))
                        or abs(node.log_phi_h - want_h) > tol * max(1.0, abs(want_h))
                        or abs(node.log_phi - _logaddexp(want_h, lr)) > tol * max(1.0, abs(lr))
                        or abs(node.log_d - (lr - want_h)) > tol * max(1.0, abs(lr))):
                    raise AssertionError(f"potential recursion broken at {node!r}")
        if not np.all(seen == 1):
            raise AssertionError("roots do not partition the data")
        return True

    def signature(self):
        """Hashable snapshot of structure and caches (for rollback checks)."""
        out = []
        for root in self.roots:
            for x in preorder(root):
                out.append((x.node_id, x.parent.node_id if x.parent else -1,
                            x.left.node_id if x.left else -1,
                            x.right.node_id if x.right else -1, x.size,
                            round(x.log_phi, 9), round(x.log_d, 9) if x.left else 0.0))
        return tuple(out)


def canonical_partition(blocks):
    """Blocks as a tuple of sorted tuples, ordered by smallest element."""
    return tuple(sorted(tuple(sorted(int(i) for i in b)) for b in blocks))


# ---------------------------------------------------------------- SampleSub
def _subtree_log_weights(root, nonleaf_only):
    nodes = preorder(root)
    if nonleaf_only:
        nodes = [x for x in nodes if x.left is not None]
        if not nodes:
            raise ContractViolation("no non-leaf subtree to sample")
    logd = [x.log_d for x in nodes]
    log_eps = max(logd)
    if log_eps == NEG_INF:
        # every eligible d is zero: uniform
        log_eps = 0.0
    logw = [_logaddexp(ld, log_eps) for ld in logd]
    lse = _logsumexp(logw)
    return nodes, [w - lse for w in logw]


def sample_sub(root, rng, nonleaf_only=False):
    """Draw a subtree with probability proportional to ``d + eps``.

    ``eps`` is the largest ``d`` among eligible subtrees (1 if all are zero).
    Returns ``(node, log_prob)``.
    """
    nodes, logp = _subtree_log_weights(root, nonleaf_only)
    if len(nodes) == 1:
        return nodes[0], 0.0
    k = _categorical(rng, logp)
    return nodes[k], logp[k]


def sample_sub_prob(root, target, nonleaf_only=False):
    nodes, logp = _subtree_log_weights(root, nonleaf_only)
    for x, lp in zip(nodes, logp):
        if x is target:
            return lp
    raise ContractViolation(f"{target!r} is not an eligible subtree of {root!r}")


def _categorical(rng, logp):
    # logp is normalised
    r = rng.random()
    acc = 0.0
    for k, lp in enumerate(logp):
        acc += math.exp(lp)
        if r < acc:
            return k
    return len(logp) - 1


# --------------------------------------------------------------- StocInsert
NEW_CLUSTER = None


def _insert_log_weights(forest, S, c):
    logw = [-max(forest._dissimilarity(s, c), LOG_D_FLOOR) for s in S]
    logw.append(0.0)
    lse = _logsumexp(logw)
    return [w - lse for w in logw]


def stoc_insert(forest, S, c, rng, journal=None):
    """Randomised IBHC step: put ``c`` into a tree of ``S`` or alongside it.

    ``S`` (a list of roots) is updated in place; insertion never splits.
    Returns ``(S, log_prob, dest)`` where ``dest`` is the index of the
    receiving tree or :data:`NEW_CLUSTER`.
    """
    if not S:
        S.append(c)
        return S, 0.0, NEW_CLUSTER
    logp = _insert_log_weights(forest, S, c)
    k = _categorical(rng, logp)
    if k == len(S):
        S.append(c)
        return S, logp[k], NEW_CLUSTER
    root, _ = forest.seq_insert(S[k], c, allow_split=False, journal=journal)
    S[k] = root
    return S, logp[k], k


def stoc_insert_prob(forest, S, c, dest=NEW_CLUSTER):
    """Log probability that :func:`stoc_insert` takes branch ``dest``."""
    if dest is not NEW_CLUSTER and not 0 <= dest < len(S):
        raise ContractViolation(f"invalid destination {dest}")
    if not S:
        if dest is not NEW_CLUSTER:
            raise ContractViolation("only the new-cluster branch exists for empty S")
        return 0.0
    logp = _insert_log_weights(forest, S, c)
    return logp[-1] if dest is NEW_CLUSTER else logp[dest]
