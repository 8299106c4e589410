"""Exhaustive set-partition enumeration and exact posteriors for small n."""
from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from .crm import log_kappa, log_u_terms
from .errors import ContractViolation
from .tree import canonical_partition

MAX_ENUMERATE = 12
MAX_POSTERIOR = 10


def bell_number(n):
    """Bell numbers via the Bell triangle."""
    row = [1]
    for _ in range(n):
        nxt = [row[-1]]
        for v in row:
            nxt.append(nxt[-1] + v)
        row = nxt
    return row[0]


def restricted_growth_strings(n):
    """Yield label arrays ``a`` with ``a[0] = 0`` and
    ``a[i] <= 1 + max(a[:i])`` in lexicographic order."""
    a = [0] * n
    m = [0] * n  # m[i] = max(a[:i+1])
    while True:
        yield tuple(a)
        i = n - 1
        while i > 0 and a[i] == m[i - 1] + 1:
            i -= 1
        if i == 0:
            return
        a[i] += 1
        m[i] = max(m[i - 1], a[i])
        for j in range(i + 1, n):
            a[j] = 0
            m[j] = m[i]


def enumerate_partitions(n):
    """Every set partition of ``range(n)`` exactly once, in restricted
    growth string order, as canonical tuples of blocks."""
    if not 1 <= n <= MAX_ENUMERATE:
        raise ContractViolation(f"enumeration supports 1 <= n <= {MAX_ENUMERATE}, got {n}")
    for rgs in restricted_growth_strings(n):
        blocks = {}
        for i, lab in enumerate(rgs):
            blocks.setdefault(lab, []).append(i)
        yield canonical_partition(blocks.values())


def exact_posterior(data, u, prior, model):
    """Posterior over partitions given ``u``.

    Returns ``(probs, log_norm, log_u)`` where ``probs`` maps canonical
    partitions to probabilities, ``log_norm`` is the log sum over partitions
    of ``exp(sum_c [log kappa + log evidence])`` and ``log_u`` the
    partition-free u terms, so ``log_norm + log_u`` is the log marginal of
    the data and u.
    """
    n = len(data)
    if n > MAX_POSTERIOR:
        raise ContractViolation(f"exact posterior supports n <= {MAX_POSTERIOR}, got {n}")
    cache = {}

    def block_score(block):
        val = cache.get(block)
        if val is None:
            val = log_kappa(prior, len(block), u) + model.log_marginal(model.stats_of(data, block))
            cache[block] = val
        return val

    parts = []
    scores = []
    for p in enumerate_partitions(n):
        parts.append(p)
        scores.append(sum(block_score(b) for b in p))
    scores = np.array(scores)
    log_norm = float(logsumexp(scores))
    probs = dict(zip(parts, np.exp(scores - log_norm)))
    return probs, log_norm, log_u_terms(prior, u, n)


def check_lower_bound(forest):
    """Compare the sum of root potentials with the exact log marginal.

    Every tree potential is a sum over a subset of the partitions of its
    leaves, so ``sum_roots log_phi`` can not exceed the log of the sum over
    all partitions.  Returns ``(holds, gap)`` with ``gap = exact - bound``.
    """
    if forest.n > MAX_POSTERIOR:
        raise ContractViolation(f"exact comparison supports n <= {MAX_POSTERIOR}")
    _, log_norm, _ = exact_posterior(forest.data, forest.u, forest.prior, forest.model)
    bound = forest.sum_log_phi()
    gap = log_norm - bound
    return gap >= -1e-9, gap


def partition_frequencies(samples):
    """Normalised counts of canonical partitions."""
    counts = {}
    for p in samples:
        counts[p] = counts.get(p, 0) + 1
    total = float(sum(counts.values()))
    return {p: c / total for p, c in counts.items()}


__all__ = ["bell_number", "enumerate_partitions", "restricted_growth_strings",
           "exact_posterior", "check_lower_bound", "partition_frequencies"]
