import math

import numpy as np
import pytest

from tgmcmc import CrmPrior, GaussianWishart
from tgmcmc.crm import log_kappa
from tgmcmc.errors import ContractViolation
from tgmcmc.tree import (NEW_CLUSTER, Forest, Journal, leaves_of, preorder, sample_sub,
                         sample_sub_prob, stoc_insert, stoc_insert_prob)


def make_forest(X, prior=None, u=1.0, model=None):
    X = np.asarray(X, dtype=float)
    model = model or GaussianWishart.from_data(X)
    return Forest(model.prepare(X), model, prior or CrmPrior.dirichlet(1.0), u)


def chain_tree(f, idx):
    """Left-deep tree over ``idx`` added as a root."""
    node = f.make_leaf(idx[0])
    for i in idx[1:]:
        node = f.join(node, f.make_leaf(i))
    f.add_root(node)
    return node


def direct_log_d(f, a_idx, b_idx, phi_a, phi_b):
    # direct evaluation of the merge dissimilarity from its definition
    m = f.model
    s = m.stats_of(f.data, list(a_idx) + list(b_idx))
    return phi_a + phi_b - log_kappa(f.prior, len(a_idx) + len(b_idx), f.u) - m.log_marginal(s)


def leaf_phi(f, i):
    return log_kappa(f.prior, 1, f.u) + f.model.log_marginal(f.data[i])


def test_leaf_caches():
    f = make_forest([[0.0, 0.0], [1.0, 1.0], [5.0, 0.0]])
    leaf = f.make_leaf(1)
    assert leaf.size == 1 and leaf.log_d == -math.inf
    assert leaf.log_phi == pytest.approx(leaf_phi(f, 1), abs=1e-12)
    with pytest.raises(ContractViolation):
        f.make_leaf(3)


def test_join_coincident_points_has_d_below_one():
    model = GaussianWishart([0.0, 0.0], 0.1, 8.0, np.eye(2))
    f = make_forest([[0.0, 0.0], [0.0, 0.0]], model=model)
    a, b = f.make_leaf(0), f.make_leaf(1)
    p = f.join(a, b)
    want = direct_log_d(f, [0], [1], leaf_phi(f, 0), leaf_phi(f, 1))
    assert p.log_d == pytest.approx(want, abs=1e-12)
    assert p.log_d < 0
    assert p.left is a and p.right is b and a.parent is p


def test_join_far_points_has_d_above_one():
    model = GaussianWishart([0.0, 0.0], 0.1, 8.0, np.eye(2))
    f = make_forest([[0.0, 0.0], [100.0, 0.0]], model=model)
    p = f.join(f.make_leaf(0), f.make_leaf(1))
    assert p.log_d == pytest.approx(direct_log_d(f, [0], [1], leaf_phi(f, 0), leaf_phi(f, 1)),
                                    abs=1e-10)
    assert p.log_d > 0


def test_join_rejects_overlap():
    f = make_forest([[0.0], [1.0]])
    a = f.make_leaf(0)
    with pytest.raises(ContractViolation):
        f.join(a, a)
    p = f.join(a, f.make_leaf(1))
    with pytest.raises(ContractViolation):
        f.join(p, a)
    with pytest.raises(ContractViolation):
        f.dissimilarity(a, p)


def test_dissimilarity_is_symmetric_and_matches_join(rng):
    f = make_forest(rng.normal(size=(6, 2)))
    a = f.join(f.make_leaf(0), f.make_leaf(1))
    b = f.join(f.make_leaf(2), f.join(f.make_leaf(3), f.make_leaf(4)))
    assert f.dissimilarity(a, b) == f.dissimilarity(b, a)
    d_ab = f.dissimilarity(a, b)
    p = f.join(a, b)
    assert p.log_d == pytest.approx(d_ab, abs=1e-12)


def test_root_dissimilarities_match_pairwise(rng):
    f = make_forest(rng.normal(size=(8, 2)))
    roots = [chain_tree(f, [0, 1, 2]), chain_tree(f, [3, 4]), chain_tree(f, [5])]
    node = f.join(f.make_leaf(6), f.make_leaf(7))
    batch = f.root_dissimilarities(node)
    assert np.allclose(batch, [f.dissimilarity(r, node) for r in roots], atol=1e-10)


def test_potential_recursion_and_refresh(rng):
    f = make_forest(rng.normal(size=(6, 2)), prior=CrmPrior.generalized_gamma(1.0, 0.4))
    root = chain_tree(f, list(range(6)))
    f.audit()
    f.set_u(3.7)
    f.audit()
    rebuilt = Forest(f.data, f.model, f.prior, 3.7)
    other = chain_tree(rebuilt, list(range(6)))
    assert root.log_phi == pytest.approx(other.log_phi, abs=1e-12)


def test_forest_root_table_bookkeeping(rng):
    f = make_forest(rng.normal(size=(5, 2)))
    r0 = chain_tree(f, [0, 1])
    r1 = chain_tree(f, [2])
    r2 = chain_tree(f, [3, 4])
    f.remove_root(r0)
    assert f.roots == [r2, r1] and r2.row == 0
    with pytest.raises(ContractViolation):
        f.remove_root(r0)
    f.add_root(r0)
    f.audit()
    assert sorted(map(sorted, f.blocks())) == [[0, 1], [2], [3, 4]]
    assert f.partition() == ((0, 1), (2,), (3, 4))
    lab = f.labels()
    assert lab[0] == lab[1] != lab[2]
    assert f.root_of(4) is r2


def _placement_case(root, s):
    if s.parent is root:
        return 1
    x = s
    while x.parent is not root:
        x = x.parent
    return 2 if root.left is x else 3


def test_seq_insert_picks_best_top_level_placement(rng):
    for trial in range(30):
        X = rng.normal(size=(6, 2)) * rng.uniform(0.5, 4.0)
        f = make_forest(X)
        c = f.join(f.join(f.make_leaf(0), f.make_leaf(1)), f.join(f.make_leaf(2), f.make_leaf(3)))
        s = f.join(f.make_leaf(4), f.make_leaf(5))
        l, r = c.left, c.right
        # candidate potentials with s placed at the top level
        cands = [c.log_phi + s.log_phi]
        for child, other in ((l, r), (r, l)):
            phi_h = log_kappa(f.prior, child.size + s.size, f.u) + f.model.log_marginal(
                child.stats + s.stats)
            phi_cs = np.logaddexp(phi_h, child.log_phi + s.log_phi)
            cands.append(phi_cs + other.log_phi)
        want = int(np.argmax(cands)) + 1
        f.add_root(c)
        root, severed = f.seq_insert(c, s)
        assert severed == []
        assert _placement_case(root, s) == want, trial
        f.replace_root(c, root) if root is not c else f.update_root(c)
        f.audit()


def test_seq_insert_split_severs_far_subtree():
    model = GaussianWishart([0.0, 0.0], 0.1, 8.0, np.eye(2))
    f = make_forest([[0.0, 0.0], [0.1, 0.0], [100.0, 0.0]], model=model)
    c = chain_tree(f, [0, 1])
    s = f.make_leaf(2)
    root, severed = f.seq_insert(c, s, allow_split=True)
    assert root is None
    assert sorted(map(sorted, (leaves_of(x) for x in severed))) == [[0, 1], [2]]
    assert all(x.parent is None for x in severed)


def test_seq_insert_without_split_keeps_tree():
    model = GaussianWishart([0.0, 0.0], 0.1, 8.0, np.eye(2))
    f = make_forest([[0.0, 0.0], [0.1, 0.0], [100.0, 0.0]], model=model)
    c = chain_tree(f, [0, 1])
    root, severed = f.seq_insert(c, f.make_leaf(2), allow_split=False)
    assert severed == [] and sorted(leaves_of(root)) == [0, 1, 2]
    assert root.log_d > 0


def test_seq_insert_contract():
    f = make_forest([[0.0], [1.0], [2.0]])
    c = chain_tree(f, [0, 1])
    with pytest.raises(ContractViolation):
        f.seq_insert(c.left, f.make_leaf(2))
    with pytest.raises(ContractViolation):
        f.seq_insert(c, c.left)


def test_detach_leaf(rng):
    f = make_forest(rng.normal(size=(6, 2)))
    chain_tree(f, [0, 1])
    chain_tree(f, [2, 3, 4, 5])
    leaf = f.detach_leaf(0)
    assert leaf.parent is None
    assert sorted(map(sorted, f.blocks())) == [[1], [2, 3, 4, 5]]
    f.detach_leaf(4)
    c = f.root_of(2)
    root, _ = f.seq_insert(c, f.leaves[4])
    f.replace_root(c, root) if root is not c else f.update_root(c)
    f.add_root(leaf)
    f.audit()
    assert sorted(map(sorted, f.blocks())) == [[0], [1], [2, 3, 4, 5]]
    f.detach_leaf(0)
    assert f.num_clusters == 2
    with pytest.raises(ContractViolation):
        f.detach_leaf(0)


def test_sample_sub_frequencies(rng):
    f = make_forest(rng.normal(size=(6, 2)) * 2)
    root = chain_tree(f, [0, 3, 1, 5, 2, 4])
    nodes = preorder(root)
    probs = np.array([math.exp(sample_sub_prob(root, x)) for x in nodes])
    assert probs.sum() == pytest.approx(1.0, abs=1e-12)
    N = 100_000
    counts = {x.node_id: 0 for x in nodes}
    for _ in range(N):
        x, lp = sample_sub(root, rng)
        counts[x.node_id] += 1
    for x, p in zip(nodes, probs):
        se = math.sqrt(p * (1 - p) / N)
        assert abs(counts[x.node_id] / N - p) < 4 * se + 1e-12


def test_sample_sub_leaf_weight_is_epsilon(rng):
    f = make_forest(rng.normal(size=(4, 2)))
    root = chain_tree(f, [0, 1, 2, 3])
    nodes = preorder(root)
    internal = [x for x in nodes if not x.is_leaf]
    log_eps = max(x.log_d for x in internal)
    w = np.array([np.logaddexp(x.log_d, log_eps) for x in nodes])
    z = np.logaddexp.reduce(w)
    for x in nodes:
        if x.is_leaf:
            assert sample_sub_prob(root, x) == pytest.approx(log_eps - z, abs=1e-12)
    # non-leaf restriction: eps is recomputed over the eligible set
    w2 = np.array([np.logaddexp(x.log_d, log_eps) for x in internal])
    z2 = np.logaddexp.reduce(w2)
    for x in internal:
        assert sample_sub_prob(root, x, nonleaf_only=True) == pytest.approx(
            np.logaddexp(x.log_d, log_eps) - z2, abs=1e-12)


def test_sample_sub_contract():
    f = make_forest([[0.0], [1.0], [3.0]])
    leaf = f.make_leaf(2)
    assert sample_sub(leaf, np.random.default_rng(0)) == (leaf, 0.0)
    with pytest.raises(ContractViolation):
        sample_sub(leaf, np.random.default_rng(0), nonleaf_only=True)
    root = chain_tree(f, [0, 1])
    with pytest.raises(ContractViolation):
        sample_sub_prob(root, leaf)


def test_stoc_insert_frequencies(rng):
    X = np.array([[0.0, 0.0], [0.3, 0.1], [2.0, 2.0], [2.1, 1.8], [1.0, 1.0]])
    f = make_forest(X)
    N = 50_000
    counts = np.zeros(3)
    for _ in range(N):
        a = f.join(f.make_leaf(0), f.make_leaf(1))
        b = f.join(f.make_leaf(2), f.make_leaf(3))
        c = f.make_leaf(4)
        S = [a, b]
        probs = [math.exp(stoc_insert_prob(f, S, c, k)) for k in (0, 1, NEW_CLUSTER)]
        j = Journal()
        _, lp, dest = stoc_insert(f, S, c, rng, journal=j)
        k = 2 if dest is NEW_CLUSTER else dest
        assert lp == pytest.approx(math.log(probs[k]), abs=1e-12)
        counts[k] += 1
    assert sum(probs) == pytest.approx(1.0, abs=1e-12)
    for k in range(3):
        se = math.sqrt(probs[k] * (1 - probs[k]) / N)
        assert abs(counts[k] / N - probs[k]) < 4 * se


def test_stoc_insert_weights_and_edge_cases():
    model = GaussianWishart([0.0, 0.0], 0.1, 8.0, np.eye(2))
    f = make_forest([[0.0, 0.0]] * 3 + [[50.0, 0.0]], model=model)
    a = f.make_leaf(0)
    S = [a]
    c = f.make_leaf(3)
    lw = [-f._dissimilarity(a, c), 0.0]
    assert stoc_insert_prob(f, S, c, 0) == pytest.approx(lw[0] - np.logaddexp(*lw), abs=1e-12)
    # empty S: the new-cluster branch is certain
    assert stoc_insert_prob(f, [], c) == 0.0
    with pytest.raises(ContractViolation):
        stoc_insert_prob(f, [], c, 0)
    with pytest.raises(ContractViolation):
        stoc_insert_prob(f, S, c, 5)
    S2, lp, dest = stoc_insert(f, [], c, np.random.default_rng(0))
    assert S2 == [c] and lp == 0.0 and dest is NEW_CLUSTER
    # coincident points: finite weights, insertion all but certain
    b = f.make_leaf(1)
    d = f.make_leaf(2)
    p = stoc_insert_prob(f, [b], d, 0)
    assert math.isfinite(p) and p > math.log(0.5)


def test_journal_rollback_restores_forest(rng):
    f = make_forest(rng.normal(size=(7, 2)))
    chain_tree(f, [0, 1, 2, 3])
    chain_tree(f, [4, 5, 6])
    before = f.signature()
    j = Journal()
    c = f.roots[0]
    root, _ = f.seq_insert(c, f.roots[1], journal=j)
    assert f.signature() != before
    j.rollback()
    assert f.signature() == before
    f.audit()
