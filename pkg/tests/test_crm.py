import math

import numpy as np
import pytest

from oracles import crp_log_prob, quad_kappa, quad_psi
from tgmcmc.crm import (CrmPrior, log_kappa, log_kappa_array, log_kappa_ratio, log_levy_density,
                        log_partition_prior, psi)
from tgmcmc.errors import ContractViolation, DomainError
from tgmcmc.oracle import enumerate_partitions


def test_prior_validation():
    with pytest.raises(DomainError):
        CrmPrior.dirichlet(0.0)
    with pytest.raises(DomainError):
        CrmPrior.generalized_gamma(1.0, 1.0)
    with pytest.raises(DomainError):
        CrmPrior("dp", 1.0, 0.3)
    assert CrmPrior.generalized_gamma(2.0, 0.0).is_dp


def test_levy_density_examples(dp, nggp):
    assert log_levy_density(dp, 1.0) == pytest.approx(-1.0, abs=1e-15)
    want = math.log(0.5 / math.gamma(0.5) * math.exp(-1.0))
    assert log_levy_density(nggp, 1.0) == pytest.approx(want, rel=1e-14)
    for p in (dp, nggp):
        with pytest.raises(DomainError):
            log_levy_density(p, 0.0)


def test_psi_examples():
    assert psi(CrmPrior.dirichlet(2.0), 0.0) == 0.0
    assert psi(CrmPrior.dirichlet(1.0), math.e - 1) == pytest.approx(1.0, rel=1e-14)
    assert quad_psi(1.0, 0.0, math.e - 1) == pytest.approx(1.0, rel=1e-10)
    gg = CrmPrior.generalized_gamma(1.0, 0.5)
    assert psi(gg, 3.0) == pytest.approx(1.0, rel=1e-14)
    assert quad_psi(1.0, 0.5, 3.0) == pytest.approx(1.0, rel=1e-10)
    with pytest.raises(DomainError):
        psi(gg, -0.1)


def test_kappa_examples(dp, nggp):
    assert log_kappa(dp, 1, 0.0) == pytest.approx(0.0, abs=1e-15)
    assert log_kappa(dp, 3, 1.0) == pytest.approx(math.log(0.25), rel=1e-13)
    assert quad_kappa(1.0, 0.0, 3, 1.0) == pytest.approx(math.log(0.25), rel=1e-10)
    assert log_kappa(nggp, 1, 0.0) == pytest.approx(math.log(0.5), rel=1e-13)
    assert quad_kappa(1.0, 0.5, 1, 0.0) == pytest.approx(math.log(0.5), rel=1e-10)
    with pytest.raises(DomainError):
        log_kappa(dp, 0, 1.0)


@pytest.mark.parametrize("sigma", [0.0, 0.2, 0.5, 0.8])
@pytest.mark.parametrize("u", [0.01, 1.0, 100.0])
def test_closed_forms_match_quadrature(sigma, u):
    p = CrmPrior.dirichlet(1.3) if sigma == 0 else CrmPrior.generalized_gamma(1.3, sigma)
    assert abs(psi(p, u) / quad_psi(1.3, sigma, u) - 1) < 1e-8
    for m in (1, 2, 7, 30):
        assert abs(math.expm1(quad_kappa(1.3, sigma, m, u) - log_kappa(p, m, u))) < 1e-8


def test_kappa_ratio(dp, nggp):
    assert log_kappa_ratio(CrmPrior.dirichlet(7.0), 4, 0.0) == pytest.approx(math.log(4), abs=1e-15)
    want = math.log(0.5) - math.log(2.0)
    assert log_kappa_ratio(nggp, 1, 1.0) == pytest.approx(want, abs=1e-15)
    assert quad_kappa(1, 0.5, 2, 1.0) - quad_kappa(1, 0.5, 1, 1.0) == pytest.approx(want, abs=1e-9)
    for p in (dp, nggp):
        for m in range(1, 20):
            for u in (0.0, 0.3, 5.0):
                diff = log_kappa(p, m + 1, u) - log_kappa(p, m, u)
                assert log_kappa_ratio(p, m, u) == pytest.approx(diff, abs=1e-12)


def test_kappa_ratio_decreasing_in_u(nggp):
    for m in (1, 4, 10):
        vals = [log_kappa_ratio(nggp, m, u) for u in (0.01, 0.1, 1, 10, 100)]
        assert all(a > b for a, b in zip(vals, vals[1:]))


def test_kappa_decreasing_in_u(dp, nggp):
    for p in (dp, nggp):
        vals = [log_kappa(p, 3, u) for u in (0.0, 0.5, 2.0, 9.0)]
        assert all(a > b for a, b in zip(vals, vals[1:]))


def test_sigma_zero_reproduces_dp():
    a, b = CrmPrior.dirichlet(1.7), CrmPrior.generalized_gamma(1.7, 0.0)
    for u in (0.01, 1.0, 50.0):
        assert psi(a, u) == psi(b, u)
        for m in (1, 5, 40):
            assert log_kappa(a, m, u) == log_kappa(b, m, u)


def test_kappa_array_matches_scalar(nggp):
    m = np.arange(1, 50)
    arr = log_kappa_array(nggp, m, 0.7)
    assert np.allclose(arr, [log_kappa(nggp, int(k), 0.7) for k in m], rtol=0, atol=1e-12)


def test_dp_assignment_weights_are_u_invariant():
    p = CrmPrior.dirichlet(2.5)
    sizes = [3, 1, 7]

    def weights(u):
        lw = [log_kappa_ratio(p, s, u) for s in sizes] + [log_kappa(p, 1, u)]
        lw = np.array(lw)
        w = np.exp(lw - lw.max())
        return w / w.sum()

    crp = np.array(sizes + [2.5], dtype=float)
    crp /= crp.sum()
    for u in (0.01, 1.0, 80.0):
        assert np.allclose(weights(u), crp, atol=1e-12, rtol=0)


def test_partition_prior_examples(dp):
    want = -math.log(2) - math.log(2)
    assert log_partition_prior(dp, 1.0, [1], 1) == pytest.approx(want, abs=1e-14)
    with pytest.raises(ContractViolation):
        log_partition_prior(dp, 1.0, [1, 1], 3)
    with pytest.raises(DomainError):
        log_partition_prior(dp, 0.0, [1], 1)


def test_partition_prior_is_crp_over_partitions_of_3():
    alpha = 1.6
    p = CrmPrior.dirichlet(alpha)
    parts = list(enumerate_partitions(3))
    assert len(parts) == 5
    ours = np.array([log_partition_prior(p, 0.8, [len(b) for b in q], 3) for q in parts])
    crp = np.array([crp_log_prob([len(b) for b in q], alpha) for q in parts])
    ours = np.exp(ours - ours.max())
    crp = np.exp(crp - crp.max())
    assert np.allclose(ours / ours.sum(), crp / crp.sum(), atol=1e-13)
