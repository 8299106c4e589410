"""Laplace exponent and cluster-size weights of homogeneous CRMs.

Two Levy intensities are supported: the Dirichlet process,
``rho(dw) = alpha w^-1 e^-w dw``, and the generalized Gamma process,
``rho(dw) = alpha sigma / Gamma(1 - sigma) w^(-sigma-1) e^-w dw``.
Everything is returned on the log scale except ``psi`` (which is already an
exponent).  A generalized Gamma prior with ``sigma == 0`` is evaluated with
the Dirichlet-process closed forms.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import ContractViolation, DomainError

__all__ = [
    "PriorKind",
    "CrmPrior",
    "log_levy_density",
    "psi",
    "log_kappa",
    "log_kappa_array",
    "log_kappa_ratio",
    "log_partition_prior",
    "log_u_terms",
]


class PriorKind(str, enum.Enum):
    DP = "dp"
    GG = "nggp"


@dataclass(frozen=True)
class CrmPrior:
    kind: PriorKind
    alpha: float = 1.0
    sigma: float = 0.0
    # cached constant part of log kappa
    _log_c: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        kind = PriorKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if not self.alpha > 0:
            raise DomainError(f"alpha must be positive, got {self.alpha}")
        if kind is PriorKind.DP:
            if self.sigma != 0:
                raise DomainError("a Dirichlet process has sigma = 0")
        elif not 0 <= self.sigma < 1:
            raise DomainError(f"sigma must lie in [0, 1), got {self.sigma}")
        if self.is_dp:
            log_c = math.log(self.alpha)
        else:
            log_c = (math.log(self.alpha) + math.log(self.sigma)
                     - math.lgamma(1.0 - self.sigma))
        object.__setattr__(self, "_log_c", log_c)

    @classmethod
    def dirichlet(cls, alpha=1.0):
        return cls(PriorKind.DP, alpha, 0.0)

    @classmethod
    def generalized_gamma(cls, alpha=1.0, sigma=0.5):
        return cls(PriorKind.GG, alpha, sigma)

    @property
    def is_dp(self):
        return self.kind is PriorKind.DP or self.sigma == 0.0


def log_levy_density(prior: CrmPrior, w: float) -> float:
    if not w > 0:
        raise DomainError(f"Levy density needs w > 0, got {w}")
    if prior.is_dp:
        return math.log(prior.alpha) - math.log(w) - w
    return prior._log_c - (prior.sigma + 1.0) * math.log(w) - w


def psi(prior: CrmPrior, u: float) -> float:
    """Laplace exponent ``int (1 - e^{-uw}) rho(dw)``."""
    if u < 0:
        raise DomainError(f"psi needs u >= 0, got {u}")
    if prior.is_dp:
        return prior.alpha * math.log1p(u)
    return prior.alpha * math.expm1(prior.sigma * math.log1p(u))


def log_kappa(prior: CrmPrior, m: int, u: float) -> float:
    """``log int w^m e^{-uw} rho(dw)``."""
    if m < 1:
        raise DomainError(f"kappa needs m >= 1, got {m}")
    if u < 0:
        raise DomainError(f"kappa needs u >= 0, got {u}")
    if prior.is_dp:
        return prior._log_c + math.lgamma(m) - m * math.log1p(u)
    s = prior.sigma
    return prior._log_c + math.lgamma(m - s) + (s - m) * math.log1p(u)


def log_kappa_array(prior: CrmPrior, m, u: float) -> np.ndarray:
    """Vectorised :func:`log_kappa` over an array of sizes (no checks)."""
    m = np.asarray(m, dtype=float)
    if prior.is_dp:
        return prior._log_c + gammaln(m) - m * math.log1p(u)
    s = prior.sigma
    return prior._log_c + gammaln(m - s) + (s - m) * math.log1p(u)


def log_kappa_ratio(prior: CrmPrior, m: int, u: float) -> float:
    """``log kappa(m+1, u) - log kappa(m, u)`` without cancellation."""
    if m < 1:
        raise DomainError(f"kappa needs m >= 1, got {m}")
    if u < 0:
        raise DomainError(f"kappa needs u >= 0, got {u}")
    s = 0.0 if prior.is_dp else prior.sigma
    return math.log(m - s) - math.log1p(u)


def log_u_terms(prior: CrmPrior, u: float, n: int) -> float:
    """``(n-1) log u - psi(u) - log Gamma(n)``, the partition-free factor."""
    return (n - 1) * math.log(u) - psi(prior, u) - math.lgamma(n)


def log_partition_prior(prior: CrmPrior, u: float, sizes, n: int) -> float:
    """Log joint density of a partition with block ``sizes`` and ``u``."""
    sizes = list(sizes)
    if sum(sizes) != n or any(s < 1 for s in sizes):
        raise ContractViolation(f"block sizes {sizes} do not partition {n} points")
    if not u > 0:
        raise DomainError(f"u must be positive, got {u}")
    return log_u_terms(prior, u, n) + sum(log_kappa(prior, s, u) for s in sizes)
