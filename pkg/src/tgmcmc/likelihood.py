"""Conjugate likelihoods with additive sufficient statistics.

Each model exposes the evidence ``log P(dX_c)`` of a cluster, the predictive
``log P(dx | X_c)`` and a :class:`ClusterTable` that keeps the statistics of
all current clusters in contiguous arrays so that one datum (or one cluster)
can be scored against every cluster in a single call.

A *datum* is the singleton :class:`Stats` produced by ``model.prepare``.
"""
from __future__ import annotations

import logging
import math

import numpy as np
import scipy.sparse as sp
from scipy.special import gammaln

from . import _kernels as K
from .errors import ContractViolation, ModelConfigError

log = logging.getLogger(__name__)

__all__ = ["Stats", "GaussianWishart", "DirichletMultinomial"]


class Stats:
    """Count ``n`` plus a flat vector of additive accumulators."""

    __slots__ = ("n", "v")

    def __init__(self, n, v):
        self.n = n
        self.v = v

    def __add__(self, other):
        return Stats(self.n + other.n, self.v + other.v)

    def __sub__(self, other):
        return Stats(self.n - other.n, self.v - other.v)

    def __repr__(self):
        return f"Stats(n={self.n})"


class _Model:
    kind = None

    def stats_empty(self):
        return Stats(0, np.zeros(self._width))

    def stats_add(self, s, x):
        return s + x

    def stats_remove(self, s, x):
        if s.n < x.n:
            raise ContractViolation("cannot remove a point from empty statistics")
        return s - x

    def stats_merge(self, s1, s2):
        return s1 + s2

    def log_marginal_pair(self, a, b):
        """Evidence of the union of two disjoint clusters."""
        return self.log_marginal(a + b)

    def stats_of(self, data, idx):
        """Statistics of the subset ``idx`` of prepared data."""
        s = self.stats_empty()
        for i in idx:
            s = s + data[i]
        return s


class GaussianWishart(_Model):
    """Gaussian likelihood with a Normal-Wishart base measure.

    ``mu | Lambda ~ N(mean, (r Lambda)^-1)`` and ``Lambda ~ W(psi^-1, nu)``,
    i.e. the cluster covariance is inverse-Wishart with scale ``psi``.
    """

    kind = "gaussian_wishart"

    def __init__(self, mean, r, nu, psi):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        psi = np.atleast_2d(np.asarray(psi, dtype=float))
        d = mean.shape[0]
        if psi.shape != (d, d):
            raise ModelConfigError(f"psi must be {d}x{d}, got {psi.shape}")
        if not r > 0:
            raise ModelConfigError(f"r must be positive, got {r}")
        if not nu > d - 1:
            raise ModelConfigError(f"nu must exceed d - 1 = {d - 1}, got {nu}")
        if not np.allclose(psi, psi.T):
            raise ModelConfigError("psi must be symmetric")
        sign, logdet = np.linalg.slogdet(psi)
        if sign <= 0 or not np.isfinite(logdet) or np.linalg.eigvalsh(psi).min() <= 0:
            raise ModelConfigError("psi must be positive definite")
        self.dim = d
        self.mean = mean
        self.r = float(r)
        self.nu = float(nu)
        self.psi = np.ascontiguousarray(psi)
        self._logdet0 = float(logdet)
        self._width = d + d * d

    @classmethod
    def from_data(cls, X, r=0.1, nu=None):
        """Data-dependent defaults: sample mean and a det-normalised covariance."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        n, d = X.shape
        nu = d + 6 if nu is None else nu
        mean = X.mean(axis=0)
        cov = np.atleast_2d(np.cov(X, rowvar=False)) if n > 1 else np.zeros((d, d))
        det = np.linalg.det(cov) if n > 1 else 0.0
        if not det > 1e-300 or not np.all(np.isfinite(cov)):
            log.warning("sample covariance is singular; using a scaled identity for psi")
            psi = np.eye(d) * 10.0 ** (-1.0 / d)
        else:
            psi = cov / (10.0 * det) ** (1.0 / d)
        return cls(mean, r, nu, psi)

    def prepare(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[1] != self.dim:
            raise ContractViolation(f"expected {self.dim}-d data, got {X.shape[1]}")
        return [self.datum(x) for x in X]

    def datum(self, x):
        x = np.asarray(x, dtype=float) - self.mean
        return Stats(1, np.concatenate([x, np.outer(x, x).ravel()]))

    def log_marginal(self, s):
        out = K.gw_log_ml(s.n, s.v, self.psi, self._logdet0, self.r, self.nu, self.dim)
        if math.isnan(out):
            raise ModelConfigError("posterior scale matrix is not positive definite")
        return out

    def log_marginal_pair(self, a, b):
        out = K.gw_log_ml2(a.n, a.v, b.n, b.v, self.psi, self._logdet0, self.r, self.nu,
                           self.dim)
        if math.isnan(out):
            raise ModelConfigError("posterior scale matrix is not positive definite")
        return out

    def log_predictive(self, s, x):
        return K.gw_log_pred(s.n, s.v, x.v[:self.dim], self.psi, self.r, self.nu, self.dim)

    def new_table(self, capacity=16):
        return GaussianTable(self, capacity)


class DirichletMultinomial(_Model):
    """Bag-of-words documents under a symmetric Dirichlet base measure.

    The likelihood of a document is the product of its token probabilities
    (no multinomial coefficient; that factor is constant across partitions).
    """

    kind = "dirichlet_multinomial"

    def __init__(self, vocab_size, gamma=0.1):
        if not gamma > 0:
            raise ModelConfigError(f"gamma must be positive, got {gamma}")
        if vocab_size < 1:
            raise ModelConfigError(f"vocabulary size must be >= 1, got {vocab_size}")
        self.V = int(vocab_size)
        self.gamma = float(gamma)
        self._width = self.V
        self._vg = self.V * self.gamma
        self._lg = math.lgamma(self.gamma)

    def prepare(self, X):
        if sp.issparse(X):
            X = sp.csr_matrix(X)
            if X.shape[1] != self.V:
                raise ContractViolation(f"expected {self.V} word types, got {X.shape[1]}")
            return [self.datum(X[i].toarray().ravel()) for i in range(X.shape[0])]
        X = np.asarray(X, dtype=float)
        return [self.datum(x) for x in X]

    def datum(self, counts):
        counts = np.asarray(counts, dtype=float).ravel()
        if counts.shape[0] != self.V:
            raise ContractViolation(f"expected {self.V} word types, got {counts.shape[0]}")
        return Stats(1, counts)

    def log_marginal(self, s):
        if s.n == 0:
            return 0.0
        nz = s.v[s.v > 0]
        total = nz.sum()
        return (math.lgamma(self._vg) - math.lgamma(self._vg + total)
                + float(np.sum(gammaln(self.gamma + nz))) - nz.size * self._lg)

    def log_predictive(self, s, x):
        idx = np.flatnonzero(x.v)
        cnt = x.v[idx]
        base = s.v[idx]
        total = s.v.sum()
        return (math.lgamma(self._vg + total) - math.lgamma(self._vg + total + cnt.sum())
                + float(np.sum(gammaln(self.gamma + base + cnt) - gammaln(self.gamma + base))))

    def new_table(self, capacity=16):
        return MultinomialTable(self, capacity)


class ClusterTable:
    """Row-per-cluster arrays; rows are kept contiguous by swap-removal."""

    def __init__(self, model, capacity):
        self.model = model
        self.K = 0
        self._alloc(max(int(capacity), 4))

    def _alloc(self, cap):
        self.cap = cap
        self.n = np.zeros(cap)
        self.v = np.zeros((cap, self.model._width))
        self.log_ml = np.zeros(cap)
        self.log_phi = np.zeros(cap)

    def _grow(self):
        old = {name: getattr(self, name) for name in self._fields}
        self._alloc(self.cap * 2)
        for name, arr in old.items():
            getattr(self, name)[:arr.shape[0]] = arr

    _fields = ("n", "v", "log_ml", "log_phi")

    @property
    def sizes(self):
        return self.n[:self.K]

    def append(self, stats, log_ml, log_phi=0.0):
        if self.K == self.cap:
            self._grow()
        self.K += 1
        self.set(self.K - 1, stats, log_ml, log_phi)
        return self.K - 1

    def set(self, k, stats, log_ml, log_phi=0.0):
        self.n[k] = stats.n
        self.v[k] = stats.v
        self.log_ml[k] = log_ml
        self.log_phi[k] = log_phi
        self._cache(k)

    def remove(self, k):
        """Drop row ``k``; the last row moves into its place.  Returns the
        old index of the moved row, or -1 when nothing moved."""
        last = self.K - 1
        if not 0 <= k <= last:
            raise ContractViolation(f"row {k} out of range")
        if k != last:
            for name in self._fields:
                arr = getattr(self, name)
                arr[k] = arr[last]
        self.K -= 1
        return last if k != last else -1

    def _cache(self, k):
        pass


class GaussianTable(ClusterTable):
    _fields = ClusterTable._fields + ("mean", "linv", "c1", "coef", "expo")

    def _alloc(self, cap):
        super()._alloc(cap)
        d = self.model.dim
        self.mean = np.zeros((cap, d))
        self.linv = np.zeros((cap, d, d))
        self.c1 = np.zeros(cap)
        self.coef = np.zeros(cap)
        self.expo = np.zeros(cap)

    def _cache(self, k):
        m = self.model
        c1, coef, expo = K.gw_pred_cache(self.n[k], self.v[k], m.psi, m.r, m.nu,
                                         m.dim, self.mean[k], self.linv[k])
        self.c1[k] = c1
        self.coef[k] = coef
        self.expo[k] = expo

    def log_predictive(self, x):
        out = np.empty(self.K)
        K.gw_pred_batch(self.mean, self.linv, self.c1, self.coef, self.expo, self.K,
                        x.v, self.model.dim, out)
        return out

    def merged_log_ml(self, s):
        m = self.model
        out = np.empty(self.K)
        K.gw_log_ml_merged(self.n, self.v, self.K, s.n, s.v, m.psi, m._logdet0,
                           m.r, m.nu, m.dim, out)
        return out


class MultinomialTable(ClusterTable):

    def log_predictive(self, x):
        m = self.model
        idx = np.flatnonzero(x.v)
        cnt = x.v[idx]
        base = self.v[:self.K][:, idx]
        total = self.v[:self.K].sum(axis=1)
        return (gammaln(m._vg + total) - gammaln(m._vg + total + cnt.sum())
                + np.sum(gammaln(m.gamma + base + cnt) - gammaln(m.gamma + base), axis=1))

    def merged_log_ml(self, s):
        m = self.model
        idx = np.flatnonzero(s.v)
        cnt = s.v[idx]
        base = self.v[:self.K][:, idx]
        total = self.v[:self.K].sum(axis=1)
        return (self.log_ml[:self.K] + gammaln(m._vg + total)
                - gammaln(m._vg + total + cnt.sum())
                + np.sum(gammaln(m.gamma + base + cnt) - gammaln(m.gamma + base), axis=1))
