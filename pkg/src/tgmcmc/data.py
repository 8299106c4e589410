"""Synthetic generators and dataset readers/writers."""
from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, ParseError


def _random_spd(rng, d):
    """Random SPD matrix with unit trace."""
    a = rng.standard_normal((d, d))
    cov = a @ a.T + 0.1 * np.eye(d)
    return cov / np.trace(cov)


def gen_gaussian_mixture(k, n, d, separation=1.0, seed=0, labels=None):
    """Equal-weight Gaussian mixture with means on a jittered grid.

    The ``k`` means sit on the first ``k`` points of a ``ceil(k^(1/d))``-wide
    grid with spacing ``separation``, each perturbed by uniform jitter of a
    quarter spacing.  Covariances are random SPD matrices of trace one.
    ``labels`` overrides the (uniform) component draw.  Returns ``(X, labels)``.
    """
    if min(k, n, d) < 1:
        raise DomainError("k, n and d must all be >= 1")
    rng = np.random.default_rng(seed)
    side = max(1, math.ceil(k ** (1.0 / d) - 1e-9))
    grid = np.stack(np.unravel_index(np.arange(k), (side,) * d), axis=1).astype(float)
    means = separation * (grid + rng.uniform(-0.25, 0.25, size=(k, d)))
    covs = [_random_spd(rng, d) for _ in range(k)]
    if labels is None:
        labels = rng.integers(k, size=n)
    labels = np.asarray(labels, dtype=int)
    chol = [np.linalg.cholesky(c) for c in covs]
    X = np.empty((n, d))
    for i, z in enumerate(labels):
        X[i] = means[z] + chol[z] @ rng.standard_normal(d)
    return X, labels


def gen_py_labels(n, theta, discount, seed=0):
    """Sequential Pitman-Yor Chinese restaurant labels ``0..K-1``."""
    if not 0 <= discount < 1 or not theta > -discount:
        raise DomainError(f"invalid Pitman-Yor parameters theta={theta}, discount={discount}")
    rng = np.random.default_rng(seed)
    labels = np.empty(n, dtype=int)
    counts = []
    for i in range(n):
        K = len(counts)
        w = np.empty(K + 1)
        w[:K] = np.asarray(counts, dtype=float) - discount
        w[K] = theta + K * discount
        if i == 0:
            w[:] = 0.0
            w[K] = 1.0
        t = int(np.searchsorted(np.cumsum(w), rng.random() * w.sum(), side="right"))
        t = min(t, K)
        if t == K:
            counts.append(1)
        else:
            counts[t] += 1
        labels[i] = t
    return labels


def gen_py_mixture(n, d, theta=3.0, discount=0.8, separation=1.0, seed=0):
    """Gaussian mixture whose component labels follow a Pitman-Yor CRP."""
    labels = gen_py_labels(n, theta, discount, seed)
    k = int(labels.max()) + 1
    return gen_gaussian_mixture(k, n, d, separation, seed + 1, labels=labels)


def write_dense_csv(path, X, labels=None, labels_path=None):
    np.savetxt(path, np.atleast_2d(X), delimiter=",", fmt="%.17g")
    if labels is not None:
        np.savetxt(labels_path, np.asarray(labels, dtype=int), fmt="%d")


def read_dense_csv(path):
    try:
        X = np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return X


def read_labels(path):
    return np.loadtxt(path, dtype=int, ndmin=1)


def read_uci_bow(docword_path, vocab_path=None):
    """Parse a UCI bag-of-words ``docword`` file into a CSR count matrix.

    The file has three header lines (D, W, NNZ) followed by ``docID wordID
    count`` triples, 1-indexed.  If ``vocab_path`` is given its line count
    must equal W; the word list is returned alongside the matrix.
    """
    rows, cols, vals = [], [], []
    with open(docword_path, encoding="utf-8") as fh:
        header = []
        lineno = 0
        for line in fh:
            lineno += 1
            text = line.strip()
            if len(header) < 3:
                try:
                    value = int(text)
                except ValueError:
                    raise ParseError(f"expected an integer header value, got {text!r}",
                                     lineno) from None
                if value < 0:
                    raise ParseError("header values must be nonnegative", lineno)
                header.append(value)
                continue
            if not text:
                continue
            parts = text.split()
            if len(parts) != 3:
                raise ParseError(f"expected 'docID wordID count', got {text!r}", lineno)
            try:
                doc, word, cnt = (int(p) for p in parts)
            except ValueError:
                raise ParseError(f"non-integer field in {text!r}", lineno) from None
            D, W, _ = header
            if not 1 <= doc <= D:
                raise ParseError(f"docID {doc} outside 1..{D}", lineno)
            if not 1 <= word <= W:
                raise ParseError(f"wordID {word} outside 1..{W}", lineno)
            if cnt < 1:
                raise ParseError(f"count must be positive, got {cnt}", lineno)
            rows.append(doc - 1)
            cols.append(word - 1)
            vals.append(cnt)
    if len(header) < 3:
        raise ParseError("missing header lines", lineno + 1)
    D, W, nnz = header
    if len(vals) != nnz:
        raise ParseError(f"header declares {nnz} entries but found {len(vals)}", lineno)
    mat = sp.csr_matrix((np.asarray(vals, dtype=float), (rows, cols)), shape=(D, W))
    vocab = None
    if vocab_path is not None:
        with open(vocab_path, encoding="utf-8") as fh:
            vocab = [w.strip() for w in fh if w.strip()]
        if len(vocab) != W:
            raise ParseError(f"vocabulary has {len(vocab)} words, header declares {W}",
                             len(vocab))
    return mat, vocab
