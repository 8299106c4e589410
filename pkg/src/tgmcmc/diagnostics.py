"""Trace records, effective sample size, TV distance and run summaries."""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation

log = logging.getLogger(__name__)

SUMMARY_COLUMNS = ["kernel", "runs", "max_loglik_mean", "max_loglik_std", "ess_mean",
                   "ess_std", "log_r_mean", "log_r_std", "time_per_iter_mean",
                   "time_per_iter_std"]


@dataclass
class TraceRecord:
    iter: int
    wall_seconds: float
    joint_log_prob: float
    num_clusters: int
    log_r: float | None
    accepted: bool | None
    kernel: str

    def to_json(self):
        return json.dumps(dataclasses.asdict(self))

    @classmethod
    def from_json(cls, line):
        return cls(**json.loads(line))


class TraceWriter:
    """Append-only JSON-lines trace file, flushed after every record."""

    def __init__(self, path, mode="a"):
        self.path = path
        self._fh = open(path, mode, encoding="utf-8")
        self._last_wall = -math.inf

    def write(self, rec):
        if rec.wall_seconds < self._last_wall:
            raise ContractViolation("wall_seconds must be nondecreasing")
        self._last_wall = rec.wall_seconds
        self._fh.write(rec.to_json() + "\n")
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_trace(path):
    with open(path, encoding="utf-8") as fh:
        return [TraceRecord.from_json(line) for line in fh if line.strip()]


def autocorrelation(x):
    """Empirical autocorrelation at all lags (FFT, biased normalisation)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    y = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(y, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n] / n
    if acov[0] <= 0:
        return np.zeros(n)
    return acov / acov[0]


def ess(x):
    """Effective sample size with Geyer's initial monotone sequence.

    Sums of adjacent autocorrelation pairs are truncated at the first
    non-positive pair and forced to be nonincreasing.  A constant series is
    assigned ``N``.  The result is capped at ``N``.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 10:
        raise ContractViolation("ESS needs at least 10 samples")
    if np.all(x == x[0]):
        log.info("constant series; ESS set to N")
        return float(n)
    rho = autocorrelation(x)
    m = (n - 1) // 2
    pairs = rho[0:2 * m:2] + rho[1:2 * m + 1:2]
    pos = np.flatnonzero(pairs <= 0)
    k = pos[0] if pos.size else pairs.size
    pairs = np.minimum.accumulate(pairs[:k])
    tau = -1.0 + 2.0 * float(np.sum(pairs))
    if tau <= 0:
        return float(n)
    return float(min(n, n / tau))


def tv_distance(p, q, tol=1e-6):
    """Total variation between two normalised maps from outcomes to mass."""
    for name, d in (("first", p), ("second", q)):
        s = float(sum(d.values()))
        if abs(s - 1.0) > tol or any(v < 0 for v in d.values()):
            raise ContractViolation(f"{name} distribution is not normalised (sum {s})")
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def run_metrics(trace):
    """The four reported metrics of one run."""
    if not trace:
        raise ContractViolation("empty trace")
    joint = [r.joint_log_prob for r in trace]
    counts = [r.num_clusters for r in trace]
    log_rs = [r.log_r for r in trace if r.log_r is not None]
    secs = trace[-1].wall_seconds / len(trace)
    return {
        "max_loglik": max(joint),
        "ess": ess(counts) if len(counts) >= 10 else float("nan"),
        "log_r": float(np.mean(log_rs)) if log_rs else float("nan"),
        "time_per_iter": secs,
    }


def summarize(runs):
    """Per-kernel mean and standard deviation of the run metrics.

    ``runs`` maps a kernel label to a list of traces (one per repeat).
    Returns a list of row dicts keyed by :data:`SUMMARY_COLUMNS`.
    """
    if not runs:
        raise ContractViolation("nothing to summarize")
    rows = []
    for kernel in sorted(runs):
        mets = [run_metrics(t) for t in runs[kernel]]
        row = {"kernel": kernel, "runs": len(mets)}
        for key in ("max_loglik", "ess", "log_r", "time_per_iter"):
            vals = np.array([m[key] for m in mets], dtype=float)
            # a single run has std 0 by convention
            row[f"{key}_mean"] = float(np.mean(vals))
            row[f"{key}_std"] = float(np.std(vals)) if vals.size > 1 else 0.0
        rows.append(row)
    return rows


def write_summary_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow(row)
