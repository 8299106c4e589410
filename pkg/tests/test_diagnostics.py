import json
import math

import numpy as np
import pytest

from tgmcmc.diagnostics import (SUMMARY_COLUMNS, TraceRecord, TraceWriter, autocorrelation, ess,
                                read_trace, run_metrics, summarize, tv_distance,
                                write_summary_csv)
from tgmcmc.errors import ContractViolation


def ar1(phi, n, seed):
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(n)
    x = np.empty(n)
    x[0] = e[0] / math.sqrt(1 - phi * phi)
    for t in range(1, n):
        x[t] = phi * x[t - 1] + e[t]
    return x


def test_ess_iid():
    x = np.random.default_rng(0).standard_normal(10_000)
    assert 0.9 * x.size <= ess(x) <= 1.1 * x.size


def test_ess_ar1_closed_form():
    x = ar1(0.9, 100_000, 1)
    want = x.size * 0.1 / 1.9
    assert abs(ess(x) / want - 1) < 0.1


def test_ess_reversal_and_bounds():
    x = ar1(0.5, 5000, 2)
    assert ess(x) == pytest.approx(ess(x[::-1]), rel=1e-10)
    assert 0 < ess(x) <= x.size
    # anti-correlated series are capped at N
    assert ess(ar1(-0.6, 5000, 3)) <= 5000


def test_ess_constant_and_short():
    assert ess(np.full(50, 3.0)) == 50
    with pytest.raises(ContractViolation):
        ess(np.arange(5.0))


def test_autocorrelation_lag_zero():
    rho = autocorrelation(ar1(0.7, 2000, 4))
    assert rho[0] == pytest.approx(1.0)
    assert rho[1] == pytest.approx(0.7, abs=0.05)


def test_tv_distance_examples():
    p = {"a": 0.5, "b": 0.5}
    assert tv_distance(p, p) == 0
    assert tv_distance({"a": 1.0}, {"b": 1.0}) == 1
    # uniform over the 5 partitions of 3 points vs a hand-made target
    target = {0: 0.4, 1: 0.2, 2: 0.2, 3: 0.1, 4: 0.1}
    uniform = {k: 0.2 for k in range(5)}
    assert tv_distance(uniform, target) == pytest.approx(0.5 * (0.2 + 0 + 0 + 0.1 + 0.1))
    with pytest.raises(ContractViolation):
        tv_distance({"a": 0.7}, p)
    with pytest.raises(ContractViolation):
        tv_distance({"a": 1.5, "b": -0.5}, p)


def rec(i, wall, joint, k, log_r=-1.0, acc=True, kernel="k"):
    return TraceRecord(i, wall, joint, k, log_r, acc, kernel)


def test_trace_roundtrip(tmp_path):
    path = tmp_path / "t.jsonl"
    records = [rec(1, 0.1, -5.0, 2), rec(2, 0.2, -4.0, 3, None, None)]
    with TraceWriter(path, mode="w") as w:
        for r in records:
            w.write(r)
    assert read_trace(path) == records
    line = json.loads(path.read_text().splitlines()[0])
    assert set(line) == {"iter", "wall_seconds", "joint_log_prob", "num_clusters", "log_r",
                         "accepted", "kernel"}


def test_trace_writer_rejects_time_going_backwards(tmp_path):
    with TraceWriter(tmp_path / "t.jsonl") as w:
        w.write(rec(1, 1.0, 0.0, 1))
        with pytest.raises(ContractViolation):
            w.write(rec(2, 0.5, 0.0, 1))


def make_trace(seed, n=40, kernel="k"):
    rng = np.random.default_rng(seed)
    return [rec(i + 1, 0.01 * (i + 1), float(rng.normal()), int(rng.integers(1, 5)),
                float(-rng.random()), True, kernel) for i in range(n)]


def test_run_metrics():
    t = make_trace(0)
    m = run_metrics(t)
    assert m["max_loglik"] == max(r.joint_log_prob for r in t)
    assert m["log_r"] == pytest.approx(np.mean([r.log_r for r in t]))
    assert m["time_per_iter"] == pytest.approx(0.01)
    assert 0 < m["ess"] <= 40
    none_r = [rec(i + 1, 0.1 * i, 0.0, 1, None, None) for i in range(3)]
    m = run_metrics(none_r)
    assert math.isnan(m["log_r"]) and math.isnan(m["ess"])
    with pytest.raises(ContractViolation):
        run_metrics([])


def test_summarize(tmp_path):
    runs = {"b": [make_trace(1)], "a": [make_trace(2), make_trace(3)]}
    rows = summarize(runs)
    assert [r["kernel"] for r in rows] == ["a", "b"]
    assert set(rows[0]) == set(SUMMARY_COLUMNS)
    assert rows[1]["max_loglik_std"] == 0 and rows[1]["runs"] == 1
    # permutation of runs does not matter
    again = summarize({"a": [make_trace(3), make_trace(2)], "b": [make_trace(1)]})
    for r1, r2 in zip(rows, again):
        for key in SUMMARY_COLUMNS[1:]:
            assert r1[key] == pytest.approx(r2[key], rel=1e-12)
    write_summary_csv(rows, tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0].split(",") == SUMMARY_COLUMNS and len(lines) == 3
    with pytest.raises(ContractViolation):
        summarize({})
