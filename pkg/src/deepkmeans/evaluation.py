"""Clustering metrics (ACC, NMI, ARI), Hungarian matching and Student's t-test."""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

METRICS = ("acc", "nmi", "ari")
SIGNIFICANCE_LEVEL = 0.05


@dataclass
class ContingencyTable:
    counts: np.ndarray  # (n_clusters, n_classes)

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or np.any(self.counts < 0):
            raise ValueError("contingency counts must be a nonnegative 2-D integer matrix")

    @property
    def n_total(self) -> int:
        return int(self.counts.sum())


def contingency(pred: Sequence[int], truth: Sequence[int]) -> ContingencyTable:
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.shape} predictions vs {truth.shape} labels")
    if pred.size and (pred.min() < 0 or truth.min() < 0):
        raise ValueError("labels must be nonnegative integers")
    shape = (int(pred.max(initial=-1)) + 1, int(truth.max(initial=-1)) + 1)
    counts = np.zeros(shape, dtype=np.int64)
    np.add.at(counts, (pred, truth), 1)
    return ContingencyTable(counts)


def _counts(table) -> np.ndarray:
    return table.counts if isinstance(table, ContingencyTable) else ContingencyTable(table).counts


def _entropy(marginal: np.ndarray, n: int) -> float:
    p = marginal[marginal > 0] / n
    return float(-np.sum(p * np.log(p)))


def nmi(table) -> float:
    """Mutual information over the geometric mean of the two entropies (natural log).

    If either partition has zero entropy the ratio is undefined; we return 1
    when both are single-cluster partitions and 0 otherwise.
    """
    c = _counts(table)
    n = int(c.sum())
    if n == 0:
        raise ValueError("empty contingency table")
    rows, cols = c.sum(axis=1), c.sum(axis=0)
    h_c, h_s = _entropy(rows, n), _entropy(cols, n)
    if h_c == 0 or h_s == 0:
        return 1.0 if h_c == h_s == 0 else 0.0
    i, j = np.nonzero(c)
    nij = c[i, j].astype(np.float64)
    mi = float(np.sum(nij / n * np.log(n * nij / (rows[i] * cols[j].astype(np.float64)))))
    return float(np.clip(mi / math.sqrt(h_c * h_s), 0.0, 1.0))


def _comb2(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x * (x - 1) / 2.0


def ari(table) -> float:
    c = _counts(table)
    n = int(c.sum())
    if n < 2:
        raise ValueError("ARI needs at least two samples")
    sum_cells = float(_comb2(c).sum())
    sum_rows = float(_comb2(c.sum(axis=1)).sum())
    sum_cols = float(_comb2(c.sum(axis=0)).sum())
    expected = sum_rows * sum_cols / (n * (n - 1) / 2.0)
    max_index = 0.5 * (sum_rows + sum_cols)
    if max_index == expected:
        # only reachable when both partitions are trivial in the same way
        return 1.0
    return (sum_cells - expected) / (max_index - expected)


def hungarian(cost) -> tuple[np.ndarray, np.ndarray]:
    """Minimum-cost perfect matching on a square matrix (shortest augmenting
    paths with row/column potentials, O(n^3)).

    Returns ``(rows, cols)`` with ``cols[i]`` the column matched to row ``i``.
    """
    a = np.asarray(cost, dtype=np.float64)
    n, m = a.shape
    if n != m:
        raise ValueError("cost matrix must be square")
    inf = float("inf")
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    match = np.zeros(n + 1, dtype=np.int64)  # match[j] = row assigned to column j (1-based, 0 = free)
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        match[0] = i
        j0 = 0
        minv = np.full(n + 1, inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = match[j0]
            delta, j1 = inf, 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = a[i0 - 1, j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta, j1 = minv[j], j
            for j in range(n + 1):
                if used[j]:
                    u[match[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1
    cols = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        cols[match[j] - 1] = j - 1
    return np.arange(n), cols


def best_mapping(table) -> dict[int, int]:
    """Cluster -> class mapping maximizing agreement (zero-padded to square)."""
    c = _counts(table)
    size = max(c.shape)
    padded = np.zeros((size, size), dtype=np.int64)
    padded[: c.shape[0], : c.shape[1]] = c
    rows, cols = hungarian(padded.max(initial=0) - padded)
    return {int(r): int(k) for r, k in zip(rows, cols) if r < c.shape[0]}


def accuracy_hungarian(table) -> float:
    c = _counts(table)
    n = int(c.sum())
    if n == 0:
        raise ValueError("empty contingency table")
    hits = sum(int(c[r, k]) for r, k in best_mapping(c).items() if k < c.shape[1])
    return hits / n


def clustering_scores(pred, truth) -> dict[str, float]:
    table = contingency(pred, truth)
    return {"acc": accuracy_hungarian(table), "nmi": nmi(table), "ari": ari(table)}


# ------------------------------------------------------------------ t-test

def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c, d = 1.0, 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, 10_000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_sf2(t: float, df: float) -> float:
    """Two-sided tail probability P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    if math.isinf(t):
        return 0.0
    return betainc(df / 2.0, 0.5, df / (df + t * t))


@dataclass
class TTestResult:
    t: float
    p: float
    df: int
    degenerate: bool = False


def t_test(samples_a: Sequence[float], samples_b: Sequence[float]) -> TTestResult:
    """Two-sample Student's t-test with pooled variance, two-sided."""
    a = np.asarray(samples_a, dtype=np.float64)
    b = np.asarray(samples_b, dtype=np.float64)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("each sample needs at least two values")
    na, nb = len(a), len(b)
    df = na + nb - 2
    diff = float(a.mean() - b.mean())
    pooled = (np.sum((a - a.mean()) ** 2) + np.sum((b - b.mean()) ** 2)) / df
    se = math.sqrt(pooled * (1.0 / na + 1.0 / nb))
    if se == 0.0:
        if diff == 0.0:
            return TTestResult(0.0, 1.0, df, degenerate=True)
        return TTestResult(math.copysign(math.inf, diff), 0.0, df, degenerate=True)
    t = diff / se
    return TTestResult(t, min(1.0, student_t_sf2(t, df)), df)


# -------------------------------------------------------------- aggregation

@dataclass
class MetricSample:
    acc: float
    nmi: float
    ari: float
    seed: int = 0


@dataclass
class Comparison:
    variant_a: str
    variant_b: str
    metric: str
    t: float
    p: float
    no_significant_difference: bool


@dataclass
class AggregateReport:
    summary: dict[str, dict[str, dict[str, float]]]
    comparisons: list[Comparison] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "significance_level": SIGNIFICANCE_LEVEL,
            "summary": self.summary,
            "comparisons": [asdict(c) for c in self.comparisons],
        }


def aggregate(runs: Mapping[str, Sequence[MetricSample]]) -> AggregateReport:
    summary = {}
    for variant, samples in runs.items():
        if not samples:
            raise ValueError(f"variant {variant!r} has no runs")
        summary[variant] = {}
        for metric in METRICS:
            vals = np.array([getattr(s, metric) for s in samples], dtype=np.float64)
            std = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
            summary[variant][metric] = {"mean": float(vals.mean()), "std": std, "n": len(vals)}
    comparisons = []
    for va, vb in itertools.combinations(sorted(runs), 2):
        if len(runs[va]) < 2 or len(runs[vb]) < 2:
            continue
        for metric in METRICS:
            res = t_test([getattr(s, metric) for s in runs[va]], [getattr(s, metric) for s in runs[vb]])
            comparisons.append(Comparison(va, vb, metric, res.t, res.p, res.p > SIGNIFICANCE_LEVEL))
    return AggregateReport(summary, comparisons)


def write_runs_csv(path: str | Path, rows: Iterable[tuple[str, MetricSample]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant", "seed", *METRICS])
        for variant, s in rows:
            w.writerow([variant, s.seed, *(repr(float(getattr(s, m))) for m in METRICS)])


def write_report_json(path: str | Path, report: AggregateReport) -> None:
    def clean(x):
        # JSON has no infinity
        if isinstance(x, float) and math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if isinstance(x, dict):
            return {k: clean(v) for k, v in x.items()}
        if isinstance(x, list):
            return [clean(v) for v in x]
        return x

    Path(path).write_text(json.dumps(clean(report.to_dict()), indent=2, sort_keys=True) + "\n")
