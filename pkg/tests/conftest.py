import itertools
import math

import numpy as np
import pytest

from deepkmeans.nn import DenseNetwork

ACCEPTANCE_LINES: list[str] = []


def numeric_gradient(loss, params, h=1e-5):
    """Central differences of ``loss()`` wrt every entry of every array in ``params``."""
    out = []
    for p in params:
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + h
            up = loss()
            p[idx] = orig - h
            down = loss()
            p[idx] = orig
            g[idx] = (up - down) / (2 * h)
        out.append(g.ravel())
    return np.concatenate(out)


def net_params(net: DenseNetwork, reps=None):
    params = [l.weights for l in net.layers] + [l.bias for l in net.layers]
    if reps is not None:
        params.append(reps)
    return params


def rel_error(a, b):
    denom = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if denom == 0 else float(np.linalg.norm(a - b) / denom)


def brute_force_acc(counts):
    c = np.asarray(counts)
    size = max(c.shape)
    sq = np.zeros((size, size), dtype=np.int64)
    sq[: c.shape[0], : c.shape[1]] = c
    best = max(sum(sq[i, p[i]] for i in range(size)) for p in itertools.permutations(range(size)))
    return best / c.sum()


def direct_nmi(counts):
    n = sum(map(sum, counts))
    rows = [sum(r) for r in counts]
    cols = [sum(col) for col in zip(*counts)]
    mi = sum(c / n * math.log(n * c / (rows[i] * cols[j]))
             for i, r in enumerate(counts) for j, c in enumerate(r) if c)
    hc = -sum(r / n * math.log(r / n) for r in rows if r)
    hs = -sum(c / n * math.log(c / n) for c in cols if c)
    return mi / math.sqrt(hc * hs)


def direct_ari(counts):
    n = sum(map(sum, counts))
    cells = sum(math.comb(int(c), 2) for r in counts for c in r)
    a = sum(math.comb(int(sum(r)), 2) for r in counts)
    b = sum(math.comb(int(sum(col)), 2) for col in zip(*counts))
    expected = a * b / math.comb(int(n), 2)
    return (cells - expected) / (0.5 * (a + b) - expected)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def acceptance():
    def record(number: int, name: str, passed: bool | None, detail: str = ""):
        status = "SKIP" if passed is None else "PASS" if passed else "FAIL"
        ACCEPTANCE_LINES.append(f"[{status}] criterion {number}: {name}" + (f" ({detail})" if detail else ""))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
