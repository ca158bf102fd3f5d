"""Acceptance checks; each test records one PASS/FAIL/SKIP line shown in the pytest summary.

Run with ``pytest tests/test_acceptance.py -v``. The USPS check needs
``DKM_USPS_CSV`` pointing at a CSV of 256 pixel columns plus a final label column.
"""

import math
import os
import time

import numpy as np
import pytest

from deepkmeans.cli import main
from deepkmeans.clustering import (
    ClusterModel,
    clustering_loss,
    dkm_gradients,
    dkm_objective,
    kmeans,
    membership,
)
from deepkmeans.config import ExperimentConfig
from deepkmeans.data import load_dense_csv, make_blobs, validation_split
from deepkmeans.evaluation import accuracy_hungarian, ari, clustering_scores, contingency, nmi, t_test
from deepkmeans.experiment import fit, line_search
from deepkmeans.nn import build_network, forward
from deepkmeans.training import TrainPlan, build_annealing_sequence, run_variant

from conftest import brute_force_acc, direct_ari, direct_nmi, net_params, numeric_gradient, rel_error

ALPHA_40 = 113.14678278017098
USPS_ENV = "DKM_USPS_CSV"


def _kink_margin(net, x):
    _, _, cache = forward(net, x)
    return min(np.abs(z).min() for z, layer in zip(cache.pre_activations, net.layers) if layer.activation == "relu")


def test_gradient_correctness(acceptance):
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(20):
        d, p, K, B = (int(rng.integers(lo, hi + 1)) for lo, hi in ((2, 10), (1, 4), (2, 4), (1, 8)))
        alpha = float(rng.choice([0.0, 1.0, 50.0]))
        lam = float(rng.choice([0.0, 0.1, 10.0]))
        net = build_network(d, p, rng, hidden=(int(rng.integers(2, 7)), int(rng.integers(2, 7))))
        for layer in net.layers:
            layer.bias[:] = rng.normal(0.0, 0.5, layer.out_dim)
        # central differences are meaningless across a ReLU kink; redraw such batches
        x = rng.normal(size=(B, d))
        while _kink_margin(net, x) < 1e-3:
            x = rng.normal(size=(B, d))
        model = ClusterModel(rng.normal(size=(K, p)))
        g = dkm_gradients(x, net, model, alpha, lam).flat()
        fd = numeric_gradient(lambda: dkm_objective(x, net, model, alpha, lam)[0],
                              net_params(net, model.representatives))
        worst = max(worst, rel_error(g, fd))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-5 and elapsed < 10
    acceptance(1, "gradient correctness", ok, f"worst relative error {worst:.2e}, {elapsed:.1f}s")
    assert ok


def test_membership_limits(acceptance):
    rng = np.random.default_rng(2)
    one_hot_err, uniform_exact = 0.0, True
    for _ in range(100):
        K = int(rng.integers(2, 11))
        dists = rng.permutation(np.cumsum(rng.uniform(0.01, 1.0, K)))
        hard = membership(dists[None, :], 1e4)[0]
        target = np.zeros(K)
        target[np.argmin(dists)] = 1.0
        one_hot_err = max(one_hot_err, float(np.abs(hard - target).max()))
        uniform_exact &= bool(np.all(membership(dists[None, :], 0.0)[0] == 1.0 / K))
    ok = one_hot_err < 1e-9 and uniform_exact
    acceptance(2, "membership limits", ok, f"max one-hot deviation {one_hot_err:.1e}, uniform exact: {uniform_exact}")
    assert ok


def test_metric_oracles(acceptance):
    rng = np.random.default_rng(3)
    acc_ok, worst = True, 0.0
    for _ in range(200):
        counts = rng.integers(0, 12, size=(int(rng.integers(2, 7)), int(rng.integers(2, 7))))
        counts[0, 0] += 2
        counts[-1, -1] += 2
        acc_ok &= accuracy_hungarian(counts) == brute_force_acc(counts)
        rows = counts.tolist()
        worst = max(worst, abs(nmi(counts) - direct_nmi(rows)), abs(ari(counts) - direct_ari(rows)))
    labels = rng.integers(0, 5, 100)
    same = clustering_scores(labels, labels)
    identical = all(v == pytest.approx(1.0, abs=1e-12) for v in same.values())
    ok = acc_ok and worst < 1e-10 and identical
    acceptance(3, "metric oracles", ok, f"ACC exact: {acc_ok}, NMI/ARI max error {worst:.1e}")
    assert ok


def test_lloyd_consistency(acceptance):
    worst = 0.0
    for i in range(20):
        rng = np.random.default_rng(100 + i)
        K = int(rng.integers(2, 6))
        ds = make_blobs(int(rng.integers(10, 40)), K, int(rng.integers(2, 7)), 10.0, 0.5, seed=100 + i)
        X = ds.samples
        res = kmeans(X, K, rng)
        assert res.n_iter < 300
        _, _, grad_R = clustering_loss(X, res.representatives, 1e3)
        worst = max(worst, np.abs(grad_R / len(X)).max() / np.abs(X).max())
    ok = worst < 1e-6
    acceptance(4, "Lloyd consistency", ok, f"max scaled gradient {worst:.1e}")
    assert ok


def test_blobs_clustering(acceptance):
    ds = make_blobs(100, 3, 10, 10.0, 0.5, seed=0)
    test_idx = validation_split(len(ds), 0).test
    start = time.perf_counter()
    accs = []
    for seed in range(10):
        plan = TrainPlan.dkm_a(lam=10.0, seed=seed, batch_size=32, learning_rate=0.01)
        rec = run_variant(ds.samples, 3, plan, hidden=(32, 16))
        accs.append(accuracy_hungarian(contingency(rec.assignment[test_idx], ds.labels[test_idx])))
    elapsed = time.perf_counter() - start
    hits = sum(a >= 0.95 for a in accs)
    ok = hits >= 9 and elapsed < 120
    acceptance(5, "synthetic blobs clustering", ok,
               f"{hits}/10 seeds at ACC >= 0.95, min {min(accs):.3f}, {elapsed:.0f}s")
    assert ok


@pytest.mark.slow
def test_usps_clustering(acceptance, tmp_path):
    path = os.environ.get(USPS_ENV)
    if not path:
        acceptance(6, "USPS clustering", None, f"{USPS_ENV} not set")
        pytest.skip(f"USPS data unavailable; set {USPS_ENV} to a labeled CSV")
    ds = load_dense_csv(path, has_labels=True, name="usps")
    cfg = ExperimentConfig(kind="csv", path=path, n_clusters=10, variant="dkm_p", seeds=(0,),
                           output_dir=str(tmp_path)).validate()
    lam, _ = line_search(cfg, ds)
    test_idx = validation_split(len(ds), cfg.split_seed).test
    accs = []
    for seed in range(10):
        rec = fit(cfg, ds, seed, lam)
        accs.append(accuracy_hungarian(contingency(rec.assignment[test_idx], ds.labels[test_idx])))
    mean = float(np.mean(accs))
    ok = mean >= 0.70
    acceptance(6, "USPS clustering", ok, f"lambda {lam:g}, mean ACC {mean:.3f} +- {np.std(accs, ddof=1):.3f}")
    assert ok


def test_annealing_schedule(acceptance):
    terms = build_annealing_sequence(40).terms
    alpha_2 = 0.1 * 2 ** (1 / math.log(2) ** 2)
    ok = (len(terms) == 40 and terms[0] == 0.1
          and all(b > a for a, b in zip(terms, terms[1:]))
          and terms[1] == alpha_2
          and abs(terms[1] - 0.4246) / 0.4246 < 5e-3
          and terms[-1] == pytest.approx(ALPHA_40, rel=1e-12))
    acceptance(7, "annealing schedule", ok, f"alpha_2 = {terms[1]:.5f}, alpha_40 = {terms[-1]:.5f}")
    assert ok


def _train_twice(tmp_path, variant):
    args = ["train", "--kind", "blobs", "--n-clusters", "3", "--blob-n-per-cluster", "30", "--hidden", "16",
            "--variant", variant, "--pretrain-epochs", "3" if variant == "dkm_p" else "0",
            "--finetune-epochs", "5", "--n-alpha-terms", "4", "--epochs-per-alpha", "2",
            "--batch-size", "16", "--seeds", "7"]
    for out in ("a", "b"):
        assert main(args + ["--output-dir", str(tmp_path / variant / out)]) == 0
    run = f"{variant}_seed7"
    return all((tmp_path / variant / "a" / run / f).read_bytes() == (tmp_path / variant / "b" / run / f).read_bytes()
               for f in ("trace.csv", "assignments.txt"))


def test_train_determinism(acceptance, tmp_path):
    same = {v: _train_twice(tmp_path, v) for v in ("dkm_p", "dkm_a")}
    ok = all(same.values())
    acceptance(8, "train determinism", ok, ", ".join(f"{v} byte-identical: {s}" for v, s in same.items()))
    assert ok


def test_t_test_sanity(acceptance):
    r = t_test([1, 2, 3, 4, 5], [2, 3, 4, 5, 6])
    ok = abs(abs(r.t) - 1.0) < 1e-9 and r.df == 8 and abs(r.p - 0.3466) < 1e-3
    acceptance(9, "t-test sanity", ok, f"t = {r.t:.4f}, df = {r.df}, p = {r.p:.4f}")
    assert ok
