"""Acceptance criteria, one test each.

Every test records its verdict through ``record_criterion`` so a run ends with
one PASS/FAIL line per criterion in the terminal summary. Run just this file
with ``pytest tests/test_acceptance.py``.
"""
import time

import numpy as np
import pytest

from conftest import record_criterion
from oracles import brute_force_archetype, gradient_errors, random_gradient_case
from procaudit import cli, mlp, normalize, synthgen, train
from procaudit.data import csv_text, parse_csv


def _check(number, title, passed, detail):
    record_criterion(number, title, passed, detail)
    assert passed, detail


def test_c01_gradient_oracle():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = 0.0
    for i in range(50):
        hidden = (4, 8, 16)[i % 3]
        classes = (2, 5)[(i // 3) % 2]
        params, x, y = random_gradient_case(rng, hidden, classes, seed=i)
        worst = max(worst, max(gradient_errors(params, x, y, step=1e-3).values()))
    elapsed = time.perf_counter() - start
    _check(1, "gradient oracle", worst <= 1e-4 and elapsed < 30,
           f"max rel err {worst:.2e}, {elapsed:.1f}s")


def test_c02_normalization_contract():
    rng = np.random.default_rng(7)
    worst_inverse = 0.0
    ok = True
    for _ in range(1000):
        rows = int(rng.integers(1, 40))
        x = rng.uniform(0, 10.0 ** rng.integers(0, 10), size=(rows, 8))
        degenerate = rng.random(8) < 0.2
        x[:, degenerate] = x[0, degenerate]
        stats = normalize.fit(x)
        z = normalize.transform(x, stats)
        flat = np.ptp(x, axis=0) == 0
        ok &= bool(np.all((z >= 0) & (z <= 1)))
        ok &= bool(np.all(z[:, flat] == 0.0))
        back = normalize.inverse_transform(z, stats)
        scale = np.maximum(np.abs(x), np.finfo(float).tiny)
        worst_inverse = max(worst_inverse, float(np.max(np.abs(back - x) / scale)))
    passed = ok and worst_inverse <= 1e-9
    _check(2, "normalization", passed, f"max inverse rel err {worst_inverse:.2e}")


def test_c03_fold_partition():
    rng = np.random.default_rng(3)
    failures = 0
    for _ in range(200):
        k = int(rng.integers(2, 21))
        n = int(rng.integers(20, 5001))
        seed = int(rng.integers(0, 2**32))
        folds = train.partition_folds(n, k, seed)
        again = train.partition_folds(n, k, seed)
        everything = np.concatenate(folds)
        sizes = [f.size for f in folds]
        good = (len(folds) == k
                and everything.size == n
                and np.unique(everything).size == n
                and everything.min() == 0 and everything.max() == n - 1
                and max(sizes) - min(sizes) <= 1
                and all(np.array_equal(a, b) for a, b in zip(folds, again)))
        failures += not good
    _check(3, "fold partition", failures == 0, f"{failures}/200 draws violated a property")


def test_c04_overfit_sanity():
    start = time.perf_counter()
    ds = synthgen.generate(synthgen.GeneratorConfig(n=200, label_noise=0.0, seed=0))
    config = train.TrainConfig(hidden=32, epochs=500, batch=32)
    model, _ = train.train_model(ds, "binary", config, seed=0)
    features = normalize.transform(ds.features(), model.stats)
    _, acc = train.evaluate(model.params, features, (ds.ft != 0).astype(np.int64))
    elapsed = time.perf_counter() - start
    _check(4, "overfit sanity", acc >= 0.99 and elapsed < 60,
           f"train accuracy {acc:.4f}, {elapsed:.1f}s")


ANALOG = train.TrainConfig(hidden=128, epochs=20)


@pytest.mark.slow
def test_c05_binary_analog():
    cfg = synthgen.GeneratorConfig(n=10000, fraud_ratio=0.5, label_noise=0.10, seed=0)
    ceiling = synthgen.bayes_accuracy(cfg, "binary")
    start = time.perf_counter()
    report = train.cross_validate(synthgen.generate(cfg), "binary", ANALOG, k=10, seed=0, jobs=4)
    elapsed = time.perf_counter() - start
    acc = report.average_accuracy
    _check(5, "binary synthetic analog", 0.85 <= acc <= 0.905 and elapsed <= 600,
           f"avg accuracy {acc:.4f} (ceiling {ceiling:.4f}), {elapsed:.0f}s")


@pytest.mark.slow
def test_c06_multiclass_analog():
    cfg = synthgen.GeneratorConfig(n=10000, fraud_ratio=0.5, k_fraud=5, label_noise=0.02, seed=0)
    ceiling = synthgen.bayes_accuracy(cfg, "multiclass")
    start = time.perf_counter()
    report = train.cross_validate(synthgen.generate(cfg), "multiclass", ANALOG, k=10, seed=0,
                                  jobs=4)
    elapsed = time.perf_counter() - start
    acc = report.average_accuracy
    _check(6, "multiclass synthetic analog", 0.95 <= acc <= 0.985 and elapsed <= 300,
           f"avg accuracy {acc:.4f} (ceiling {ceiling:.4f}), {elapsed:.0f}s")


def test_c07_rule_replay_oracle():
    correct = total = 0
    for seed in range(3):
        cfg = synthgen.GeneratorConfig(n=3000, label_noise=0.0, seed=seed)
        ds = synthgen.generate(cfg)
        for record in ds:
            hits = brute_force_archetype(record, cfg)
            correct += (hits[0] if hits else 0) == record.ft
            total += 1
    acc = correct / total
    _check(7, "rule-replay oracle", acc == 1.0, f"accuracy {acc} on {total} records")


def test_c08_end_to_end_determinism(tmp_path):
    def pipeline(tag, jobs):
        csv_path = tmp_path / f"{tag}.csv"
        report = tmp_path / f"{tag}.jsonl"
        assert cli.main(["generate", "--n", "1500", "--noise", "0.1", "--seed", "5",
                         "--out", str(csv_path)]) == 0
        assert cli.main(["crossval", "--data", str(csv_path), "--k", "5", "--hidden", "32",
                         "--epochs", "3", "--seed", "5", "--jobs", str(jobs),
                         "--report", str(report), "--no-figures"]) == 0
        return csv_path.read_bytes(), report.read_bytes()

    first, second, parallel = pipeline("a", 1), pipeline("b", 1), pipeline("c", 4)
    same = first == second and first[1] == parallel[1]
    _check(8, "end-to-end determinism", same, "serial x2 and parallel outputs compared")


def test_c09_dropout_scaling():
    params = mlp.init_params(mlp.NetworkConfig(hidden_dim=64, dropout_ratio=0.2, seed=3))
    x = np.random.default_rng(0).uniform(size=8)
    expected = mlp.hidden_activations(params, x, "infer")[0]
    draws = mlp.hidden_activations(params, np.tile(x, (100_000, 1)), "train",
                                   np.random.default_rng(1))
    active = expected > 1e-3
    rel = np.abs(draws.mean(axis=0)[active] - expected[active]) / expected[active]
    worst = float(rel.max())
    _check(9, "dropout scaling", worst <= 0.01,
           f"max rel err {worst:.4f} over {int(active.sum())} active units")


def test_c10_report_structure():
    ds = synthgen.generate(synthgen.GeneratorConfig(n=800, label_noise=0.1, seed=2))
    k = 10
    report = train.cross_validate(ds, "binary", train.TrainConfig(hidden=16, epochs=2), k=k,
                                  seed=1)
    lines = report.table().splitlines()
    fold_rows = [l for l in lines if l.split() and l.split()[0].isdigit()]
    average = [l for l in lines if l.startswith("Average")]
    folds, summary = train.read_report(report.to_jsonl())
    mean_loss = sum(f["loss"] for f in folds) / k
    mean_acc = sum(f["accuracy"] for f in folds) / k
    good = (len(fold_rows) == k and len(average) == 1 and len(folds) == k
            and abs(summary["average_loss"] - mean_loss) <= 1e-12
            and abs(summary["average_accuracy"] - mean_acc) <= 1e-12)
    _check(10, "report structure", good,
           f"{len(fold_rows)} fold rows, average accuracy {summary['average_accuracy']:.4f}")
