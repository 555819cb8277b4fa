import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from procaudit import synthgen
from procaudit.data import csv_text, parse_csv
from procaudit.synthgen import GeneratorConfig, GeneratorError, bayes_accuracy, generate, replay_rules
from oracles import brute_force_archetype


def test_paper_scale_counts():
    ds = generate(GeneratorConfig())
    assert len(ds) == 50000
    assert ds.fraud_count() == 25000


def test_noiseless_labels_follow_rules_record_by_record(small_ledger):
    cfg, ds = small_ledger
    for rec in ds:
        hits = brute_force_archetype(rec, cfg)
        assert len(hits) <= 1, (rec, hits)
        assert (hits[0] if hits else 0) == rec.ft


def test_replay_rules_matches_labels_without_noise():
    cfg = GeneratorConfig(n=5000, seed=3)
    ds = generate(cfg)
    np.testing.assert_array_equal(replay_rules(ds, cfg), ds.ft)


def test_same_seed_gives_identical_csv():
    cfg = GeneratorConfig(n=800, label_noise=0.1, seed=42)
    assert csv_text(generate(cfg)) == csv_text(generate(cfg))
    assert csv_text(generate(cfg)) != csv_text(generate(GeneratorConfig(n=800, label_noise=0.1, seed=43)))


def test_csv_round_trip_is_lossless():
    ds = generate(GeneratorConfig(n=1500, label_noise=0.05, seed=9))
    assert parse_csv(io.StringIO(csv_text(ds))) == ds


@pytest.mark.parametrize("kwargs", [
    {"fraud_ratio": 1.5}, {"fraud_ratio": 0.0}, {"label_noise": 0.5}, {"k_fraud": 6},
    {"k_fraud": 0}, {"n": 0}, {"ssn_pool": 1}, {"blacklist_fraction": 0.001},
])
def test_invalid_configs(kwargs):
    with pytest.raises(GeneratorError):
        generate(GeneratorConfig(**kwargs))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 400), st.floats(0.05, 0.95), st.integers(1, 5),
       st.floats(0.0, 0.45), st.integers(0, 2**31))
def test_class_counts_exact_and_values_valid(n, ratio, k, noise, seed):
    cfg = GeneratorConfig(n=n, fraud_ratio=ratio, k_fraud=k, label_noise=noise, seed=seed)
    ds = generate(cfg)
    assert ds.fraud_count() == int(np.floor(n * ratio + 0.5))
    assert ds.ft.max(initial=0) <= k
    for col in ("np", "pa", "ptp"):
        assert np.all(ds.column(col) > 0)
    pools = synthgen.Pools.from_config(cfg)
    ssn = ds.column("ssn") - synthgen.SSN_BASE
    allowed_ssn = set(range(pools.ssn_normal)) | set(
        range(2 * pools.ssn_normal, 2 * pools.ssn_normal + pools.ssn_blacklisted))
    assert set(ssn.tolist()) <= allowed_ssn
    assert np.all((ds.column("pon") - synthgen.PON_BASE < cfg.pon_pool))
    assert np.all((ds.column("mgn") - synthgen.MGN_BASE < cfg.mgn_pool))


def test_clean_totals_consistent():
    cfg = GeneratorConfig(n=4000, seed=1)
    ds = generate(cfg)
    clean = ds.ft == 0
    product = ds.column("np") * ds.column("pa")
    assert np.all(np.abs(ds.column("ptp")[clean] / product[clean] - 1) <= 0.01)


def test_archetypes_drawn_uniformly():
    ds = generate(GeneratorConfig(n=50000, seed=2))
    counts = np.bincount(ds.ft[ds.ft > 0], minlength=6)[1:]
    assert np.all(np.abs(counts - 5000) < 5 * np.sqrt(5000 * 0.2 * 0.8))


def test_bayes_accuracy_examples():
    assert bayes_accuracy(GeneratorConfig(label_noise=0.0)) == 1.0
    assert bayes_accuracy(GeneratorConfig(label_noise=0.1)) == pytest.approx(0.9, abs=1e-15)
    assert bayes_accuracy(GeneratorConfig(label_noise=0.0), "multiclass") == 1.0
    assert bayes_accuracy(GeneratorConfig(label_noise=0.1, k_fraud=5), "multiclass") == pytest.approx(0.92)


@pytest.mark.parametrize("noise", [0.1, 0.25])
def test_rule_replay_reaches_binary_ceiling(noise):
    cfg = GeneratorConfig(n=50000, label_noise=noise, seed=5)
    ds = generate(cfg)
    pred = (replay_rules(ds, cfg) != 0).astype(int)
    acc = np.mean(pred == (ds.ft != 0))
    assert abs(acc - bayes_accuracy(cfg, "binary")) <= 0.005


def test_rule_replay_reaches_multiclass_ceiling():
    cfg = GeneratorConfig(n=50000, label_noise=0.1, seed=6)
    ds = generate(cfg)
    fraud = ds.ft != 0
    pred = replay_rules(ds, cfg)[fraud]
    pred = np.where(pred == 0, 1, pred)
    acc = np.mean(pred == ds.ft[fraud])
    assert abs(acc - bayes_accuracy(cfg, "multiclass")) <= 0.005


def test_config_file(tmp_path):
    path = tmp_path / "gen.cfg"
    path.write_text("# ledger\nn = 120\nfraud-ratio = 0.25\nlabel_noise=0.05  # light\nseed = 4\n")
    cfg = GeneratorConfig.from_mapping(synthgen.read_config_file(path))
    assert cfg == GeneratorConfig(n=120, fraud_ratio=0.25, label_noise=0.05, seed=4)
    with pytest.raises(GeneratorError):
        GeneratorConfig.from_mapping({"colour": "red"})
