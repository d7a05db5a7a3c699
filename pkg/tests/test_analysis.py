import math

import numpy as np
import pytest

from sals.analysis import (expected_calibration_error, export_embeddings, gini, ratio_profile,
                           reliability, run_once, sweep, verify_ce_decomposition)
from sals.data import SbmConfig, generate_sbm, make_splits
from sals.gnn import GcnModel, TrainConfig, normalize_adjacency, train
from sals.graph import LabelSet, SplitMask
from sals.targets import SmoothingConfig, compute_ratios, hard_targets, ls_targets

from conftest import random_instance


def test_ce_decomposition_random():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n, C = int(rng.integers(5, 30)), int(rng.integers(2, 6))
        g, labels, mask = random_instance(rng, n, C, 0.3)
        p = rng.dirichlet(np.ones(C), size=n)
        cfg = SmoothingConfig(rng.uniform(0.01, 1), rng.uniform(0, 1))
        assert verify_ce_decomposition(g, labels, mask, compute_ratios(g, labels, mask), cfg, p) < 1e-10
        cfg0 = SmoothingConfig(cfg.epsilon, 0.0)
        assert verify_ce_decomposition(g, labels, mask, compute_ratios(g, labels, mask), cfg0, p) < 1e-10


def test_ce_decomposition_uniform_prediction():
    rng = np.random.default_rng(1)
    g, labels, mask = random_instance(rng, 20, 4, 0.3)
    p = np.full((20, 4), 0.25)
    assert verify_ce_decomposition(g, labels, mask, compute_ratios(g, labels, mask),
                                   SmoothingConfig(), p) < 1e-12
    with pytest.raises(ValueError):
        verify_ce_decomposition(g, labels, mask, compute_ratios(g, labels, mask),
                                SmoothingConfig(), np.full((20, 3), 1 / 3))


def test_ece_perfectly_calibrated_generator():
    rng = np.random.default_rng(2)
    conf = rng.uniform(0.5, 1.0, 10_000)
    correct = rng.random(10_000) < conf
    rep = expected_calibration_error(conf, correct)
    assert rep.ece <= 0.02
    assert rep.total == 10_000


def test_reliability_through_probabilities():
    rng = np.random.default_rng(3)
    n = 10_000
    conf = rng.uniform(0.5, 1.0, n)
    y = rng.integers(0, 2, n)
    right = rng.random(n) < conf
    pred = np.where(right, y, 1 - y)
    probs = np.empty((n, 2))
    probs[np.arange(n), pred] = conf
    probs[np.arange(n), 1 - pred] = 1 - conf
    rep = reliability(probs, LabelSet(y, 2), SplitMask(np.full(n, 2)))
    assert rep.ece <= 0.02 and len(rep.bins) == 10


def test_ece_degenerate_cases():
    conf = np.ones(100)
    rep = expected_calibration_error(conf, np.arange(100) % 2 == 0)
    assert rep.ece == pytest.approx(0.5)
    assert rep.bins[9].count == 100
    rep = expected_calibration_error(np.full(10, 0.999), np.ones(10, bool))
    assert rep.ece == pytest.approx(0.001)
    # one bin, hand computed: mean conf 0.375, accuracy 0.5
    rep = expected_calibration_error([0.35, 0.4], [True, False])
    assert rep.bins[3].count == 2 and rep.ece == pytest.approx(0.125)


def test_ece_bin_boundaries():
    rep = expected_calibration_error([0.0, 0.1, 0.1000001, 0.3, 1.0], [1, 1, 1, 1, 1])
    assert [b.count for b in rep.bins] == [2, 1, 1, 0, 0, 0, 0, 0, 0, 1]


def test_ece_permutation_invariant():
    rng = np.random.default_rng(4)
    conf, correct = rng.random(500), rng.random(500) < 0.7
    perm = rng.permutation(500)
    a = expected_calibration_error(conf, correct).ece
    assert a == pytest.approx(expected_calibration_error(conf[perm], correct[perm]).ece, abs=1e-15)
    assert 0 <= a <= 1


def _profile_fixture():
    rng = np.random.default_rng(5)
    g, labels, mask = random_instance(rng, 40, 3, 0.2)
    return g, labels, mask, compute_ratios(g, labels, mask)


def test_ratio_profile_uniform_losses():
    g, labels, mask, stats = _profile_fixture()
    prof = ratio_profile(np.ones(40), np.ones(40), stats, labels, mask)
    k = mask.train.sum()
    np.testing.assert_allclose(prof.cumulative_loss, np.arange(1, k + 1) / k)
    sizes = [len(b) for b in prof.buckets]
    assert len(sizes) == 6 and max(sizes) - min(sizes) <= 1 and sum(sizes) == k
    assert np.all(np.diff(prof.ratios) >= 0)


def test_ratio_profile_mass_on_lowest():
    g, labels, mask, stats = _profile_fixture()
    loss = np.zeros(40)
    first = ratio_profile(np.ones(40), np.ones(40), stats, labels, mask).order[0]
    loss[first] = 3.0
    prof = ratio_profile(loss, np.ones(40), stats, labels, mask)
    assert prof.cumulative_loss[0] == 1.0 and np.all(prof.cumulative_loss == 1.0)
    with pytest.raises(ValueError):
        ratio_profile(loss, loss, stats, labels, SplitMask(np.full(40, 2)))


def test_ratio_profile_monotone_random_losses():
    g, labels, mask, stats = _profile_fixture()
    prof = ratio_profile(np.random.default_rng(0).random(40), np.ones(40), stats, labels, mask)
    assert np.all(np.diff(prof.cumulative_loss) >= 0)
    assert prof.cumulative_loss[-1] == pytest.approx(1.0, abs=1e-9)


def test_gini():
    assert gini(np.ones(10)) == pytest.approx(0.0, abs=1e-12)
    assert gini([0, 0, 0, 1]) == pytest.approx(0.75)
    assert gini([]) == 0.0


def test_hard_targets_gradients_concentrate_on_low_ratio_nodes():
    """Bucket 0 (lowest own-class ratio) carries larger logit gradients than bucket 5.

    Confirmed on 10 of 10 seeds when this expectation was frozen.
    """
    b0, b5 = [], []
    for s in range(10):
        ds = generate_sbm(SbmConfig(50, 4, 0.10, 0.01, 4, 16.0, seed=s))
        mask = make_splits(ds.num_nodes, seed=s)
        out = run_once(ds, mask, "hard", SmoothingConfig(), TrainConfig(seed=s))
        prof = ratio_profile(out.per_node_loss, out.grad_norms,
                             compute_ratios(ds.graph, ds.labels, mask), ds.labels, mask)
        b0.append(prof.bucket_grad_norms[0])
        b5.append(prof.bucket_grad_norms[5])
    assert np.mean(b0) > np.mean(b5)
    assert sum(a > b for a, b in zip(b0, b5)) >= 8


@pytest.fixture(scope="module")
def tiny():
    ds = generate_sbm(SbmConfig(15, 3, 0.3, 0.03, 4, 1.0, seed=3))
    return ds, make_splits(ds.num_nodes, seed=3)


def test_sweep_gamma_zero_equals_ls(tiny):
    ds, mask = tiny
    cfg = TrainConfig(epochs=40, seed=0)
    grid = sweep(ds, mask, [0.4], [0.0], [2], cfg)
    model, _ = train(ds.graph, ds.features, ds.labels, ls_targets(ds.labels, mask, 0.4), mask,
                     TrainConfig(epochs=40, seed=2))
    from sals.gnn import evaluate
    acc = evaluate(model, normalize_adjacency(ds.graph), ds.features, ds.labels, mask)
    assert grid.accuracy[0, 0] == acc


def test_sweep_tiny_epsilon_matches_hard(tiny):
    ds, mask = tiny
    cfg = TrainConfig(epochs=40)
    grid = sweep(ds, mask, [1e-12], [0.8], [0, 1], cfg)
    hard = sweep(ds, mask, [0.4], [0.8], [0, 1], cfg, kind="hard")
    assert abs(grid.accuracy[0, 0] - hard.accuracy[0, 0]) <= 1e-6


def test_sweep_bookkeeping(tiny, tmp_path):
    ds, mask = tiny
    grid = sweep(ds, mask, [0.1, 0.3, 0.5], [0.2, 0.5, 0.8], 5, TrainConfig(epochs=5))
    assert grid.accuracy.shape == (3, 3) and grid.runs.sum() == 45
    assert np.all((grid.accuracy >= 0) & (grid.accuracy <= 1))
    grid.to_csv(tmp_path / "s.csv")
    grid.matrix_to_csv(tmp_path / "m.csv")
    assert len((tmp_path / "s.csv").read_text().splitlines()) == 10
    assert (tmp_path / "m.csv").read_text().splitlines()[0] == "epsilon\\gamma,0.2,0.5,0.8"
    with pytest.raises(ValueError):
        sweep(ds, mask, [], [0.5], 1, TrainConfig())


def test_export_embeddings(tiny):
    ds, mask = tiny
    adj = normalize_adjacency(ds.graph)
    stats = compute_ratios(ds.graph, ds.labels, mask)
    model = GcnModel.init(4, 3, hidden_dim=64, num_layers=3)
    table = export_embeddings(model, adj, ds.features, ds.labels, mask, stats, 0.0)
    assert len(table) == mask.train.sum() and table.vectors.shape[1] == 64
    assert len(export_embeddings(model, adj, ds.features, ds.labels, mask, stats, 1.01)) == 0
    with pytest.raises(ValueError):
        export_embeddings(GcnModel.init(4, 3, num_layers=1), adj, ds.features, ds.labels, mask, stats)
