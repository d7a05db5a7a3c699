import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sals.data import (DatasetFormatError, SbmConfig, generate_sbm, load_dataset, load_dataset_dir,
                       load_mask, make_splits, save_dataset, save_mask)
from sals.graph import Role, neighbors
from sals.targets import compute_ratios


def test_toy_fixture(toy_paths):
    ds = load_dataset(toy_paths["edges"], toy_paths["features"], toy_paths["labels"])
    assert ds.num_nodes == 3 and ds.num_classes == 2
    assert [neighbors(ds.graph, i).tolist() for i in range(3)] == [[1], [0, 2], [1]]
    assert load_mask(toy_paths["mask"], 3).train.all()


def test_roundtrip(tmp_path, small_sbm):
    ds, mask = small_sbm
    save_dataset(ds, tmp_path)
    back = load_dataset_dir(tmp_path)
    assert np.array_equal(back.graph.neighbor_ids, ds.graph.neighbor_ids)
    assert np.array_equal(back.graph.row_offsets, ds.graph.row_offsets)
    assert np.array_equal(back.features.matrix, ds.features.matrix)
    assert np.array_equal(back.labels.labels, ds.labels.labels)
    save_mask(mask, tmp_path / "mask.csv")
    assert np.array_equal(load_mask(tmp_path / "mask.csv", ds.num_nodes).roles, mask.roles)


def _write(tmp_path, edges="0\t1\n", features="1,2\n3,4\n", labels="node_id,label\n0,0\n1,1\n"):
    for name, text in [("e.tsv", edges), ("f.csv", features), ("l.csv", labels)]:
        (tmp_path / name).write_text(text)
    return tmp_path / "e.tsv", tmp_path / "f.csv", tmp_path / "l.csv"


@pytest.mark.parametrize("kw, match", [
    ({"edges": "# c\n0 1\n"}, r"e\.tsv:2"),
    ({"edges": "0\t5\n"}, "out of range"),
    ({"features": "1,2\n3\n"}, r"f\.csv:2"),
    ({"features": "1,2\n"}, "feature rows"),
    ({"labels": "id,label\n0,0\n1,1\n"}, "header"),
    ({"labels": "node_id,label\n0,0\n2,1\n"}, "dense"),
    ({"labels": "node_id,label\n0,0\n1,x\n"}, r"l\.csv:3"),
])
def test_malformed_inputs(tmp_path, kw, match):
    with pytest.raises(DatasetFormatError, match=match):
        load_dataset(*_write(tmp_path, **kw))


def test_declared_class_count(tmp_path):
    paths = _write(tmp_path, labels="node_id,label\n0,0\n1,3\n")
    with pytest.raises(DatasetFormatError, match="declared"):
        load_dataset(*paths, num_classes=3)
    assert load_dataset(*paths).num_classes == 4


def test_unlabeled_nodes(tmp_path):
    ds = load_dataset(*_write(tmp_path, labels="node_id,label\n0,1\n1,\n"))
    assert ds.labels.labels.tolist() == [1, -1]


def test_split_sizes_and_determinism():
    m = make_splits(10, seed=3)
    assert [int(m.of(r).sum()) for r in Role] == [6, 2, 2]
    assert np.array_equal(m.roles, make_splits(10, seed=3).roles)
    assert not np.array_equal(make_splits(100, seed=1).roles, make_splits(100, seed=2).roles)
    with pytest.raises(ValueError):
        make_splits(3)
    with pytest.raises(ValueError):
        make_splits(10, (0.5, 0.5, 0.0))


@settings(max_examples=100, deadline=None)
@given(st.integers(5, 500), st.integers(0, 2**32 - 1))
def test_split_cover(n, seed):
    m = make_splits(n, seed=seed)
    sizes = np.array([m.of(r).sum() for r in Role])
    assert sizes.sum() == n and np.all(sizes > 0)
    assert np.all(np.abs(sizes - n * np.array([0.6, 0.2, 0.2])) < 1)


def test_sbm_cliques():
    ds = generate_sbm(SbmConfig(5, 2, 1.0, 0.0, 2, 0.1, seed=0))
    assert ds.graph.num_edges == 2 * 10
    for i in range(10):
        assert set(neighbors(ds.graph, i).tolist()) == {j for j in range(10) if j // 5 == i // 5 and j != i}


def test_sbm_pure_homophily_ratios():
    ds = generate_sbm(SbmConfig(20, 3, 0.4, 0.0, 3, 0.1, seed=1))
    mask = make_splits(ds.num_nodes, seed=1)
    stats = compute_ratios(ds.graph, ds.labels, mask)
    has = stats.labeled_degree > 0
    expected = np.eye(3)[ds.labels.labels]
    assert np.array_equal(stats.ratios[has], expected[has])


def test_sbm_deterministic_and_features():
    cfg = SbmConfig(30, 4, 0.2, 0.02, 8, 0.0, seed=5)
    a, b = generate_sbm(cfg), generate_sbm(cfg)
    assert np.array_equal(a.graph.neighbor_ids, b.graph.neighbor_ids)
    # zero noise leaves the unit-norm one-hot class means
    assert np.array_equal(a.features.matrix, np.eye(4, 8)[a.labels.labels])


def test_sbm_expected_edge_count():
    m, C, p_in, p_out = 20, 3, 0.3, 0.05
    intra, inter = C * math.comb(m, 2), math.comb(C, 2) * m * m
    mean = intra * p_in + inter * p_out
    var = intra * p_in * (1 - p_in) + inter * p_out * (1 - p_out)
    counts = [generate_sbm(SbmConfig(m, C, p_in, p_out, 3, 1.0, seed=s)).graph.num_edges
              for s in range(50)]
    assert abs(np.mean(counts) - mean) <= 3 * math.sqrt(var / 50)


def test_sbm_homophily_knob():
    means = []
    for ratio in [1.0, 3.0, 10.0, 30.0]:
        vals = []
        for s in range(10):
            ds = generate_sbm(SbmConfig(30, 3, 0.3, 0.3 / ratio, 3, 1.0, seed=s))
            mask = make_splits(ds.num_nodes, seed=s)
            r = compute_ratios(ds.graph, ds.labels, mask).own_class_ratio(ds.labels)
            vals.append(r[mask.train].mean())
        means.append(np.mean(vals))
    assert np.all(np.diff(means) > 0)


@pytest.mark.parametrize("kw", [dict(p_in=0.1, p_out=0.2), dict(nodes_per_class=0),
                                dict(feature_dim=2, num_classes=4)])
def test_sbm_config_errors(kw):
    with pytest.raises(ValueError):
        SbmConfig(**kw)


def test_sbm_config_json():
    cfg = SbmConfig(12, 3, 0.2, 0.01, 5, 0.7, 9)
    assert SbmConfig.from_json(cfg.to_json()) == cfg
    with pytest.raises(ValueError, match="exactly"):
        SbmConfig.from_json('{"nodes_per_class": 3}')
