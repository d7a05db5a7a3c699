from pathlib import Path

import numpy as np
import pytest

from sals.data import SbmConfig, generate_sbm, make_splits

TOY_DIR = Path(__file__).parent / "data" / "toy"

_acceptance_lines: list[str] = []


def record_criterion(line: str) -> None:
    _acceptance_lines.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture
def toy_paths():
    return {k: TOY_DIR / f for k, f in
            [("edges", "edges.tsv"), ("features", "features.csv"), ("labels", "labels.csv"),
             ("mask", "mask.csv")]}


@pytest.fixture(scope="session")
def small_sbm():
    ds = generate_sbm(SbmConfig(nodes_per_class=10, num_classes=3, p_in=0.5, p_out=0.05,
                                feature_dim=6, feature_noise=0.5, seed=7))
    return ds, make_splits(ds.num_nodes, seed=7)


def random_instance(rng: np.random.Generator, n: int, C: int, p_edge: float = 0.2):
    """Random graph/labels/mask triple with every role non-empty."""
    from sals.graph import LabelSet, SplitMask, build_graph
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(len(iu)) < p_edge
    graph = build_graph(np.stack([iu[keep], ju[keep]], 1), n)
    labels = LabelSet(rng.integers(0, C, n), C)
    roles = rng.integers(0, 3, n)
    roles[:3] = [0, 1, 2]
    return graph, labels, SplitMask(roles)
