import random

import numpy as np
import pytest

from attackwatch.corpus import DepTree
from attackwatch.embeddings import EmbeddingTable


def random_tree(rng: random.Random, n: int, alphabet="ABCDE") -> DepTree:
    lemmas = [rng.choice(alphabet) for _ in range(n)]
    order = list(range(n))
    rng.shuffle(order)
    heads = [0] * n
    for pos, node in enumerate(order[1:], start=1):
        heads[node] = order[rng.randrange(pos)] + 1
    return DepTree.build(list(zip(lemmas, heads)))


def fan(root: str, *kids: str) -> DepTree:
    """``root -> kids`` as a one-level tree, root first."""
    return DepTree.build([(root, 0)] + [(k, 1) for k in kids])


def chain(*labels: str) -> DepTree:
    """``labels[0] -> labels[1] -> ...``."""
    return DepTree.build([(w, i) for i, w in enumerate(labels)])


@pytest.fixture
def rng():
    return random.Random(12345)


@pytest.fixture
def small_table():
    vecs = {
        "hack": [1.0, 0.0, 0.0],
        "breach": [0.82, 0.5724, 0.0],
        "leak": [0.0, 1.0, 0.0],
        "data": [0.0, 0.0, 1.0],
    }
    return EmbeddingTable.from_dict({k: np.array(v) for k, v in vecs.items()})


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for status, name in results:
        terminalreporter.write_line(f"{status}  {name}")
