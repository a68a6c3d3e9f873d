import numpy as np
import pytest

from irl_forge.rp import BudgetDataset
from irl_forge.sim import CobbDouglas


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def violating_ds():
    """Two observations revealing each other strictly: cycle (1, 2)."""
    return BudgetDataset([[1.0, 2.0], [2.0, 1.0]], [[0.0, 0.5], [0.5, 0.0]])


@pytest.fixture
def cyclic_consistent_ds():
    """Two observations with no revealed relation at all."""
    return BudgetDataset([[1.0, 2.0], [2.0, 1.0]], [[2.0, 0.0], [0.0, 2.0]])


@pytest.fixture
def cobb_douglas():
    return CobbDouglas([0.5, 0.5])


@pytest.fixture
def cobb_douglas_ds(cobb_douglas):
    """Twenty observations of the Cobb-Douglas demand beta(i) = 0.5 / alpha(i)."""
    probes = np.random.default_rng(7).uniform(0.5, 2.0, size=(20, 2))
    return BudgetDataset(probes, np.array([cobb_douglas.demand(a) for a in probes]))


def write_budget(path, alpha, beta):
    """Budget CSV helper shared by the io, pipeline and cli tests."""
    alpha, beta = np.atleast_2d(alpha), np.atleast_2d(beta)
    m = alpha.shape[1]
    header = ["k"] + [f"alpha_{i + 1}" for i in range(m)] + [f"beta_{i + 1}" for i in range(m)]
    lines = [",".join(header)]
    for k, (a, b) in enumerate(zip(alpha, beta), start=1):
        lines.append(",".join([str(k)] + [repr(float(v)) for v in np.concatenate([a, b])]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
