import os
import sys
import math
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from src.operator_model import SymbolFrame, companion_matrix, load_operator_spec  # noqa: E402
from src.hyperbolicity_analyzer import GridConfig  # noqa: E402

FIXTURES = ROOT / "fixtures"


@pytest.fixture(autouse=True)
def quiet_environment(monkeypatch):
    monkeypatch.setenv("HYPAN_THREADS", "1")
    monkeypatch.setenv("HYPAN_PROGRESS", "0")


@pytest.fixture
def load_fixture():
    def _load(name):
        return load_operator_spec(str(FIXTURES / f"{name}.json"))
    return _load


@pytest.fixture
def small_grid():
    return GridConfig(t_nodes=64, xi_decades=2, threads=1, progress=False)


def row_from_roots(roots):
    """p(λ) = λ^m - Σ a_j λ^{j-1} with the given roots; returns (a_1, ..., a_m)"""
    c = np.real(np.poly(roots))
    return -c[1:][::-1]


def frame_from_roots(roots, t=0.0):
    row = row_from_roots(roots)
    m = len(row)
    return SymbolFrame(
        t=t,
        xi=np.array([1.0]),
        bracket=math.sqrt(2.0),
        A=companion_matrix(row),
        B=np.zeros((m, m), dtype=complex),
        h=row.copy(),
    )


@pytest.fixture
def roots_frame():
    return frame_from_roots


def fixture_path(name):
    return os.path.join(str(FIXTURES), name)
