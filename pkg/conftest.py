import numpy as np
import pytest

from bony_calculus import random_bandlimited_field
from littlewood_paley import build_partition
from shared import db
from spectral_core import Grid


@pytest.fixture(autouse=True)
def isolated_ledger(tmp_path, monkeypatch):
    monkeypatch.setattr(db, "DEFAULT_LEDGER", tmp_path / "ledger.db")
    monkeypatch.delenv("EPLAB_THREADS", raising=False)


@pytest.fixture
def line():
    return Grid(1, 64)


@pytest.fixture
def plane():
    return Grid(2, 32)


@pytest.fixture
def line_partition(line):
    return build_partition(line)


@pytest.fixture
def plane_partition(plane):
    return build_partition(plane)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def plane_fields(plane, rng):
    return [random_bandlimited_field(plane, rng, slope) for slope in (-1.0, -2.0, -3.0)]
