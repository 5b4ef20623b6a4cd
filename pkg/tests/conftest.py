import os

import numpy as np
import pytest

from app.attack import make_instance
from app.config import config
from app.ntru import PARAMETER_SETS
from app.utils import load_json, save_json
from tests.helpers import FIXTURES_DIR


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def toy31():
    return PARAMETER_SETS["toy31"]


@pytest.fixture
def toy61():
    return PARAMETER_SETS["toy61"]


@pytest.fixture
def instance_factory():
    """Seeded attack instances: instance_factory(params, k1, k2=0, seed=0, leak_mode='prefix')"""
    def make(params, k1, k2=0, seed=0, leak_mode="prefix"):
        return make_instance(params, k1, k2, leak_mode, np.random.default_rng(seed))
    return make


@pytest.fixture
def results_dir(tmp_path, monkeypatch):
    path = tmp_path / "results"
    monkeypatch.setattr(config, "RESULTS_DIR", str(path))
    return path


def pytest_addoption(parser):
    parser.addoption("--record-golden", action="store_true", default=False,
                     help="write seeded golden fixtures instead of comparing against them")


@pytest.fixture
def golden(request):
    """golden(name, data): compare data with tests/fixtures/<name>, or record it under --record-golden"""
    def check(name, data):
        path = os.path.join(FIXTURES_DIR, name)
        if request.config.getoption("--record-golden"):
            save_json(data, path)
            return
        if not os.path.exists(path):
            pytest.fail(f"golden fixture {name} is missing; record it with pytest --record-golden")
        assert data == load_json(path)
    return check
