import os

import numpy as np
import pytest
import requests

from sketchlrf.app import create_app
from sketchlrf.registry import get_registry
from sketchlrf.stream import TurnstileUpdate, write_stream


@pytest.fixture(scope="session")
def service_url():
    return os.getenv("SKETCHLRF_URL", "http://sketchlrf:5000")


@pytest.fixture(scope="session")
def live_service(service_url):
    try:
        requests.get(f"{service_url}/health", timeout=2).raise_for_status()
    except requests.RequestException as e:
        pytest.skip(f"sketch service not reachable at {service_url}: {e}")
    return service_url


@pytest.fixture(scope="function")
def created_streams(live_service):
    ids = []
    yield ids

    for stream_id in ids:
        requests.delete(f"{live_service}/streams/{stream_id}", timeout=5)


@pytest.fixture(scope="session")
def seed():
    return int(os.getenv("SKETCHLRF_TEST_SEED", "20240611"))


@pytest.fixture
def rng(seed):
    return np.random.default_rng(seed)


@pytest.fixture
def lowrank_matrix(rng):
    """Exact rank-3 20×15 matrix"""
    return rng.standard_normal((20, 3)) @ rng.standard_normal((3, 15))


@pytest.fixture
def app():
    flask_app = create_app()
    flask_app.config.update(TESTING=True)
    yield flask_app
    get_registry().clear()


@pytest.fixture
def client(app):
    return app.test_client()


@pytest.fixture
def stream_file(tmp_path, lowrank_matrix):
    path = tmp_path / "a.stream"
    rows, cols = np.nonzero(lowrank_matrix)
    updates = [TurnstileUpdate(int(i), int(j), float(lowrank_matrix[i, j])) for i, j in zip(rows, cols)]
    write_stream(path, *lowrank_matrix.shape, updates)
    return path
