"""Integration tests against a running sketch service."""

import numpy as np
import requests

from sketchlrf.client import create_stream, factorize_stream, push_stream
from sketchlrf.stream import read_stream


def test_health(live_service):
    """Test that the service answers its health check."""
    response = requests.get(f"{live_service}/health", timeout=5)
    assert response.status_code == 200
    assert response.json()["service"] == "sketchlrf"


def test_stream_roundtrip_recovers_matrix(live_service, created_streams, stream_file, lowrank_matrix):
    """Test that a pushed exact-rank stream is recovered by the service."""
    stream = read_stream(stream_file)
    stream_id = create_stream(
        {"m": stream.m, "n": stream.n, "k": 3, "alpha": 0.5, "seed": 1},
        base_url=live_service,
    )
    created_streams.append(stream_id)

    assert push_stream(stream_id, stream, batch_size=64, base_url=live_service) == lowrank_matrix.size
    result = factorize_stream(stream_id, base_url=live_service)

    u, sigma, v = np.array(result["u"]), np.array(result["sigma"]), np.array(result["v"])
    assert result["updates_seen"] == lowrank_matrix.size
    assert np.linalg.norm((u * sigma) @ v.T - lowrank_matrix) <= 1e-6 * np.linalg.norm(lowrank_matrix)


def test_private_release_charges_budget(live_service, created_streams, rng):
    """Test that each private release composes into the cumulative budget."""
    stream_id = create_stream(
        {"m": 12, "n": 10, "k": 2, "alpha": 0.5, "mode": "priv2", "epsilon": 1.0, "delta": 1e-3},
        base_url=live_service,
    )
    created_streams.append(stream_id)
    a = rng.standard_normal((12, 10))
    updates = [[int(i), int(j), float(a[i, j])] for i, j in zip(*np.nonzero(a))]
    response = requests.post(f"{live_service}/streams/{stream_id}/updates", json={"updates": updates}, timeout=10)
    assert response.status_code == 200

    budgets = [factorize_stream(stream_id, base_url=live_service)["cumulative_budget"] for _ in range(3)]
    assert [b["releases"] for b in budgets] == [1, 2, 3]
    assert budgets[0]["epsilon"] < budgets[1]["epsilon"] < budgets[2]["epsilon"]


def test_deleted_stream_is_gone(live_service):
    """Test that deleting a stream removes it from the service."""
    stream_id = create_stream({"m": 4, "n": 4, "k": 1, "alpha": 0.5}, base_url=live_service)
    assert requests.delete(f"{live_service}/streams/{stream_id}", timeout=5).status_code == 200
    assert requests.get(f"{live_service}/streams/{stream_id}", timeout=5).status_code == 404
