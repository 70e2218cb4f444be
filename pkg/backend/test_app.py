# test_app.py
"""
Tests for the Flask API using the test client.
"""

import pytest

from backend.app import app


@pytest.fixture
def client():
    app.config["TESTING"] = True
    with app.test_client() as c:
        yield c


def test_health(client):
    resp = client.get("/api/health")
    assert resp.status_code == 200
    data = resp.get_json()
    assert data["status"] == "healthy"
    assert "obstruction" in data["suites"]


def test_operator_endpoint(client):
    resp = client.post("/api/operator", json={"n": 1, "w": "0", "wp": "0"})
    assert resp.status_code == 200
    assert resp.get_json()["operator"]["path"] == "special k=2"


def test_matrix_endpoint(client):
    resp = client.post("/api/matrix", json={"n": 1, "w": "0", "wp": "-1", "degree": 0})
    assert resp.status_code == 200
    assert resp.get_json()["matrix"]["matrix"] == [["0"]]


def test_rejects_non_json(client):
    resp = client.post("/api/verify", data="suite=all")
    assert resp.status_code == 400
    assert resp.get_json()["success"] is False


def test_rejects_bad_parameters(client):
    resp = client.post("/api/verify", json={"suite": "nosuch"})
    assert resp.status_code == 400
    assert "unknown suite" in resp.get_json()["error"]
