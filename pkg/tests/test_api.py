import math

import pytest
from fastapi.testclient import TestClient

from lyapcert.api import app

client = TestClient(app)

QUICK = {
    "system": {"builtin": "paper_example"},
    "domain": {"c1": 0.49, "c2": 1.0},
    "rate_a": 2.0,
    "eta": 0.6,
    "grid": {"resolution": 401, "refinement": 2},
    "integrator": {"t_max": 10.0},
    "initial_conditions": {"count": 2, "level": 0.97, "seed": 42},
}


def test_health():
    resp = client.get("/health")
    assert resp.status_code == 200
    body = resp.json()
    assert body["status"] == "ok"
    assert "version" in body


def test_systems_listing():
    resp = client.get("/systems")
    assert resp.status_code == 200
    assert set(resp.json()["builtin"]) == {"linear_spiral", "paper_example"}


def test_certify_endpoint():
    resp = client.post("/certify", json=QUICK)
    assert resp.status_code == 200
    body = resp.json()
    assert body["exit_code"] == 0
    assert body["report"]["certificate"]["verdict"] == "pass"


def test_simulate_endpoint():
    resp = client.post("/simulate", json=QUICK)
    assert resp.status_code == 200
    body = resp.json()
    assert body["report"]["violations_total"] == 0
    assert len(body["report"]["trajectories"]) == 2


def test_guas_endpoint():
    payload = {
        "system": {"builtin": "linear_spiral"},
        "guas": {"k0": 1.0, "k1": math.sqrt(5.0), "k2": 2.0},
        "rate_a": 1.9,
        "grid": {"resolution": 201},
    }
    resp = client.post("/guas", json=payload)
    assert resp.status_code == 200
    assert resp.json()["report"]["guas"]["verdict"] == "pass"


def test_invalid_config_is_422():
    bad = dict(QUICK, domain={"c1": 1.2, "c2": 1.0})
    resp = client.post("/certify", json=bad)
    assert resp.status_code == 422
    assert "c1" in resp.json()["detail"]


def test_mode_block_mismatch_is_422():
    resp = client.post("/guas", json=QUICK)
    assert resp.status_code == 422


def test_failed_certification_is_200_with_exit_one():
    failing = dict(
        QUICK, system={"builtin": "paper_example", "params": {"rho": 0.1}}
    )
    resp = client.post("/certify", json=failing)
    assert resp.status_code == 200
    assert resp.json()["exit_code"] == 1
