import pytest
from httpx import ASGITransport, AsyncClient

from main import app

SMALL_RUN = {
    "config": {"n": 2000, "epsilon": 0.14, "gamma": 0.05, "algorithm": "median", "seed": 3,
               "beta": 0.005, "overrides": {"gamma_prime": 0.02}},
    "adversary": {"kind": "static_extreme"},
}


def _client():
    return AsyncClient(transport=ASGITransport(app=app), base_url="http://test")


@pytest.mark.asyncio
async def test_health_and_ready():
    async with _client() as client:
        health = await client.get("/health/")
        ready = await client.get("/health/ready")
    assert health.status_code == 200
    assert ready.status_code == 200


@pytest.mark.asyncio
async def test_predict_single_and_batch():
    async with _client() as client:
        single = await client.post("/api/v1/analysis/predict",
                                   json={"op": "binom_tail", "args": {"n": 3, "k": 1, "p": 0.2}})
        batch = await client.post("/api/v1/analysis/predict", json=[
            {"op": "lower_bound_direct", "args": {"beta": 0.5, "gamma": 0.01}},
            {"op": "no_such_op", "args": {}},
        ])
    assert single.status_code == 200
    assert single.json()["data"][0]["result"] == pytest.approx(0.104)
    results = batch.json()["data"]
    assert results[0]["result"] == pytest.approx(5.64386, abs=1e-5)
    assert results[1]["error"]["error"] == "InvalidInputError"


@pytest.mark.asyncio
async def test_operations_listing():
    async with _client() as client:
        response = await client.get("/api/v1/analysis/operations")
    assert "median_schedule" in response.json()["data"]


@pytest.mark.asyncio
async def test_validate_reports_hard_violations():
    async with _client() as client:
        response = await client.post("/api/v1/simulation/validate", json={
            "n": 1000, "epsilon": 0.14, "beta": 0.05, "gamma": 0.1, "algorithm": "median",
        })
    data = response.json()["data"]
    assert data["valid"] is False
    assert any(v["field"] == "beta" and v["severity"] == "hard" for v in data["violations"])


@pytest.mark.asyncio
async def test_run_small_median():
    async with _client() as client:
        response = await client.post("/api/v1/simulation/run", json=SMALL_RUN)
    assert response.status_code == 200
    data = response.json()["data"]
    assert data["report"]["fraction_incorrect"] <= 0.05
    assert data["off_spec"] is True
    assert "traces" not in data


@pytest.mark.asyncio
async def test_run_errors_map_to_status_codes():
    too_large = {"config": dict(SMALL_RUN["config"], n=10 ** 7)}
    infeasible = {"config": {"n": 1000, "epsilon": 0.14, "gamma": 0.25, "algorithm": "median"}}
    invalid = {"config": dict(SMALL_RUN["config"], beta=0.05)}
    async with _client() as client:
        large = await client.post("/api/v1/simulation/run", json=too_large)
        schedule = await client.post("/api/v1/simulation/run", json=infeasible)
        violating = await client.post("/api/v1/simulation/run", json=invalid)
        malformed = await client.post("/api/v1/simulation/run", json={"config": {"n": 10}})
    assert large.status_code == 400
    assert schedule.status_code == 422
    assert violating.status_code == 400
    assert malformed.status_code == 422


@pytest.mark.asyncio
async def test_lowerbound_endpoint():
    async with _client() as client:
        ok = await client.post("/api/v1/simulation/lowerbound",
                               json={"n": 10_000, "beta": 0.5, "gamma": 0.01, "rounds": 3, "seeds": 5})
        bad = await client.post("/api/v1/simulation/lowerbound",
                                json={"n": 10_000, "beta": 0.0, "gamma": 0.01, "rounds": 3})
    assert ok.status_code == 200
    assert len(ok.json()["data"]["fractions"]) == 5
    assert bad.status_code == 400
