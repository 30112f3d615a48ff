import warnings

import pytest

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    from fastapi.testclient import TestClient

from edcacap.service.app import create_app


@pytest.fixture()
def client():
    return TestClient(create_app())


def saturated_scenario(count=2):
    return {"stations": [{"id": "s", "count": count,
                          "traffic": {"ac3": {"kind": "saturated",
                                              "mean_packet": 1000}}}]}


def voice_scenario(k):
    return {"stations": [
        {"id": "ap", "traffic": {"ac3": {"kind": "cbr", "mean_packet": 120,
                                         "packet_interval": 10.0, "flows": k}}},
        {"id": "voice", "count": k,
         "traffic": {"ac3": {"kind": "cbr", "mean_packet": 120,
                             "packet_interval": 10.0}}},
    ]}


def test_health(client):
    body = client.get("/healthz").json()
    assert body["status"] == "ok"


def test_solve_endpoint(client):
    response = client.post("/api/solve", json={"scenario": saturated_scenario()})
    assert response.status_code == 200
    body = response.json()
    assert len(body["rows"]) == 1
    assert 0 < body["rows"][0]["throughput"] <= 1
    assert body["rows"][0]["collision_prob"] > 0
    assert body["classes"][0]["stations"] == 2


def test_solve_rejects_invalid_scenario_with_field_path(client):
    bad = {"acs": [None, {"aifsn": 3, "cw_min": 31, "cw_max": 15}],
           "stations": []}
    response = client.post("/api/solve", json={"scenario": bad})
    assert response.status_code == 422
    assert "acs[1]" in response.json()["detail"]


def test_solve_rejects_unknown_scenario_keys(client):
    response = client.post("/api/solve",
                           json={"scenario": {"stations": [], "bogus": 1}})
    assert response.status_code == 422


def test_utilization_endpoint(client):
    response = client.post("/api/utilization",
                           json={"scenario": voice_scenario(10)})
    assert response.status_code == 200
    body = response.json()
    assert body["admissible"] is True
    assert body["max_real_time_utilization"] < 1
    assert len(body["rows"]) == 2


def test_capacity_search_endpoint(client):
    request = {
        "scenario": {"stations": []},
        "template": {"direction": "two_way", "ac": 3, "mean_packet": 120,
                     "packet_interval": 10.0},
    }
    response = client.post("/api/capacity-search", json=request)
    assert response.status_code == 200
    body = response.json()
    assert body["max_flows"] == 27
    assert any(not p["admissible"] for p in body["probes"])


def test_simulate_endpoint_deterministic(client):
    request = {"scenario": voice_scenario(3), "duration_s": 8.0, "seed": 11}
    a = client.post("/api/simulate", json=request).json()
    b = client.post("/api/simulate", json=request).json()
    assert a == b
    assert a["rows"][0]["delivered"] > 0


def test_compare_endpoint(client):
    response = client.post("/api/compare",
                           json={"scenario": saturated_scenario(3),
                                 "seeds": [1], "duration_s": 12.0})
    assert response.status_code == 200
    assert response.json()["max_throughput_rel_error"] < 0.08


def test_admission_session_lifecycle(client):
    created = client.post("/api/admission/sessions",
                          json={"scenario": {"stations": []}})
    session = created.json()["session_id"]
    tspec = {"tsid": "t1", "up": 6, "mean_rate": 96000.0, "mean_packet": 120,
             "direction": "uplink", "station": "sta1"}
    decision = client.post(f"/api/admission/sessions/{session}/addts",
                           json=tspec).json()
    assert decision["verdict"] == "admit"
    state = client.get(f"/api/admission/sessions/{session}").json()
    assert [t["tsid"] for t in state["admitted"]] == ["t1"]

    removed = client.post(f"/api/admission/sessions/{session}/delts",
                          json={"tsid": "t1"}).json()
    assert removed["verdict"] == "delete"
    missing = client.post(f"/api/admission/sessions/{session}/delts",
                          json={"tsid": "t1"}).json()
    assert missing["verdict"] == "error"

    assert client.delete(f"/api/admission/sessions/{session}").status_code == 200
    assert client.get(f"/api/admission/sessions/{session}").status_code == 404


def test_admission_replay_endpoint(client):
    session = client.post("/api/admission/sessions",
                          json={"scenario": {"stations": []}}).json()["session_id"]
    events = ("ADDTS a 6 uplink sta1 96000 120\n"
              "ADDTS b 6 downlink sta1 96000 120\n"
              "DELTS a\n")
    body = client.post(f"/api/admission/sessions/{session}/replay",
                       json={"events": events}).json()
    assert [d["verdict"] for d in body["decisions"]] == ["admit", "admit",
                                                         "delete"]
    assert body["csv"].splitlines()[0] == "tsid,decision,max_rho,binding_tc"


def test_admission_replay_rejects_malformed_line(client):
    session = client.post("/api/admission/sessions",
                          json={"scenario": {"stations": []}}).json()["session_id"]
    response = client.post(f"/api/admission/sessions/{session}/replay",
                           json={"events": "ADDTS broken\n"})
    assert response.status_code == 422
    assert "line 1" in response.json()["detail"]
