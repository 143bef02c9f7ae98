import json
import threading
import urllib.error
import urllib.request

import pytest

from leafctl.model import dumps_json
from leafctl.service import make_server


@pytest.fixture
def server(tmp_path, bench_model):
    models_dir = tmp_path / "data" / "models"
    models_dir.mkdir(parents=True)
    (models_dir / "bench.json").write_text(dumps_json(bench_model))
    srv = make_server("127.0.0.1", 0, tmp_path / "data")
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{srv.server_address[1]}"
    srv.shutdown()
    srv.server_close()


def request(method, url, body=None):
    data = None if body is None else json.dumps(body).encode()
    req = urllib.request.Request(url, data=data, method=method,
                                 headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req) as resp:
            return resp.status, json.loads(resp.read().decode())
    except urllib.error.HTTPError as err:
        return err.code, json.loads(err.read().decode())


PLAN = {"n": 3, "target_k": 30.0, "repetitions": 5}


class TestSessionsApi:
    def test_empty_list(self, server):
        status, body = request("GET", f"{server}/api/sessions")
        assert status == 200 and body == []

    def test_create_and_fetch(self, server, bench_model):
        status, created = request("POST", f"{server}/api/sessions",
                                  {"plan": PLAN, "model": bench_model.to_dict()})
        assert status == 201
        assert created["next_decision"]["recommended_density"] == pytest.approx(17.705, abs=1e-3)
        status, fetched = request("GET", f"{server}/api/sessions/{created['id']}")
        assert status == 200 and fetched == created

    def test_create_by_model_name(self, server):
        status, created = request("POST", f"{server}/api/sessions",
                                  {"plan": PLAN, "model_name": "bench"})
        assert status == 201
        assert created["model"]["alpha"] == pytest.approx(0.3073)

    def test_measurement_flow(self, server, bench_model):
        _, created = request("POST", f"{server}/api/sessions",
                             {"plan": PLAN, "model": bench_model.to_dict()})
        status, updated = request(
            "POST", f"{server}/api/sessions/{created['id']}/measurements",
            {"values": [11.53]},
        )
        assert status == 200
        assert updated["belief"]["mean"] == pytest.approx(11.409806958999043, abs=1e-9)
        assert updated["next_decision"]["recommended_density"] == pytest.approx(15.411, abs=1e-3)

    def test_override_density(self, server, bench_model):
        _, created = request("POST", f"{server}/api/sessions",
                             {"plan": PLAN, "model": bench_model.to_dict()})
        status, updated = request(
            "POST", f"{server}/api/sessions/{created['id']}/override-density",
            {"applied": 20.0},
        )
        assert status == 200 and updated["status"] == "awaiting_measurement"
        _, after = request(
            "POST", f"{server}/api/sessions/{created['id']}/measurements",
            {"values": [11.53]},
        )
        assert after["history"][0]["applied_density"] == 20.0

    def test_delete(self, server, bench_model):
        _, created = request("POST", f"{server}/api/sessions",
                             {"plan": PLAN, "model": bench_model.to_dict()})
        status, _ = request("DELETE", f"{server}/api/sessions/{created['id']}")
        assert status == 200
        status, body = request("GET", f"{server}/api/sessions/{created['id']}")
        assert status == 404 and body["error"]["code"] == "UnknownSession"

    def test_trace_export(self, server, bench_model):
        _, created = request("POST", f"{server}/api/sessions",
                             {"plan": {**PLAN, "n": 1}, "model": bench_model.to_dict()})
        _, done = request("POST", f"{server}/api/sessions/{created['id']}/measurements",
                          {"values": [29.9]})
        assert done["status"] == "complete"
        status, trace = request("GET", f"{server}/api/sessions/{created['id']}/trace")
        assert status == 200
        assert trace["strategy"] == "filtered"
        assert trace["final_abs_error_pct"] == pytest.approx(abs(29.9 - 30.0) / 30.0 * 100)


class TestErrors:
    def test_invalid_plan_coded(self, server, bench_model):
        status, body = request("POST", f"{server}/api/sessions",
                               {"plan": {**PLAN, "target_k": 0.0},
                                "model": bench_model.to_dict()})
        assert status == 400 and body["error"]["code"] == "InvalidPlan"

    def test_infeasible_target_coded(self, server, bench_model):
        status, body = request("POST", f"{server}/api/sessions",
                               {"plan": {**PLAN, "target_k": 300.0},
                                "model": bench_model.to_dict()})
        assert status == 400 and body["error"]["code"] == "InfeasibleTarget"

    def test_empty_measurement_coded(self, server, bench_model):
        _, created = request("POST", f"{server}/api/sessions",
                             {"plan": PLAN, "model": bench_model.to_dict()})
        status, body = request(
            "POST", f"{server}/api/sessions/{created['id']}/measurements", {"values": []}
        )
        assert status == 400 and body["error"]["code"] == "EmptyMeasurement"

    def test_session_complete_coded(self, server, bench_model):
        _, created = request("POST", f"{server}/api/sessions",
                             {"plan": {**PLAN, "n": 1}, "model": bench_model.to_dict()})
        request("POST", f"{server}/api/sessions/{created['id']}/measurements",
                {"values": [30.0]})
        status, body = request(
            "POST", f"{server}/api/sessions/{created['id']}/measurements", {"values": [1.0]}
        )
        assert status == 409 and body["error"]["code"] == "SessionComplete"

    def test_unknown_session_404(self, server):
        status, body = request("GET", f"{server}/api/sessions/zzz")
        assert status == 404 and body["error"]["code"] == "UnknownSession"

    def test_unknown_model_name(self, server):
        status, body = request("POST", f"{server}/api/sessions",
                               {"plan": PLAN, "model_name": "missing"})
        assert status == 400


class TestModelsApi:
    def test_lists_calibrated_models(self, server):
        status, body = request("GET", f"{server}/api/models")
        assert status == 200
        assert [m["name"] for m in body] == ["bench"]
        assert body[0]["model"]["sigma_p"] == pytest.approx(1.0579)
