import json
import threading
from concurrent.futures import ThreadPoolExecutor

import pytest
import requests

from pbos.seeding import derive_rng
from pbos.service import SessionService, make_server

FCW_BODY = {
    "prior": {"mu": 0.405465, "n_scale": 5, "var_param": 0.5, "v_scale": 1},
    "config": {"cil_threshold": 0.30, "tl": 0.4, "n_min": 10, "n_max": 50,
               "rehearsal": {"m": 80}},
    "seed": 2024,
}


@pytest.fixture()
def service(tmp_path):
    return SessionService(tmp_path / "sessions")


@pytest.fixture()
def server(service):
    httpd = make_server(service)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{httpd.server_address[1]}"
    yield base
    httpd.shutdown()
    httpd.server_close()


class TestHttpSurface:
    def test_healthz(self, server):
        resp = requests.get(f"{server}/healthz")
        assert resp.status_code == 200
        assert resp.json() == {"status": "ok"}

    def test_create_and_get(self, server):
        resp = requests.post(f"{server}/sessions", json=FCW_BODY)
        assert resp.status_code == 201
        snap = resp.json()
        assert snap["status"] == "running"
        assert snap["count"] == 0
        assert snap["config"]["cil_threshold"] == 0.30
        got = requests.get(f"{server}/sessions/{snap['id']}").json()
        assert got == snap

    def test_validation_errors_name_fields(self, server):
        bad = json.loads(json.dumps(FCW_BODY))
        bad["config"]["tl"] = 1.5
        resp = requests.post(f"{server}/sessions", json=bad)
        assert resp.status_code == 400
        assert any("tl" in err["message"] or err["field"].startswith("config") for err in resp.json()["errors"])

        bad = json.loads(json.dumps(FCW_BODY))
        bad["config"]["n_min"] = 60
        resp = requests.post(f"{server}/sessions", json=bad)
        assert resp.status_code == 400

        bad = json.loads(json.dumps(FCW_BODY))
        del bad["config"]["cil_threshold"]
        resp = requests.post(f"{server}/sessions", json=bad)
        assert resp.status_code == 400
        assert any(err["field"] == "config.cil_threshold" for err in resp.json()["errors"])

    def test_unknown_session_404(self, server):
        assert requests.get(f"{server}/sessions/deadbeef").status_code == 404

    def test_unknown_route_404(self, server):
        assert requests.get(f"{server}/nope").status_code == 404

    def test_observations_and_decision(self, server):
        sid = requests.post(f"{server}/sessions", json=FCW_BODY).json()["id"]
        values = list(derive_rng(5, 0).normal(0.0, 0.4, 9))
        resp = requests.post(f"{server}/sessions/{sid}/observations", json={"values": values})
        assert resp.status_code == 200
        body = resp.json()
        assert body["decision"]["kind"] == "continue"
        assert body["session"]["count"] == 9
        # predictions accumulate from reg_min_count on, even below n_min
        assert body["decision"]["prediction"] is not None
        assert body["session"]["prediction"]["at_count"] == 9

    def test_non_finite_rejected(self, server):
        sid = requests.post(f"{server}/sessions", json=FCW_BODY).json()["id"]
        resp = requests.post(f"{server}/sessions/{sid}/observations", json={"values": [1.0, "x"]})
        assert resp.status_code == 400

    def test_stopped_session_conflicts(self, server):
        sid = requests.post(f"{server}/sessions", json=FCW_BODY).json()["id"]
        # constant observations drive the CIL to target quickly
        values = [0.3] * 30
        resp = requests.post(f"{server}/sessions/{sid}/observations", json={"values": values})
        assert resp.json()["session"]["status"] == "stopped"
        resp = requests.post(f"{server}/sessions/{sid}/observations", json={"values": [0.1]})
        assert resp.status_code == 409

    def test_batched_entry_equals_single_steps(self, server):
        values = list(derive_rng(6, 0).normal(0.0, 0.4, 15))
        sid_a = requests.post(f"{server}/sessions", json=FCW_BODY).json()["id"]
        resp_a = requests.post(f"{server}/sessions/{sid_a}/observations", json={"values": values})
        sid_b = requests.post(f"{server}/sessions", json=FCW_BODY).json()["id"]
        for v in values:
            resp_b = requests.post(f"{server}/sessions/{sid_b}/observations", json={"values": [v]})
        a = resp_a.json()
        b = resp_b.json()
        assert a["decision"] == b["decision"]
        assert a["session"]["trajectory"] == b["session"]["trajectory"]
        assert a["session"]["state_hash"] == b["session"]["state_hash"]

    def test_list_sessions(self, server):
        ids = [requests.post(f"{server}/sessions", json=FCW_BODY).json()["id"] for _ in range(3)]
        listed = requests.get(f"{server}/sessions").json()["sessions"]
        assert [s["id"] for s in listed] == ids


class TestWhatIf:
    def _session_at(self, server, count):
        sid = requests.post(f"{server}/sessions", json=FCW_BODY).json()["id"]
        values = list(derive_rng(7, 0).normal(0.0, 0.4, count))
        requests.post(f"{server}/sessions/{sid}/observations", json={"values": values})
        return sid

    def test_requires_prediction(self, server):
        sid = self._session_at(server, 3)
        resp = requests.post(f"{server}/sessions/{sid}/what-if", json={"tl": 0.2})
        assert resp.status_code == 412
        assert "n_min" in resp.json()["error"]

    def test_zero_tolerance_never_futility(self, server):
        sid = self._session_at(server, 12)
        resp = requests.post(f"{server}/sessions/{sid}/what-if", json={"tl": 0.0})
        assert resp.status_code == 200
        assert resp.json()["kind"] == "continue"

    def test_huge_threshold_certain_success(self, server):
        sid = self._session_at(server, 12)
        resp = requests.post(f"{server}/sessions/{sid}/what-if", json={"cil_threshold": 1e9})
        body = resp.json()
        assert body["kind"] == "continue"
        assert body["success_prob"] == 1.0

    def test_pure_and_repeatable(self, server):
        sid = self._session_at(server, 12)
        before = requests.get(f"{server}/sessions/{sid}").json()["state_hash"]
        responses = [
            requests.post(f"{server}/sessions/{sid}/what-if", json={"tl": round(0.05 * i, 2)}).json()
            for i in range(20)
        ]
        after = requests.get(f"{server}/sessions/{sid}").json()["state_hash"]
        assert before == after
        again = requests.post(f"{server}/sessions/{sid}/what-if", json={"tl": 0.5}).json()
        assert again == requests.post(f"{server}/sessions/{sid}/what-if", json={"tl": 0.5}).json()

    def test_unknown_override_rejected(self, server):
        sid = self._session_at(server, 12)
        resp = requests.post(f"{server}/sessions/{sid}/what-if", json={"n_min": 5})
        assert resp.status_code == 400


class TestPersistence:
    def test_replay_reproduces_state(self, tmp_path):
        data_dir = tmp_path / "sessions"
        svc = SessionService(data_dir)
        created = svc.create_session(FCW_BODY)
        sid = created["id"]
        values = list(derive_rng(8, 0).normal(0.0, 0.4, 14))
        svc.add_observations(sid, {"values": values[:6]})
        svc.add_observations(sid, {"values": values[6:]})
        original = svc.get_session(sid)

        replayed = SessionService(data_dir).get_session(sid)
        assert json.dumps(replayed, sort_keys=True) == json.dumps(original, sort_keys=True)

    def test_log_is_append_only_ndjson(self, tmp_path):
        data_dir = tmp_path / "sessions"
        svc = SessionService(data_dir)
        sid = svc.create_session(FCW_BODY)["id"]
        svc.add_observations(sid, {"values": [0.1, 0.2]})
        lines = (data_dir / f"{sid}.ndjson").read_text().splitlines()
        events = [json.loads(line) for line in lines]
        assert events[0]["event"] == "created"
        assert events[1] == {"event": "observations", "values": [0.1, 0.2]}

    def test_concurrent_observations_serialized(self, server):
        body = json.loads(json.dumps(FCW_BODY))
        body["config"].update({"n_min": 150, "n_max": 150})
        body["config"]["rehearsal"] = {"m": 10, "sizes": [150]}
        body["config"]["reg_min_count"] = 150
        sid = requests.post(f"{server}/sessions", json=body).json()["id"]

        def push(i):
            return requests.post(
                f"{server}/sessions/{sid}/observations", json={"values": [float(i)]}
            ).status_code

        with ThreadPoolExecutor(max_workers=16) as pool:
            codes = list(pool.map(push, range(100)))
        assert codes == [200] * 100
        snap = requests.get(f"{server}/sessions/{sid}").json()
        assert snap["count"] == 100
        assert [i for i, _ in snap["trajectory"]] == list(range(1, 101))
