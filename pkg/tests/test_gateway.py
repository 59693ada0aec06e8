"""Gateway contract tests against a live in-process service with the mock
backend: endpoint schemas, error codes, GET idempotency, propose purity,
WebSocket event stream."""

import base64
import io as _io
import json
import zipfile

import numpy as np
import pytest
from fastapi.testclient import TestClient

from scenefuse import io as sfio
from scenefuse.gateway import create_app
from scenefuse.geometry import pose_from_yaw_pitch

N = 48
PITCH = 0.55


def pose_doc(k=0):
    p = pose_from_yaw_pitch(np.deg2rad(15.0 * k), PITCH)
    return {"rotation": p.rotation.tolist(), "translation": p.translation.tolist()}


def session_body(seed=13, envmap=True):
    return {
        "config": {
            "intrinsics": {"fx": 60.0, "fy": 60.0, "cx": N / 2, "cy": N / 2,
                           "width": N, "height": N},
            "backend": {"kind": "mock",
                        "world": {"seed": seed, "terrain_amplitude": 0.45},
                        "depth_perturb": {"alpha": 2.0, "beta": 0.01}},
            "align": {"blur_sigma": 3.0, "dilation_radius": 3},
            "envmap": {"enabled": envmap, "width": 512, "height": 256},
        },
        "first": {"prompt": "terrain", "seed": 5},
        "first_pose": pose_doc(0),
    }


@pytest.fixture()
def client(tmp_path):
    app = create_app(data_dir=tmp_path / "gw")
    with TestClient(app) as c:
        yield c


@pytest.fixture()
def sid(client):
    r = client.post("/sessions", json=session_body())
    assert r.status_code == 201
    return r.json()["id"]


class TestEndpoints:
    def test_healthz(self, client):
        r = client.get("/healthz")
        assert r.status_code == 200 and r.json() == {"status": "ok"}

    def test_create_session_schema(self, client):
        r = client.post("/sessions", json=session_body())
        assert r.status_code == 201
        doc = r.json()
        assert set(doc) == {"id", "summary"}
        assert doc["summary"]["steps"] == 1
        assert doc["summary"]["mesh"]["anomaly_count"] == 0

    def test_summary_schema(self, client, sid):
        doc = client.get(f"/sessions/{sid}").json()
        assert set(doc) == {"steps", "pending", "mesh", "envmap", "state_hash"}
        assert set(doc["mesh"]) == {"vertex_count", "face_count", "bbox_min",
                                    "bbox_max", "anomaly_count"}

    def test_unknown_session_404(self, client):
        r = client.get("/sessions/not-a-session")
        assert r.status_code == 404
        assert r.json()["code"] == "not_found"

    def test_render_returns_png_and_coverage(self, client, sid):
        r = client.post(f"/sessions/{sid}/render", json={"pose": pose_doc(0)})
        assert r.status_code == 200
        assert r.headers["content-type"] == "image/png"
        coverage = float(r.headers["x-mask-coverage"])
        assert 0.0 <= coverage <= 1.0
        image = sfio.decode_png_bytes(r.content)
        assert image.shape == (N, N, 3)

    def test_malformed_pose_is_bad_pose(self, client, sid):
        r = client.post(f"/sessions/{sid}/render",
                        json={"pose": {"rotation": [[1, 0], [0, 1]],
                                       "translation": [0, 0, 0]}})
        assert r.status_code == 400
        assert r.json()["code"] == "bad_pose"
        r = client.post(f"/sessions/{sid}/propose",
                        json={"pose": None, "prompt": "x", "seed": 1})
        assert r.status_code == 400
        assert r.json()["code"] == "bad_pose"

    def test_propose_schema_and_purity(self, client, sid):
        before = client.get(f"/sessions/{sid}").json()["state_hash"]
        r = client.post(f"/sessions/{sid}/propose",
                        json={"pose": pose_doc(1), "prompt": "terrain", "seed": 6})
        assert r.status_code == 200
        doc = r.json()
        assert set(doc) == {"preview_id", "image_png_b64", "diagnostics"}
        image = sfio.decode_png_bytes(base64.b64decode(doc["image_png_b64"]))
        assert image.shape == (N, N, 3)
        assert "alignment" in doc["diagnostics"]
        after = client.get(f"/sessions/{sid}").json()["state_hash"]
        assert after == before  # propose is pure
        client.post(f"/sessions/{sid}/reject")

    def test_reject_restores_pre_propose_hash(self, client, sid):
        before = client.get(f"/sessions/{sid}").json()["state_hash"]
        client.post(f"/sessions/{sid}/propose",
                    json={"pose": pose_doc(1), "prompt": "terrain", "seed": 6})
        r = client.post(f"/sessions/{sid}/reject")
        assert r.status_code == 200
        assert client.get(f"/sessions/{sid}").json()["state_hash"] == before

    def test_commit_updates_summary(self, client, sid):
        client.post(f"/sessions/{sid}/propose",
                    json={"pose": pose_doc(1), "prompt": "terrain", "seed": 6})
        r = client.post(f"/sessions/{sid}/commit")
        assert r.status_code == 200
        assert r.json()["steps"] == 2
        assert r.json()["pending"] is False

    def test_commit_without_preview_conflicts(self, client, sid):
        r = client.post(f"/sessions/{sid}/commit")
        assert r.status_code == 409
        assert r.json()["code"] == "no_pending"

    def test_second_propose_conflicts(self, client, sid):
        client.post(f"/sessions/{sid}/propose",
                    json={"pose": pose_doc(1), "prompt": "t", "seed": 6})
        r = client.post(f"/sessions/{sid}/propose",
                        json={"pose": pose_doc(2), "prompt": "t", "seed": 7})
        assert r.status_code == 409
        assert r.json()["code"] == "pending_exists"

    def test_undo_cycle(self, client, sid):
        before = client.get(f"/sessions/{sid}").json()["state_hash"]
        client.post(f"/sessions/{sid}/propose",
                    json={"pose": pose_doc(1), "prompt": "t", "seed": 6})
        client.post(f"/sessions/{sid}/commit")
        r = client.post(f"/sessions/{sid}/undo")
        assert r.status_code == 200 and r.json()["steps"] == 1
        assert client.get(f"/sessions/{sid}").json()["state_hash"] == before
        r = client.post(f"/sessions/{sid}/undo")
        assert r.status_code == 409 and r.json()["code"] == "nothing_to_undo"

    def test_get_endpoints_idempotent(self, client, sid):
        h1 = client.get(f"/sessions/{sid}").json()["state_hash"]
        client.get(f"/sessions/{sid}/export?what=ply")
        client.post(f"/sessions/{sid}/render", json={"pose": pose_doc(2)})
        h2 = client.get(f"/sessions/{sid}").json()["state_hash"]
        assert h1 == h2

    def test_export_zip_contents(self, client, sid):
        r = client.get(f"/sessions/{sid}/export?what=ply")
        assert r.status_code == 200
        assert r.headers["content-type"] == "application/zip"
        zf = zipfile.ZipFile(_io.BytesIO(r.content))
        assert "mesh.ply" in zf.namelist()
        r = client.get(f"/sessions/{sid}/export?what=trajectory")
        zf = zipfile.ZipFile(_io.BytesIO(r.content))
        doc = json.loads(zf.read("trajectory.json"))
        assert len(doc["frames"]) == 1
        r = client.get(f"/sessions/{sid}/export?what=bogus")
        assert r.status_code == 400

    def test_selection_box_out_of_bounds(self, client, sid):
        r = client.post(f"/sessions/{sid}/propose",
                        json={"pose": pose_doc(1), "prompt": "t", "seed": 6,
                              "selection_box": [0, 0, N * 2, N]})
        assert r.status_code == 400

    def test_bad_condition_kind(self, client, sid):
        r = client.post(f"/sessions/{sid}/propose",
                        json={"pose": pose_doc(1), "prompt": "t", "seed": 6,
                              "conditions": [{"kind": "sketch", "image_png": ""}]})
        assert r.status_code == 400
        assert r.json()["code"] == "bad_condition"

    def test_bad_config_rejected(self, client):
        body = session_body()
        del body["config"]["intrinsics"]
        r = client.post("/sessions", json=body)
        assert r.status_code == 400
        assert r.json()["code"] == "bad_config"


class TestWebSocket:
    def test_event_stream_order(self, client, sid):
        with client.websocket_connect(f"/sessions/{sid}/events") as ws:
            client.post(f"/sessions/{sid}/propose",
                        json={"pose": pose_doc(1), "prompt": "t", "seed": 6})
            first = json.loads(ws.receive_text())
            second = json.loads(ws.receive_text())
            assert first["type"] == "progress"
            assert second["type"] == "preview_ready"
            assert "preview_id" in second["payload"]
            client.post(f"/sessions/{sid}/commit")
            third = json.loads(ws.receive_text())
            assert third["type"] == "committed"
            assert third["payload"]["summary"]["steps"] == 2

    def test_unknown_session_socket_closes(self, client):
        with pytest.raises(Exception):
            with client.websocket_connect("/sessions/nope/events") as ws:
                ws.receive_text()


class TestConcurrency:
    def test_render_while_pending_preview(self, client, sid):
        client.post(f"/sessions/{sid}/propose",
                    json={"pose": pose_doc(1), "prompt": "t", "seed": 6})
        r = client.post(f"/sessions/{sid}/render", json={"pose": pose_doc(0)})
        assert r.status_code == 200
        client.post(f"/sessions/{sid}/reject")

    def test_sessions_are_isolated(self, client):
        a = client.post("/sessions", json=session_body(seed=1)).json()["id"]
        b = client.post("/sessions", json=session_body(seed=2)).json()["id"]
        ha = client.get(f"/sessions/{a}").json()["state_hash"]
        hb = client.get(f"/sessions/{b}").json()["state_hash"]
        assert ha != hb
        client.post(f"/sessions/{a}/propose",
                    json={"pose": pose_doc(1), "prompt": "t", "seed": 6})
        assert client.get(f"/sessions/{b}").json()["state_hash"] == hb
        client.post(f"/sessions/{a}/reject")
