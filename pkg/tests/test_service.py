"""Service tests: session registry logic plus the HTTP surface."""
import json
import urllib.error
import urllib.request

import numpy as np
import pytest

from goalrec.corpus import Vocabulary
from goalrec.goals import GoalModel
from goalrec.neural import ModelConfig, NeuralRecommender
from goalrec.neural.network import init_parameters
from goalrec.service import RecommendationService, ServiceError, serve


def _fixture():
    vocab = Vocabulary()
    vocab.intern_software("open")
    vocab.intern_software("filter")
    for i in range(4):
        vocab.intern_data("c", f"x{i}")
    vocab.freeze()
    defs = np.asarray([[0.4, 0.3, 0.2, 0.1], [0.1, 0.2, 0.3, 0.4]])
    phi = np.zeros((2, len(vocab)))
    phi[:, vocab.dc_ids] = defs
    gm = GoalModel(v=len(vocab), k=2, alpha=1.0, beta=0.01, seed=0, phi=phi,
                   theta=np.array([0.5, 0.5]), dc_ids=vocab.dc_ids,
                   goal_defs=defs)
    mc = ModelConfig(vocab_size=len(vocab), dc_count=4, goal_count=2,
                     embed_dim=4, hidden_dim=5, encoder="lstm",
                     variant="vanilla", dropout_p=0.0, seed=0)
    model = NeuralRecommender(init_parameters(mc, np.random.default_rng(0)),
                              mc, vocab.dc_ids)
    return vocab, gm, model


class FakeClock:
    def __init__(self):
        self.now = 1000.0

    def __call__(self):
        return self.now


def _service(ttl=100.0, **kw):
    vocab, gm, model = _fixture()
    clock = FakeClock()
    svc = RecommendationService(gm, vocab, model, window=3, top_k=2,
                                ttl=ttl, clock=clock, **kw)
    return svc, clock, vocab


# ---------------------------------------------------------------- logic

def test_list_goals_previews_top_commands():
    svc, _, _ = _service()
    goals = svc.list_goals()
    assert [g["goal"] for g in goals] == [0, 1]
    assert goals[0]["label"] == "0"
    assert goals[0]["preview"][0] == "c::x0"  # highest goal-0 mass
    assert goals[1]["preview"][0] == "c::x3"


def test_create_session_cold_start_follows_goal_definition():
    svc, _, _ = _service()
    out = svc.create_session(1)
    assert len(out["session"]) == 32
    recs = out["recommendations"]
    assert [r["cmd"] for r in recs] == ["c::x3", "c::x2"]  # top_k=2
    assert recs[0]["p"] == pytest.approx(0.4)


def test_create_session_rejects_bad_goal():
    svc, _, _ = _service()
    for bad in (2, -1, True, "0", None):
        with pytest.raises(ServiceError) as err:
            svc.create_session(bad)
        assert err.value.status == 404


def test_post_command_tracks_window_and_ranks_by_model():
    svc, _, vocab = _service()
    sid = svc.create_session(0)["session"]
    out = None
    for i, tok in enumerate(["open", "c::x1", "filter", "c::x2", "open"]):
        out = svc.post_command(sid, tok)
        assert out["window_len"] == min(i + 1, 3)  # buffer capped at window
    # recommendations must equal the model's own stable ranking
    window = [vocab.get(t) or vocab.unknown for t in ["c::x2", "open"]]
    window = [vocab.get("filter"), vocab.get("c::x2"), vocab.get("open")]
    dist = svc.global_model.predict_dist(window, goal=0)
    order = np.argsort(-dist, kind="stable")[:2]
    want = [vocab.command(int(vocab.dc_ids[i])).token for i in order]
    assert [r["cmd"] for r in out["recommendations"]] == want


def test_post_command_interns_unknown_tokens():
    svc, _, _ = _service()
    sid = svc.create_session(0)["session"]
    out = svc.post_command(sid, "never-seen-before")
    assert out["window_len"] == 1


def test_post_command_validates():
    svc, _, _ = _service()
    sid = svc.create_session(0)["session"]
    with pytest.raises(ServiceError) as err:
        svc.post_command(sid, "")
    assert err.value.status == 400
    with pytest.raises(ServiceError) as err:
        svc.post_command("0" * 32, "open")
    assert err.value.status == 404


def test_session_expiry_uses_clock():
    svc, clock, _ = _service(ttl=50.0)
    sid = svc.create_session(0)["session"]
    clock.now += 49.0
    svc.post_command(sid, "open")  # touch refreshes the timer
    clock.now += 49.0
    svc.post_command(sid, "open")
    clock.now += 51.0
    with pytest.raises(ServiceError) as err:
        svc.post_command(sid, "open")
    assert err.value.status == 410
    # expired session is evicted: now unknown, not expired
    with pytest.raises(ServiceError) as err:
        svc.post_command(sid, "open")
    assert err.value.status == 404


def test_delete_session():
    svc, _, _ = _service()
    sid = svc.create_session(0)["session"]
    assert svc.delete_session(sid) == {"deleted": sid}
    with pytest.raises(ServiceError) as err:
        svc.delete_session(sid)
    assert err.value.status == 404


def test_finetuned_model_dispatch():
    vocab, gm, model = _fixture()
    calls = []

    class Probe:
        dc_ids = vocab.dc_ids

        def predict_dist(self, window, goal=None):
            calls.append(goal)
            return np.asarray([0.25, 0.25, 0.25, 0.25])

    svc = RecommendationService(gm, vocab, model, finetuned={1: Probe()},
                                window=3, top_k=2)
    sid = svc.create_session(1)["session"]
    svc.post_command(sid, "open")
    assert calls == [1]


# ---------------------------------------------------------------- http

def _request(base, method, path, payload=None):
    data = json.dumps(payload).encode() if payload is not None else None
    req = urllib.request.Request(base + path, data=data, method=method)
    if data:
        req.add_header("Content-Type", "application/json")
    try:
        with urllib.request.urlopen(req, timeout=10) as resp:
            return resp.status, json.loads(resp.read())
    except urllib.error.HTTPError as err:
        return err.code, json.loads(err.read())


@pytest.fixture()
def server(tmp_path):
    svc, _, _ = _service(ttl=1000.0)
    static = tmp_path / "static"
    static.mkdir()
    (static / "index.html").write_text("<html>console</html>")
    srv = serve(svc, host="127.0.0.1", port=0, static_dir=str(static))
    base = f"http://127.0.0.1:{srv.server_address[1]}"
    yield base
    srv.shutdown()
    srv.server_close()


def test_http_full_session_flow(server):
    status, goals = _request(server, "GET", "/goals")
    assert status == 200
    assert [g["goal"] for g in goals] == [0, 1]

    status, out = _request(server, "POST", "/sessions", {"goal": 0})
    assert status == 200
    sid = out["session"]
    assert len(out["recommendations"]) == 2

    status, out = _request(server, "POST", f"/sessions/{sid}/commands",
                           {"cmd": "open"})
    assert status == 200
    assert out["window_len"] == 1
    assert all(set(r) == {"cmd", "p"} for r in out["recommendations"])

    status, out = _request(server, "DELETE", f"/sessions/{sid}")
    assert status == 200
    status, out = _request(server, "DELETE", f"/sessions/{sid}")
    assert status == 404


def test_http_error_paths(server):
    status, out = _request(server, "POST", "/sessions", {"goal": 9})
    assert status == 404

    status, out = _request(server, "POST", "/sessions", {})
    assert status == 400
    assert "goal" in out["error"]

    status, out = _request(server, "POST", "/sessions")
    assert status == 400  # empty body

    status, out = _request(server, "POST", f"/sessions/{'0' * 32}/commands",
                           {"cmd": "open"})
    assert status == 404

    status, out = _request(server, "POST", f"/sessions/{'0' * 32}/commands",
                           {"nope": 1})
    assert status == 400

    status, _ = _request(server, "GET", "/definitely/not/there")
    assert status == 404


def test_http_serves_static_console(server):
    req = urllib.request.Request(server + "/", method="GET")
    with urllib.request.urlopen(req, timeout=10) as resp:
        assert resp.status == 200
        assert b"console" in resp.read()
    # path traversal is rejected
    req = urllib.request.Request(server + "/../run.ini", method="GET")
    try:
        with urllib.request.urlopen(req, timeout=10) as resp:
            assert resp.status in (200, 404)
            body = resp.read()
            assert b"console" in body or b"error" in body
    except urllib.error.HTTPError as err:
        assert err.code == 404
