"""HTTP session service: endpoint contract, isolation, eviction, replay."""

import numpy as np
import pytest
from fastapi.testclient import TestClient

from dialogan.autodiff import RandomStream
from dialogan.corpus import generate_corpus, tokenize
from dialogan.inference import InferenceConfig, advance_with_text, commit_utterance
from dialogan.model import parameter_hash
from dialogan.service import create_app

from helpers import make_tiny_model


def _make_model():
    corpus = generate_corpus(5, RandomStream(0))
    tokens = sorted({t for d in corpus for u in d.utterances for t in u})
    return make_tiny_model(tokens=tuple(tokens))


@pytest.fixture
def service():
    model = _make_model()
    cfg = InferenceConfig(num_candidates=3, alpha=2.0, max_len=5)
    app = create_app(model, base_config=cfg, seed=1)
    with TestClient(app) as client:
        yield client, model, app


def _new_session(client, **body):
    resp = client.post("/sessions", json=body) if body else client.post("/sessions")
    assert resp.status_code == 200
    return resp.json()["id"]


class TestSessionLifecycle:
    def test_create_returns_id_and_empty_transcript(self, service):
        client, _, _ = service
        sid = _new_session(client)
        got = client.get(f"/sessions/{sid}")
        assert got.status_code == 200
        body = got.json()
        assert body["session_id"] == sid
        assert body["transcript"] == []
        assert body["pending"] == []

    def test_two_sessions_get_distinct_ids(self, service):
        client, _, _ = service
        assert _new_session(client) != _new_session(client)

    def test_delete_then_get_is_404(self, service):
        client, _, _ = service
        sid = _new_session(client)
        assert client.delete(f"/sessions/{sid}").status_code == 200
        assert client.get(f"/sessions/{sid}").status_code == 404

    def test_unknown_session_404_everywhere(self, service):
        client, _, _ = service
        assert client.get("/sessions/nope").status_code == 404
        assert client.delete("/sessions/nope").status_code == 404
        assert client.post("/sessions/nope/messages",
                           json={"text": "hi"}).status_code == 404
        assert client.post("/sessions/nope/commit",
                           json={"rank": 0}).status_code == 404


class TestMessages:
    def test_candidate_count_and_sort_order(self, service):
        client, _, _ = service
        sid = _new_session(client)
        resp = client.post(f"/sessions/{sid}/messages",
                           json={"text": "where is the big book ?", "L": 4})
        assert resp.status_code == 200
        body = resp.json()
        assert body["session_id"] == sid
        cands = body["candidates"]
        assert len(cands) == 4
        assert [c["rank"] for c in cands] == [0, 1, 2, 3]
        scores = [c["d_score"] for c in cands]
        assert scores == sorted(scores, reverse=True)

    def test_malformed_bodies_are_400(self, service):
        client, _, _ = service
        sid = _new_session(client)
        url = f"/sessions/{sid}/messages"
        assert client.post(url, json={}).status_code == 400
        assert client.post(url, json={"text": 5}).status_code == 400
        assert client.post(url, content=b"{not json",
                           headers={"content-type": "application/json"}
                           ).status_code == 400
        assert client.post(f"/sessions/{sid}/commit",
                           json={"rank": "zero"}).status_code == 400

    def test_empty_utterance_rejected_as_422(self, service):
        client, _, _ = service
        sid = _new_session(client)
        resp = client.post(f"/sessions/{sid}/messages", json={"text": "   "})
        assert resp.status_code == 422

    def test_bad_alpha_override_rejected_as_422(self, service):
        client, _, _ = service
        sid = _new_session(client)
        resp = client.post(f"/sessions/{sid}/messages",
                           json={"text": "hi", "alpha": 0.2})
        assert resp.status_code == 422

    def test_session_default_overrides_apply(self, service):
        client, _, _ = service
        sid = _new_session(client, L=2)
        resp = client.post(f"/sessions/{sid}/messages", json={"text": "hello"})
        assert len(resp.json()["candidates"]) == 2


class TestCommit:
    def test_commit_rank_two_lands_in_transcript(self, service):
        client, _, _ = service
        sid = _new_session(client)
        cands = client.post(f"/sessions/{sid}/messages",
                            json={"text": "where is the red pen ?"}
                            ).json()["candidates"]
        resp = client.post(f"/sessions/{sid}/commit", json={"rank": 2})
        assert resp.status_code == 200
        transcript = client.get(f"/sessions/{sid}").json()["transcript"]
        last = transcript[-1]
        assert (last["speaker"], last["text"], last["rank"]) == (
            "model", cands[2]["text"], 2)
        assert client.get(f"/sessions/{sid}").json()["pending"] == []

    def test_rank_out_of_range_is_422(self, service):
        client, _, _ = service
        sid = _new_session(client)
        client.post(f"/sessions/{sid}/messages", json={"text": "hi"})
        assert client.post(f"/sessions/{sid}/commit",
                           json={"rank": 3}).status_code == 422
        assert client.post(f"/sessions/{sid}/commit",
                           json={"rank": -1}).status_code == 422

    def test_commit_without_pending_is_422(self, service):
        client, _, _ = service
        sid = _new_session(client)
        assert client.post(f"/sessions/{sid}/commit",
                           json={"rank": 0}).status_code == 422

    def test_double_commit_is_422(self, service):
        client, _, _ = service
        sid = _new_session(client)
        client.post(f"/sessions/{sid}/messages", json={"text": "hi"})
        assert client.post(f"/sessions/{sid}/commit",
                           json={"rank": 0}).status_code == 200
        assert client.post(f"/sessions/{sid}/commit",
                           json={"rank": 0}).status_code == 422

    def test_new_message_auto_commits_stale_pending(self, service):
        client, _, _ = service
        sid = _new_session(client)
        first = client.post(f"/sessions/{sid}/messages",
                            json={"text": "hello there"}).json()["candidates"]
        client.post(f"/sessions/{sid}/messages", json={"text": "and now ?"})
        transcript = client.get(f"/sessions/{sid}").json()["transcript"]
        assert [e["speaker"] for e in transcript] == ["human", "model", "human"]
        assert (transcript[1]["text"], transcript[1]["rank"]) == (
            first[0]["text"], 0)


class TestIsolationAndInvariants:
    def test_interleaved_sessions_stay_independent(self, service):
        client, _, _ = service
        a, b = _new_session(client), _new_session(client)
        client.post(f"/sessions/{a}/messages",
                    json={"text": "where is the big book ?"})
        client.post(f"/sessions/{b}/messages",
                    json={"text": "the old map is in the shed ."})
        client.post(f"/sessions/{a}/commit", json={"rank": 1})
        client.post(f"/sessions/{b}/commit", json={"rank": 0})
        ta = client.get(f"/sessions/{a}").json()["transcript"]
        tb = client.get(f"/sessions/{b}").json()["transcript"]
        assert ta[0]["text"] == "where is the big book ?"
        assert tb[0]["text"] == "the old map is in the shed ."
        assert ta[1]["rank"] == 1 and tb[1]["rank"] == 0

    def test_parameter_hash_stable_across_traffic(self, service):
        client, model, _ = service
        before = parameter_hash(model)
        for i in range(3):
            sid = _new_session(client)
            client.post(f"/sessions/{sid}/messages",
                        json={"text": f"message {i} here"})
            client.post(f"/sessions/{sid}/commit", json={"rank": 0})
        assert parameter_hash(model) == before

    def test_session_state_equals_transcript_replay(self, service):
        client, model, app = service
        sid = _new_session(client)
        client.post(f"/sessions/{sid}/messages",
                    json={"text": "where is the new cup ?"})
        client.post(f"/sessions/{sid}/commit", json={"rank": 2})
        client.post(f"/sessions/{sid}/messages", json={"text": "and the key ?"})
        client.post(f"/sessions/{sid}/commit", json={"rank": 0})
        transcript = client.get(f"/sessions/{sid}").json()["transcript"]

        replayed = model.generator.initial_state(1)
        for entry in transcript:
            replayed = commit_utterance(model, replayed, entry["token_ids"])
        live = app.state.sessions[sid].state
        assert np.array_equal(replayed.context_top.data, live.context_top.data)
        # text-level replay agrees too when no unknown-word placeholder appears
        retext = model.generator.initial_state(1)
        for entry in transcript:
            if entry["speaker"] == "human":
                retext = advance_with_text(model, retext, entry["text"])
            else:
                ids = model.vocab.encode(tokenize(entry["text"]))
                retext = commit_utterance(model, retext, ids)
        if all(1 not in e["token_ids"] for e in transcript):
            assert np.array_equal(retext.context_top.data, live.context_top.data)


class TestEviction:
    def test_idle_sessions_evicted_after_ttl(self):
        model = _make_model()
        now = {"t": 0.0}
        app = create_app(model, base_config=InferenceConfig(num_candidates=2,
                                                            alpha=2.0, max_len=4),
                         ttl_seconds=100.0, clock=lambda: now["t"])
        with TestClient(app) as client:
            old = _new_session(client)
            now["t"] = 50.0
            fresh = _new_session(client)
            assert client.get(f"/sessions/{old}").status_code == 200
            now["t"] = 149.0
            # creation sweeps the registry; `old` is idle > ttl, `fresh` is not
            _new_session(client)
            assert client.get(f"/sessions/{old}").status_code == 404
            assert client.get(f"/sessions/{fresh}").status_code == 200

    def test_activity_refreshes_ttl(self):
        model = _make_model()
        now = {"t": 0.0}
        app = create_app(model, base_config=InferenceConfig(num_candidates=2,
                                                            alpha=2.0, max_len=4),
                         ttl_seconds=100.0, clock=lambda: now["t"])
        with TestClient(app) as client:
            sid = _new_session(client)
            now["t"] = 90.0
            client.post(f"/sessions/{sid}/messages", json={"text": "hi"})
            now["t"] = 180.0
            _new_session(client)
            assert client.get(f"/sessions/{sid}").status_code == 200
