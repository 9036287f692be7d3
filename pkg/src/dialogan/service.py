"""HTTP session service exposing ranked response generation to chat clients.

Sessions live in memory and hold a dialogue context plus the most recent
uncommitted candidate list. Committing is a separate call so a human (or
an auto-committing client) decides which response enters the history.
Model parameters are shared read-only state; each session serializes its
own requests with a lock. Idle sessions are evicted after a TTL.
"""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass, field, replace
from typing import Optional

from fastapi import FastAPI, HTTPException
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .autodiff import RandomStream
from .corpus import detokenize, tokenize
from .inference import (
    InferenceConfig,
    advance_with_text,
    commit_utterance,
    generate_candidates,
    rank_and_select,
)

__all__ = ["create_app", "Session"]

DEFAULT_TTL_SECONDS = 30 * 60.0


@dataclass
class Session:
    """One conversation: context state, committed turns, pending candidates."""

    id: str
    index: int
    state: object
    created: float
    updated: float
    lock: threading.Lock = field(default_factory=threading.Lock)
    transcript: list = field(default_factory=list)
    pending: Optional[list] = None
    message_count: int = 0


class _SessionBody(BaseModel):
    alpha: Optional[float] = None
    L: Optional[int] = None


class _MessageBody(BaseModel):
    text: str
    alpha: Optional[float] = None
    L: Optional[int] = None


class _CommitBody(BaseModel):
    rank: int


def create_app(model, base_config=None, seed=0, ttl_seconds=DEFAULT_TTL_SECONDS,
               clock=time.monotonic):
    """Build the chat service around a loaded model.

    base_config supplies defaults that per-session and per-message alpha/L
    override. clock is injectable so eviction is testable.
    """
    base = base_config or InferenceConfig()
    app = FastAPI(title="dialogan chat service")
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])

    sessions: dict[str, Session] = {}
    overrides: dict[str, dict] = {}
    registry_lock = threading.Lock()
    root = RandomStream(seed)
    counter = {"created": 0}

    app.state.model = model
    app.state.sessions = sessions

    @app.exception_handler(RequestValidationError)
    def _malformed(request, exc):
        return JSONResponse(status_code=400,
                            content={"detail": "malformed request body"})

    def evict_idle():
        now = clock()
        with registry_lock:
            for sid in [s for s, v in sessions.items()
                        if now - v.updated > ttl_seconds]:
                del sessions[sid]
                overrides.pop(sid, None)

    def get_session(sid):
        with registry_lock:
            sess = sessions.get(sid)
        if sess is None:
            raise HTTPException(status_code=404, detail=f"unknown session {sid}")
        return sess

    def effective_config(sid, alpha, num):
        merged = dict(overrides.get(sid, {}))
        if alpha is not None:
            merged["alpha"] = alpha
        if num is not None:
            merged["num_candidates"] = num
        try:
            return replace(base, **merged)
        except ValueError as e:
            raise HTTPException(status_code=422, detail=str(e)) from None

    def candidate_payload(cand):
        return {"text": detokenize(model.vocab.decode(cand.token_ids)),
                "d_score": cand.d_score, "log_prob": cand.log_prob,
                "rank": cand.rank}

    def commit_pending(sess, rank):
        cand = sess.pending[rank]
        sess.state = commit_utterance(model, sess.state, cand.token_ids)
        # token ids ride along so a transcript replay is exact even when
        # the text contains the unknown-word placeholder
        entry = {"speaker": "model",
                 "text": detokenize(model.vocab.decode(cand.token_ids)),
                 "rank": rank, "token_ids": list(cand.token_ids)}
        sess.transcript.append(entry)
        sess.pending = None
        return entry

    @app.post("/sessions")
    def create_session(body: Optional[_SessionBody] = None):
        evict_idle()
        sid = uuid.uuid4().hex
        now = clock()
        with registry_lock:
            index = counter["created"]
            counter["created"] += 1
            sessions[sid] = Session(sid, index, model.generator.initial_state(1),
                                    now, now)
            if body is not None:
                kv = {}
                if body.alpha is not None:
                    kv["alpha"] = body.alpha
                if body.L is not None:
                    kv["num_candidates"] = body.L
                if kv:
                    overrides[sid] = kv
        return {"id": sid}

    @app.post("/sessions/{sid}/messages")
    def post_message(sid: str, body: _MessageBody):
        evict_idle()
        sess = get_session(sid)
        cfg = effective_config(sid, body.alpha, body.L)
        with sess.lock:
            if sess.pending:
                # a new message arrived without an explicit pick: keep the
                # conversation coherent by committing the top candidate
                commit_pending(sess, 0)
            try:
                sess.state = advance_with_text(model, sess.state, body.text)
            except ValueError as e:
                raise HTTPException(status_code=422, detail=str(e)) from None
            sess.transcript.append({"speaker": "human", "text": body.text,
                                    "rank": None,
                                    "token_ids": model.vocab.encode(
                                        tokenize(body.text))})
            rng = root.derive("session", sess.index, "message",
                              sess.message_count)
            sess.message_count += 1
            decoded = generate_candidates(model, sess.state, cfg, rng)
            sess.pending = rank_and_select(model, sess.state, decoded, cfg)
            sess.updated = clock()
            return {"session_id": sess.id,
                    "candidates": [candidate_payload(c) for c in sess.pending]}

    @app.post("/sessions/{sid}/commit")
    def post_commit(sid: str, body: _CommitBody):
        sess = get_session(sid)
        with sess.lock:
            if not sess.pending:
                raise HTTPException(status_code=422,
                                    detail="no pending candidates to commit")
            if not 0 <= body.rank < len(sess.pending):
                raise HTTPException(
                    status_code=422,
                    detail=f"rank {body.rank} out of range for "
                           f"{len(sess.pending)} candidates")
            entry = commit_pending(sess, body.rank)
            sess.updated = clock()
            return {"session_id": sess.id, "committed": entry}

    @app.get("/sessions/{sid}")
    def get_transcript(sid: str):
        sess = get_session(sid)
        with sess.lock:
            return {"session_id": sess.id,
                    "transcript": list(sess.transcript),
                    "pending": [candidate_payload(c)
                                for c in (sess.pending or [])],
                    "created": sess.created, "updated": sess.updated}

    @app.delete("/sessions/{sid}")
    def delete_session(sid: str):
        with registry_lock:
            if sid not in sessions:
                raise HTTPException(status_code=404,
                                    detail=f"unknown session {sid}")
            del sessions[sid]
            overrides.pop(sid, None)
        return {"deleted": sid}

    return app
