"""HTTP session service: serves a trained agent as a live adaptive
questionnaire. The respondent answers one question at a time; the masked
greedy policy picks each next question and eventually returns its prediction.

Masking is mandatory here even though training defaults to penalties: a live
respondent must never be able to trigger a penalty branch.

Endpoints (JSON bodies):
    GET    /healthz                      -> 200 {"status": "ok"}
    GET    /v1/models                    -> 200 [{model_id, kind, kmax, features}]
    POST   /v1/sessions {model_id}       -> 201 {session_id, question | prediction}
    POST   /v1/sessions/{id}/answer {choice}
                                         -> 200 {question} | {prediction}
    GET    /v1/sessions/{id}            -> 200 session snapshot
    DELETE /v1/sessions/{id}            -> 204 (idempotent)
"""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from fastapi import FastAPI, HTTPException, Response
from pydantic import BaseModel

from .modelio import ModelBundle, load_model

DEFAULT_TTL_SECONDS = 30 * 60
MODEL_SUFFIX = ".sqm"


class CreateSessionRequest(BaseModel):
    model_id: str


class AnswerRequest(BaseModel):
    choice: int


@dataclass
class Session:
    id: str
    model_id: str
    bundle: ModelBundle
    answered: dict[int, int] = field(default_factory=dict)
    queries_made: int = 0
    status: str = "awaiting-answer"  # awaiting-answer | finished
    pending_feature: int | None = None
    history: list[dict] = field(default_factory=list)
    result: dict | None = None
    touched: float = field(default_factory=time.monotonic)
    lock: threading.Lock = field(default_factory=threading.Lock)


def load_model_dir(path: str | Path) -> dict[str, ModelBundle]:
    """Load every *.sqm bundle in a directory, keyed by file stem."""
    path = Path(path)
    models = {}
    for file in sorted(path.glob(f"*{MODEL_SUFFIX}")):
        models[file.stem] = load_model(file)
    return models


def _question_payload(bundle: ModelBundle, feature: int) -> dict:
    schema = bundle.schema[feature]
    return {
        "feature": schema.name,
        "feature_index": feature,
        "prompt": schema.prompt,
        "choices": list(schema.choice_labels),
    }


def _advance(session: Session) -> dict:
    """Run the greedy policy until it needs an answer or predicts.

    Returns the response body fragment: {"question": ...} or {"prediction": ...}.
    """
    bundle = session.bundle
    policy = bundle.policy(masked=True)
    action = policy.act(session.answered, session.queries_made)
    if action.kind == "query":
        feature = bundle.env.allowed_features[action.index]
        session.pending_feature = feature
        session.status = "awaiting-answer"
        return {"question": _question_payload(bundle, feature)}
    scores = policy.prediction_scores(session.answered)
    session.status = "finished"
    session.pending_feature = None
    session.result = {
        "class": action.index,
        "label": bundle.class_labels[action.index],
        "q_values": [float(v) for v in scores],
        "queries_used": session.queries_made,
    }
    return {"prediction": session.result}


class SessionStore:
    """In-memory sessions with a TTL, purged lazily on access.

    The registry lock guards the map; each session carries its own lock so
    handlers for distinct sessions run fully in parallel.
    """

    def __init__(self, ttl_seconds: float = DEFAULT_TTL_SECONDS):
        self.ttl = ttl_seconds
        self._sessions: dict[str, Session] = {}
        self._registry_lock = threading.Lock()

    def _purge_expired(self) -> None:
        now = time.monotonic()
        stale = [sid for sid, s in self._sessions.items()
                 if now - s.touched > self.ttl]
        for sid in stale:
            self._sessions.pop(sid, None)

    def create(self, model_id: str, bundle: ModelBundle) -> Session:
        session = Session(id=uuid.uuid4().hex, model_id=model_id, bundle=bundle)
        with self._registry_lock:
            self._purge_expired()
            self._sessions[session.id] = session
        return session

    def get(self, session_id: str) -> Session:
        with self._registry_lock:
            self._purge_expired()
            session = self._sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail="unknown session")
        session.touched = time.monotonic()
        return session

    def delete(self, session_id: str) -> None:
        with self._registry_lock:
            self._sessions.pop(session_id, None)


def _snapshot(session: Session) -> dict:
    body = {
        "session_id": session.id,
        "model_id": session.model_id,
        "status": session.status,
        "queries_used": session.queries_made,
        "history": list(session.history),
    }
    if session.status == "finished":
        body["prediction"] = session.result
    elif session.pending_feature is not None:
        body["question"] = _question_payload(session.bundle, session.pending_feature)
    return body


def create_app(models: Mapping[str, ModelBundle],
               ttl_seconds: float = DEFAULT_TTL_SECONDS,
               ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="surveyq", version="0.1.0")
    store = SessionStore(ttl_seconds=ttl_seconds)
    app.state.store = store

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.get("/v1/models")
    def list_models():
        return [
            {
                "model_id": model_id,
                "kind": bundle.kind,
                "kmax": bundle.env.kmax,
                "features": [f.name for f in bundle.schema],
                "class_labels": list(bundle.class_labels),
            }
            for model_id, bundle in sorted(models.items())
        ]

    @app.post("/v1/sessions", status_code=201)
    def create_session(body: CreateSessionRequest):
        bundle = models.get(body.model_id)
        if bundle is None:
            raise HTTPException(status_code=404, detail=f"unknown model {body.model_id!r}")
        session = store.create(body.model_id, bundle)
        with session.lock:
            fragment = _advance(session)
        return {"session_id": session.id, **fragment}

    @app.post("/v1/sessions/{session_id}/answer")
    def submit_answer(session_id: str, body: AnswerRequest):
        session = store.get(session_id)
        with session.lock:
            if session.status == "finished":
                raise HTTPException(status_code=409, detail="session already finished")
            feature = session.pending_feature
            schema = session.bundle.schema[feature]
            if not 0 <= body.choice < schema.num_categories:
                raise HTTPException(
                    status_code=400,
                    detail=f"choice {body.choice} out of range for "
                           f"{schema.name!r} ({schema.num_categories} choices)",
                )
            session.answered[feature] = body.choice
            session.queries_made += 1
            session.history.append({
                "feature": schema.name,
                "feature_index": feature,
                "prompt": schema.prompt,
                "choice": body.choice,
                "choice_label": schema.choice_labels[body.choice],
            })
            return _advance(session)

    @app.get("/v1/sessions/{session_id}")
    def get_session(session_id: str):
        session = store.get(session_id)
        with session.lock:
            return _snapshot(session)

    @app.delete("/v1/sessions/{session_id}", status_code=204)
    def delete_session(session_id: str):
        store.delete(session_id)
        return Response(status_code=204)

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
