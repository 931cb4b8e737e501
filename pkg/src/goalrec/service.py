"""HTTP session service: pick a goal, stream commands, get live recommendations.

The logic lives in RecommendationService (plain object, easy to test); the
HTTP layer is a thin stdlib ThreadingHTTPServer wrapper around it.
"""
from __future__ import annotations

import json
import logging
import mimetypes
import os
import re
import secrets
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .corpus import Vocabulary
from .goals import GoalModel
from .neural import NeuralRecommender

log = logging.getLogger(__name__)

DEFAULT_TTL = 21600.0  # mirrors the six-hour session inactivity rule
DEFAULT_TOP_K = 5


class ServiceError(Exception):
    def __init__(self, message: str, status: int):
        super().__init__(message)
        self.status = status


@dataclass
class LiveSession:
    id: str
    goal: int
    buffer: list = field(default_factory=list)   # most recent <= W Commands
    created: float = 0.0
    touched: float = 0.0
    lock: threading.Lock = field(default_factory=threading.Lock)


class RecommendationService:
    """Session registry plus model dispatch; thread-safe per session."""

    def __init__(self, goal_model: GoalModel, vocabulary: Vocabulary,
                 global_model: NeuralRecommender,
                 finetuned: dict | None = None,
                 window: int = 10, top_k: int = DEFAULT_TOP_K,
                 ttl: float = DEFAULT_TTL, clock=time.time):
        self.goal_model = goal_model
        self.vocab = vocabulary
        self.global_model = global_model
        self.finetuned = finetuned or {}
        self.window = window
        self.top_k = top_k
        self.ttl = ttl
        self.clock = clock
        self._sessions: dict[str, LiveSession] = {}
        self._registry_lock = threading.Lock()

    # goal-def ranking doubles as the cold-start recommendation
    def _goal_top(self, goal: int, k: int):
        gm = self.goal_model
        order = np.argsort(-gm.goal_defs[goal], kind="stable")[:k]
        return [(int(gm.dc_ids[i]), float(gm.goal_defs[goal][i])) for i in order]

    def _rec_payload(self, pairs):
        return [{"cmd": self.vocab.command(cid).token, "p": p} for cid, p in pairs]

    def list_goals(self):
        gm = self.goal_model
        out = []
        for g in range(gm.k):
            label = gm.labels[g] if gm.labels else str(g)
            preview = [self.vocab.command(cid).token
                       for cid, _ in self._goal_top(g, 5)]
            out.append({"goal": g, "label": label, "preview": preview})
        return out

    def create_session(self, goal: int):
        if not isinstance(goal, int) or isinstance(goal, bool) \
                or not 0 <= goal < self.goal_model.k:
            raise ServiceError(f"unknown goal id: {goal!r}", 404)
        now = self.clock()
        sid = secrets.token_hex(16)
        session = LiveSession(id=sid, goal=goal, created=now, touched=now)
        with self._registry_lock:
            self._sessions[sid] = session
        recs = self._rec_payload(self._goal_top(goal, self.top_k))
        return {"session": sid, "recommendations": recs}

    def _session(self, sid: str) -> LiveSession:
        with self._registry_lock:
            session = self._sessions.get(sid)
        if session is None:
            raise ServiceError(f"unknown session id: {sid}", 404)
        if self.clock() - session.touched > self.ttl:
            with self._registry_lock:
                self._sessions.pop(sid, None)
            raise ServiceError(f"session expired: {sid}", 410)
        return session

    def post_command(self, sid: str, token: str):
        if not isinstance(token, str) or not token:
            raise ServiceError("cmd must be a non-empty string", 400)
        session = self._session(sid)
        command = self.vocab.get(token) or self.vocab.unknown
        with session.lock:
            session.buffer.append(command)
            del session.buffer[:-self.window]
            session.touched = self.clock()
            window = list(session.buffer)
        model = self.finetuned.get(session.goal, self.global_model)
        dist = model.predict_dist(window, goal=session.goal)
        order = np.argsort(-dist, kind="stable")[:self.top_k]  # recommend()'s order
        pairs = [(int(model.dc_ids[i]), float(dist[i])) for i in order]
        return {"recommendations": self._rec_payload(pairs),
                "window_len": len(window)}

    def delete_session(self, sid: str):
        with self._registry_lock:
            if self._sessions.pop(sid, None) is None:
                raise ServiceError(f"unknown session id: {sid}", 404)
        return {"deleted": sid}


# ------------------------------------------------------------------ HTTP

_SESSION_CMD = re.compile(r"^/sessions/([0-9a-f]{32})/commands$")
_SESSION = re.compile(r"^/sessions/([0-9a-f]{32})$")


def make_handler(service: RecommendationService, static_dir=None):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # route through logging, not stderr
            log.debug("%s " + fmt, self.address_string(), *args)

        def _send(self, status: int, payload):
            body = json.dumps(payload).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json; charset=utf-8")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _error(self, status: int, message: str):
            self._send(status, {"error": message, "code": status})

        def _body(self):
            length = int(self.headers.get("Content-Length") or 0)
            raw = self.rfile.read(length) if length else b""
            if not raw:
                raise ServiceError("empty request body", 400)
            try:
                return json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ServiceError(f"invalid JSON body: {exc}", 400) from exc

        def _static(self, path: str):
            if static_dir is None:
                return self._error(404, "not found")
            rel = path.lstrip("/") or "index.html"
            full = os.path.realpath(os.path.join(static_dir, rel))
            root = os.path.realpath(static_dir)
            if not full.startswith(root + os.sep) and full != root:
                return self._error(404, "not found")
            if os.path.isdir(full):
                full = os.path.join(full, "index.html")
            if not os.path.isfile(full):
                return self._error(404, "not found")
            ctype = mimetypes.guess_type(full)[0] or "application/octet-stream"
            with open(full, "rb") as fh:
                body = fh.read()
            self.send_response(200)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):
            try:
                if self.path == "/goals":
                    return self._send(200, service.list_goals())
                return self._static(self.path)
            except ServiceError as exc:
                self._error(exc.status, str(exc))
            except Exception as exc:
                log.exception("GET %s failed", self.path)
                self._error(500, f"internal error: {exc}")

        def do_POST(self):
            try:
                if self.path == "/sessions":
                    body = self._body()
                    if "goal" not in body:
                        raise ServiceError("missing field: goal", 400)
                    return self._send(200, service.create_session(body["goal"]))
                m = _SESSION_CMD.match(self.path)
                if m:
                    body = self._body()
                    if "cmd" not in body:
                        raise ServiceError("missing field: cmd", 400)
                    return self._send(200, service.post_command(m.group(1), body["cmd"]))
                return self._error(404, "not found")
            except ServiceError as exc:
                self._error(exc.status, str(exc))
            except Exception as exc:
                log.exception("POST %s failed", self.path)
                self._error(500, f"internal error: {exc}")

        def do_DELETE(self):
            try:
                m = _SESSION.match(self.path)
                if m:
                    return self._send(200, service.delete_session(m.group(1)))
                return self._error(404, "not found")
            except ServiceError as exc:
                self._error(exc.status, str(exc))
            except Exception as exc:
                log.exception("DELETE %s failed", self.path)
                self._error(500, f"internal error: {exc}")

    return Handler


def serve(service: RecommendationService, host="127.0.0.1", port=8080,
          static_dir=None) -> ThreadingHTTPServer:
    """Start the HTTP server on a daemon thread; returns the server object."""
    server = ThreadingHTTPServer((host, port), make_handler(service, static_dir))
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    log.info("serving on http://%s:%d", host, port)
    return server
