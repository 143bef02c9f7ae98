"""Local JSON-over-HTTP interface to the session engine.

Endpoints (all bodies JSON):

  POST   /api/sessions                       create; body {plan, model | model_name}
  GET    /api/sessions                       list summaries in creation order
  GET    /api/sessions/{id}                  full session state
  POST   /api/sessions/{id}/measurements     body {values | bending, repetitions?, applied_density?}
  POST   /api/sessions/{id}/override-density body {applied}
  DELETE /api/sessions/{id}
  GET    /api/models                         calibrated model files in the data dir
  GET    /api/sessions/{id}/trace            canonical build-trace export

Errors come back as {"error": {"code", "message"}} where code matches the
engine's error names.  Any other path serves static files from the UI
directory when one is configured.
"""

from __future__ import annotations

import json
import re
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .calibration import CalibrationError, DegenerateRegression, InsufficientReplication
from .filter import DegenerateFilter
from .model import (
    BuildPlan,
    InfeasibleTarget,
    InvalidDataset,
    InvalidPlan,
    LeafctlError,
    ProcessModel,
    load_model_json,
)
from .session import EmptyMeasurement, SessionComplete, SessionStore, UnknownSession

_STATUS_BY_ERROR = {
    UnknownSession: 404,
    SessionComplete: 409,
    InvalidPlan: 400,
    InfeasibleTarget: 400,
    EmptyMeasurement: 400,
    InvalidDataset: 400,
    DegenerateRegression: 400,
    InsufficientReplication: 400,
    CalibrationError: 400,
    DegenerateFilter: 400,
}

_SESSION_PATH = re.compile(r"^/api/sessions/([A-Za-z0-9_-]+)(/measurements|/override-density|/trace)?$")

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json",
    ".svg": "image/svg+xml",
    ".png": "image/png",
    ".ico": "image/x-icon",
}


def _session_summary(session) -> dict:
    return {
        "id": session.id,
        "created_at": session.created_at,
        "status": session.status,
        "steps_done": len(session.history),
        "n": session.plan.n,
        "target_k": session.plan.target_k,
        "final_abs_error_pct": session.final_abs_error_pct,
    }


class _Handler(BaseHTTPRequestHandler):
    server_version = "leafctl"
    store: SessionStore
    models_dir: Path
    static_dir: Path | None

    # silence per-request stderr logging; tests and the CLI own the terminal
    def log_message(self, format, *args):  # noqa: A002 (stdlib signature)
        pass

    def _send_json(self, status: int, payload) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_error(self, exc: Exception) -> None:
        status = 500
        code = "InternalError"
        for etype, st in _STATUS_BY_ERROR.items():
            if isinstance(exc, etype):
                status = st
                code = etype.code
                break
        else:
            if isinstance(exc, LeafctlError):
                status, code = 400, exc.code
            elif isinstance(exc, (ValueError, KeyError, TypeError)):
                status, code = 400, "BadRequest"
        self._send_json(status, {"error": {"code": code, "message": str(exc)}})

    def _read_body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        if length == 0:
            return {}
        return json.loads(self.rfile.read(length).decode("utf-8"))

    def _resolve_model(self, body: dict) -> ProcessModel:
        if body.get("model") is not None:
            return ProcessModel.from_dict(body["model"])
        name = body.get("model_name")
        if not name or "/" in name or "\\" in name or ".." in name:
            raise InvalidPlan("request needs a model object or a valid model_name")
        path = self.models_dir / f"{name}.json" if not name.endswith(".json") else self.models_dir / name
        if not path.exists():
            raise InvalidPlan(f"unknown model {name!r}")
        return load_model_json(path.read_text(encoding="utf-8"))

    def do_GET(self):  # noqa: N802 (stdlib casing)
        try:
            if self.path == "/api/sessions":
                self._send_json(200, [_session_summary(s) for s in self.store.list_sessions()])
                return
            if self.path == "/api/models":
                models = []
                if self.models_dir.exists():
                    for p in sorted(self.models_dir.glob("*.json")):
                        try:
                            models.append(
                                {"name": p.stem, "model": load_model_json(p.read_text()).to_dict()}
                            )
                        except (ValueError, KeyError):
                            continue  # skip unparseable files
                self._send_json(200, models)
                return
            m = _SESSION_PATH.match(self.path)
            if m and m.group(2) is None:
                self._send_json(200, self.store.get_session(m.group(1)).to_dict())
                return
            if m and m.group(2) == "/trace":
                self._send_json(200, self.store.get_session(m.group(1)).to_trace().to_dict())
                return
            self._serve_static()
        except Exception as exc:  # surface every failure as a coded JSON error
            self._send_error(exc)

    def do_POST(self):  # noqa: N802
        try:
            if self.path == "/api/sessions":
                body = self._read_body()
                plan = BuildPlan.from_dict(body["plan"])
                model = self._resolve_model(body)
                session = self.store.create_session(plan, model)
                self._send_json(201, session.to_dict())
                return
            m = _SESSION_PATH.match(self.path)
            if m and m.group(2) == "/measurements":
                body = self._read_body()
                session = self.store.record_measurement(
                    m.group(1),
                    values=body.get("values"),
                    bending=body.get("bending"),
                    repetitions=body.get("repetitions"),
                    applied_density=body.get("applied_density"),
                )
                self._send_json(200, session.to_dict())
                return
            if m and m.group(2) == "/override-density":
                body = self._read_body()
                session = self.store.override_density(m.group(1), float(body["applied"]))
                self._send_json(200, session.to_dict())
                return
            self._send_json(404, {"error": {"code": "NotFound", "message": self.path}})
        except Exception as exc:
            self._send_error(exc)

    def do_DELETE(self):  # noqa: N802
        try:
            m = _SESSION_PATH.match(self.path)
            if m and m.group(2) is None:
                self.store.delete_session(m.group(1))
                self._send_json(200, {"deleted": m.group(1)})
                return
            self._send_json(404, {"error": {"code": "NotFound", "message": self.path}})
        except Exception as exc:
            self._send_error(exc)

    def _serve_static(self) -> None:
        if self.static_dir is None:
            self._send_json(404, {"error": {"code": "NotFound", "message": self.path}})
            return
        rel = self.path.split("?", 1)[0].lstrip("/") or "index.html"
        path = (self.static_dir / rel).resolve()
        if not str(path).startswith(str(self.static_dir.resolve())) or not path.is_file():
            # SPA fallback: unknown non-API paths get the shell page
            path = self.static_dir / "index.html"
            if not path.is_file():
                self._send_json(404, {"error": {"code": "NotFound", "message": self.path}})
                return
        body = path.read_bytes()
        self.send_response(200)
        self.send_header("Content-Type", _CONTENT_TYPES.get(path.suffix, "application/octet-stream"))
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


def make_server(
    host: str,
    port: int,
    data_dir: str | Path,
    static_dir: str | Path | None = None,
) -> ThreadingHTTPServer:
    """Build (but do not start) the session service; raises OSError if the
    port is taken."""
    store = SessionStore(data_dir)
    models_dir = Path(data_dir) / "models"

    class Handler(_Handler):
        pass

    Handler.store = store
    Handler.models_dir = models_dir
    Handler.static_dir = Path(static_dir) if static_dir is not None else None
    return ThreadingHTTPServer((host, port), Handler)
