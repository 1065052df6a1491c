"""HTTP/JSON service hosting live stopping sessions.

Persistence is an append-only event log: one newline-delimited JSON file
per session holding the creation record and every accepted observation
batch.  Replaying a log through the same stepping code reproduces the
session exactly, because all rehearsal randomness is derived from
(session seed, sample count) rather than from wall-clock state.  Snapshots
are never authoritative.

Endpoints:

    GET  /healthz
    POST /sessions                      create a session
    GET  /sessions                      list sessions
    GET  /sessions/{id}                 full snapshot
    POST /sessions/{id}/observations    append data, run the stopping checks
    POST /sessions/{id}/what-if         preview a verdict, never mutates
"""

from __future__ import annotations

import hashlib
import json
import math
import threading
import uuid
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .conjugate import NormalGammaParams
from .rehearsal import RehearsalConfig, percentile
from .stopping import (
    Decision,
    Prediction,
    SessionState,
    SessionStoppedError,
    StoppingConfig,
    futility_check,
    new_session,
    step,
)

__all__ = [
    "ValidationError",
    "NotFoundError",
    "ConflictError",
    "PreconditionError",
    "SessionService",
    "make_server",
    "serve",
]


class ValidationError(ValueError):
    def __init__(self, errors: list[dict]):
        super().__init__("; ".join(f"{e['field']}: {e['message']}" for e in errors))
        self.errors = errors


class NotFoundError(KeyError):
    pass


class ConflictError(RuntimeError):
    pass


class PreconditionError(RuntimeError):
    pass


@dataclass
class _Entry:
    record_id: str
    config: StoppingConfig
    state: SessionState
    lock: threading.Lock
    log_path: Path
    last_decision: Decision | None = None
    created_seq: int = 0


def _parse_prior(payload, errors) -> NormalGammaParams | None:
    if not isinstance(payload, dict):
        errors.append({"field": "prior", "message": "prior must be an object"})
        return None
    fields = {}
    for name in ("mu", "n_scale", "var_param", "v_scale"):
        value = payload.get(name)
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            errors.append({"field": f"prior.{name}", "message": "must be a number"})
            return None
        fields[name] = float(value)
    unknown = set(payload) - {"mu", "n_scale", "var_param", "v_scale"}
    if unknown:
        errors.append({"field": "prior", "message": f"unknown fields: {sorted(unknown)}"})
        return None
    try:
        return NormalGammaParams(**fields)
    except ValueError as exc:
        errors.append({"field": "prior", "message": str(exc)})
        return None


_CONFIG_FIELDS = {
    "cil_threshold": float,
    "tl": float,
    "n_min": int,
    "n_max": int,
    "coverage": float,
    "batch": int,
    "reg_min_count": int,
    "calibration_pairing": str,
}


def _parse_config(payload, errors) -> StoppingConfig | None:
    if not isinstance(payload, dict):
        errors.append({"field": "config", "message": "config must be an object"})
        return None
    unknown = set(payload) - set(_CONFIG_FIELDS) - {"rehearsal"}
    if unknown:
        errors.append({"field": "config", "message": f"unknown fields: {sorted(unknown)}"})
        return None
    kwargs = {}
    for name, cast in _CONFIG_FIELDS.items():
        if name not in payload:
            continue
        value = payload[name]
        if cast in (float, int) and (not isinstance(value, (int, float)) or isinstance(value, bool)):
            errors.append({"field": f"config.{name}", "message": "must be a number"})
            return None
        try:
            kwargs[name] = cast(value)
        except (TypeError, ValueError):
            errors.append({"field": f"config.{name}", "message": f"invalid value {value!r}"})
            return None
    for required in ("cil_threshold", "tl", "n_min", "n_max"):
        if required not in kwargs:
            errors.append({"field": f"config.{required}", "message": "is required"})
    if errors:
        return None
    rehearsal_payload = payload.get("rehearsal")
    if rehearsal_payload is not None:
        if not isinstance(rehearsal_payload, dict):
            errors.append({"field": "config.rehearsal", "message": "must be an object"})
            return None
        try:
            sizes = rehearsal_payload.get("sizes")
            kwargs["rehearsal"] = RehearsalConfig(
                sizes=tuple(int(s) for s in sizes) if sizes is not None else tuple(range(1, kwargs["n_max"] + 1)),
                m=int(rehearsal_payload.get("m", 200)),
                coverage=float(rehearsal_payload.get("coverage", kwargs.get("coverage", 0.95))),
            )
        except (TypeError, ValueError) as exc:
            errors.append({"field": "config.rehearsal", "message": str(exc)})
            return None
    try:
        return StoppingConfig(**kwargs)
    except ValueError as exc:
        errors.append({"field": "config", "message": str(exc)})
        return None


def _prior_json(prior: NormalGammaParams) -> dict:
    return {
        "mu": prior.mu,
        "n_scale": prior.n_scale,
        "var_param": prior.var_param,
        "v_scale": prior.v_scale,
    }


def _config_json(cfg: StoppingConfig) -> dict:
    return {
        "cil_threshold": cfg.cil_threshold,
        "tl": cfg.tl,
        "n_min": cfg.n_min,
        "n_max": cfg.n_max,
        "coverage": cfg.coverage,
        "batch": cfg.batch,
        "reg_min_count": cfg.reg_min_count,
        "calibration_pairing": cfg.calibration_pairing,
        "rehearsal": {
            "m": cfg.rehearsal.m,
            "coverage": cfg.rehearsal.coverage,
            "sizes": list(cfg.rehearsal.sizes),
        },
    }


def _prediction_json(pred: Prediction | None) -> dict | None:
    if pred is None:
        return None
    return {
        "at_count": pred.at_count,
        "raw_median": pred.raw_median,
        "median": pred.median,
        "minimum": pred.minimum,
        "maximum": pred.maximum,
        "tl_percentile": pred.tl_percentile,
        "success_prob": pred.success_prob,
        "calibrated": pred.calibrated,
        "r_squared": pred.r_squared,
    }


def _decision_json(decision: Decision | None) -> dict | None:
    if decision is None:
        return None
    return {
        "kind": decision.kind,
        "at_count": decision.at_count,
        "cil": decision.cil,
        "target_met": decision.target_met,
        "prediction": _prediction_json(decision.prediction),
    }


def _state_hash(state: SessionState) -> str:
    payload = {
        "observations": list(state.observations),
        "status": state.status,
        "trajectory": [[i, t] for i, t in state.trajectory],
        "posterior": [
            state.posterior.mu,
            state.posterior.n_scale,
            state.posterior.var_param,
            state.posterior.v_scale,
        ],
        "table_rows": len(state.table),
    }
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


class SessionService:
    """Session registry, stepping logic, and event-log persistence."""

    def __init__(self, data_dir):
        self._dir = Path(data_dir)
        self._dir.mkdir(parents=True, exist_ok=True)
        self._sessions: dict[str, _Entry] = {}
        self._registry_lock = threading.Lock()
        self._seq = 0
        for log_path in sorted(self._dir.glob("*.ndjson")):
            self._replay(log_path)

    # -- construction and replay ------------------------------------------

    def create_session(self, payload: dict) -> dict:
        errors: list[dict] = []
        if not isinstance(payload, dict):
            raise ValidationError([{"field": "", "message": "body must be a JSON object"}])
        prior = _parse_prior(payload.get("prior"), errors)
        config = _parse_config(payload.get("config"), errors)
        seed = payload.get("seed")
        if seed is None:
            seed = uuid.uuid4().int % (2**63)
        elif not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            errors.append({"field": "seed", "message": "must be a non-negative integer"})
        if errors or prior is None or config is None:
            raise ValidationError(errors)

        record_id = uuid.uuid4().hex[:12]
        entry = self._register(record_id, config, prior, int(seed))
        created = {
            "event": "created",
            "id": record_id,
            "seed": int(seed),
            "prior": _prior_json(prior),
            "config": _config_json(config),
        }
        self._append_event(entry, created)
        return self.get_session(record_id)

    def _register(self, record_id, config, prior, seed) -> _Entry:
        entry = _Entry(
            record_id=record_id,
            config=config,
            state=new_session(prior, seed),
            lock=threading.Lock(),
            log_path=self._dir / f"{record_id}.ndjson",
        )
        with self._registry_lock:
            self._seq += 1
            entry.created_seq = self._seq
            self._sessions[record_id] = entry
        return entry

    def _replay(self, log_path: Path) -> None:
        with open(log_path, "r", encoding="utf-8") as fh:
            lines = [json.loads(line) for line in fh if line.strip()]
        if not lines or lines[0].get("event") != "created":
            raise ValueError(f"corrupt session log {log_path}: missing creation record")
        head = lines[0]
        errors: list[dict] = []
        prior = _parse_prior(head["prior"], errors)
        config = _parse_config(head["config"], errors)
        if errors:
            raise ValueError(f"corrupt session log {log_path}: {errors}")
        entry = self._register(head["id"], config, prior, int(head["seed"]))
        for event in lines[1:]:
            if event.get("event") != "observations":
                raise ValueError(f"corrupt session log {log_path}: {event.get('event')!r}")
            entry.last_decision = self._run_steps(entry, [float(v) for v in event["values"]])

    # -- operations --------------------------------------------------------

    def _entry(self, record_id: str) -> _Entry:
        with self._registry_lock:
            entry = self._sessions.get(record_id)
        if entry is None:
            raise NotFoundError(record_id)
        return entry

    def list_sessions(self) -> list[dict]:
        with self._registry_lock:
            entries = sorted(self._sessions.values(), key=lambda e: e.created_seq)
        return [
            {
                "id": e.record_id,
                "status": e.state.status,
                "count": e.state.count,
                "tl": e.config.tl,
                "cil_threshold": e.config.cil_threshold,
            }
            for e in entries
        ]

    def get_session(self, record_id: str) -> dict:
        entry = self._entry(record_id)
        with entry.lock:
            return self._snapshot(entry)

    def add_observations(self, record_id: str, payload: dict) -> dict:
        entry = self._entry(record_id)
        values = payload.get("values") if isinstance(payload, dict) else None
        if not isinstance(values, list) or not values:
            raise ValidationError([{"field": "values", "message": "must be a non-empty array"}])
        cleaned = []
        for v in values:
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
                raise ValidationError([{"field": "values", "message": f"non-finite value {v!r}"}])
            cleaned.append(float(v))
        with entry.lock:
            if entry.state.status != "running":
                raise ConflictError("session is stopped")
            decision = self._run_steps(entry, cleaned)
            entry.last_decision = decision
            self._append_event(entry, {"event": "observations", "values": cleaned})
            return {"decision": _decision_json(decision), "session": self._snapshot(entry)}

    def _run_steps(self, entry: _Entry, values: list[float]) -> Decision:
        """Feed a batch through the state machine in config-batch chunks."""
        decision = None
        batch = entry.config.batch
        for start in range(0, len(values), batch):
            if entry.state.status != "running":
                break
            _, decision = step(entry.state, values[start : start + batch], entry.config)
        return decision

    def what_if(self, record_id: str, payload: dict) -> dict:
        entry = self._entry(record_id)
        overrides = payload if isinstance(payload, dict) else {}
        unknown = set(overrides) - {"tl", "cil_threshold"}
        if unknown:
            raise ValidationError(
                [{"field": field, "message": "unknown override"} for field in sorted(unknown)]
            )
        for name in ("tl", "cil_threshold"):
            if name in overrides:
                value = overrides[name]
                if not isinstance(value, (int, float)) or isinstance(value, bool):
                    raise ValidationError([{"field": name, "message": "must be a number"}])
        with entry.lock:
            state = entry.state
            if state.last_distribution is None:
                raise PreconditionError(
                    f"no prediction available yet: predictions require at least "
                    f"{min(entry.config.n_min, entry.config.reg_min_count)} observations "
                    f"(n_min={entry.config.n_min})"
                )
            tl = float(overrides.get("tl", entry.config.tl))
            threshold = float(overrides.get("cil_threshold", entry.config.cil_threshold))
            if not (0.0 <= tl <= 1.0):
                raise ValidationError([{"field": "tl", "message": "must lie in [0, 1]"}])
            if not (threshold > 0):
                raise ValidationError([{"field": "cil_threshold", "message": "must be positive"}])
            dist = state.last_distribution
            stop = futility_check(dist, tl, threshold)
            return {
                "kind": "stop_futility" if stop else "continue",
                "tl": tl,
                "cil_threshold": threshold,
                "at_count": state.last_prediction.at_count,
                "tl_percentile": percentile(dist, tl),
                "success_prob": float((dist <= threshold).mean()),
                "calibrated": state.last_prediction.calibrated,
            }

    # -- persistence and snapshots ----------------------------------------

    def _append_event(self, entry: _Entry, event: dict) -> None:
        with open(entry.log_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")

    def _snapshot(self, entry: _Entry) -> dict:
        state = entry.state
        return {
            "id": entry.record_id,
            "status": state.status,
            "count": state.count,
            "seed": state.seed,
            "prior": _prior_json(state.prior),
            "config": _config_json(entry.config),
            "trajectory": [[i, t] for i, t in state.trajectory],
            "decision": _decision_json(state.decision),
            "last_decision": _decision_json(entry.last_decision),
            "prediction": _prediction_json(state.last_prediction),
            "state_hash": _state_hash(state),
        }


# ---------------------------------------------------------------------------
# HTTP layer.
# ---------------------------------------------------------------------------


def make_server(service: SessionService, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, fmt, *args):  # quiet by default
            pass

        def _send(self, code: int, payload) -> None:
            body = json.dumps(payload).encode()
            self.send_response(code)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(body)

        def _body(self):
            length = int(self.headers.get("Content-Length") or 0)
            raw = self.rfile.read(length) if length else b""
            if not raw:
                return {}
            try:
                return json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ValidationError([{"field": "", "message": f"invalid JSON: {exc}"}])

        def _route(self, method: str):
            parts = [p for p in self.path.split("?")[0].split("/") if p]
            if method == "GET" and parts == ["healthz"]:
                return self._send(200, {"status": "ok"})
            if parts[:1] == ["sessions"]:
                if method == "POST" and len(parts) == 1:
                    return self._send(201, service.create_session(self._body()))
                if method == "GET" and len(parts) == 1:
                    return self._send(200, {"sessions": service.list_sessions()})
                if len(parts) == 2 and method == "GET":
                    return self._send(200, service.get_session(parts[1]))
                if len(parts) == 3 and method == "POST" and parts[2] == "observations":
                    return self._send(200, service.add_observations(parts[1], self._body()))
                if len(parts) == 3 and method == "POST" and parts[2] == "what-if":
                    return self._send(200, service.what_if(parts[1], self._body()))
            return self._send(404, {"error": f"no route for {method} {self.path}"})

        def _dispatch(self, method: str) -> None:
            try:
                self._route(method)
            except ValidationError as exc:
                self._send(400, {"errors": exc.errors})
            except NotFoundError as exc:
                self._send(404, {"error": f"unknown session {exc.args[0]!r}"})
            except ConflictError as exc:
                self._send(409, {"error": str(exc)})
            except PreconditionError as exc:
                self._send(412, {"error": str(exc)})
            except Exception as exc:  # pragma: no cover - defensive
                self._send(500, {"error": f"internal error: {exc}"})

        def do_GET(self):
            self._dispatch("GET")

        def do_POST(self):
            self._dispatch("POST")

        def do_OPTIONS(self):
            # CORS preflight for browser clients served from another origin
            self.send_response(204)
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.end_headers()

    return ThreadingHTTPServer((host, port), Handler)


def serve(data_dir, host: str = "127.0.0.1", port: int = 8787) -> None:
    """Run the service until interrupted."""
    service = SessionService(data_dir)
    server = make_server(service, host, port)
    host_out, port_out = server.server_address[:2]
    print(f"session service listening on http://{host_out}:{port_out} (data: {data_dir})", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
