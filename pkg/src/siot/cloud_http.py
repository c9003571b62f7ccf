"""HTTP face of the cloud store.

Structured-text bodies carry base64-wrapped SIOT envelopes; raw binary
envelopes are accepted with ``application/octet-stream``. Every endpoint
authenticates a bearer token and delegates to :class:`siot.cloud.CloudStore`,
so role and scope rules live in one place.
"""

from __future__ import annotations

import base64
import binascii

from fastapi import Depends, FastAPI, Header, Query, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from siot.cloud import (
    CloudStore,
    DuplicateCommand,
    IntegrityRejected,
    InvalidTransition,
    Principal,
    UnknownCommand,
    Unauthorized,
)
from siot.jsonio import command_from_json
from siot.records import InvariantViolation, MalformedPayload
from siot.sha256 import format_digest, parse_digest


class CommandBody(BaseModel):
    command: dict | None = None   # JSON command; the cloud signs it
    envelope: str | None = None   # base64 SIOT envelope signed upstream


class AckBody(BaseModel):
    outcome: str
    expected: str | None = None   # digests as hex or dash-grouped hex
    observed: str | None = None
    context: str = ""


class ApiError(Exception):
    def __init__(self, status: int, error: str, detail: str = "", extra: dict | None = None):
        self.status = status
        self.body = {"error": error, "detail": detail, **(extra or {})}


def create_app(store: CloudStore) -> FastAPI:
    app = FastAPI(title="siot cloud store", version="1")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"])

    def principal(authorization: str | None = Header(default=None)) -> Principal:
        if authorization is None or not authorization.startswith("Bearer "):
            raise Unauthorized("missing bearer token")
        return store.authenticate(authorization.removeprefix("Bearer "))

    @app.exception_handler(Unauthorized)
    async def _unauthorized(request: Request, exc: Unauthorized):
        return JSONResponse(status_code=401, content={"error": "unauthorized", "detail": str(exc)})

    @app.exception_handler(IntegrityRejected)
    async def _integrity(request: Request, exc: IntegrityRejected):
        return JSONResponse(status_code=422, content={
            "error": "integrity_rejected", "detail": str(exc),
            "expected": format_digest(exc.expected), "observed": format_digest(exc.observed)})

    @app.exception_handler(MalformedPayload)
    async def _malformed(request: Request, exc: MalformedPayload):
        return JSONResponse(status_code=422, content={"error": "malformed", "detail": str(exc)})

    @app.exception_handler(InvariantViolation)
    async def _invariant(request: Request, exc: InvariantViolation):
        return JSONResponse(status_code=422, content={"error": "invalid_value", "detail": str(exc)})

    @app.exception_handler(DuplicateCommand)
    async def _duplicate(request: Request, exc: DuplicateCommand):
        return JSONResponse(status_code=409, content={"error": "duplicate_command", "detail": str(exc)})

    @app.exception_handler(UnknownCommand)
    async def _unknown(request: Request, exc: UnknownCommand):
        return JSONResponse(status_code=404, content={"error": "unknown_command", "detail": str(exc)})

    @app.exception_handler(InvalidTransition)
    async def _transition(request: Request, exc: InvalidTransition):
        return JSONResponse(status_code=409, content={"error": "invalid_transition", "detail": str(exc)})

    @app.exception_handler(ApiError)
    async def _api_error(request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content=exc.body)

    async def read_envelope_bytes(request: Request) -> bytes:
        """Envelope from either body form: raw octets or {"envelope": base64}."""
        content_type = request.headers.get("content-type", "")
        body = await request.body()
        if content_type.startswith("application/octet-stream"):
            return body
        import json
        try:
            payload = json.loads(body)
            return base64.b64decode(payload["envelope"], validate=True)
        except (ValueError, KeyError, TypeError, binascii.Error) as exc:
            raise ApiError(422, "malformed", f"expected octet-stream or envelope JSON: {exc}")

    @app.post("/api/v1/records", status_code=201)
    async def ingest_record(request: Request, who: Principal = Depends(principal)):
        envelope_bytes = await read_envelope_bytes(request)
        record_id = store.ingest_record(envelope_bytes, who)
        return {"record_id": record_id}

    @app.get("/api/v1/patients/{patient_hex}/records")
    def fetch_records(patient_hex: str,
                      received_from: int | None = Query(default=None, alias="from"),
                      received_to: int | None = Query(default=None, alias="to"),
                      who: Principal = Depends(principal)):
        records = store.fetch_records(
            _patient_id(patient_hex), who,
            received_from=received_from, received_to=received_to)
        return {"records": [
            {"record_id": r.record_id, "received_at": r.received_at,
             "envelope": base64.b64encode(r.raw).decode("ascii")}
            for r in records]}

    @app.post("/api/v1/commands", status_code=201)
    def issue_command(body: CommandBody, who: Principal = Depends(principal)):
        if (body.command is None) == (body.envelope is None):
            raise ApiError(422, "malformed", "provide exactly one of command or envelope")
        if body.command is not None:
            try:
                cmd = command_from_json(body.command)
            except (KeyError, ValueError) as exc:
                raise ApiError(422, "malformed", f"bad command JSON: {exc}")
            ticket = store.issue_command(cmd, who)
        else:
            try:
                raw = base64.b64decode(body.envelope, validate=True)
            except binascii.Error as exc:
                raise ApiError(422, "malformed", f"bad base64 envelope: {exc}")
            ticket = store.issue_command_envelope(raw, who)
        return {"command_id": ticket.command_id.hex(), "state": ticket.state.value}

    @app.get("/api/v1/commands/{command_hex}")
    def command_status(command_hex: str, who: Principal = Depends(principal)):
        # consoles poll this to watch a ticket progress; physician only
        if who.role.value != "physician":
            raise Unauthorized("only physicians may inspect command tickets")
        ticket = store.get_ticket(_command_id(command_hex))
        if not who.covers(ticket.patient_id):
            raise Unauthorized("patient outside principal scope")
        return {"command_id": command_hex, "state": ticket.state.value,
                "issued_by": ticket.issued_by}

    @app.get("/api/v1/devices/{device_id}/commands/next")
    def next_commands(device_id: str, who: Principal = Depends(principal)):
        deliveries = store.next_commands(who, device_id)
        return {"commands": [
            {"command_id": cid, "envelope": base64.b64encode(raw).decode("ascii")}
            for cid, raw in deliveries]}

    @app.post("/api/v1/commands/{command_hex}/ack")
    def ack_command(command_hex: str, body: AckBody, who: Principal = Depends(principal)):
        if body.outcome not in ("applied", "discarded"):
            raise ApiError(422, "malformed", f"unknown outcome {body.outcome!r}")
        ticket = store.ack_command(
            _command_id(command_hex), body.outcome, who,
            expected=_optional_digest(body.expected),
            observed=_optional_digest(body.observed),
            context=body.context)
        return {"command_id": command_hex, "state": ticket.state.value}

    @app.get("/api/v1/alerts")
    def list_alerts(who: Principal = Depends(principal)):
        alerts = store.list_alerts(who)
        return {"alerts": [
            {"at": a.at, "source": a.source.value,
             "expected": format_digest(a.expected), "observed": format_digest(a.observed),
             "context": a.context}
            for a in alerts]}

    @app.get("/api/v1/health")
    def health():
        return {"status": "ok"}

    return app


def _patient_id(text: str) -> bytes:
    try:
        raw = bytes.fromhex(text)
    except ValueError:
        raise ApiError(422, "malformed", f"patient id is not hex: {text!r}")
    if len(raw) != 16:
        raise ApiError(422, "malformed", "patient id must be 16 octets of hex")
    return raw


def _command_id(text: str) -> bytes:
    try:
        raw = bytes.fromhex(text)
    except ValueError:
        raise ApiError(422, "malformed", f"command id is not hex: {text!r}")
    if len(raw) != 16:
        raise ApiError(422, "malformed", "command id must be 16 octets of hex")
    return raw


def _optional_digest(text: str | None):
    if text is None:
        return None
    try:
        return parse_digest(text)
    except ValueError as exc:
        raise ApiError(422, "malformed", f"bad digest: {exc}")
