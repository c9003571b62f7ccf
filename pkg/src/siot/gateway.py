"""The gateway between pump and cloud: acquires serial frames, assembles and
signs periodic health records, ships them upstream with store-and-forward,
and verifies preset-command envelopes before anything reaches the pump.

The safety gate lives in :meth:`Gateway.handle_command`: a command envelope
that does not verify, does not decode, or names a different patient is
discarded, reported, and recorded as a fault event, with no pump interaction
whatsoever.

All timing is explicit: callers pass the current (simulated or wall) time
into each method, so the whole gateway runs deterministically under a test
driver.
"""

from __future__ import annotations

import base64
import logging
import os
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Protocol

import httpx

from siot import cloud as cloudmod
from siot.pump import (
    FrameError,
    FrameType,
    SerialFrame,
    command_frame,
    frame_decode,
    frame_encode,
    parse_dose_report,
    parse_glucose_report,
)
from siot.records import (
    DoseEvent,
    GlucoseReading,
    HealthRecord,
    InvariantViolation,
    MalformedPayload,
    PatientProfile,
    PayloadType,
    PresetCommand,
    canonical_decode,
    decode_envelope,
    encode_envelope,
    sign,
    verify,
)
from siot.sha256 import format_digest

logger = logging.getLogger(__name__)

BACKOFF_BASE = 1.0   # seconds, doubles per failed delivery attempt
BACKOFF_CAP = 60.0
PUMP_ACK_TIMEOUT = 5.0  # simulated seconds


class CloudError(Exception):
    """Transport-level failure talking to the cloud; retry later."""


class AckRejected(Exception):
    """The cloud refused an ack (unknown ticket, bad state); not retryable."""


class LinkTimeout(Exception):
    """No ACK/NACK from the pump within the timeout."""


class FaultCode(str, Enum):
    SIGNATURE_MISMATCH = "SIGNATURE_MISMATCH"
    FRAME_ERROR = "FRAME_ERROR"
    CLOUD_UNREACHABLE = "CLOUD_UNREACHABLE"
    PUMP_TIMEOUT = "PUMP_TIMEOUT"
    MALFORMED_PAYLOAD = "MALFORMED_PAYLOAD"


@dataclass(frozen=True)
class FaultEvent:
    code: FaultCode
    at: int
    context: str


@dataclass
class GatewayConfig:
    device_id: bytes
    patient_id: bytes
    cloud_endpoint: str
    auth_token: str
    record_period: int = 3600
    poll_interval: int = 60
    buffer_capacity: int = 1024

    def __post_init__(self) -> None:
        if self.record_period <= 0:
            raise ValueError("record_period must be positive")
        if self.buffer_capacity < 1:
            raise ValueError("buffer_capacity must be at least 1")

    @classmethod
    def load(cls, path: str | os.PathLike, env: dict[str, str] | None = None) -> "GatewayConfig":
        """Read ``key = value`` lines; GATEWAY_* environment variables win."""
        values: dict[str, str] = {}
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"bad config line: {line!r}")
                key, value = line.split("=", 1)
                values[key.strip().lower()] = value.strip()
        environ = os.environ if env is None else env
        for key in ("device_id", "patient_id", "cloud_endpoint", "auth_token",
                    "record_period", "poll_interval", "buffer_capacity"):
            override = environ.get(f"GATEWAY_{key.upper()}")
            if override is not None:
                values[key] = override
        return cls(
            device_id=bytes.fromhex(values["device_id"]),
            patient_id=bytes.fromhex(values["patient_id"]),
            cloud_endpoint=values["cloud_endpoint"],
            auth_token=values["auth_token"],
            record_period=int(values.get("record_period", 3600)),
            poll_interval=int(values.get("poll_interval", 60)),
            buffer_capacity=int(values.get("buffer_capacity", 1024)),
        )


@dataclass
class OutboundBuffer:
    """FIFO of signed envelopes awaiting cloud acknowledgment. Overflow drops
    the oldest entry (and the caller raises a fault for it)."""

    capacity: int
    queue: deque[bytes] = field(default_factory=deque)

    def push(self, envelope_bytes: bytes) -> bytes | None:
        dropped = None
        if len(self.queue) >= self.capacity:
            dropped = self.queue.popleft()
        self.queue.append(envelope_bytes)
        return dropped

    def __len__(self) -> int:
        return len(self.queue)


class PumpLink(Protocol):
    """Duplex byte channel to the pump."""

    def poll(self) -> list[bytes]:
        """Encoded frames the pump pushed since the last poll."""
        ...

    def send(self, frame_bytes: bytes, timeout: float = PUMP_ACK_TIMEOUT) -> bytes:
        """Send one encoded control frame; returns the encoded reply frame.
        Raises LinkTimeout if the pump does not answer in time."""
        ...


class InProcessPumpLink:
    """Links a PumpSimulator living in the same process. A driver pushes the
    pump's tick output in; sends go through the byte layer both ways."""

    def __init__(self, pump):
        self.pump = pump
        self._inbox: list[bytes] = []

    def push_frames(self, frames: list[SerialFrame]) -> None:
        self._inbox.extend(frame_encode(f) for f in frames)

    def push_raw(self, raw: bytes) -> None:
        self._inbox.append(raw)

    def poll(self) -> list[bytes]:
        out, self._inbox = self._inbox, []
        return out

    def send(self, frame_bytes: bytes, timeout: float = PUMP_ACK_TIMEOUT) -> bytes:
        reply = self.pump.handle_frame(frame_decode(frame_bytes))
        return frame_encode(reply)


class CloudClient(Protocol):
    """Upstream transport: ingestion, command polling, command acks."""

    def ingest(self, envelope_bytes: bytes) -> int: ...

    def next_commands(self) -> list[tuple[str, bytes]]: ...

    def ack(self, command_id_hex: str, outcome: str, expected: bytes | None = None,
            observed: bytes | None = None, context: str = "") -> None: ...


class LocalCloudClient:
    """Direct in-process calls into a CloudStore (the demo path)."""

    def __init__(self, store: cloudmod.CloudStore, token: str, device_id: str):
        self.store = store
        self.token = token
        self.device_id = device_id

    def _principal(self) -> cloudmod.Principal:
        return self.store.authenticate(self.token)

    def ingest(self, envelope_bytes: bytes) -> int:
        return self.store.ingest_record(envelope_bytes, self._principal())

    def next_commands(self) -> list[tuple[str, bytes]]:
        return self.store.next_commands(self._principal(), self.device_id)

    def ack(self, command_id_hex: str, outcome: str, expected: bytes | None = None,
            observed: bytes | None = None, context: str = "") -> None:
        self.store.ack_command(bytes.fromhex(command_id_hex), outcome, self._principal(),
                               expected=expected, observed=observed, context=context)


class HttpCloudClient:
    """Talks to the cloud store's HTTP API with a bearer token."""

    def __init__(self, endpoint: str, token: str, device_id: str, timeout: float = 5.0):
        self.endpoint = endpoint.rstrip("/")
        self.device_id = device_id
        self._client = httpx.Client(
            timeout=timeout, headers={"Authorization": f"Bearer {token}"})

    def _request(self, method: str, path: str, **kw) -> httpx.Response:
        try:
            response = self._client.request(method, self.endpoint + path, **kw)
        except httpx.HTTPError as exc:
            raise CloudError(f"cloud unreachable: {exc}") from exc
        if response.status_code >= 500:
            raise CloudError(f"cloud error {response.status_code}")
        return response

    def ingest(self, envelope_bytes: bytes) -> int:
        response = self._request(
            "POST", "/api/v1/records", content=envelope_bytes,
            headers={"Content-Type": "application/octet-stream"})
        if response.status_code != 201:
            raise CloudError(f"ingest rejected: {response.status_code} {response.text}")
        return response.json()["record_id"]

    def next_commands(self) -> list[tuple[str, bytes]]:
        response = self._request("GET", f"/api/v1/devices/{self.device_id}/commands/next")
        if response.status_code != 200:
            raise CloudError(f"poll rejected: {response.status_code}")
        return [(c["command_id"], base64.b64decode(c["envelope"]))
                for c in response.json()["commands"]]

    def ack(self, command_id_hex: str, outcome: str, expected: bytes | None = None,
            observed: bytes | None = None, context: str = "") -> None:
        body: dict = {"outcome": outcome, "context": context}
        if expected is not None:
            body["expected"] = bytes(expected).hex()
        if observed is not None:
            body["observed"] = bytes(observed).hex()
        response = self._request("POST", f"/api/v1/commands/{command_id_hex}/ack", json=body)
        if response.status_code != 200:
            raise AckRejected(f"ack rejected: {response.status_code} {response.text}")


class Gateway:
    """Single coordinating state machine for acquisition, publishing, and
    command handling. Methods take the current time explicitly; under a
    deterministic driver the whole gateway is single-threaded."""

    def __init__(self, config: GatewayConfig, pump_link: PumpLink, cloud: CloudClient,
                 profile: PatientProfile, start_time: int = 0):
        if profile.patient_id != config.patient_id:
            raise ValueError("profile patient does not match gateway config")
        self.config = config
        self.pump_link = pump_link
        self.cloud = cloud
        self.profile = profile
        self.faults: list[FaultEvent] = []
        self.buffer = OutboundBuffer(config.buffer_capacity)
        self.records_sent = 0
        self.records_acked = 0
        self._readings: list[GlucoseReading] = []
        self._doses: list[DoseEvent] = []
        self.period_start = start_time
        self._outage = False
        self._backoff = BACKOFF_BASE
        self._retry_at = 0.0

    # -- faults --

    def _fault(self, code: FaultCode, at: int, context: str) -> None:
        self.faults.append(FaultEvent(code, at, context))

    def fault_counts(self) -> dict[FaultCode, int]:
        counts: dict[FaultCode, int] = {}
        for event in self.faults:
            counts[event.code] = counts.get(event.code, 0) + 1
        return counts

    # -- acquisition --

    def ingest_frames(self, raw_frames: list[bytes], now: int) -> None:
        """Decode pump frames into pending readings/doses. An undecodable
        frame is one FRAME_ERROR fault; acquisition continues."""
        for raw in raw_frames:
            try:
                frame = frame_decode(raw)
                if frame.frame_type is FrameType.GLUCOSE_REPORT:
                    ts, level = parse_glucose_report(frame)
                    self._readings.append(GlucoseReading(ts, level))
                elif frame.frame_type is FrameType.DOSE_REPORT:
                    ts, amount, origin = parse_dose_report(frame)
                    self._doses.append(DoseEvent(ts, amount, origin))
                # replies (ACK/NACK) and unknown report types are not data
            except (FrameError, InvariantViolation) as exc:
                self._fault(FaultCode.FRAME_ERROR, now, str(exc))

    def close_period(self, period_end: int) -> HealthRecord:
        """Assemble the record for [period_start, period_end] from everything
        acquired so far and start the next period."""
        readings = tuple(sorted(
            (r for r in self._readings if r.timestamp <= period_end),
            key=lambda r: r.timestamp))
        doses = tuple(sorted(
            (d for d in self._doses if d.timestamp <= period_end),
            key=lambda d: d.timestamp))
        record = HealthRecord(self.profile, readings, doses, self.period_start, period_end)
        self._readings = [r for r in self._readings if r.timestamp > period_end]
        self._doses = [d for d in self._doses if d.timestamp > period_end]
        self.period_start = period_end
        return record

    # -- publishing --

    def publish(self, record: HealthRecord, now: int) -> None:
        """Sign and enqueue a record, then attempt delivery."""
        envelope_bytes = encode_envelope(sign(record))
        dropped = self.buffer.push(envelope_bytes)
        if dropped is not None:
            self._fault(FaultCode.CLOUD_UNREACHABLE, now,
                        "outbound buffer overflow; oldest record dropped")
        self.records_sent += 1
        self.flush(now)

    def flush(self, now: int) -> int:
        """Deliver queued envelopes FIFO; honors exponential backoff during an
        outage. Returns how many envelopes were acknowledged."""
        if not self.buffer.queue or now < self._retry_at:
            return 0
        delivered = 0
        while self.buffer.queue:
            head = self.buffer.queue[0]
            try:
                self.cloud.ingest(head)
            except CloudError as exc:
                if not self._outage:
                    self._fault(FaultCode.CLOUD_UNREACHABLE, now, str(exc))
                    self._outage = True
                self._retry_at = now + self._backoff
                self._backoff = min(self._backoff * 2, BACKOFF_CAP)
                return delivered
            self.buffer.queue.popleft()
            delivered += 1
            self.records_acked += 1
            self._outage = False
            self._backoff = BACKOFF_BASE
            self._retry_at = 0.0
        return delivered

    # -- command handling --

    def poll_and_handle(self, now: int) -> list[str]:
        """Fetch pending command envelopes and run each through the safety
        gate; returns the outcomes in delivery order."""
        try:
            deliveries = self.cloud.next_commands()
        except CloudError as exc:
            if not self._outage:
                self._fault(FaultCode.CLOUD_UNREACHABLE, now, str(exc))
                self._outage = True
            return []
        self._outage = False
        return [self.handle_command(cid, raw, now) for cid, raw in deliveries]

    def handle_command(self, command_id_hex: str, envelope_bytes: bytes, now: int) -> str:
        """Verify one command envelope end to end; only an affirmed envelope
        for this gateway's patient ever reaches the pump."""
        try:
            envelope = decode_envelope(envelope_bytes)
        except MalformedPayload as exc:
            self._fault(FaultCode.MALFORMED_PAYLOAD, now, f"undecodable envelope: {exc}")
            self._ack(command_id_hex, "discarded", None, None,
                      f"undecodable envelope: {exc}", now)
            return "discarded"

        outcome = verify(envelope)
        if not outcome.affirmed:
            context = (f"digest mismatch: appended {format_digest(outcome.appended)} "
                       f"recomputed {format_digest(outcome.recomputed)}")
            self._fault(FaultCode.SIGNATURE_MISMATCH, now, context)
            self._ack(command_id_hex, "discarded", outcome.appended, outcome.recomputed,
                      context, now)
            return "discarded"

        try:
            cmd = canonical_decode(PayloadType.PRESET_COMMAND, envelope.payload)
        except (MalformedPayload, InvariantViolation) as exc:
            self._fault(FaultCode.MALFORMED_PAYLOAD, now, f"bad command payload: {exc}")
            self._ack(command_id_hex, "discarded", None, None,
                      f"bad command payload: {exc}", now)
            return "discarded"
        assert isinstance(cmd, PresetCommand)

        if cmd.patient_id != self.config.patient_id:
            self._fault(FaultCode.MALFORMED_PAYLOAD, now, "patient mismatch")
            self._ack(command_id_hex, "discarded", None, None, "patient mismatch", now)
            return "discarded"

        try:
            reply_raw = self.pump_link.send(frame_encode(command_frame(cmd)))
        except LinkTimeout:
            self._fault(FaultCode.PUMP_TIMEOUT, now,
                        f"no pump ack for command {command_id_hex}")
            self._ack(command_id_hex, "discarded", None, None, "pump timeout", now)
            return "failed"

        try:
            reply = frame_decode(reply_raw)
        except FrameError as exc:
            self._fault(FaultCode.FRAME_ERROR, now, f"bad pump reply: {exc}")
            self._ack(command_id_hex, "discarded", None, None, "bad pump reply", now)
            return "failed"

        if reply.frame_type is not FrameType.ACK:
            self._fault(FaultCode.MALFORMED_PAYLOAD, now, "pump rejected command")
            self._ack(command_id_hex, "discarded", None, None, "pump rejected command", now)
            return "discarded"

        self._ack(command_id_hex, "applied", None, None, "", now)
        return "applied"

    def _ack(self, command_id_hex: str, outcome: str, expected, observed,
             context: str, now: int) -> None:
        try:
            self.cloud.ack(command_id_hex, outcome,
                           expected=expected, observed=observed, context=context)
        except CloudError as exc:
            if not self._outage:
                self._fault(FaultCode.CLOUD_UNREACHABLE, now, f"ack failed: {exc}")
                self._outage = True
        except (AckRejected, cloudmod.UnknownCommand, cloudmod.InvalidTransition,
                cloudmod.Unauthorized) as exc:
            # the cloud's ledger disagrees; nothing the gateway can fix
            logger.warning("cloud refused ack for %s: %s", command_id_hex, exc)
