"""Cloud record store: verifies envelopes on ingest, persists them append-only,
queues physician-issued command envelopes for devices, and raises tamper
alerts whenever a digest check fails anywhere in the pipeline.

Authorized access is modeled as bearer-token principals with three roles:
devices ingest records and pull/ack commands, physicians read records, issue
commands, and watch alerts, researchers get read-only record access.

Persistence is one append-only log file per patient; each entry is
``u32 entry length | u64 record id | u64 received_at | SIOT envelope bytes``.
On startup the logs are rescanned, a torn tail (crash mid-append) is truncated
away, and the in-memory index is rebuilt, so acknowledged records survive a
kill at any point. Command tickets and alerts are volatile.
"""

from __future__ import annotations

import logging
import os
import struct
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable

from siot.hashbatch import digest_many
from siot.records import (
    HealthRecord,
    MalformedPayload,
    PayloadType,
    PresetCommand,
    SignedEnvelope,
    canonical_decode,
    decode_envelope,
    encode_envelope,
    sign,
    verify,
)
from siot.sha256 import Digest256

logger = logging.getLogger(__name__)

ENTRY_HEADER = struct.Struct(">QQ")  # record id, received_at
LENGTH_PREFIX = struct.Struct(">I")


class Unauthorized(Exception):
    """Unknown token, wrong role, or patient outside the principal's scope."""


class IntegrityRejected(Exception):
    """Envelope failed digest verification; carries both digests."""

    def __init__(self, message: str, expected: Digest256, observed: Digest256):
        super().__init__(message)
        self.expected = expected
        self.observed = observed


class DuplicateCommand(Exception):
    """A command with this id was already issued (replay protection)."""


class UnknownCommand(Exception):
    """No ticket with this command id."""


class InvalidTransition(Exception):
    """Ticket is not in a state that allows the requested transition."""


class Role(str, Enum):
    DEVICE = "device"
    PHYSICIAN = "physician"
    RESEARCHER = "researcher"


class TicketState(str, Enum):
    QUEUED = "queued"
    DELIVERED = "delivered"
    APPLIED = "applied"
    DISCARDED_BY_GATEWAY = "discarded_by_gateway"


class AlertSource(str, Enum):
    INGEST = "ingest"
    GATEWAY_REPORT = "gateway_report"


@dataclass(frozen=True)
class Principal:
    principal_id: str
    token: str
    role: Role
    patients: frozenset[bytes]

    def covers(self, patient_id: bytes) -> bool:
        return patient_id in self.patients


@dataclass(frozen=True)
class StoredRecord:
    record_id: int
    received_at: int
    patient_id: bytes
    envelope: SignedEnvelope
    raw: bytes  # exact bytes as ingested; what fetch hands back


@dataclass
class CommandTicket:
    command_id: bytes
    patient_id: bytes
    envelope: SignedEnvelope
    raw: bytes
    state: TicketState
    issued_by: str
    seq: int  # global issue order


@dataclass(frozen=True)
class TamperAlert:
    at: int
    source: AlertSource
    expected: Digest256
    observed: Digest256
    context: str


def load_principals(path: str | os.PathLike) -> list[Principal]:
    """Principals from a JSON config: token, role, id, and patient scope."""
    import json

    with open(path, "r", encoding="utf-8") as fh:
        config = json.load(fh)
    principals = []
    for entry in config["principals"]:
        principals.append(Principal(
            principal_id=entry["id"],
            token=entry["token"],
            role=Role(entry["role"]),
            patients=frozenset(bytes.fromhex(p) for p in entry.get("patients", [])),
        ))
    return principals


class CloudStore:
    """The cloud side of the pipeline. Thread-safe; per-patient log appends are
    serialized, reads can proceed concurrently."""

    def __init__(self, data_dir: str | os.PathLike, principals: Iterable[Principal],
                 clock: Callable[[], int] | None = None):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.clock = clock or (lambda: int(time.time()))
        self._by_token = {p.token: p for p in principals}
        self._lock = threading.RLock()
        self._patient_locks: dict[bytes, threading.Lock] = {}
        self._records: dict[bytes, list[StoredRecord]] = {}
        self._tickets: dict[bytes, CommandTicket] = {}
        self._alerts: list[TamperAlert] = []
        self._next_record_id = 1
        self._next_seq = 1
        self._recover()

    # -- authentication / authorization --

    def authenticate(self, token: str | None) -> Principal:
        principal = self._by_token.get(token or "")
        if principal is None:
            raise Unauthorized("unknown or missing bearer token")
        return principal

    @staticmethod
    def _require(principal: Principal, role: Role, patient_id: bytes | None = None) -> None:
        if principal.role is not role:
            raise Unauthorized(f"role {principal.role.value} may not perform this operation")
        if patient_id is not None and not principal.covers(patient_id):
            raise Unauthorized("patient outside principal scope")

    # -- persistence --

    def _log_path(self, patient_id: bytes) -> Path:
        return self.data_dir / f"{patient_id.hex()}.log"

    def _patient_lock(self, patient_id: bytes) -> threading.Lock:
        with self._lock:
            return self._patient_locks.setdefault(patient_id, threading.Lock())

    def _recover(self) -> None:
        for path in sorted(self.data_dir.glob("*.log")):
            try:
                patient_id = bytes.fromhex(path.stem)
            except ValueError:
                logger.warning("ignoring unrecognized file %s", path)
                continue
            self._records[patient_id] = []
            good_end = self._replay_log(path, patient_id)
            size = path.stat().st_size
            if good_end < size:
                logger.warning("truncating torn tail of %s: %d of %d bytes valid",
                               path.name, good_end, size)
                with open(path, "r+b") as fh:
                    fh.truncate(good_end)
        for records in self._records.values():
            for stored in records:
                self._next_record_id = max(self._next_record_id, stored.record_id + 1)

    def _replay_log(self, path: Path, patient_id: bytes) -> int:
        """Scan a log, indexing every complete entry; returns the offset after
        the last complete one."""
        offset = 0
        with open(path, "rb") as fh:
            data = fh.read()
        while offset + LENGTH_PREFIX.size <= len(data):
            (entry_len,) = LENGTH_PREFIX.unpack_from(data, offset)
            start = offset + LENGTH_PREFIX.size
            if entry_len < ENTRY_HEADER.size or start + entry_len > len(data):
                break  # torn tail
            record_id, received_at = ENTRY_HEADER.unpack_from(data, start)
            raw = data[start + ENTRY_HEADER.size:start + entry_len]
            try:
                envelope = decode_envelope(raw)
            except MalformedPayload:
                break  # treat as torn; nothing valid can follow a corrupt length
            self._records[patient_id].append(StoredRecord(
                record_id=record_id, received_at=received_at,
                patient_id=patient_id, envelope=envelope, raw=raw))
            offset = start + entry_len
        return offset

    def _append(self, patient_id: bytes, record_id: int, received_at: int, raw: bytes) -> None:
        entry = ENTRY_HEADER.pack(record_id, received_at) + raw
        blob = LENGTH_PREFIX.pack(len(entry)) + entry
        with open(self._log_path(patient_id), "ab") as fh:
            fh.write(blob)
            fh.flush()
            os.fsync(fh.fileno())

    # -- records --

    def ingest_record(self, envelope_bytes: bytes, principal: Principal) -> int:
        """Verify and persist one record envelope; returns its record id.

        A digest mismatch stores nothing, raises IntegrityRejected, and leaves
        one tamper alert carrying both digests.
        """
        envelope = decode_envelope(envelope_bytes)
        if envelope.payload_type is not PayloadType.HEALTH_RECORD:
            raise MalformedPayload("records endpoint only accepts health record envelopes")
        self._require(principal, Role.DEVICE)
        outcome = verify(envelope)
        if not outcome.affirmed:
            self._alert(AlertSource.INGEST, outcome.appended, outcome.recomputed,
                        f"record ingest from {principal.principal_id}")
            raise IntegrityRejected("envelope digest mismatch",
                                    outcome.appended, outcome.recomputed)
        record = canonical_decode(PayloadType.HEALTH_RECORD, envelope.payload)
        assert isinstance(record, HealthRecord)
        patient_id = record.profile.patient_id
        if not principal.covers(patient_id):
            raise Unauthorized("patient outside principal scope")

        raw = bytes(envelope_bytes)
        with self._patient_lock(patient_id):
            with self._lock:
                record_id = self._next_record_id
                self._next_record_id += 1
                received_at = int(self.clock())
            self._append(patient_id, record_id, received_at, raw)
            stored = StoredRecord(record_id=record_id, received_at=received_at,
                                  patient_id=patient_id, envelope=envelope, raw=raw)
            with self._lock:
                self._records.setdefault(patient_id, []).append(stored)
        return record_id

    def fetch_records(self, patient_id: bytes, principal: Principal,
                      received_from: int | None = None,
                      received_to: int | None = None) -> list[StoredRecord]:
        """Stored records for a patient, ascending record id, bytes verbatim.

        Callers re-verify the envelopes themselves; the digest check runs on
        both sides of every query.
        """
        if principal.role not in (Role.PHYSICIAN, Role.RESEARCHER):
            raise Unauthorized(f"role {principal.role.value} may not read records")
        if not principal.covers(patient_id):
            raise Unauthorized("patient outside principal scope")
        with self._lock:
            records = list(self._records.get(patient_id, ()))
        return [
            r for r in records
            if (received_from is None or r.received_at >= received_from)
            and (received_to is None or r.received_at <= received_to)
        ]

    def audit(self) -> int:
        """Re-verify every persisted envelope in one batch pass; returns the
        count, or raises IntegrityRejected naming the first bad record."""
        with self._lock:
            stored = [r for records in self._records.values() for r in records]
        digests = digest_many([r.envelope.payload for r in stored])
        for record, recomputed in zip(stored, digests):
            if recomputed != record.envelope.digest:
                raise IntegrityRejected(
                    f"stored record {record.record_id} no longer verifies",
                    record.envelope.digest, recomputed)
        return len(stored)

    # -- commands --

    def issue_command(self, cmd: PresetCommand, principal: Principal) -> CommandTicket:
        """Sign a physician's command and queue it for the patient's device."""
        raw = encode_envelope(sign(cmd))
        return self._enqueue(cmd, raw, principal)

    def issue_command_envelope(self, envelope_bytes: bytes, principal: Principal) -> CommandTicket:
        """Queue a command envelope signed on the hospital side (e.g. by the
        web console); it must verify before it is accepted."""
        envelope = decode_envelope(envelope_bytes)
        if envelope.payload_type is not PayloadType.PRESET_COMMAND:
            raise MalformedPayload("commands endpoint only accepts preset command envelopes")
        outcome = verify(envelope)
        if not outcome.affirmed:
            self._alert(AlertSource.INGEST, outcome.appended, outcome.recomputed,
                        f"command ingest from {principal.principal_id}")
            raise IntegrityRejected("envelope digest mismatch",
                                    outcome.appended, outcome.recomputed)
        cmd = canonical_decode(PayloadType.PRESET_COMMAND, envelope.payload)
        assert isinstance(cmd, PresetCommand)
        return self._enqueue(cmd, bytes(envelope_bytes), principal)

    def _enqueue(self, cmd: PresetCommand, raw: bytes, principal: Principal) -> CommandTicket:
        self._require(principal, Role.PHYSICIAN, cmd.patient_id)
        with self._lock:
            if cmd.command_id in self._tickets:
                raise DuplicateCommand(f"command {cmd.command_id.hex()} already issued")
            ticket = CommandTicket(
                command_id=cmd.command_id, patient_id=cmd.patient_id,
                envelope=decode_envelope(raw), raw=raw,
                state=TicketState.QUEUED, issued_by=principal.principal_id,
                seq=self._next_seq)
            self._next_seq += 1
            self._tickets[cmd.command_id] = ticket
        return ticket

    def next_commands(self, principal: Principal,
                      device_id: str | None = None) -> list[tuple[str, bytes]]:
        """Queued command envelopes for the device's patients, in issue order;
        each is marked delivered. Returns (command id hex, envelope bytes)."""
        self._require(principal, Role.DEVICE)
        if device_id is not None and device_id != principal.principal_id:
            raise Unauthorized("device id does not match principal")
        with self._lock:
            pending = sorted(
                (t for t in self._tickets.values()
                 if t.state is TicketState.QUEUED and principal.covers(t.patient_id)),
                key=lambda t: t.seq)
            for ticket in pending:
                ticket.state = TicketState.DELIVERED
            return [(t.command_id.hex(), t.raw) for t in pending]

    def ack_command(self, command_id: bytes, outcome: str, principal: Principal,
                    expected: Digest256 | None = None,
                    observed: Digest256 | None = None,
                    context: str = "") -> CommandTicket:
        """Gateway's verdict on a delivered command: applied or discarded.

        A discarded ack raises a tamper alert; the gateway reports the digests
        it saw, falling back to the queued envelope's digest if it could not.
        """
        self._require(principal, Role.DEVICE)
        if outcome not in ("applied", "discarded"):
            raise ValueError(f"unknown ack outcome {outcome!r}")
        with self._lock:
            ticket = self._tickets.get(command_id)
            if ticket is None:
                raise UnknownCommand(f"no command {command_id.hex()}")
            if ticket.state is not TicketState.DELIVERED:
                raise InvalidTransition(
                    f"command {command_id.hex()} is {ticket.state.value}, not delivered")
            if outcome == "applied":
                ticket.state = TicketState.APPLIED
            else:
                ticket.state = TicketState.DISCARDED_BY_GATEWAY
                self._alert(
                    AlertSource.GATEWAY_REPORT,
                    expected if expected is not None else ticket.envelope.digest,
                    observed if observed is not None else Digest256(bytes(32)),
                    context or f"gateway {principal.principal_id} discarded command "
                               f"{command_id.hex()}")
            return ticket

    def get_ticket(self, command_id: bytes) -> CommandTicket:
        with self._lock:
            ticket = self._tickets.get(command_id)
        if ticket is None:
            raise UnknownCommand(f"no command {command_id.hex()}")
        return ticket

    # -- alerts --

    def _alert(self, source: AlertSource, expected: Digest256, observed: Digest256,
               context: str) -> None:
        with self._lock:
            self._alerts.append(TamperAlert(
                at=int(self.clock()), source=source,
                expected=Digest256(expected), observed=Digest256(observed),
                context=context))

    def list_alerts(self, principal: Principal) -> list[TamperAlert]:
        """All tamper alerts, newest first."""
        self._require(principal, Role.PHYSICIAN)
        with self._lock:
            return list(reversed(self._alerts))
