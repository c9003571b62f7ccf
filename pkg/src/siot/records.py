"""Health records, preset pump commands, and their signed envelopes.

Both ends of the pipeline must hash identical bytes, so every value has
exactly one canonical encoding: fixed magic and version, fields in
declaration order, big-endian fixed-width integers, length-prefixed text and
lists. The digest covers the payload bytes only; the envelope header around
it is checked structurally instead.

Verification never raises on tampered input: a digest mismatch is an
outcome (``DISCARDED``), carrying both digests for audit.
"""

from __future__ import annotations

import datetime
import struct
from dataclasses import dataclass
from enum import Enum, IntEnum

from siot.sha256 import DIGEST_SIZE, Digest256, digest_of

RECORD_MAGIC = b"HREC"
COMMAND_MAGIC = b"PCMD"
ENVELOPE_MAGIC = b"SIOT"
PAYLOAD_VERSION = 1
ENVELOPE_VERSION = 1

ID_SIZE = 16
TEXT_LIMIT = 4096        # octets of encoded UTF-8 per text field
GLUCOSE_MIN = 10         # mg/dL plausibility bounds
GLUCOSE_MAX = 1000
DAY_SECONDS = 24 * 3600
MINUTES_PER_DAY = 1440


class EncodingOverflow(Exception):
    """A field value does not fit its fixed wire width."""


class MalformedPayload(Exception):
    """Bytes that do not parse: bad magic, bad version, truncation, trailing garbage."""


class InvariantViolation(Exception):
    """A structurally valid value that breaks a domain rule."""


class PayloadType(IntEnum):
    HEALTH_RECORD = 1
    PRESET_COMMAND = 2


class DoseOrigin(IntEnum):
    SCHEDULED = 1
    MANUAL = 2


class CommandKind(IntEnum):
    SET_SCHEDULE = 0
    POWER_ON = 1
    POWER_OFF = 2


class VerifyStatus(Enum):
    AFFIRMED = "affirmed"
    DISCARDED = "discarded"


def _check_id(value: bytes, name: str, nonzero: bool = False) -> bytes:
    value = bytes(value)
    if len(value) != ID_SIZE:
        raise InvariantViolation(f"{name} must be {ID_SIZE} octets, got {len(value)}")
    if nonzero and value == bytes(ID_SIZE):
        raise InvariantViolation(f"{name} must not be all zeros")
    return value


def _check_u(value: int, bits: int, name: str) -> int:
    if not isinstance(value, int) or not 0 <= value < (1 << bits):
        raise InvariantViolation(f"{name} must be an unsigned {bits}-bit integer, got {value!r}")
    return value


@dataclass(frozen=True)
class PatientProfile:
    patient_id: bytes
    name: str
    date_of_birth: datetime.date
    medical_info: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "patient_id", _check_id(self.patient_id, "patient_id", nonzero=True))
        for label in ("name", "medical_info"):
            encoded = getattr(self, label).encode("utf-8")
            if len(encoded) > TEXT_LIMIT:
                raise InvariantViolation(f"{label} exceeds {TEXT_LIMIT} encoded octets")


@dataclass(frozen=True)
class GlucoseReading:
    timestamp: int  # seconds since epoch
    level: int      # mg/dL

    def __post_init__(self) -> None:
        _check_u(self.timestamp, 64, "timestamp")
        _check_u(self.level, 16, "level")
        if not GLUCOSE_MIN <= self.level <= GLUCOSE_MAX:
            raise InvariantViolation(
                f"glucose level {self.level} outside [{GLUCOSE_MIN}, {GLUCOSE_MAX}] mg/dL")


@dataclass(frozen=True)
class DoseEvent:
    timestamp: int
    amount: int  # delivered insulin, milli-units
    origin: DoseOrigin

    def __post_init__(self) -> None:
        _check_u(self.timestamp, 64, "timestamp")
        _check_u(self.amount, 32, "amount")
        if self.amount == 0:
            raise InvariantViolation("delivered dose amount must be positive")
        object.__setattr__(self, "origin", DoseOrigin(self.origin))


@dataclass(frozen=True)
class HealthRecord:
    profile: PatientProfile
    readings: tuple[GlucoseReading, ...]
    doses: tuple[DoseEvent, ...]
    period_start: int
    period_end: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "readings", tuple(self.readings))
        object.__setattr__(self, "doses", tuple(self.doses))
        _check_u(self.period_start, 64, "period_start")
        _check_u(self.period_end, 64, "period_end")
        if self.period_end < self.period_start:
            raise InvariantViolation("period_end precedes period_start")
        if self.period_end - self.period_start > DAY_SECONDS:
            raise InvariantViolation("record period exceeds 24 hours")
        for label, series in (("readings", self.readings), ("doses", self.doses)):
            stamps = [item.timestamp for item in series]
            if stamps != sorted(stamps):
                raise InvariantViolation(f"{label} not sorted by timestamp")
            for ts in stamps:
                if not self.period_start <= ts <= self.period_end:
                    raise InvariantViolation(f"{label} timestamp {ts} outside record period")


@dataclass(frozen=True)
class PresetCommand:
    command_id: bytes
    patient_id: bytes
    issued_at: int
    kind: CommandKind
    schedule: tuple[tuple[int, int], ...] = ()  # (start minute of day, milli-units/hour)

    def __post_init__(self) -> None:
        object.__setattr__(self, "command_id", _check_id(self.command_id, "command_id"))
        object.__setattr__(self, "patient_id", _check_id(self.patient_id, "patient_id", nonzero=True))
        _check_u(self.issued_at, 64, "issued_at")
        object.__setattr__(self, "kind", CommandKind(self.kind))
        object.__setattr__(self, "schedule", tuple((int(m), int(r)) for m, r in self.schedule))
        if self.schedule and self.kind is not CommandKind.SET_SCHEDULE:
            raise InvariantViolation("schedule only allowed for set_schedule commands")
        minutes = []
        for minute, rate in self.schedule:
            _check_u(rate, 32, "schedule rate")
            _check_u(minute, 16, "schedule start minute")
            if minute >= MINUTES_PER_DAY:
                raise InvariantViolation(f"schedule start minute {minute} >= {MINUTES_PER_DAY}")
            minutes.append(minute)
        if len(set(minutes)) != len(minutes):
            raise InvariantViolation("duplicate schedule start minutes")
        if minutes != sorted(minutes):
            raise InvariantViolation("schedule entries not sorted by start minute")


@dataclass(frozen=True)
class SignedEnvelope:
    """Canonical payload bytes with the digest appended."""

    version: int
    payload_type: PayloadType
    payload: bytes
    digest: Digest256

    def __post_init__(self) -> None:
        object.__setattr__(self, "payload_type", PayloadType(self.payload_type))
        object.__setattr__(self, "payload", bytes(self.payload))
        object.__setattr__(self, "digest", Digest256(self.digest))


@dataclass(frozen=True)
class VerificationOutcome:
    status: VerifyStatus
    recomputed: Digest256
    appended: Digest256

    @property
    def affirmed(self) -> bool:
        return self.status is VerifyStatus.AFFIRMED


# --- canonical encoding ----------------------------------------------------

def _pack_text(out: bytearray, text: str) -> None:
    raw = text.encode("utf-8")
    if len(raw) > TEXT_LIMIT:
        raise EncodingOverflow(f"text field of {len(raw)} octets exceeds {TEXT_LIMIT}")
    out += struct.pack(">I", len(raw))
    out += raw


def _encode_profile(out: bytearray, profile: PatientProfile) -> None:
    out += profile.patient_id
    _pack_text(out, profile.name)
    dob = profile.date_of_birth
    out += struct.pack(">HBB", dob.year, dob.month, dob.day)
    _pack_text(out, profile.medical_info)


def canonical_encode(value: HealthRecord | PresetCommand) -> bytes:
    """Deterministic, injective byte encoding; equal values give equal bytes."""
    out = bytearray()
    try:
        if isinstance(value, HealthRecord):
            out += RECORD_MAGIC
            out.append(PAYLOAD_VERSION)
            _encode_profile(out, value.profile)
            out += struct.pack(">I", len(value.readings))
            for reading in value.readings:
                out += struct.pack(">QH", reading.timestamp, reading.level)
            out += struct.pack(">I", len(value.doses))
            for dose in value.doses:
                out += struct.pack(">QIB", dose.timestamp, dose.amount, dose.origin)
            out += struct.pack(">QQ", value.period_start, value.period_end)
        elif isinstance(value, PresetCommand):
            out += COMMAND_MAGIC
            out.append(PAYLOAD_VERSION)
            out += value.command_id
            out += value.patient_id
            out += struct.pack(">QB", value.issued_at, value.kind)
            out += struct.pack(">I", len(value.schedule))
            for minute, rate in value.schedule:
                out += struct.pack(">HI", minute, rate)
        else:
            raise TypeError(f"cannot encode {type(value).__name__}")
    except struct.error as exc:
        raise EncodingOverflow(str(exc)) from exc
    return bytes(out)


class _Reader:
    """Cursor over payload bytes; every short read is a MalformedPayload."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise MalformedPayload(f"truncated payload: wanted {n} octets at offset {self.pos}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def text(self) -> str:
        (length,) = self.unpack(">I")
        if length > TEXT_LIMIT:
            raise MalformedPayload(f"text field length {length} exceeds {TEXT_LIMIT}")
        try:
            return self.take(length).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedPayload(f"text field is not valid UTF-8: {exc}") from exc

    def done(self) -> None:
        if self.pos != len(self.data):
            raise MalformedPayload(f"{len(self.data) - self.pos} trailing octets after payload")


def _decode_profile(reader: _Reader) -> PatientProfile:
    patient_id = reader.take(ID_SIZE)
    name = reader.text()
    year, month, day = reader.unpack(">HBB")
    try:
        dob = datetime.date(year, month, day)
    except ValueError as exc:
        raise MalformedPayload(f"invalid date of birth: {exc}") from exc
    medical_info = reader.text()
    return PatientProfile(patient_id, name, dob, medical_info)


def canonical_decode(payload_type: PayloadType, data: bytes) -> HealthRecord | PresetCommand:
    """Exact inverse of :func:`canonical_encode`; rejects trailing garbage.

    Raises MalformedPayload for structural damage and InvariantViolation for
    well-formed bytes describing an invalid value (e.g. unsorted readings).
    """
    payload_type = PayloadType(payload_type)
    reader = _Reader(bytes(data))
    expected_magic = RECORD_MAGIC if payload_type is PayloadType.HEALTH_RECORD else COMMAND_MAGIC
    magic = reader.take(4)
    if magic != expected_magic:
        raise MalformedPayload(f"bad payload magic {magic!r}, expected {expected_magic!r}")
    (version,) = reader.unpack(">B")
    if version != PAYLOAD_VERSION:
        raise MalformedPayload(f"unsupported payload version {version}")

    if payload_type is PayloadType.HEALTH_RECORD:
        profile = _decode_profile(reader)
        (n_readings,) = reader.unpack(">I")
        readings = tuple(GlucoseReading(*reader.unpack(">QH")) for _ in range(n_readings))
        (n_doses,) = reader.unpack(">I")
        doses = []
        for _ in range(n_doses):
            ts, amount, origin = reader.unpack(">QIB")
            try:
                origin = DoseOrigin(origin)
            except ValueError as exc:
                raise MalformedPayload(f"unknown dose origin {origin}") from exc
            doses.append(DoseEvent(ts, amount, origin))
        period_start, period_end = reader.unpack(">QQ")
        reader.done()
        return HealthRecord(profile, readings, tuple(doses), period_start, period_end)

    command_id = reader.take(ID_SIZE)
    patient_id = reader.take(ID_SIZE)
    issued_at, kind = reader.unpack(">QB")
    try:
        kind = CommandKind(kind)
    except ValueError as exc:
        raise MalformedPayload(f"unknown command kind {kind}") from exc
    (n_entries,) = reader.unpack(">I")
    schedule = tuple(reader.unpack(">HI") for _ in range(n_entries))
    reader.done()
    return PresetCommand(command_id, patient_id, issued_at, kind, schedule)


# --- signing and verification ----------------------------------------------

def payload_type_of(value: HealthRecord | PresetCommand) -> PayloadType:
    if isinstance(value, HealthRecord):
        return PayloadType.HEALTH_RECORD
    if isinstance(value, PresetCommand):
        return PayloadType.PRESET_COMMAND
    raise TypeError(f"no payload type for {type(value).__name__}")


def sign(value: HealthRecord | PresetCommand) -> SignedEnvelope:
    """Canonically encode the value and append its digest."""
    payload = canonical_encode(value)
    return SignedEnvelope(ENVELOPE_VERSION, payload_type_of(value), payload, digest_of(payload))


def verify(envelope: SignedEnvelope) -> VerificationOutcome:
    """Recompute the payload digest and compare with the appended one.

    Tampering is an outcome, not an error; a discarded outcome carries both
    digests for audit.
    """
    recomputed = digest_of(envelope.payload)
    status = VerifyStatus.AFFIRMED if recomputed == envelope.digest else VerifyStatus.DISCARDED
    return VerificationOutcome(status, recomputed, envelope.digest)


# --- envelope wire format ----------------------------------------------------
# magic "SIOT" | version 0x01 | payload_type | payload length (u32 BE) |
# payload | 32-octet digest. Stored, transmitted, and accepted everywhere.

def encode_envelope(envelope: SignedEnvelope) -> bytes:
    return b"".join((
        ENVELOPE_MAGIC,
        struct.pack(">BBI", envelope.version, envelope.payload_type, len(envelope.payload)),
        envelope.payload,
        envelope.digest,
    ))


def decode_envelope(data: bytes) -> SignedEnvelope:
    """Parse envelope bytes without verifying the digest (that is `verify`'s job)."""
    reader = _Reader(bytes(data))
    magic = reader.take(4)
    if magic != ENVELOPE_MAGIC:
        raise MalformedPayload(f"bad envelope magic {magic!r}")
    version, payload_type, length = reader.unpack(">BBI")
    if version != ENVELOPE_VERSION:
        raise MalformedPayload(f"unsupported envelope version {version}")
    try:
        payload_type = PayloadType(payload_type)
    except ValueError as exc:
        raise MalformedPayload(f"unknown payload type {payload_type}") from exc
    payload = reader.take(length)
    digest = Digest256(reader.take(DIGEST_SIZE))
    reader.done()
    return SignedEnvelope(version, payload_type, payload, digest)
