"""Record model tests: canonical encoding round-trips and injectivity,
sign/verify soundness, tamper detection, and the SIOT envelope wire format."""

import datetime
import hashlib
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from siot import records as rec
from siot.records import (
    CommandKind,
    DoseEvent,
    DoseOrigin,
    GlucoseReading,
    HealthRecord,
    PatientProfile,
    PayloadType,
    PresetCommand,
    SignedEnvelope,
    VerifyStatus,
)

PID = bytes(range(1, 17))


def make_profile(**kw):
    defaults = dict(
        patient_id=PID,
        name="Jane Roe",
        date_of_birth=datetime.date(1980, 5, 17),
        medical_info="type 1 diabetes; insulin lispro",
    )
    defaults.update(kw)
    return PatientProfile(**defaults)


def make_record(**kw):
    defaults = dict(
        profile=make_profile(),
        readings=(GlucoseReading(300, 95), GlucoseReading(600, 110)),
        doses=(DoseEvent(450, 1500, DoseOrigin.SCHEDULED),),
        period_start=0,
        period_end=3600,
    )
    defaults.update(kw)
    return HealthRecord(**defaults)


# --- hypothesis strategies ---------------------------------------------------

ids = st.binary(min_size=16, max_size=16)
patient_ids = ids.filter(lambda raw: raw != bytes(16))
short_text = st.text(max_size=120)


@st.composite
def profiles(draw):
    return PatientProfile(
        patient_id=draw(patient_ids),
        name=draw(short_text),
        date_of_birth=draw(st.dates()),
        medical_info=draw(short_text),
    )


@st.composite
def health_records(draw):
    start = draw(st.integers(0, 2**40))
    end = start + draw(st.integers(0, rec.DAY_SECONDS))
    stamps = st.integers(start, end)
    raw_readings = draw(st.lists(
        st.tuples(stamps, st.integers(rec.GLUCOSE_MIN, rec.GLUCOSE_MAX)), max_size=16))
    raw_doses = draw(st.lists(
        st.tuples(stamps, st.integers(1, 2**32 - 1), st.sampled_from(list(DoseOrigin))),
        max_size=8))
    readings = tuple(GlucoseReading(ts, lvl) for ts, lvl in sorted(raw_readings))
    doses = tuple(DoseEvent(ts, amt, origin)
                  for ts, amt, origin in sorted(raw_doses, key=lambda d: d[0]))
    return HealthRecord(draw(profiles()), readings, doses, start, end)


@st.composite
def preset_commands(draw):
    kind = draw(st.sampled_from(list(CommandKind)))
    schedule = ()
    if kind is CommandKind.SET_SCHEDULE:
        entries = draw(st.lists(
            st.tuples(st.integers(0, 1439), st.integers(0, 2**32 - 1)),
            max_size=12, unique_by=lambda e: e[0]))
        schedule = tuple(sorted(entries))
    return PresetCommand(
        command_id=draw(ids),
        patient_id=draw(patient_ids),
        issued_at=draw(st.integers(0, 2**48)),
        kind=kind,
        schedule=schedule,
    )


signables = st.one_of(health_records(), preset_commands())


# --- canonical encoding ------------------------------------------------------

class TestCanonicalEncoding:
    def test_power_off_layout(self):
        cmd = PresetCommand(b"\x07" * 16, PID, 1234, CommandKind.POWER_OFF)
        payload = rec.canonical_encode(cmd)
        assert payload[:4] == b"PCMD"
        assert payload[4] == 0x01  # payload version
        assert payload[5:21] == b"\x07" * 16
        assert payload[21:37] == PID
        assert payload[37:45] == (1234).to_bytes(8, "big")
        assert payload[45] == 0x02  # power_off kind octet
        assert payload[46:50] == b"\x00\x00\x00\x00"  # empty schedule
        assert len(payload) == 50

    def test_record_magic_and_version(self):
        payload = rec.canonical_encode(make_record())
        assert payload[:4] == b"HREC" and payload[4] == 0x01

    @given(signables)
    @settings(max_examples=200)
    def test_round_trip(self, value):
        payload = rec.canonical_encode(value)
        assert rec.canonical_decode(rec.payload_type_of(value), payload) == value

    @given(signables, signables)
    @settings(max_examples=200)
    def test_injectivity(self, x, y):
        same_bytes = rec.canonical_encode(x) == rec.canonical_encode(y)
        assert same_bytes == (x == y)

    @given(signables)
    @settings(max_examples=50)
    def test_deterministic(self, value):
        assert rec.canonical_encode(value) == rec.canonical_encode(value)


class TestDecodeRejections:
    def test_truncated(self):
        payload = rec.canonical_encode(make_record())
        for cut in (3, 5, 20, len(payload) - 1):
            with pytest.raises(rec.MalformedPayload):
                rec.canonical_decode(PayloadType.HEALTH_RECORD, payload[:cut])

    def test_bad_magic(self):
        payload = rec.canonical_encode(make_record())
        with pytest.raises(rec.MalformedPayload):
            rec.canonical_decode(PayloadType.PRESET_COMMAND, payload)

    def test_bad_version(self):
        payload = bytearray(rec.canonical_encode(make_record()))
        payload[4] = 0x99
        with pytest.raises(rec.MalformedPayload):
            rec.canonical_decode(PayloadType.HEALTH_RECORD, bytes(payload))

    def test_trailing_garbage(self):
        payload = rec.canonical_encode(make_record())
        with pytest.raises(rec.MalformedPayload):
            rec.canonical_decode(PayloadType.HEALTH_RECORD, payload + b"\x00")

    def test_out_of_range_schedule_minute(self):
        cmd = PresetCommand(b"\x07" * 16, PID, 0, CommandKind.SET_SCHEDULE, ((100, 500),))
        payload = bytearray(rec.canonical_encode(cmd))
        payload[-6:-4] = (1440).to_bytes(2, "big")  # start minute field of the only entry
        with pytest.raises(rec.InvariantViolation):
            rec.canonical_decode(PayloadType.PRESET_COMMAND, bytes(payload))

    def test_unsorted_readings_rejected(self):
        record = make_record()
        payload = bytearray(rec.canonical_encode(record))
        # The two readings sit right after the profile; swap their timestamps.
        base = payload.index((300).to_bytes(8, "big"))
        payload[base:base + 8], payload[base + 10:base + 18] = (
            payload[base + 10:base + 18], payload[base:base + 8])
        with pytest.raises(rec.InvariantViolation):
            rec.canonical_decode(PayloadType.HEALTH_RECORD, bytes(payload))


class TestTypeInvariants:
    def test_zero_patient_id(self):
        with pytest.raises(rec.InvariantViolation):
            make_profile(patient_id=bytes(16))

    def test_wrong_id_length(self):
        with pytest.raises(rec.InvariantViolation):
            make_profile(patient_id=b"\x01" * 8)

    def test_text_field_limit(self):
        make_profile(medical_info="x" * rec.TEXT_LIMIT)  # boundary allowed
        with pytest.raises(rec.InvariantViolation):
            make_profile(medical_info="x" * (rec.TEXT_LIMIT + 1))

    def test_glucose_bounds(self):
        GlucoseReading(0, rec.GLUCOSE_MIN)
        GlucoseReading(0, rec.GLUCOSE_MAX)
        for level in (rec.GLUCOSE_MIN - 1, rec.GLUCOSE_MAX + 1):
            with pytest.raises(rec.InvariantViolation):
                GlucoseReading(0, level)

    def test_zero_dose(self):
        with pytest.raises(rec.InvariantViolation):
            DoseEvent(0, 0, DoseOrigin.MANUAL)

    def test_unsorted_series(self):
        with pytest.raises(rec.InvariantViolation):
            make_record(readings=(GlucoseReading(600, 95), GlucoseReading(300, 95)))

    def test_timestamp_outside_period(self):
        with pytest.raises(rec.InvariantViolation):
            make_record(readings=(GlucoseReading(4000, 95),))

    def test_period_longer_than_a_day(self):
        with pytest.raises(rec.InvariantViolation):
            make_record(readings=(), doses=(), period_end=rec.DAY_SECONDS + 1)

    def test_schedule_on_power_command(self):
        with pytest.raises(rec.InvariantViolation):
            PresetCommand(b"\x07" * 16, PID, 0, CommandKind.POWER_ON, ((0, 100),))

    def test_duplicate_schedule_minutes(self):
        with pytest.raises(rec.InvariantViolation):
            PresetCommand(b"\x07" * 16, PID, 0, CommandKind.SET_SCHEDULE, ((60, 1), (60, 2)))

    def test_unsorted_schedule(self):
        with pytest.raises(rec.InvariantViolation):
            PresetCommand(b"\x07" * 16, PID, 0, CommandKind.SET_SCHEDULE, ((120, 1), (60, 2)))


# --- sign / verify -----------------------------------------------------------

class TestSignVerify:
    @given(signables)
    @settings(max_examples=150)
    def test_sign_then_verify_affirms(self, value):
        outcome = rec.verify(rec.sign(value))
        assert outcome.status is VerifyStatus.AFFIRMED
        assert outcome.recomputed == outcome.appended

    @given(signables)
    @settings(max_examples=50)
    def test_signing_is_deterministic(self, value):
        assert rec.sign(value) == rec.sign(value)

    @given(signables)
    @settings(max_examples=100)
    def test_digest_matches_independent_oracle(self, value):
        envelope = rec.sign(value)
        assert bytes(envelope.digest) == hashlib.sha256(envelope.payload).digest()

    def test_bit_flips_always_discarded(self):
        rng = random.Random(7)
        envelope = rec.sign(make_record())
        for _ in range(300):
            payload = bytearray(envelope.payload)
            bit = rng.randrange(0, 8 * len(payload))
            payload[bit // 8] ^= 1 << (bit % 8)
            tampered = SignedEnvelope(
                envelope.version, envelope.payload_type, bytes(payload), envelope.digest)
            outcome = rec.verify(tampered)
            assert outcome.status is VerifyStatus.DISCARDED
            assert outcome.recomputed != outcome.appended

    def test_digest_tamper_discarded(self):
        envelope = rec.sign(make_record())
        bad_digest = bytearray(envelope.digest)
        bad_digest[0] ^= 0x01
        tampered = SignedEnvelope(
            envelope.version, envelope.payload_type, envelope.payload, bytes(bad_digest))
        assert rec.verify(tampered).status is VerifyStatus.DISCARDED

    def test_outcome_depends_only_on_bytes(self):
        envelope = rec.sign(make_record())
        wire = rec.encode_envelope(envelope)
        # cloud side and patient side decode the same bytes independently
        assert rec.verify(rec.decode_envelope(wire)) == rec.verify(rec.decode_envelope(wire))


# --- envelope wire format ----------------------------------------------------

class TestEnvelopeWire:
    @given(signables)
    @settings(max_examples=100)
    def test_round_trip(self, value):
        envelope = rec.sign(value)
        wire = rec.encode_envelope(envelope)
        assert rec.decode_envelope(wire) == envelope

    def test_layout(self):
        envelope = rec.sign(make_record())
        wire = rec.encode_envelope(envelope)
        assert wire[:4] == b"SIOT"
        assert wire[4] == 0x01
        assert wire[5] == PayloadType.HEALTH_RECORD
        assert int.from_bytes(wire[6:10], "big") == len(envelope.payload)
        assert wire[10:10 + len(envelope.payload)] == envelope.payload
        assert wire[-32:] == bytes(envelope.digest)

    def test_rejects_damage(self):
        wire = rec.encode_envelope(rec.sign(make_record()))
        cases = [
            b"XIOT" + wire[4:],          # magic
            wire[:4] + b"\x02" + wire[5:],  # version
            wire[:5] + b"\x09" + wire[6:],  # payload type
            wire[:-1],                   # truncated digest
            wire + b"\x00",              # trailing garbage
            wire[:10],                   # truncated payload
        ]
        for damaged in cases:
            with pytest.raises(rec.MalformedPayload):
                rec.decode_envelope(damaged)

    def test_decode_does_not_verify(self):
        # decoding tolerates a wrong digest; verification decides
        envelope = rec.sign(make_record())
        wire = bytearray(rec.encode_envelope(envelope))
        wire[-1] ^= 0xFF
        parsed = rec.decode_envelope(bytes(wire))
        assert rec.verify(parsed).status is VerifyStatus.DISCARDED
