"""Cloud store tests: ingest gating, append-only persistence with crash
recovery, command ticket lifecycle, authorization, and tamper alerts."""

import datetime
import struct

import pytest

from siot.cloud import (
    AlertSource,
    CloudStore,
    DuplicateCommand,
    IntegrityRejected,
    InvalidTransition,
    Principal,
    Role,
    TicketState,
    UnknownCommand,
    Unauthorized,
    load_principals,
)
from siot.records import (
    CommandKind,
    DoseEvent,
    DoseOrigin,
    GlucoseReading,
    HealthRecord,
    MalformedPayload,
    PatientProfile,
    PresetCommand,
    SignedEnvelope,
    encode_envelope,
    sign,
)

PID = bytes(range(1, 17))
OTHER_PID = bytes(range(101, 117))


def principals():
    return [
        Principal("gw-1", "dev-token", Role.DEVICE, frozenset({PID})),
        Principal("dr-a", "phys-token", Role.PHYSICIAN, frozenset({PID})),
        Principal("lab-x", "res-token", Role.RESEARCHER, frozenset({PID})),
    ]


@pytest.fixture
def store(tmp_path):
    return CloudStore(tmp_path / "cloud", principals(), clock=lambda: 1000)


def device(store):
    return store.authenticate("dev-token")


def physician(store):
    return store.authenticate("phys-token")


def researcher(store):
    return store.authenticate("res-token")


def make_record(hour=0, patient_id=PID):
    profile = PatientProfile(patient_id, "Pat", datetime.date(1970, 1, 1), "T1D")
    start = hour * 3600
    readings = tuple(GlucoseReading(start + 300 * (i + 1), 90 + i) for i in range(3))
    doses = (DoseEvent(start + 3600, 800, DoseOrigin.SCHEDULED),)
    return HealthRecord(profile, readings, doses, start, start + 3600)


def record_bytes(hour=0, patient_id=PID):
    return encode_envelope(sign(make_record(hour, patient_id)))


def make_command(n=1, patient_id=PID, kind=CommandKind.POWER_ON):
    return PresetCommand(bytes([n]) * 16, patient_id, n, kind)


class TestAuth:
    def test_unknown_token(self, store):
        with pytest.raises(Unauthorized):
            store.authenticate("nope")
        with pytest.raises(Unauthorized):
            store.authenticate(None)

    def test_load_principals_file(self, tmp_path):
        path = tmp_path / "tokens.json"
        path.write_text(
            '{"principals": [{"token": "t1", "role": "device", "id": "gw", '
            f'"patients": ["{PID.hex()}"]}}]}}')
        loaded = load_principals(path)
        assert len(loaded) == 1
        assert loaded[0].role is Role.DEVICE
        assert loaded[0].covers(PID)


class TestIngest:
    def test_valid_envelope_stored_byte_identical(self, store):
        raw = record_bytes()
        record_id = store.ingest_record(raw, device(store))
        assert record_id == 1
        stored = store.fetch_records(PID, physician(store))
        assert len(stored) == 1
        assert stored[0].raw == raw
        assert stored[0].received_at == 1000

    def test_ids_strictly_increase(self, store):
        ids = [store.ingest_record(record_bytes(hour=h), device(store)) for h in range(5)]
        assert ids == [1, 2, 3, 4, 5]

    def test_tampered_envelope_rejected_with_alert(self, store):
        raw = bytearray(record_bytes())
        raw[40] ^= 0x01  # payload byte
        with pytest.raises(IntegrityRejected) as err:
            store.ingest_record(bytes(raw), device(store))
        assert err.value.expected != err.value.observed
        assert store.fetch_records(PID, physician(store)) == []
        alerts = store.list_alerts(physician(store))
        assert len(alerts) == 1
        assert alerts[0].source is AlertSource.INGEST
        assert alerts[0].expected == err.value.expected
        assert alerts[0].observed == err.value.observed

    def test_wrong_payload_type(self, store):
        command_env = encode_envelope(sign(make_command()))
        with pytest.raises(MalformedPayload):
            store.ingest_record(command_env, device(store))

    def test_role_and_scope_rules(self, store):
        raw = record_bytes()
        for who in (physician(store), researcher(store)):
            with pytest.raises(Unauthorized):
                store.ingest_record(raw, who)
        foreign = record_bytes(patient_id=OTHER_PID)
        with pytest.raises(Unauthorized):
            store.ingest_record(foreign, device(store))


class TestFetch:
    def test_order_and_range(self, tmp_path):
        now = {"t": 0}
        store = CloudStore(tmp_path / "c", principals(), clock=lambda: now["t"])
        for hour in range(4):
            now["t"] = hour * 100
            store.ingest_record(record_bytes(hour=hour), device(store))
        phys = physician(store)
        assert [r.record_id for r in store.fetch_records(PID, phys)] == [1, 2, 3, 4]
        subset = store.fetch_records(PID, phys, received_from=100, received_to=200)
        assert [r.record_id for r in subset] == [2, 3]
        assert store.fetch_records(PID, phys, received_from=9999) == []

    def test_researcher_can_read(self, store):
        store.ingest_record(record_bytes(), device(store))
        assert len(store.fetch_records(PID, researcher(store))) == 1

    def test_device_cannot_read(self, store):
        with pytest.raises(Unauthorized):
            store.fetch_records(PID, device(store))

    def test_scope_enforced(self, store):
        with pytest.raises(Unauthorized):
            store.fetch_records(OTHER_PID, physician(store))


class TestCommands:
    def test_issue_queue_deliver_ack(self, store):
        ticket = store.issue_command(make_command(1), physician(store))
        assert ticket.state is TicketState.QUEUED
        deliveries = store.next_commands(device(store), "gw-1")
        assert len(deliveries) == 1
        cid, raw = deliveries[0]
        assert cid == ticket.command_id.hex()
        assert store.get_ticket(ticket.command_id).state is TicketState.DELIVERED
        store.ack_command(ticket.command_id, "applied", device(store))
        assert ticket.state is TicketState.APPLIED
        assert store.next_commands(device(store), "gw-1") == []  # not redelivered

    def test_issue_order_preserved(self, store):
        first = store.issue_command(make_command(1), physician(store))
        second = store.issue_command(make_command(2), physician(store))
        deliveries = store.next_commands(device(store), "gw-1")
        assert [cid for cid, _ in deliveries] == [
            first.command_id.hex(), second.command_id.hex()]

    def test_duplicate_command_id(self, store):
        store.issue_command(make_command(1), physician(store))
        with pytest.raises(DuplicateCommand):
            store.issue_command(make_command(1), physician(store))

    def test_role_rules(self, store):
        for who in (device(store), researcher(store)):
            with pytest.raises(Unauthorized):
                store.issue_command(make_command(3), who)
        with pytest.raises(Unauthorized):
            store.next_commands(physician(store), "dr-a")
        with pytest.raises(Unauthorized):
            store.next_commands(device(store), "some-other-device")

    def test_scope_rule(self, store):
        with pytest.raises(Unauthorized):
            store.issue_command(make_command(4, patient_id=OTHER_PID), physician(store))

    def test_signed_envelope_issue_path(self, store):
        raw = encode_envelope(sign(make_command(5)))
        ticket = store.issue_command_envelope(raw, physician(store))
        assert ticket.raw == raw  # stored verbatim
        mangled = bytearray(encode_envelope(sign(make_command(6))))
        mangled[40] ^= 0x02
        with pytest.raises(IntegrityRejected):
            store.issue_command_envelope(bytes(mangled), physician(store))
        assert len(store.list_alerts(physician(store))) == 1

    def test_ack_unknown_command(self, store):
        with pytest.raises(UnknownCommand):
            store.ack_command(b"\x99" * 16, "applied", device(store))

    def test_ack_requires_delivered_state(self, store):
        ticket = store.issue_command(make_command(7), physician(store))
        with pytest.raises(InvalidTransition):
            store.ack_command(ticket.command_id, "applied", device(store))
        store.next_commands(device(store), "gw-1")
        store.ack_command(ticket.command_id, "applied", device(store))
        with pytest.raises(InvalidTransition):  # terminal state
            store.ack_command(ticket.command_id, "discarded", device(store))

    def test_discard_ack_raises_alert_with_digests(self, store):
        ticket = store.issue_command(make_command(8), physician(store))
        store.next_commands(device(store), "gw-1")
        expected = ticket.envelope.digest
        observed = bytes(reversed(expected))
        store.ack_command(ticket.command_id, "discarded", device(store),
                          expected=expected, observed=observed, context="unit test")
        assert ticket.state is TicketState.DISCARDED_BY_GATEWAY
        alert = store.list_alerts(physician(store))[0]
        assert alert.source is AlertSource.GATEWAY_REPORT
        assert alert.expected == expected
        assert bytes(alert.observed) == observed
        assert alert.context == "unit test"


class TestAlerts:
    def test_physician_only(self, store):
        for who in (device(store), researcher(store)):
            with pytest.raises(Unauthorized):
                store.list_alerts(who)

    def test_newest_first(self, tmp_path):
        now = {"t": 0}
        store = CloudStore(tmp_path / "c", principals(), clock=lambda: now["t"])
        for t in (10, 20):
            now["t"] = t
            raw = bytearray(record_bytes(hour=t))
            raw[40] ^= 0x01
            with pytest.raises(IntegrityRejected):
                store.ingest_record(bytes(raw), device(store))
        alerts = store.list_alerts(physician(store))
        assert [a.at for a in alerts] == [20, 10]


class TestDurability:
    def test_restart_preserves_everything(self, tmp_path):
        data = tmp_path / "cloud"
        store = CloudStore(data, principals(), clock=lambda: 7)
        raws = [record_bytes(hour=h) for h in range(6)]
        acked = [store.ingest_record(r, device(store)) for r in raws]
        del store  # simulated kill: no shutdown hook exists at all

        reopened = CloudStore(data, principals(), clock=lambda: 8)
        assert reopened.audit() == 6
        stored = reopened.fetch_records(PID, physician(reopened))
        assert [r.record_id for r in stored] == acked
        assert [r.raw for r in stored] == raws
        # ids continue after the highest persisted one
        assert reopened.ingest_record(record_bytes(hour=7), device(reopened)) == 7

    def test_torn_tail_truncated(self, tmp_path):
        data = tmp_path / "cloud"
        store = CloudStore(data, principals())
        store.ingest_record(record_bytes(hour=0), device(store))
        store.ingest_record(record_bytes(hour=1), device(store))
        log = data / f"{PID.hex()}.log"
        with open(log, "ab") as fh:  # a crash mid-append: length prefix + partial entry
            fh.write(struct.pack(">I", 500) + b"\x00" * 37)
        reopened = CloudStore(data, principals())
        assert reopened.audit() == 2
        assert len(reopened.fetch_records(PID, physician(reopened))) == 2
        # the torn bytes are gone; a fresh ingest parses cleanly afterwards
        reopened.ingest_record(record_bytes(hour=2), device(reopened))
        reread = CloudStore(data, principals())
        assert reread.audit() == 3

    def test_append_only_bytes_never_change(self, tmp_path):
        data = tmp_path / "cloud"
        store = CloudStore(data, principals())
        raw = record_bytes()
        store.ingest_record(raw, device(store))
        first = (data / f"{PID.hex()}.log").read_bytes()
        store.ingest_record(record_bytes(hour=2), device(store))
        second = (data / f"{PID.hex()}.log").read_bytes()
        assert second.startswith(first)

    def test_audit_catches_on_disk_corruption(self, tmp_path):
        data = tmp_path / "cloud"
        store = CloudStore(data, principals())
        store.ingest_record(record_bytes(), device(store))
        log = data / f"{PID.hex()}.log"
        blob = bytearray(log.read_bytes())
        blob[60] ^= 0x01  # flip a payload bit inside the stored envelope
        log.write_bytes(bytes(blob))
        reopened = CloudStore(data, principals())
        with pytest.raises(IntegrityRejected):
            reopened.audit()
