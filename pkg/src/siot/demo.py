"""In-process end-to-end demo: pump, gateway, and cloud store wired together
under simulated time, with optional tamper injection on the command channel.

A 24-hour day replays in a couple of seconds. The demo issues one valid
schedule command plus K commands whose envelopes get a bit flipped in
transit; a correct system affirms every record, applies the valid command,
discards all K tampered ones with matching alerts, and leaves the pump
running the valid schedule.
"""

from __future__ import annotations

import datetime
import random
import tempfile
import time
from dataclasses import dataclass, field

from siot.cloud import CloudStore, Principal, Role
from siot.gateway import (
    CloudClient,
    FaultCode,
    Gateway,
    GatewayConfig,
    InProcessPumpLink,
    LocalCloudClient,
)
from siot.pump import PumpSimulator
from siot.records import (
    CommandKind,
    PatientProfile,
    PresetCommand,
    decode_envelope,
    verify,
)

DEVICE_TOKEN = "demo-device-token"
PHYSICIAN_TOKEN = "demo-physician-token"
RESEARCHER_TOKEN = "demo-researcher-token"
DEVICE_ID = "demo-gateway"

# the one valid basal schedule the physician pushes during the demo
DEMO_SCHEDULE = ((0, 800), (420, 1200), (1290, 600))


@dataclass
class DemoReport:
    hours: int
    seed: int
    records_sent: int = 0
    records_affirmed: int = 0
    commands_issued: int = 0
    commands_applied: int = 0
    commands_discarded: int = 0
    alerts: int = 0
    wall_time: float = 0.0
    pump_schedule: tuple = ()
    pump_power: bool = True
    expected_schedule: tuple = ()
    problems: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.problems

    def counters(self) -> dict[str, int]:
        """The deterministic part of the report (wall time excluded)."""
        return {
            "records_sent": self.records_sent,
            "records_affirmed": self.records_affirmed,
            "commands_issued": self.commands_issued,
            "commands_applied": self.commands_applied,
            "commands_discarded": self.commands_discarded,
            "alerts": self.alerts,
        }

    def lines(self) -> list[str]:
        out = [
            f"simulated hours:    {self.hours}",
            f"records sent:       {self.records_sent}",
            f"records affirmed:   {self.records_affirmed}",
            f"commands issued:    {self.commands_issued}",
            f"commands applied:   {self.commands_applied}",
            f"commands discarded: {self.commands_discarded}",
            f"tamper alerts:      {self.alerts}",
            f"pump schedule:      {list(self.pump_schedule)}",
            f"pump power:         {'on' if self.pump_power else 'off'}",
            f"wall time:          {self.wall_time:.2f} s",
        ]
        out.extend(f"PROBLEM: {p}" for p in self.problems)
        out.append("demo result:        " + ("OK" if self.ok else "FAILED"))
        return out


class TamperingClient:
    """Wraps a cloud client and flips one deterministic bit in each designated
    command envelope while it is 'in flight' to the gateway."""

    def __init__(self, inner: CloudClient, victims: set[str], seed: int):
        self.inner = inner
        self.victims = set(victims)
        self._rng = random.Random(seed)

    def ingest(self, envelope_bytes: bytes) -> int:
        return self.inner.ingest(envelope_bytes)

    def next_commands(self) -> list[tuple[str, bytes]]:
        deliveries = []
        for cid, raw in self.inner.next_commands():
            if cid in self.victims:
                mangled = bytearray(raw)
                # flip a payload bit (headers would fail structurally anyway)
                bit = self._rng.randrange(10 * 8, (len(mangled) - 32) * 8)
                mangled[bit // 8] ^= 1 << (bit % 8)
                raw = bytes(mangled)
            deliveries.append((cid, raw))
        return deliveries

    def ack(self, command_id_hex: str, outcome: str, expected=None, observed=None,
            context: str = "") -> None:
        self.inner.ack(command_id_hex, outcome,
                       expected=expected, observed=observed, context=context)


def demo_principals(patient_id: bytes) -> list[Principal]:
    scope = frozenset({patient_id})
    return [
        Principal(DEVICE_ID, DEVICE_TOKEN, Role.DEVICE, scope),
        Principal("demo-physician", PHYSICIAN_TOKEN, Role.PHYSICIAN, scope),
        Principal("demo-researcher", RESEARCHER_TOKEN, Role.RESEARCHER, scope),
    ]


class DemoHarness:
    """Owns all three components plus the simulated clock."""

    def __init__(self, seed: int = 1, data_dir: str | None = None,
                 record_period: int = 3600, poll_interval: int = 60):
        self.seed = seed
        self.now = 0
        rng = random.Random(seed)
        self.patient_id = bytes([1]) + rng.randbytes(15)
        self.profile = PatientProfile(
            patient_id=self.patient_id,
            name="Demo Patient",
            date_of_birth=datetime.date(1970, 3, 12),
            medical_info="type 1 diabetes; demo profile",
        )
        self.data_dir = data_dir or tempfile.mkdtemp(prefix="siot-demo-")
        self.store = CloudStore(self.data_dir, demo_principals(self.patient_id),
                                clock=lambda: self.now)
        self.pump = PumpSimulator(seed=seed)
        self.link = InProcessPumpLink(self.pump)
        self.config = GatewayConfig(
            device_id=rng.randbytes(16), patient_id=self.patient_id,
            cloud_endpoint="in-process", auth_token=DEVICE_TOKEN,
            record_period=record_period, poll_interval=poll_interval)
        self.base_client = LocalCloudClient(self.store, DEVICE_TOKEN, DEVICE_ID)
        self.gateway = Gateway(self.config, self.link, self.base_client, self.profile)
        self._rng = rng
        self.outcomes: list[str] = []

    @property
    def physician(self):
        return self.store.authenticate(PHYSICIAN_TOKEN)

    def issue_commands(self, tampered: int) -> list[str]:
        """One valid schedule command plus ``tampered`` victims; returns the
        victim command ids (hex)."""
        valid = PresetCommand(self._rng.randbytes(16), self.patient_id,
                              self.now, CommandKind.SET_SCHEDULE, DEMO_SCHEDULE)
        self.store.issue_command(valid, self.physician)
        victims = []
        for i in range(tampered):
            rogue = PresetCommand(
                self._rng.randbytes(16), self.patient_id, self.now,
                CommandKind.SET_SCHEDULE, ((0, 50000 + i),))
            self.store.issue_command(rogue, self.physician)
            victims.append(rogue.command_id.hex())
        return victims

    def step(self, dt: int = 60) -> None:
        """Advance simulated time: tick the pump, acquire frames, poll and
        handle commands, close periods, and flush deliveries."""
        self.now += dt
        self.link.push_frames(self.pump.tick(dt))
        self.gateway.ingest_frames(self.link.poll(), self.now)
        if self.now % self.config.poll_interval == 0:
            self.outcomes.extend(self.gateway.poll_and_handle(self.now))
        if self.now % self.config.record_period == 0:
            self.gateway.publish(self.gateway.close_period(self.now), self.now)
        else:
            self.gateway.flush(self.now)

    def run_hours(self, hours: int) -> None:
        for _ in range(hours * 60):
            self.step(60)


def run_demo(hours: int, tamper_commands: int = 0, seed: int = 1,
             data_dir: str | None = None) -> DemoReport:
    report, _ = run_demo_with_harness(hours, tamper_commands, seed, data_dir)
    return report


def run_demo_with_harness(hours: int, tamper_commands: int = 0, seed: int = 1,
                          data_dir: str | None = None) -> tuple[DemoReport, DemoHarness]:
    started = time.monotonic()
    harness = DemoHarness(seed=seed, data_dir=data_dir)
    report = DemoReport(hours=hours, seed=seed, expected_schedule=DEMO_SCHEDULE)

    if hours > 0:
        victims = harness.issue_commands(tamper_commands)
        harness.gateway.cloud = TamperingClient(
            harness.base_client, set(victims), seed=seed ^ 0x5A5A)
        report.commands_issued = 1 + tamper_commands
        harness.run_hours(hours)

    report.records_sent = harness.gateway.records_sent
    report.commands_applied = harness.outcomes.count("applied")
    report.commands_discarded = harness.outcomes.count("discarded")

    # the physician's side of the "both sides" rule: re-fetch and re-verify
    fetched = harness.store.fetch_records(harness.patient_id, harness.physician)
    report.records_affirmed = sum(
        1 for r in fetched if verify(decode_envelope(r.raw)).affirmed)
    report.alerts = len(harness.store.list_alerts(harness.physician))
    report.pump_schedule = harness.pump.state.schedule
    report.pump_power = harness.pump.state.power

    _validate(report, harness, tamper_commands)
    report.wall_time = time.monotonic() - started
    return report, harness


def _validate(report: DemoReport, harness: DemoHarness, tampered: int) -> None:
    checks = [
        (report.records_sent == report.hours,
         f"expected {report.hours} records sent, saw {report.records_sent}"),
        (report.records_affirmed == report.records_sent,
         f"only {report.records_affirmed} of {report.records_sent} records affirmed"),
        (report.commands_discarded == tampered,
         f"expected {tampered} discarded commands, saw {report.commands_discarded}"),
        (report.alerts == tampered,
         f"expected {tampered} alerts, saw {report.alerts}"),
    ]
    if report.hours > 0:
        checks.append((report.commands_applied == 1,
                       f"expected 1 applied command, saw {report.commands_applied}"))
        checks.append((report.pump_schedule == DEMO_SCHEDULE,
                       "pump schedule does not match the valid command"))
        checks.append((report.pump_power,
                       "pump should still be powered on"))
        mismatch_faults = harness.gateway.fault_counts().get(FaultCode.SIGNATURE_MISMATCH, 0)
        checks.append((mismatch_faults == tampered,
                       f"expected {tampered} signature-mismatch faults, saw {mismatch_faults}"))
    for passed, message in checks:
        if not passed:
            report.problems.append(message)
