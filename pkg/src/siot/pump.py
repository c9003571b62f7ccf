"""Software stand-in for the infusion pump: executes a preset basal schedule,
emits dose events and synthetic glucose readings, honors power on/off, and
speaks a small CRC-framed serial protocol to the gateway.

The real pump's serial protocol is proprietary, so the link layer here is a
minimal SOF/type/length/payload/CRC-16 framing. Time is simulated: the pump
only moves when ticked, so a 24-hour day replays in milliseconds and identical
(seed, schedule, tick sequence) gives identical output.
"""

from __future__ import annotations

import math
import random
import struct
from dataclasses import dataclass
from enum import IntEnum

from siot.records import MINUTES_PER_DAY, CommandKind, DoseOrigin, PresetCommand

SOF = 0x7E
MAX_PAYLOAD = 255
GLUCOSE_INTERVAL = 300   # one synthetic reading every 5 simulated minutes
DOSE_INTERVAL = 3600     # hourly delivery granularity
# u32 entry count + 6 octets per (start minute, rate) entry within MAX_PAYLOAD
MAX_SCHEDULE_ENTRIES = (MAX_PAYLOAD - 4) // 6


class FrameError(Exception):
    """Undecodable serial frame: bad SOF, bad length, or CRC mismatch."""


class FrameType(IntEnum):
    DOSE_REPORT = 0x01
    GLUCOSE_REPORT = 0x02
    SET_SCHEDULE = 0x10
    POWER = 0x11
    ACK = 0x20
    NACK = 0x21


# CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no xor-out.
def _build_crc_table() -> tuple[int, ...]:
    table = []
    for byte in range(256):
        crc = byte << 8
        for _ in range(8):
            crc = ((crc << 1) ^ 0x1021) & 0xFFFF if crc & 0x8000 else (crc << 1) & 0xFFFF
        table.append(crc)
    return tuple(table)


_CRC_TABLE = _build_crc_table()


def crc16(data: bytes, crc: int = 0xFFFF) -> int:
    for byte in data:
        crc = ((crc << 8) & 0xFFFF) ^ _CRC_TABLE[(crc >> 8) ^ byte]
    return crc


@dataclass(frozen=True)
class SerialFrame:
    frame_type: FrameType
    payload: bytes = b""

    def __post_init__(self) -> None:
        object.__setattr__(self, "frame_type", FrameType(self.frame_type))
        object.__setattr__(self, "payload", bytes(self.payload))
        if len(self.payload) > MAX_PAYLOAD:
            raise FrameError(f"payload of {len(self.payload)} octets exceeds {MAX_PAYLOAD}")


def frame_encode(frame: SerialFrame) -> bytes:
    body = bytes([frame.frame_type, len(frame.payload)]) + frame.payload
    return bytes([SOF]) + body + struct.pack(">H", crc16(body))


def frame_decode(data: bytes) -> SerialFrame:
    data = bytes(data)
    if len(data) < 5:
        raise FrameError(f"frame too short: {len(data)} octets")
    if data[0] != SOF:
        raise FrameError(f"bad start-of-frame octet 0x{data[0]:02x}")
    length = data[2]
    if len(data) != 5 + length:
        raise FrameError(f"frame length {len(data)} does not match header length {length}")
    body = data[1:3 + length]
    (crc,) = struct.unpack(">H", data[3 + length:])
    if crc16(body) != crc:
        raise FrameError(f"CRC mismatch: computed 0x{crc16(body):04x}, frame carries 0x{crc:04x}")
    try:
        frame_type = FrameType(data[1])
    except ValueError as exc:
        raise FrameError(f"unknown frame type 0x{data[1]:02x}") from exc
    return SerialFrame(frame_type, data[3:3 + length])


class FrameAccumulator:
    """Incremental frame extraction for a byte stream (socket links).

    Feed arbitrary chunks; complete frames come out in order. On a damaged
    frame the parser raises and resynchronizes at the next SOF octet.
    """

    def __init__(self) -> None:
        self._buf = bytearray()

    def feed(self, chunk: bytes) -> list[SerialFrame]:
        self._buf += chunk
        frames: list[SerialFrame] = []
        while True:
            if not self._buf:
                return frames
            if self._buf[0] != SOF:
                drop = self._buf.find(bytes([SOF]))
                del self._buf[:drop if drop >= 0 else len(self._buf)]
                raise FrameError("stream desynchronized: skipped garbage before next SOF")
            if len(self._buf) < 3:
                return frames
            total = 5 + self._buf[2]
            if len(self._buf) < total:
                return frames
            raw = bytes(self._buf[:total])
            try:
                frame = frame_decode(raw)
            except FrameError:
                del self._buf[:1]  # resync past the bogus SOF
                raise
            del self._buf[:total]
            frames.append(frame)


# --- frame payloads ----------------------------------------------------------

def dose_report(timestamp: int, amount: int, origin: int) -> SerialFrame:
    return SerialFrame(FrameType.DOSE_REPORT, struct.pack(">QIB", timestamp, amount, origin))


def parse_dose_report(frame: SerialFrame) -> tuple[int, int, int]:
    try:
        return struct.unpack(">QIB", frame.payload)
    except struct.error as exc:
        raise FrameError(f"bad dose report payload: {exc}") from exc


def glucose_report(timestamp: int, level: int) -> SerialFrame:
    return SerialFrame(FrameType.GLUCOSE_REPORT, struct.pack(">QH", timestamp, level))


def parse_glucose_report(frame: SerialFrame) -> tuple[int, int]:
    try:
        return struct.unpack(">QH", frame.payload)
    except struct.error as exc:
        raise FrameError(f"bad glucose report payload: {exc}") from exc


def schedule_frame(schedule: tuple[tuple[int, int], ...]) -> SerialFrame:
    if len(schedule) > MAX_SCHEDULE_ENTRIES:
        raise FrameError(f"schedule of {len(schedule)} entries exceeds "
                         f"{MAX_SCHEDULE_ENTRIES} per frame")
    payload = struct.pack(">I", len(schedule))
    for minute, rate in schedule:
        payload += struct.pack(">HI", minute, rate)
    return SerialFrame(FrameType.SET_SCHEDULE, payload)


def power_frame(on: bool) -> SerialFrame:
    return SerialFrame(FrameType.POWER, b"\x01" if on else b"\x00")


def command_frame(cmd: PresetCommand) -> SerialFrame:
    """Translate a verified preset command into its serial form."""
    if cmd.kind is CommandKind.SET_SCHEDULE:
        return schedule_frame(cmd.schedule)
    return power_frame(cmd.kind is CommandKind.POWER_ON)


ACK = SerialFrame(FrameType.ACK)
NACK = SerialFrame(FrameType.NACK)


# --- glucose synthesis -------------------------------------------------------

_MEAL_MINUTES = (7 * 60 + 30, 12 * 60 + 30, 18 * 60 + 30)
_MEAL_RISE = 60          # mg/dL peak excursion per meal
_MEAL_DECAY = 120        # minutes back to baseline
_BASELINE = 90.0
_DIURNAL_AMPLITUDE = 15.0


def glucose_level(seed: int, timestamp: int) -> int:
    """Deterministic synthetic glucose: baseline + diurnal sinusoid + meal
    excursions + a little seeded noise, clamped to a sane sensor range."""
    minute = (timestamp // 60) % MINUTES_PER_DAY
    level = _BASELINE + _DIURNAL_AMPLITUDE * math.sin(2 * math.pi * (minute - 360) / MINUTES_PER_DAY)
    for meal in _MEAL_MINUTES:
        since = (minute - meal) % MINUTES_PER_DAY
        if since < _MEAL_DECAY:
            level += _MEAL_RISE * (1 - since / _MEAL_DECAY)
    noise = random.Random((seed << 32) ^ (timestamp // GLUCOSE_INTERVAL)).uniform(-4, 4)
    return max(40, min(400, round(level + noise)))


# --- the pump ----------------------------------------------------------------

@dataclass
class PumpState:
    power: bool = True
    schedule: tuple[tuple[int, int], ...] = ()
    clock: int = 0       # simulated seconds since epoch
    delivered: int = 0   # cumulative milli-units
    seed: int = 0


def active_rate(schedule: tuple[tuple[int, int], ...], timestamp: int) -> int:
    """Basal rate in effect: the entry with the largest start minute not after
    the current minute of day, wrapping past midnight to the last entry."""
    if not schedule:
        return 0
    minute = (timestamp // 60) % MINUTES_PER_DAY
    rate = schedule[-1][1]  # wrapped from the previous day
    for start, entry_rate in schedule:
        if start <= minute:
            rate = entry_rate
        else:
            break
    return rate


class PumpSimulator:
    """Deterministic single-patient pump. Drive it with explicit ticks; feed
    it command frames through :meth:`handle_frame`."""

    def __init__(self, seed: int = 0, start_clock: int = 0, power: bool = True,
                 schedule: tuple[tuple[int, int], ...] = ()):
        self.state = PumpState(power=power, schedule=tuple(schedule),
                               clock=start_clock, seed=seed)

    def tick(self, dt: int) -> list[SerialFrame]:
        """Advance the simulated clock by ``dt`` seconds and return the frames
        the pump emitted, in timestamp order.

        A powered-off pump is silent: no doses and no glucose reports. Doses
        fire at each crossed hour boundary with the basal rate in effect.
        """
        if dt <= 0:
            raise ValueError("dt must be positive")
        state = self.state
        start, end = state.clock, state.clock + dt
        frames: list[SerialFrame] = []
        if state.power:
            for ts in _boundaries(start, end, GLUCOSE_INTERVAL):
                frames.append(glucose_report(ts, glucose_level(state.seed, ts)))
            for ts in _boundaries(start, end, DOSE_INTERVAL):
                amount = active_rate(state.schedule, ts)
                if amount > 0:
                    state.delivered += amount
                    frames.append(dose_report(ts, amount, DoseOrigin.SCHEDULED))
            frames.sort(key=lambda f: struct.unpack(">Q", f.payload[:8])[0])
        state.clock = end
        return frames

    def handle_frame(self, frame: SerialFrame) -> SerialFrame:
        """Apply a control frame; reply ACK, or NACK for malformed content.

        The pump trusts its serial peer (the gateway verified the command),
        but still rejects structurally invalid schedules.
        """
        if frame.frame_type is FrameType.POWER:
            if len(frame.payload) != 1 or frame.payload[0] not in (0, 1):
                return NACK
            self.state.power = frame.payload[0] == 1
            return ACK
        if frame.frame_type is FrameType.SET_SCHEDULE:
            try:
                schedule = _parse_schedule(frame.payload)
            except FrameError:
                return NACK
            self.state.schedule = schedule  # replaces, never merges
            return ACK
        return NACK

    def apply_command(self, cmd: PresetCommand) -> SerialFrame:
        return self.handle_frame(command_frame(cmd))


def _boundaries(start: int, end: int, interval: int) -> range:
    """Multiples of ``interval`` in (start, end]."""
    first = (start // interval + 1) * interval
    return range(first, end + 1, interval)


def _parse_schedule(payload: bytes) -> tuple[tuple[int, int], ...]:
    try:
        (count,) = struct.unpack_from(">I", payload, 0)
        if len(payload) != 4 + 6 * count:
            raise FrameError("schedule payload length mismatch")
        entries = [struct.unpack_from(">HI", payload, 4 + 6 * i) for i in range(count)]
    except struct.error as exc:
        raise FrameError(f"bad schedule payload: {exc}") from exc
    minutes = [m for m, _ in entries]
    if any(m >= MINUTES_PER_DAY for m in minutes):
        raise FrameError("schedule start minute out of range")
    if minutes != sorted(minutes) or len(set(minutes)) != len(minutes):
        raise FrameError("schedule entries unsorted or duplicated")
    return tuple((m, r) for m, r in entries)
