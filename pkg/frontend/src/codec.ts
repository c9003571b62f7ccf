/**
 * Canonical byte codec for the SIOT pipeline, mirrored from the backend:
 * fixed magic and version, big-endian fixed-width integers, length-prefixed
 * text and lists. Equal values encode to equal bytes on both sides, which is
 * what makes the digests comparable at all.
 */

import { ByteReader, ByteWriter, bytesEqual, concatBytes, hexToBytes } from "./bytes.js";
import { formatDigest, sha256 } from "./sha256.js";

export const PAYLOAD_RECORD = 1;
export const PAYLOAD_COMMAND = 2;

export type CommandKind = "set_schedule" | "power_on" | "power_off";
const KIND_OCTET: Record<CommandKind, number> = {
    set_schedule: 0x00,
    power_on: 0x01,
    power_off: 0x02,
};

export interface PresetCommand {
    commandId: string;           // 32 hex chars
    patientId: string;           // 32 hex chars
    issuedAt: number;            // seconds since epoch
    kind: CommandKind;
    schedule: Array<[number, number]>;  // [start minute, milli-units/hour]
}

export interface GlucoseReading {
    timestamp: number;
    level: number;
}

export interface DoseEvent {
    timestamp: number;
    amount: number;
    origin: "scheduled" | "manual";
}

export interface HealthRecord {
    patientId: string;
    name: string;
    dateOfBirth: string;         // ISO date
    medicalInfo: string;
    readings: GlucoseReading[];
    doses: DoseEvent[];
    periodStart: number;
    periodEnd: number;
}

export function encodeCommand(cmd: PresetCommand): Uint8Array {
    const commandId = hexToBytes(cmd.commandId);
    const patientId = hexToBytes(cmd.patientId);
    if (commandId.length !== 16 || patientId.length !== 16) {
        throw new Error("command and patient ids must be 16 octets");
    }
    const writer = new ByteWriter()
        .raw(new TextEncoder().encode("PCMD"))
        .u8(0x01)
        .raw(commandId)
        .raw(patientId)
        .u64(cmd.issuedAt)
        .u8(KIND_OCTET[cmd.kind])
        .u32(cmd.schedule.length);
    for (const [minute, rate] of cmd.schedule) {
        writer.u16(minute).u32(rate);
    }
    return writer.done();
}

export function decodeRecord(payload: Uint8Array): HealthRecord {
    const reader = new ByteReader(payload);
    const magic = new TextDecoder().decode(reader.take(4));
    if (magic !== "HREC") throw new Error(`bad record magic ${magic}`);
    if (reader.u8() !== 0x01) throw new Error("unsupported payload version");

    const patientId = reader.take(16);
    const name = reader.text();
    const year = reader.u16();
    const month = reader.u8();
    const day = reader.u8();
    const medicalInfo = reader.text();

    const readings: GlucoseReading[] = [];
    const nReadings = reader.u32();
    for (let i = 0; i < nReadings; i++) {
        readings.push({ timestamp: reader.u64(), level: reader.u16() });
    }
    const doses: DoseEvent[] = [];
    const nDoses = reader.u32();
    for (let i = 0; i < nDoses; i++) {
        const timestamp = reader.u64();
        const amount = reader.u32();
        const origin = reader.u8();
        doses.push({ timestamp, amount, origin: origin === 1 ? "scheduled" : "manual" });
    }
    const periodStart = reader.u64();
    const periodEnd = reader.u64();
    reader.done();

    const iso = `${String(year).padStart(4, "0")}-${String(month).padStart(2, "0")}-` +
        `${String(day).padStart(2, "0")}`;
    return {
        patientId: Array.from(patientId, (b) => b.toString(16).padStart(2, "0")).join(""),
        name, dateOfBirth: iso, medicalInfo, readings, doses, periodStart, periodEnd,
    };
}

// --- SIOT envelopes ---------------------------------------------------------

export interface Envelope {
    version: number;
    payloadType: number;
    payload: Uint8Array;
    digest: Uint8Array;
}

export interface Verification {
    affirmed: boolean;
    appended: string;    // dash-grouped form, ready to render
    recomputed: string;
}

export function encodeEnvelope(payloadType: number, payload: Uint8Array): Uint8Array {
    const digest = sha256(payload);
    return concatBytes(
        new TextEncoder().encode("SIOT"),
        new ByteWriter().u8(0x01).u8(payloadType).u32(payload.length).done(),
        payload,
        digest,
    );
}

export function decodeEnvelope(wire: Uint8Array): Envelope {
    const reader = new ByteReader(wire);
    const magic = new TextDecoder().decode(reader.take(4));
    if (magic !== "SIOT") throw new Error(`bad envelope magic ${magic}`);
    const version = reader.u8();
    if (version !== 0x01) throw new Error(`unsupported envelope version ${version}`);
    const payloadType = reader.u8();
    const length = reader.u32();
    const payload = reader.take(length);
    const digest = reader.take(32);
    reader.done();
    return { version, payloadType, payload, digest };
}

/** The client-side half of the "both sides" rule: recompute and compare. */
export function verifyEnvelope(envelope: Envelope): Verification {
    const recomputed = sha256(envelope.payload);
    return {
        affirmed: bytesEqual(recomputed, envelope.digest),
        appended: formatDigest(envelope.digest),
        recomputed: formatDigest(recomputed),
    };
}

/** Sign a command locally and wrap it in wire form (hospital-side signing). */
export function signCommand(cmd: PresetCommand): Uint8Array {
    return encodeEnvelope(PAYLOAD_COMMAND, encodeCommand(cmd));
}
