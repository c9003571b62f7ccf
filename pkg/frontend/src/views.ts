/**
 * View models and HTML renderers. Pure functions from data to strings, so
 * the whole UI is testable without a DOM; main.ts just assigns innerHTML.
 *
 * Integrity badges are computed exclusively from client-side verification of
 * the envelope bytes; nothing the server asserts is trusted for them.
 */

import { AlertRow, FetchedRecord } from "./api.js";
import { base64ToBytes } from "./bytes.js";
import {
    CommandKind,
    HealthRecord,
    decodeEnvelope,
    decodeRecord,
    verifyEnvelope,
} from "./codec.js";

export interface TimelineRow {
    recordId: number;
    receivedAt: number;
    badge: "affirmed" | "discarded";
    appended: string;
    recomputed: string;
    record: HealthRecord | null;   // null when the payload does not decode
}

export function toTimelineRow(fetched: FetchedRecord): TimelineRow {
    const wire = base64ToBytes(fetched.envelope);
    let badge: "affirmed" | "discarded" = "discarded";
    let appended = "";
    let recomputed = "";
    let record: HealthRecord | null = null;
    try {
        const envelope = decodeEnvelope(wire);
        const verdict = verifyEnvelope(envelope);
        badge = verdict.affirmed ? "affirmed" : "discarded";
        appended = verdict.appended;
        recomputed = verdict.recomputed;
        record = decodeRecord(envelope.payload);
    } catch {
        badge = "discarded";  // undecodable is shown flagged, never hidden
    }
    return { recordId: fetched.record_id, receivedAt: fetched.received_at,
             badge, appended, recomputed, record };
}

function esc(text: string): string {
    return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

function clock(ts: number): string {
    const h = Math.floor(ts / 3600) % 24;
    const m = Math.floor(ts / 60) % 60;
    return `${String(h).padStart(2, "0")}:${String(m).padStart(2, "0")}`;
}

export function renderTimeline(rows: TimelineRow[]): string {
    if (rows.length === 0) {
        return `<p class="empty">No records in this range.</p>`;
    }
    const items = rows.map((row) => {
        const badge = row.badge === "affirmed"
            ? `<span class="badge ok">affirmed</span>`
            : `<span class="badge bad">discarded</span>`;
        const glucose = row.record
            ? sparkline(row.record)
            : `<em>payload unreadable</em>`;
        const doses = row.record && row.record.doses.length
            ? row.record.doses.map((d) => `${clock(d.timestamp)} ${d.amount} mU`).join(", ")
            : "none";
        const digests = row.badge === "affirmed" ? "" : `
        <div class="digests">
          <div>appended: <code>${row.appended || "?"}</code></div>
          <div>recomputed: <code>${row.recomputed || "?"}</code></div>
        </div>`;
        return `
      <li class="record ${row.badge}" data-record-id="${row.recordId}">
        <div class="head">#${row.recordId} ${badge}
          <span class="period">${row.record ? clock(row.record.periodStart) + "-" + clock(row.record.periodEnd) : ""}</span>
        </div>
        <div class="glucose">${glucose}</div>
        <div class="doses">doses: ${doses}</div>${digests}
      </li>`;
    });
    return `<ul class="timeline">${items.join("\n")}</ul>`;
}

function sparkline(record: HealthRecord): string {
    if (record.readings.length === 0) return "<em>no readings</em>";
    const levels = record.readings.map((r) => r.level);
    const min = Math.min(...levels);
    const max = Math.max(...levels);
    const blocks = "▁▂▃▄▅▆▇█";
    const bars = levels.map((level) => {
        const t = max === min ? 0.5 : (level - min) / (max - min);
        return blocks[Math.min(blocks.length - 1, Math.floor(t * blocks.length))];
    }).join("");
    return `<code class="spark">${bars}</code> ${min}-${max} mg/dL`;
}

export function renderAlerts(alerts: AlertRow[]): string {
    if (alerts.length === 0) {
        return `<p class="empty">No tamper alerts.</p>`;
    }
    const rows = alerts.map((a) => `
      <tr class="alert">
        <td>${a.at}</td>
        <td>${esc(a.source)}</td>
        <td><code>${esc(a.expected)}</code></td>
        <td><code>${esc(a.observed)}</code></td>
        <td>${esc(a.context)}</td>
      </tr>`);
    return `<table class="alerts">
      <thead><tr><th>at</th><th>source</th><th>expected</th><th>observed</th><th>context</th></tr></thead>
      <tbody>${rows.join("\n")}</tbody>
    </table>`;
}

export function renderTicket(commandId: string, state: string): string {
    const steps = ["queued", "delivered", "applied"];
    const terminalBad = state === "discarded_by_gateway";
    const marks = steps.map((s) => {
        const reached = terminalBad
            ? s !== "applied" : steps.indexOf(s) <= steps.indexOf(state);
        return `<span class="step ${reached ? "on" : ""}">${s}</span>`;
    }).join(" → ");
    const tail = terminalBad ? ` → <span class="step bad on">discarded</span>` : "";
    return `<div class="ticket" data-state="${esc(state)}">
      <code>${esc(commandId)}</code>: ${marks}${tail}
    </div>`;
}

// --- command drafts ----------------------------------------------------------

export interface CommandDraft {
    kind: CommandKind;
    rows: Array<{ minute: number; rate: number }>;
}

/** Problems that keep the submit button disabled; empty means valid. */
export function draftProblems(draft: CommandDraft): string[] {
    const problems: string[] = [];
    if (draft.kind !== "set_schedule" && draft.rows.length > 0) {
        problems.push("power commands take no schedule rows");
    }
    const seen = new Set<number>();
    for (const { minute, rate } of draft.rows) {
        if (!Number.isInteger(minute) || minute < 0 || minute >= 1440) {
            problems.push(`start minute ${minute} must be an integer in 0..1439`);
        } else if (seen.has(minute)) {
            problems.push(`duplicate start minute ${minute}`);
        }
        seen.add(minute);
        if (!Number.isInteger(rate) || rate < 0 || rate >= 2 ** 32) {
            problems.push(`rate ${rate} must be an unsigned 32-bit integer`);
        }
    }
    return problems;
}

export function draftToSchedule(draft: CommandDraft): Array<[number, number]> {
    return [...draft.rows]
        .sort((a, b) => a.minute - b.minute)
        .map(({ minute, rate }) => [minute, rate]);
}
