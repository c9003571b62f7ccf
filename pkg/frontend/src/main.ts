/**
 * Browser bootstrap: loads settings.json, then keeps three areas fresh by
 * polling (the server pushes nothing): the record timeline with integrity
 * badges, the tamper alert feed, and the state of any command just issued.
 */

import { CloudApi, Settings } from "./api.js";
import { CommandDraft, draftProblems, draftToSchedule, renderAlerts, renderTicket,
         renderTimeline, toTimelineRow } from "./views.js";
import { signCommand } from "./codec.js";

function el<T extends HTMLElement>(id: string): T {
    const node = document.getElementById(id);
    if (!node) throw new Error(`missing element #${id}`);
    return node as T;
}

function randomId(): string {
    const bytes = new Uint8Array(16);
    crypto.getRandomValues(bytes);
    return Array.from(bytes, (b) => b.toString(16).padStart(2, "0")).join("");
}

async function boot(): Promise<void> {
    const settings: Settings = await (await fetch("./settings.json")).json();
    const api = new CloudApi(settings);
    const poll = settings.pollIntervalMs ?? 2000;
    const banner = el<HTMLDivElement>("banner");

    const refreshTimeline = async () => {
        try {
            const records = await api.fetchRecords(settings.patientId);
            el("timeline").innerHTML = renderTimeline(records.map(toTimelineRow));
            banner.textContent = "";
        } catch (err) {
            banner.textContent = `timeline: ${err}`;
        }
    };

    const refreshAlerts = async () => {
        try {
            el("alerts").innerHTML = renderAlerts(await api.alerts());
        } catch (err) {
            banner.textContent = `alerts: ${err}`;
        }
    };

    // -- compose form --
    const kindSelect = el<HTMLSelectElement>("kind");
    const rowsBody = el<HTMLTableSectionElement>("schedule-rows");
    const submit = el<HTMLButtonElement>("submit");
    const problemsBox = el<HTMLDivElement>("problems");

    const currentDraft = (): CommandDraft => ({
        kind: kindSelect.value as CommandDraft["kind"],
        rows: Array.from(rowsBody.querySelectorAll("tr")).map((tr) => ({
            minute: Number((tr.querySelector(".minute") as HTMLInputElement).value),
            rate: Number((tr.querySelector(".rate") as HTMLInputElement).value),
        })),
    });

    const revalidate = () => {
        const problems = draftProblems(currentDraft());
        submit.disabled = problems.length > 0;
        problemsBox.innerHTML = problems.map((p) => `<div>${p}</div>`).join("");
    };

    el<HTMLButtonElement>("add-row").onclick = () => {
        const tr = document.createElement("tr");
        tr.innerHTML = `<td><input class="minute" type="number" value="0"></td>
                        <td><input class="rate" type="number" value="1000"></td>
                        <td><button class="del">x</button></td>`;
        (tr.querySelector(".del") as HTMLButtonElement).onclick = () => {
            tr.remove();
            revalidate();
        };
        tr.addEventListener("input", revalidate);
        rowsBody.appendChild(tr);
        revalidate();
    };
    kindSelect.addEventListener("input", revalidate);
    revalidate();

    submit.onclick = async () => {
        const draft = currentDraft();
        if (draftProblems(draft).length > 0) return;
        const wire = signCommand({
            commandId: randomId(),
            patientId: settings.patientId,
            issuedAt: Math.floor(Date.now() / 1000),
            kind: draft.kind,
            schedule: draft.kind === "set_schedule" ? draftToSchedule(draft) : [],
        });
        const ticketBox = el<HTMLDivElement>("ticket");
        try {
            const commandId = await api.issueEnvelope(wire);
            const watch = async () => {
                const state = await api.commandState(commandId);
                ticketBox.innerHTML = renderTicket(commandId, state);
                if (state !== "applied" && state !== "discarded_by_gateway") {
                    setTimeout(watch, poll);
                }
            };
            await watch();
        } catch (err) {
            ticketBox.textContent = String(err);
        }
    };

    await refreshTimeline();
    await refreshAlerts();
    setInterval(refreshTimeline, poll);
    setInterval(refreshAlerts, poll);
}

boot().catch((err) => {
    document.body.insertAdjacentHTML(
        "afterbegin", `<div class="fatal">console failed to start: ${err}</div>`);
});
