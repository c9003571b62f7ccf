/** Thin fetch client for the cloud store API. */

import { bytesToBase64 } from "./bytes.js";

export interface Settings {
    apiBaseUrl: string;
    token: string;
    patientId: string;
    pollIntervalMs?: number;
}

export interface FetchedRecord {
    record_id: number;
    received_at: number;
    envelope: string;  // base64 SIOT bytes
}

export interface AlertRow {
    at: number;
    source: string;
    expected: string;
    observed: string;
    context: string;
}

export class ApiError extends Error {
    constructor(public status: number, message: string) {
        super(message);
    }
}

export class CloudApi {
    constructor(private settings: Settings) {}

    private async request(method: string, path: string, body?: unknown): Promise<any> {
        const response = await fetch(this.settings.apiBaseUrl + path, {
            method,
            headers: {
                "Authorization": `Bearer ${this.settings.token}`,
                ...(body !== undefined ? { "Content-Type": "application/json" } : {}),
            },
            body: body !== undefined ? JSON.stringify(body) : undefined,
        });
        if (!response.ok) {
            let detail = "";
            try {
                detail = JSON.stringify(await response.json());
            } catch {
                detail = await response.text();
            }
            throw new ApiError(response.status, `${method} ${path}: ${response.status} ${detail}`);
        }
        return response.json();
    }

    async fetchRecords(patientId: string, from?: number, to?: number): Promise<FetchedRecord[]> {
        const params = new URLSearchParams();
        if (from !== undefined) params.set("from", String(from));
        if (to !== undefined) params.set("to", String(to));
        const query = params.toString() ? `?${params}` : "";
        const body = await this.request("GET", `/api/v1/patients/${patientId}/records${query}`);
        return body.records;
    }

    /** POST a locally signed command envelope; returns the command id. */
    async issueEnvelope(wire: Uint8Array): Promise<string> {
        const body = await this.request("POST", "/api/v1/commands",
            { envelope: bytesToBase64(wire) });
        return body.command_id;
    }

    async commandState(commandId: string): Promise<string> {
        const body = await this.request("GET", `/api/v1/commands/${commandId}`);
        return body.state;
    }

    async alerts(): Promise<AlertRow[]> {
        const body = await this.request("GET", "/api/v1/alerts");
        return body.alerts;
    }
}
