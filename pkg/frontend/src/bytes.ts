/** Byte-level helpers shared by the console's codec and hashing. */

export function hexToBytes(hex: string): Uint8Array {
    const clean = hex.replace(/-/g, "").toLowerCase();
    if (clean.length % 2 !== 0 || /[^0-9a-f]/.test(clean)) {
        throw new Error(`not a hex string: ${hex}`);
    }
    const out = new Uint8Array(clean.length / 2);
    for (let i = 0; i < out.length; i++) {
        out[i] = parseInt(clean.slice(2 * i, 2 * i + 2), 16);
    }
    return out;
}

export function bytesToHex(bytes: Uint8Array): string {
    let out = "";
    for (const b of bytes) out += b.toString(16).padStart(2, "0");
    return out;
}

export function base64ToBytes(b64: string): Uint8Array {
    if (typeof atob === "function") {
        const bin = atob(b64);
        const out = new Uint8Array(bin.length);
        for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
        return out;
    }
    return new Uint8Array(Buffer.from(b64, "base64"));
}

export function bytesToBase64(bytes: Uint8Array): string {
    if (typeof btoa === "function") {
        let bin = "";
        for (const b of bytes) bin += String.fromCharCode(b);
        return btoa(bin);
    }
    return Buffer.from(bytes).toString("base64");
}

export function concatBytes(...parts: Uint8Array[]): Uint8Array {
    const total = parts.reduce((n, p) => n + p.length, 0);
    const out = new Uint8Array(total);
    let at = 0;
    for (const p of parts) {
        out.set(p, at);
        at += p.length;
    }
    return out;
}

export function bytesEqual(a: Uint8Array, b: Uint8Array): boolean {
    if (a.length !== b.length) return false;
    for (let i = 0; i < a.length; i++) if (a[i] !== b[i]) return false;
    return true;
}

/** Big-endian writer over a growing buffer. */
export class ByteWriter {
    private parts: Uint8Array[] = [];

    raw(bytes: Uint8Array): this {
        this.parts.push(bytes);
        return this;
    }

    u8(value: number): this {
        return this.raw(new Uint8Array([value & 0xff]));
    }

    u16(value: number): this {
        const buf = new Uint8Array(2);
        new DataView(buf.buffer).setUint16(0, value);
        return this.raw(buf);
    }

    u32(value: number): this {
        const buf = new Uint8Array(4);
        new DataView(buf.buffer).setUint32(0, value >>> 0);
        return this.raw(buf);
    }

    u64(value: number | bigint): this {
        const buf = new Uint8Array(8);
        new DataView(buf.buffer).setBigUint64(0, BigInt(value));
        return this.raw(buf);
    }

    text(value: string): this {
        const encoded = new TextEncoder().encode(value);
        this.u32(encoded.length);
        return this.raw(encoded);
    }

    done(): Uint8Array {
        return concatBytes(...this.parts);
    }
}

/** Big-endian cursor; every short read throws. */
export class ByteReader {
    private pos = 0;
    private view: DataView;

    constructor(private data: Uint8Array) {
        this.view = new DataView(data.buffer, data.byteOffset, data.byteLength);
    }

    take(n: number): Uint8Array {
        if (this.pos + n > this.data.length) {
            throw new Error(`truncated payload: wanted ${n} octets at offset ${this.pos}`);
        }
        const out = this.data.slice(this.pos, this.pos + n);
        this.pos += n;
        return out;
    }

    u8(): number {
        return this.take(1)[0];
    }

    u16(): number {
        const at = this.pos;
        this.take(2);
        return this.view.getUint16(at);
    }

    u32(): number {
        const at = this.pos;
        this.take(4);
        return this.view.getUint32(at);
    }

    u64(): number {
        const at = this.pos;
        this.take(8);
        const big = this.view.getBigUint64(at);
        if (big > BigInt(Number.MAX_SAFE_INTEGER)) {
            throw new Error(`u64 value ${big} exceeds safe integer range`);
        }
        return Number(big);
    }

    text(): string {
        const length = this.u32();
        return new TextDecoder("utf-8", { fatal: true }).decode(this.take(length));
    }

    done(): void {
        if (this.pos !== this.data.length) {
            throw new Error(`${this.data.length - this.pos} trailing octets after payload`);
        }
    }
}
