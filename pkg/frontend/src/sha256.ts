/**
 * Console-local SHA-256, synchronous and dependency-free.
 *
 * The hospital side signs commands in the browser, and integrity badges come
 * from re-verifying envelopes here rather than trusting the server, so the
 * console carries its own implementation. Golden fixtures in ../fixtures pin
 * it byte-for-byte against the backend's.
 */

const K = new Uint32Array([
    0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4, 0xab1c5ed5,
    0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174,
    0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da,
    0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967,
    0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85,
    0xa2bfe8a1, 0xa81a664b, 0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070,
    0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
    0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2,
]);

const IHV0 = new Uint32Array([
    0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a, 0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19,
]);

function rotr(x: number, n: number): number {
    return ((x >>> n) | (x << (32 - n))) >>> 0;
}

export function sha256(message: Uint8Array): Uint8Array {
    // pad: 0x80, zeros, 64-bit big-endian bit length
    const bitLen = message.length * 8;
    const padded = new Uint8Array((message.length + 9 + 63) & ~63);
    padded.set(message);
    padded[message.length] = 0x80;
    const lenView = new DataView(padded.buffer);
    lenView.setUint32(padded.length - 8, Math.floor(bitLen / 0x100000000));
    lenView.setUint32(padded.length - 4, bitLen >>> 0);

    const state = new Uint32Array(IHV0);
    const w = new Uint32Array(64);
    const view = new DataView(padded.buffer);

    for (let off = 0; off < padded.length; off += 64) {
        for (let i = 0; i < 16; i++) w[i] = view.getUint32(off + 4 * i);
        for (let i = 16; i < 64; i++) {
            const x = w[i - 15];
            const y = w[i - 2];
            const s0 = (rotr(x, 7) ^ rotr(x, 18) ^ (x >>> 3)) >>> 0;
            const s1 = (rotr(y, 17) ^ rotr(y, 19) ^ (y >>> 10)) >>> 0;
            w[i] = (w[i - 16] + s0 + w[i - 7] + s1) >>> 0;
        }
        let [a, b, c, d, e, f, g, h] = state;
        for (let i = 0; i < 64; i++) {
            const s1 = (rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25)) >>> 0;
            const ch = (g ^ (e & (f ^ g))) >>> 0;
            const t1 = (h + s1 + ch + K[i] + w[i]) >>> 0;
            const s0 = (rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22)) >>> 0;
            const maj = (((a | b) & c) | (a & b)) >>> 0;
            const t2 = (s0 + maj) >>> 0;
            h = g; g = f; f = e;
            e = (d + t1) >>> 0;
            d = c; c = b; b = a;
            a = (t1 + t2) >>> 0;
        }
        state[0] = (state[0] + a) >>> 0;
        state[1] = (state[1] + b) >>> 0;
        state[2] = (state[2] + c) >>> 0;
        state[3] = (state[3] + d) >>> 0;
        state[4] = (state[4] + e) >>> 0;
        state[5] = (state[5] + f) >>> 0;
        state[6] = (state[6] + g) >>> 0;
        state[7] = (state[7] + h) >>> 0;
    }

    const digest = new Uint8Array(32);
    const out = new DataView(digest.buffer);
    for (let i = 0; i < 8; i++) out.setUint32(4 * i, state[i]);
    return digest;
}

/** Dash-grouped display form: 8 groups of 8 lowercase hex digits. */
export function formatDigest(digest: Uint8Array): string {
    if (digest.length !== 32) throw new Error("can only format 32-byte digests");
    const groups: string[] = [];
    for (let g = 0; g < 8; g++) {
        let chunk = "";
        for (let i = 4 * g; i < 4 * g + 4; i++) {
            chunk += digest[i].toString(16).padStart(2, "0");
        }
        groups.push(chunk);
    }
    return groups.join("-");
}
