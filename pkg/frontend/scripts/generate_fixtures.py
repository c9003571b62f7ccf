#!/usr/bin/env python3
"""Regenerates fixtures/golden_commands.json.

Each of the 50 commands is written to JSON, signed through the backend CLI
(`siot sign`), and the resulting envelope is decomposed into payload and
digest. The console's own encoder and hash must reproduce every byte; the
vitest suite enforces that.
"""

import base64
import json
import random
import subprocess
import sys
import tempfile
from pathlib import Path

HERE = Path(__file__).resolve().parent
OUT = HERE.parent / "fixtures" / "golden_commands.json"

KINDS = ["set_schedule", "power_on", "power_off"]


def make_commands(count: int, seed: int = 2024):
    rng = random.Random(seed)
    commands = []
    for i in range(count):
        kind = KINDS[i % 3]
        schedule = []
        if kind == "set_schedule":
            minutes = sorted(rng.sample(range(1440), rng.randrange(0, 8)))
            schedule = [[m, rng.randrange(0, 2**32)] for m in minutes]
        commands.append({
            "command_id": rng.randbytes(16).hex(),
            "patient_id": (bytes([rng.randrange(1, 256)]) + rng.randbytes(15)).hex(),
            "issued_at": rng.randrange(0, 2**48),
            "kind": kind,
            "schedule": schedule,
        })
    return commands


def main() -> int:
    fixtures = []
    with tempfile.TemporaryDirectory() as tmp:
        for i, command in enumerate(make_commands(50)):
            src = Path(tmp) / f"cmd{i}.json"
            out = Path(tmp) / f"cmd{i}.siot"
            src.write_text(json.dumps(command))
            subprocess.run(
                [sys.executable, "-m", "siot.cli", "sign", str(src), "-o", str(out)],
                check=True, capture_output=True)
            wire = out.read_bytes()
            payload_len = int.from_bytes(wire[6:10], "big")
            payload = wire[10:10 + payload_len]
            digest = wire[10 + payload_len:]
            assert len(digest) == 32
            fixtures.append({
                "command": {
                    "commandId": command["command_id"],
                    "patientId": command["patient_id"],
                    "issuedAt": command["issued_at"],
                    "kind": command["kind"],
                    "schedule": command["schedule"],
                },
                "payload_hex": payload.hex(),
                "digest_hex": digest.hex(),
                "envelope_b64": base64.b64encode(wire).decode("ascii"),
            })
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(fixtures, indent=1))
    print(f"wrote {len(fixtures)} fixtures to {OUT}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
