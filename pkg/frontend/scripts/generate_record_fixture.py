#!/usr/bin/env python3
"""Regenerates fixtures/golden_record.json: one representative health-record
envelope (backend-encoded) plus the field values the console must decode."""

import base64
import datetime
import json
from pathlib import Path

from siot.records import (
    DoseEvent,
    DoseOrigin,
    GlucoseReading,
    HealthRecord,
    PatientProfile,
    encode_envelope,
    sign,
)

OUT = Path(__file__).resolve().parent.parent / "fixtures" / "golden_record.json"


def main() -> int:
    profile = PatientProfile(
        patient_id=bytes.fromhex("0102030405060708090a0b0c0d0e0f10"),
        name="Ana Nunez-Muller",
        date_of_birth=datetime.date(1984, 11, 3),
        medical_info="type 1 diabetes; basal-bolus; alergia: penicilina")
    record = HealthRecord(
        profile=profile,
        readings=(GlucoseReading(300, 92), GlucoseReading(600, 101),
                  GlucoseReading(900, 140)),
        doses=(DoseEvent(450, 1200, DoseOrigin.SCHEDULED),
               DoseEvent(800, 300, DoseOrigin.MANUAL)),
        period_start=0, period_end=3600)
    wire = encode_envelope(sign(record))
    OUT.write_text(json.dumps({
        "envelope_b64": base64.b64encode(wire).decode("ascii"),
        "expected": {
            "patientId": profile.patient_id.hex(),
            "name": profile.name,
            "dateOfBirth": "1984-11-03",
            "medicalInfo": profile.medical_info,
            "readings": [[r.timestamp, r.level] for r in record.readings],
            "doses": [[d.timestamp, d.amount, d.origin.name.lower()] for d in record.doses],
            "periodStart": 0,
            "periodEnd": 3600,
        },
    }, indent=1))
    print(f"wrote {OUT}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
