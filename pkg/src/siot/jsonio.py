"""JSON <-> record/command conversion for CLI input files and test fixtures.

JSON is the human-facing form only; hashing always goes through the canonical
byte encoding in :mod:`siot.records`.
"""

from __future__ import annotations

import datetime
from typing import Any

from siot.records import (
    CommandKind,
    DoseEvent,
    DoseOrigin,
    GlucoseReading,
    HealthRecord,
    PatientProfile,
    PresetCommand,
)


def profile_to_json(profile: PatientProfile) -> dict[str, Any]:
    return {
        "patient_id": profile.patient_id.hex(),
        "name": profile.name,
        "date_of_birth": profile.date_of_birth.isoformat(),
        "medical_info": profile.medical_info,
    }


def profile_from_json(obj: dict[str, Any]) -> PatientProfile:
    return PatientProfile(
        patient_id=bytes.fromhex(obj["patient_id"]),
        name=obj["name"],
        date_of_birth=datetime.date.fromisoformat(obj["date_of_birth"]),
        medical_info=obj["medical_info"],
    )


def record_to_json(record: HealthRecord) -> dict[str, Any]:
    return {
        "profile": profile_to_json(record.profile),
        "readings": [[r.timestamp, r.level] for r in record.readings],
        "doses": [[d.timestamp, d.amount, d.origin.name.lower()] for d in record.doses],
        "period_start": record.period_start,
        "period_end": record.period_end,
    }


def record_from_json(obj: dict[str, Any]) -> HealthRecord:
    return HealthRecord(
        profile=profile_from_json(obj["profile"]),
        readings=tuple(GlucoseReading(int(ts), int(level)) for ts, level in obj["readings"]),
        doses=tuple(
            DoseEvent(int(ts), int(amount), DoseOrigin[origin.upper()])
            for ts, amount, origin in obj["doses"]
        ),
        period_start=int(obj["period_start"]),
        period_end=int(obj["period_end"]),
    )


def command_to_json(command: PresetCommand) -> dict[str, Any]:
    return {
        "command_id": command.command_id.hex(),
        "patient_id": command.patient_id.hex(),
        "issued_at": command.issued_at,
        "kind": command.kind.name.lower(),
        "schedule": [[minute, rate] for minute, rate in command.schedule],
    }


def command_from_json(obj: dict[str, Any]) -> PresetCommand:
    return PresetCommand(
        command_id=bytes.fromhex(obj["command_id"]),
        patient_id=bytes.fromhex(obj["patient_id"]),
        issued_at=int(obj["issued_at"]),
        kind=CommandKind[obj["kind"].upper()],
        schedule=tuple((int(m), int(r)) for m, r in obj.get("schedule", [])),
    )


def value_from_json(obj: dict[str, Any]) -> HealthRecord | PresetCommand:
    """Detect record vs command by shape."""
    if "command_id" in obj:
        return command_from_json(obj)
    if "profile" in obj:
        return record_from_json(obj)
    raise ValueError("JSON object is neither a health record nor a preset command")


def value_to_json(value: HealthRecord | PresetCommand) -> dict[str, Any]:
    if isinstance(value, HealthRecord):
        return record_to_json(value)
    if isinstance(value, PresetCommand):
        return command_to_json(value)
    raise TypeError(f"cannot serialize {type(value).__name__}")
