"""Operator entry points.

Subcommands: hash, sign, verify, tamper, demo, cloud, gateway, pump.
Exit codes: 0 ok, 1 integrity failure, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
import threading
import time
from pathlib import Path

from siot.jsonio import value_from_json
from siot.records import (
    InvariantViolation,
    MalformedPayload,
    decode_envelope,
    encode_envelope,
    sign,
    verify,
)
from siot.sha256 import digest_of, format_digest

EXIT_OK = 0
EXIT_INTEGRITY = 1
EXIT_USAGE = 2


def _read_bytes(path: str) -> bytes:
    if path == "-":
        return sys.stdin.buffer.read()
    return Path(path).read_bytes()


def _fail(message: str, code: int = EXIT_USAGE) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def cmd_hash(args) -> int:
    try:
        data = _read_bytes(args.path)
    except OSError as exc:
        return _fail(str(exc))
    print(format_digest(digest_of(data)))
    return EXIT_OK


def cmd_sign(args) -> int:
    try:
        obj = json.loads(_read_bytes(args.input))
        value = value_from_json(obj)
    except OSError as exc:
        return _fail(str(exc))
    except (ValueError, KeyError, TypeError, InvariantViolation) as exc:
        return _fail(f"cannot parse {args.input}: {exc}")
    envelope = sign(value)
    out = Path(args.output) if args.output else Path(args.input).with_suffix(".siot")
    try:
        out.write_bytes(encode_envelope(envelope))
    except OSError as exc:
        return _fail(str(exc))
    print(f"signed {args.input} -> {out}")
    print(f"digest: {format_digest(envelope.digest)}")
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        wire = _read_bytes(args.envelope)
    except OSError as exc:
        return _fail(str(exc))
    try:
        envelope = decode_envelope(wire)
    except MalformedPayload as exc:
        return _fail(f"malformed envelope: {exc}")
    outcome = verify(envelope)
    print(f"appended:   {format_digest(outcome.appended)}")
    print(f"recomputed: {format_digest(outcome.recomputed)}")
    print("AFFIRMED" if outcome.affirmed else "DISCARDED")
    return EXIT_OK if outcome.affirmed else EXIT_INTEGRITY


def cmd_tamper(args) -> int:
    try:
        wire = _read_bytes(args.envelope)
        envelope = decode_envelope(wire)
    except OSError as exc:
        return _fail(str(exc))
    except MalformedPayload as exc:
        return _fail(f"malformed envelope: {exc}")

    payload = bytearray(envelope.payload)
    if (args.flip_bit is None) == (args.set_byte is None):
        return _fail("choose exactly one of --flip-bit or --set-byte")
    if args.flip_bit is not None:
        if not 0 <= args.flip_bit < 8 * len(payload):
            return _fail(f"bit {args.flip_bit} outside payload range 0..{8 * len(payload) - 1}")
        payload[args.flip_bit // 8] ^= 1 << (args.flip_bit % 8)
        what = f"flipped payload bit {args.flip_bit}"
    else:
        try:
            offset_text, value_text = args.set_byte.split("=", 1)
            offset, value = int(offset_text, 0), int(value_text, 0)
        except ValueError:
            return _fail(f"--set-byte wants OFFSET=VALUE, got {args.set_byte!r}")
        if not 0 <= offset < len(payload):
            return _fail(f"offset {offset} outside payload range 0..{len(payload) - 1}")
        if not 0 <= value <= 0xFF:
            return _fail(f"byte value {value} out of range")
        payload[offset] = value
        what = f"set payload byte {offset} to 0x{value:02x}"

    from siot.records import SignedEnvelope
    tampered = SignedEnvelope(envelope.version, envelope.payload_type,
                              bytes(payload), envelope.digest)
    source = Path(args.envelope)
    out = Path(args.output) if args.output else source.with_name(
        source.stem + ".tampered" + source.suffix)
    try:
        out.write_bytes(encode_envelope(tampered))
    except OSError as exc:
        return _fail(str(exc))
    print(f"{what}; wrote {out}")
    print("(digest left as appended; verification will now discard unless restored)")
    return EXIT_OK


def cmd_demo(args) -> int:
    from siot.demo import run_demo_with_harness

    report, harness = run_demo_with_harness(
        hours=args.hours, tamper_commands=args.tamper_commands,
        seed=args.seed, data_dir=args.data_dir)
    for line in report.lines():
        print(line)
    if not report.ok:
        return EXIT_INTEGRITY
    if args.serve:
        import uvicorn

        from siot.cloud_http import create_app

        def advance():
            while True:
                time.sleep(1.0)
                harness.step(60)

        threading.Thread(target=advance, daemon=True).start()
        print(f"serving demo cloud on http://{args.host}:{args.port} "
              f"(device token: demo-device-token, physician token: demo-physician-token)")
        uvicorn.run(create_app(harness.store), host=args.host, port=args.port,
                    log_level="warning")
    return EXIT_OK


def cmd_cloud(args) -> int:
    import uvicorn

    from siot.cloud import CloudStore, load_principals
    from siot.cloud_http import create_app

    try:
        principals = load_principals(args.tokens)
    except (OSError, KeyError, ValueError) as exc:
        return _fail(f"cannot load tokens file: {exc}")
    store = CloudStore(args.data_dir, principals)
    print(f"cloud store: {len(principals)} principals, "
          f"{store.audit()} records recovered from {args.data_dir}")
    uvicorn.run(create_app(store), host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def cmd_pump(args) -> int:
    from siot.netlink import TcpPumpServer
    from siot.pump import PumpSimulator

    pump = PumpSimulator(seed=args.seed, start_clock=0)
    server = TcpPumpServer(pump, host=args.host, port=args.port, time_scale=args.time_scale)
    print(f"pump simulator on {args.host}:{args.port} "
          f"(seed {args.seed}, {args.time_scale}x time)")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return EXIT_OK


def cmd_gateway(args) -> int:
    from siot.gateway import Gateway, GatewayConfig, HttpCloudClient
    from siot.netlink import TcpPumpLink
    from siot.records import PatientProfile

    config_path = args.config or args.global_config
    if not config_path:
        return _fail("gateway needs --config FILE")
    try:
        config = GatewayConfig.load(config_path)
    except (OSError, KeyError, ValueError) as exc:
        return _fail(f"cannot load gateway config: {exc}")

    host, _, port = args.pump.partition(":")
    try:
        link = TcpPumpLink(host, int(port or 9100))
    except OSError as exc:
        return _fail(f"cannot reach pump at {args.pump}: {exc}")
    cloud = HttpCloudClient(config.cloud_endpoint, config.auth_token,
                            device_id=config.device_id.hex())
    import datetime
    profile = PatientProfile(
        patient_id=config.patient_id, name=args.patient_name,
        date_of_birth=datetime.date(1970, 1, 1), medical_info=args.patient_info)
    gateway = Gateway(config, link, cloud, profile)
    print(f"gateway up: pump {args.pump}, cloud {config.cloud_endpoint}")

    now = 0
    last_poll = 0.0
    try:
        while True:
            frames = link.poll()
            gateway.ingest_frames(frames, now)
            for raw in frames:
                if len(raw) >= 11:  # reports carry a u64 timestamp after type+len
                    now = max(now, int.from_bytes(raw[3:11], "big"))
            while now - gateway.period_start >= config.record_period:
                record = gateway.close_period(gateway.period_start + config.record_period)
                gateway.publish(record, now)
                print(f"published record for [{record.period_start}, {record.period_end}] "
                      f"({len(record.readings)} readings, {len(record.doses)} doses)")
            if time.monotonic() - last_poll >= 1.0:
                last_poll = time.monotonic()
                for outcome in gateway.poll_and_handle(now):
                    print(f"command {outcome}")
                gateway.flush(now)
            time.sleep(0.1)
    except KeyboardInterrupt:
        return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="siot",
        description="Insulin-pump telemetry with SHA-256 signed records: "
                    "pump simulator, gateway, cloud store, and tamper tooling.")
    parser.add_argument("--config", dest="global_config", metavar="PATH",
                        help="gateway config file (used by the gateway subcommand)")
    parser.add_argument("--seed", type=int, default=1, help="simulation seed")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("hash", help="print the dash-grouped SHA-256 of a file (or - for stdin)")
    p.add_argument("path", nargs="?", default="-")
    p.set_defaults(func=cmd_hash)

    p = sub.add_parser("sign", help="sign a record/command JSON file into a .siot envelope")
    p.add_argument("input")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_sign)

    p = sub.add_parser("verify", help="verify an envelope file; exit 0 iff affirmed")
    p.add_argument("envelope")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("tamper", help="deterministically modify an envelope's payload")
    p.add_argument("envelope")
    p.add_argument("--flip-bit", type=int, metavar="N")
    p.add_argument("--set-byte", metavar="OFFSET=VALUE")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_tamper)

    p = sub.add_parser("demo", help="run the end-to-end demo under simulated time")
    p.add_argument("--hours", type=int, default=24)
    p.add_argument("--tamper-commands", type=int, default=0, metavar="K")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    p.add_argument("--data-dir")
    p.add_argument("--serve", action="store_true",
                   help="keep serving the demo cloud over HTTP afterward")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.set_defaults(func=cmd_demo)

    p = sub.add_parser("cloud", help="serve the cloud record store over HTTP")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--tokens", required=True, help="principals JSON file")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.set_defaults(func=cmd_cloud)

    p = sub.add_parser("pump", help="serve the pump simulator over a TCP serial link")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=9100)
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    p.add_argument("--time-scale", type=float, default=60.0,
                   help="simulated seconds per wall second")
    p.set_defaults(func=cmd_pump)

    p = sub.add_parser("gateway", help="run the gateway against a pump and a cloud")
    p.add_argument("--config", help="gateway config file (key = value lines)")
    p.add_argument("--pump", default="127.0.0.1:9100", metavar="HOST:PORT")
    p.add_argument("--patient-name", default="Patient")
    p.add_argument("--patient-info", default="")
    p.set_defaults(func=cmd_gateway)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
