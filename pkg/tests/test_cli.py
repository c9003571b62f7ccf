"""CLI tests, driven through main() with explicit argv."""

import json


from siot.cli import main

ABC_DIGEST = "ba7816bf-8f01cfea-414140de-5dae2223-b00361a3-96177a9c-b410ff61-f20015ad"
EMPTY_DIGEST = "e3b0c442-98fc1c14-9afbf4c8-996fb924-27ae41e4-649b934c-a495991b-7852b855"


def command_json(path, n=1):
    path.write_text(json.dumps({
        "command_id": f"{n:02x}" * 16,
        "patient_id": "01" * 16,
        "issued_at": 1700000000,
        "kind": "set_schedule",
        "schedule": [[0, 800], [420, 1200]],
    }))
    return path


class TestHash:
    def test_abc_file(self, tmp_path, capsys):
        f = tmp_path / "abc.txt"
        f.write_bytes(b"abc")
        assert main(["hash", str(f)]) == 0
        assert capsys.readouterr().out.strip() == ABC_DIGEST

    def test_empty_file(self, tmp_path, capsys):
        f = tmp_path / "empty"
        f.write_bytes(b"")
        assert main(["hash", str(f)]) == 0
        assert capsys.readouterr().out.strip() == EMPTY_DIGEST

    def test_missing_file(self, tmp_path, capsys):
        assert main(["hash", str(tmp_path / "nope")]) == 2


class TestSignVerifyTamper:
    def test_sign_then_verify_affirmed(self, tmp_path, capsys):
        src = command_json(tmp_path / "cmd.json")
        out = tmp_path / "cmd.siot"
        assert main(["sign", str(src), "-o", str(out)]) == 0
        assert out.exists()
        assert main(["verify", str(out)]) == 0
        printed = capsys.readouterr().out
        assert "AFFIRMED" in printed
        assert printed.count("-") >= 14  # both digests dash-grouped

    def test_default_output_path(self, tmp_path):
        src = command_json(tmp_path / "cmd.json")
        assert main(["sign", str(src)]) == 0
        assert (tmp_path / "cmd.siot").exists()

    def test_tamper_then_verify_discarded(self, tmp_path, capsys):
        src = command_json(tmp_path / "cmd.json")
        out = tmp_path / "cmd.siot"
        main(["sign", str(src), "-o", str(out)])
        bad = tmp_path / "bad.siot"
        assert main(["tamper", str(out), "--flip-bit", "13", "-o", str(bad)]) == 0
        capsys.readouterr()
        assert main(["verify", str(bad)]) == 1
        printed = capsys.readouterr().out
        assert "DISCARDED" in printed
        appended = [l for l in printed.splitlines() if l.startswith("appended")][0]
        recomputed = [l for l in printed.splitlines() if l.startswith("recomputed")][0]
        assert appended.split()[-1] != recomputed.split()[-1]

    def test_tamper_twice_restores(self, tmp_path):
        src = command_json(tmp_path / "cmd.json")
        out = tmp_path / "cmd.siot"
        main(["sign", str(src), "-o", str(out)])
        once = tmp_path / "once.siot"
        twice = tmp_path / "twice.siot"
        main(["tamper", str(out), "--flip-bit", "200", "-o", str(once)])
        main(["tamper", str(once), "--flip-bit", "200", "-o", str(twice)])
        assert main(["verify", str(twice)]) == 0
        assert twice.read_bytes() == out.read_bytes()

    def test_tamper_default_output_alongside(self, tmp_path):
        src = command_json(tmp_path / "cmd.json")
        out = tmp_path / "cmd.siot"
        main(["sign", str(src), "-o", str(out)])
        assert main(["tamper", str(out), "--flip-bit", "0"]) == 0
        assert (tmp_path / "cmd.tampered.siot").exists()

    def test_set_byte(self, tmp_path):
        src = command_json(tmp_path / "cmd.json")
        out = tmp_path / "cmd.siot"
        main(["sign", str(src), "-o", str(out)])
        bad = tmp_path / "bad.siot"
        assert main(["tamper", str(out), "--set-byte", "5=0xff", "-o", str(bad)]) == 0
        assert main(["verify", str(bad)]) == 1

    def test_tamper_offset_out_of_range(self, tmp_path):
        src = command_json(tmp_path / "cmd.json")
        out = tmp_path / "cmd.siot"
        main(["sign", str(src), "-o", str(out)])
        assert main(["tamper", str(out), "--flip-bit", "99999999"]) == 2
        assert main(["tamper", str(out), "--set-byte", "99999=1"]) == 2

    def test_tamper_requires_exactly_one_mode(self, tmp_path):
        src = command_json(tmp_path / "cmd.json")
        out = tmp_path / "cmd.siot"
        main(["sign", str(src), "-o", str(out)])
        assert main(["tamper", str(out)]) == 2
        assert main(["tamper", str(out), "--flip-bit", "1", "--set-byte", "1=1"]) == 2

    def test_verify_garbage_exit_2(self, tmp_path):
        f = tmp_path / "garbage.siot"
        f.write_bytes(b"garbage")
        assert main(["verify", str(f)]) == 2

    def test_sign_rejects_bad_json(self, tmp_path):
        f = tmp_path / "bad.json"
        f.write_text("{not json")
        assert main(["sign", str(f)]) == 2
        f.write_text('{"something": "else"}')
        assert main(["sign", str(f)]) == 2


class TestDemo:
    def test_zero_hours(self, tmp_path, capsys):
        assert main(["demo", "--hours", "0", "--data-dir", str(tmp_path / "d")]) == 0
        printed = capsys.readouterr().out
        assert "records sent:       0" in printed
        assert "demo result:        OK" in printed

    def test_short_run_with_tampering(self, tmp_path, capsys):
        assert main(["demo", "--hours", "2", "--tamper-commands", "2", "--seed", "5",
                     "--data-dir", str(tmp_path / "d")]) == 0
        printed = capsys.readouterr().out
        assert "records sent:       2" in printed
        assert "commands discarded: 2" in printed
        assert "tamper alerts:      2" in printed

    def test_global_seed_flag_position(self, tmp_path, capsys):
        assert main(["--seed", "5", "demo", "--hours", "1",
                     "--data-dir", str(tmp_path / "d")]) == 0
        assert "demo result:        OK" in capsys.readouterr().out
