import csv
import json

import pytest

from rramchip.cli import main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_usage_error_exits_1(capsys):
    assert run(capsys, "frobnicate")[0] == 1
    assert run(capsys, "read", "--sub-array", "7")[0] == 1
    assert run(capsys)[0] == 1


def test_read_prints_csv(capsys):
    code, out, _ = run(capsys, "read", "--seed", 3, "--address", "1:10:100")
    assert code == 0
    rows = list(csv.DictReader(out.splitlines()))
    assert rows[0]["address"] == "1:10:100" and rows[0]["flags"] == ""
    rel = abs(float(rows[0]["r_ohms"]) / float(rows[0]["r_true_ohms"]) - 1)
    assert rel < 0.01


def test_range_and_selection_errors_exit_2(capsys):
    assert run(capsys, "read", "--row", 600)[0] == 2
    assert run(capsys, "write", "--v", 5.0)[0] == 2
    assert run(capsys, "write", "--v", 1.5, "--width", 3e-9)[0] == 2


def test_io_errors_exit_3(capsys, tmp_path):
    assert run(capsys, "replay", tmp_path / "missing.txt")[0] == 3
    assert run(capsys, "read", "--config", tmp_path / "missing.json")[0] == 3
    bad = tmp_path / "bad.txt"
    bad.write_text("# t\n03F0000\n")
    code, _, err = run(capsys, "replay", bad)
    assert code == 3 and "line 2" in err


def test_integrity_error_exits_4(capsys, tmp_path):
    trace = tmp_path / "t"
    assert run(capsys, "read", "--trace-dir", trace)[0] == 0
    data = bytearray((trace / "sa0.rrsb").read_bytes())
    data[24 + 100] ^= 0xFF  # corrupt the payload past the trace header
    (trace / "sa0.rrsb").write_bytes(bytes(data))
    assert run(capsys, "decode", trace / "sa0.rrsb")[0] == 4


def test_populate_then_campaign_then_replay(capsys, tmp_path):
    pop = tmp_path / "pop.json"
    assert run(capsys, "populate", "--seed", 4, "--stuck-open", 0.01, "--out", pop)[0] == 0
    assert json.loads(pop.read_text())["seed"] == 4

    out, summ, tr = tmp_path / "c.csv", tmp_path / "s.json", tmp_path / "t.txt"
    code, _, _ = run(capsys, "campaign", "--population", pop, "--sub-array", 2, "--rows", "0-2",
                     "--cols", "0-64", "--out", out, "--summary", summ, "--transcript", tr,
                     "--trace-dir", tmp_path / "tr")
    assert code == 0
    assert len(out.read_text().splitlines()) == 1 + 128
    assert json.loads(summ.read_text())["n_records"] == 128

    code, _, err = run(capsys, "replay", tr, "--population", pop, "--strict", "--out", tmp_path / "p.csv")
    assert code == 0 and "warning" not in err
    code, _, err = run(capsys, "replay", tr, "--seed", 99, "--strict", "--out", tmp_path / "p.csv")
    assert code == 4 and "register checksum" in err

    code, out_text, _ = run(capsys, "decode", tmp_path / "tr" / "sa2.rrsb")
    rows = list(csv.DictReader(out_text.splitlines()))
    # two-pass reads send at least one packet per cell
    assert sum(r["valid"] == "1" for r in rows) >= 128


def test_sweep_and_write(capsys, tmp_path):
    code, out, _ = run(capsys, "sweep", "--address", "0:1:1", "--v-start", 0.1, "--v-stop", 0.3,
                       "--v-step", 0.1, "--polarity-mode", "Both")
    assert code == 0 and len(out.splitlines()) == 7
    code, out, _ = run(capsys, "write", "--address", "0:0:0", "--v", 1.5, "--width", 1e-7)
    assert code == 0 and json.loads(out)["pulse_ticks"] == 20


def test_campaign_spec_file(capsys, tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"kind": "ReadResistance", "address_range": ["1:0-1:0-3"],
                                "output_path": str(tmp_path / "r.csv")}))
    assert run(capsys, "campaign", "--spec", spec)[0] == 0
    assert len((tmp_path / "r.csv").read_text().splitlines()) == 4
    spec.write_text(json.dumps({"kind": "Nope"}))
    assert run(capsys, "campaign", "--spec", spec)[0] == 2


@pytest.mark.parametrize("cmd", ["populate", "read", "write", "sweep", "campaign", "replay", "decode"])
def test_help(capsys, cmd):
    with pytest.raises(SystemExit) as exc:
        main([cmd, "--help"])
    assert exc.value.code == 0
