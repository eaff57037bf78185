import csv

import pytest

from app.cli import main
from app.config import Settings
from app.runner import EXIT_CONFIG, EXIT_OK, EXIT_VIOLATION

from conftest import SCENARIOS

INFEASIBLE = """
network tight {
  devices { node a; node b; switch s; }
  connections { segment lan { a <--> s; s <--> b; } }
  communication {
    message big { sender a; receivers b; payload 1500B; period 100us; mapping { lan: tt{ctID 1;}; } }
  }
}
"""

STOP_AT_10MS = """<constraints>
  <constraint module="twoBus.node2" name="rxMessageAge:vector" action="stop">
    <max>0.01</max>
  </constraint>
</constraints>
"""


def test_validate_reports_a_summary(listing1_path, capsys):
    assert main(["validate", str(listing1_path)]) == EXIT_OK
    assert "ok (7 devices, 2 segments, 1 messages)" in capsys.readouterr().out


def test_validate_prints_positioned_diagnostics(tmp_path, capsys):
    path = tmp_path / "broken.andl"
    path.write_text("network n {\n  devices { node a }\n}\n", encoding="utf-8")
    assert main(["validate", str(path)]) == EXIT_CONFIG
    assert f"{path}:2:" in capsys.readouterr().err


def test_missing_file_and_bad_override_are_configuration_errors(listing1_path, tmp_path):
    assert main(["validate", str(tmp_path / "nope.andl")]) == EXIT_CONFIG
    assert main(["validate", str(listing1_path), "--override", "bogus=1"]) == EXIT_CONFIG


def test_malformed_arguments_exit_through_argparse(listing1_path):
    with pytest.raises(SystemExit) as info:
        main(["run", str(listing1_path), "--until", "10parsecs"])
    assert info.value.code == 2
    with pytest.raises(SystemExit):
        main(["validate", str(listing1_path), "--override", "no-equals-sign"])


def test_schedule_lists_every_port(listing1_path, capsys):
    assert main(["schedule", str(listing1_path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("cycle 5ms")
    assert "gw1->switch1" in out and "switch1->gw2" in out


def test_infeasible_schedule(tmp_path, capsys):
    path = tmp_path / "tight.andl"
    path.write_text(INFEASIBLE, encoding="utf-8")
    assert main(["schedule", str(path)]) == EXIT_VIOLATION
    assert "infeasible" in capsys.readouterr().err


def test_run_writes_results(listing1_path, listing2_path, tmp_path):
    code = main(["run", str(listing1_path), "--until", "200ms", "--constraints", str(listing2_path),
                 "--out", str(tmp_path), "--format", "csv,json", "--pcap"])
    assert code == EXIT_OK
    for name in ("twoBus.csv", "twoBus.json", "twoBus.pcap", "twoBus.violations.txt"):
        assert (tmp_path / name).is_file()
    assert (tmp_path / "twoBus.violations.txt").read_text(encoding="utf-8") == ""
    rows = list(csv.DictReader((tmp_path / "twoBus.csv").open(encoding="utf-8")))
    assert rows[0]["stream"] == "msg1->node2"


def test_violated_constraint_sets_the_exit_code(listing1_path, tmp_path, capsys):
    rules = tmp_path / "strict.xml"
    rules.write_text(STOP_AT_10MS, encoding="utf-8")
    code = main(["run", str(listing1_path), "--until", "200ms", "--constraints", str(rules),
                 "--out", str(tmp_path)])
    assert code == EXIT_VIOLATION
    assert "stopped at" in capsys.readouterr().err
    report = (tmp_path / "twoBus.violations.txt").read_text(encoding="utf-8")
    assert report.splitlines()[-1].startswith("stopped:")


def test_replicas_get_consecutive_seeds(listing1_path, tmp_path):
    code = main(["run", str(listing1_path), "--until", "50ms", "--seed", "3", "--replicas", "2",
                 "--format", "json", "--out", str(tmp_path)])
    assert code == EXIT_OK
    assert '"seed": "3"' in (tmp_path / "twoBus-r0.json").read_text(encoding="utf-8")
    assert '"seed": "4"' in (tmp_path / "twoBus-r1.json").read_text(encoding="utf-8")


def test_unknown_format_is_rejected(listing1_path, tmp_path):
    assert main(["run", str(listing1_path), "--format", "xlsx", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_sweep_merges_every_point(tmp_path):
    scenario = SCENARIOS / "control.andl"
    code = main(["sweep", str(scenario), "--param", "cross_traffic_frame_size", "--values", "0B,1518B",
                 "--until", "20ms", "--out", str(tmp_path)])
    assert code == EXIT_OK
    rows = list(csv.DictReader((tmp_path / "sweep_cross_traffic_frame_size.csv").open(encoding="utf-8")))
    assert [row["value"] for row in rows].count("0B") == 3
    assert [row["value"] for row in rows].count("1518B") == 4
    assert (tmp_path / "cross_traffic_frame_size=0B.csv").is_file()


def test_sweep_rejects_unknown_parameters(tmp_path):
    scenario = SCENARIOS / "control.andl"
    assert main(["sweep", str(scenario), "--param", "colour", "--values", "1", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_inconsistent_settings_stop_before_any_command(listing1_path, monkeypatch, capsys):
    monkeypatch.setattr(Settings, "AVB_CLASS_A_FRACTION", 1.5)
    assert main(["validate", str(listing1_path)]) == EXIT_CONFIG
    assert "idle-slope fractions" in capsys.readouterr().err
