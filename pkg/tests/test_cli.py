import json

import pytest

from airnet.cli import EXIT_ABORT, EXIT_INPUT, EXIT_OK, main
from airnet.scenario import MetricsReport

from conftest import scenario_doc


@pytest.fixture
def ran(tmp_path):
    out = tmp_path / "out"
    assert main(["run", "line3", "--out", str(out)]) == EXIT_OK
    return out


def test_run_writes_log_and_metrics(ran):
    assert (ran / "events.log").is_file()
    assert json.loads((ran / "metrics.json").read_text())["scenario"] == "line3"


def test_metrics_reproduces_file_byte_for_byte(ran, capsys):
    capsys.readouterr()
    assert main(["metrics", str(ran / "events.log")]) == EXIT_OK
    assert capsys.readouterr().out == (ran / "metrics.json").read_text()


def test_seed_flag_accepts_hex_and_changes_header(tmp_path):
    out = tmp_path / "o"
    assert main(["run", "reference_solo", "--seed", "0x10", "--out", str(out)]) == EXIT_OK
    header = json.loads((out / "events.log").read_text().splitlines()[0])
    assert header["seed"] == 16


def test_seed_out_of_range(tmp_path, capsys):
    assert main(["run", "line3", "--seed", str(2**64), "--out", str(tmp_path / "o")]) == EXIT_INPUT


def test_invalid_scenario_exit_2_and_no_output(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(scenario_doc(spectral={"mode": "contested"})))
    out = tmp_path / "o"
    assert main(["run", str(bad), "--out", str(out)]) == EXIT_INPUT
    assert not out.exists()
    assert "spectral.jammers" in capsys.readouterr().err


def test_validate(tmp_path, capsys):
    good = tmp_path / "good.json"
    good.write_text(json.dumps(scenario_doc()))
    assert main(["validate", str(good)]) == EXIT_OK
    assert "valid" in capsys.readouterr().out
    assert main(["validate", str(tmp_path / "missing.json")]) == EXIT_INPUT


def test_empty_log_gives_zeroed_report(tmp_path, capsys):
    empty = tmp_path / "empty.log"
    empty.write_text("")
    assert main(["metrics", str(empty)]) == EXIT_OK
    assert capsys.readouterr().out == MetricsReport().dumps()


def test_corrupted_line_names_line(ran, tmp_path, capsys):
    lines = (ran / "events.log").read_text().splitlines(keepends=True)
    lines[6] = '{"t": 0.0, "node": \n'
    bad = tmp_path / "bad.log"
    bad.write_text("".join(lines))
    assert main(["metrics", str(bad)]) == EXIT_INPUT
    assert "line 7" in capsys.readouterr().err


def test_truncated_log_is_partial(ran, tmp_path, capsys):
    lines = (ran / "events.log").read_text().splitlines(keepends=True)
    cut = tmp_path / "cut.log"
    cut.write_text("".join(lines[: len(lines) // 2]))
    assert main(["metrics", str(cut)]) == EXIT_INPUT
    assert "run_end" in capsys.readouterr().err


def test_replay_filter(ran, capsys):
    capsys.readouterr()
    assert main(["replay", str(ran / "events.log"), "--filter", "packet"]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert out and all(" packet " in line for line in out)


def test_unknown_subcommand_is_input_error():
    assert main(["fly"]) == EXIT_INPUT


def test_batch_runs(tmp_path):
    out = tmp_path / "batch"
    assert main(["run", "reference_solo", "--runs", "2", "--jobs", "2", "--out", str(out)]) == EXIT_OK
    seeds = [json.loads((out / f"run-{i:03d}" / "metrics.json").read_text())["seed"] for i in range(2)]
    assert seeds == [1, 2]


def test_runtime_abort_exit_3(tmp_path, monkeypatch, capsys):
    from airnet.scenario import runner

    def boom(self):
        raise RuntimeError("injected")

    monkeypatch.setattr(runner.Network, "next_pdu", boom)
    out = tmp_path / "o"
    assert main(["run", "line3", "--out", str(out)]) == EXIT_ABORT
    assert "injected" in capsys.readouterr().err
    assert "run_aborted" in (out / "events.log").read_text()
