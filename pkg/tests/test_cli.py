import json

from mpcsbm.cli import main


def write_cfg(tmp_path, **kw):
    data = dict(algorithm="commnbr", grid=[{"n": 40, "k": 2, "p": 0.6, "q": 0.05}], seeds=[0, 1],
                out=str(tmp_path / "out"))
    data.update(kw)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(data))
    return path


def test_generate_run_report(tmp_path, capsys):
    path = write_cfg(tmp_path)
    assert main(["generate", "--config", str(path)]) == 0
    assert len(list((tmp_path / "out" / "instances").glob("*.txt"))) == 2
    assert main(["run", "--config", str(path), "--algo", "mpc-commnbr", "--ledgers"]) == 0
    lines = (tmp_path / "out" / "report.csv").read_text().splitlines()
    assert len(lines) == 3 and lines[1].startswith("mpc-commnbr,40,2")
    assert len(list((tmp_path / "out" / "ledgers").iterdir())) == 2
    assert main(["report", "--out", str(tmp_path / "out")]) == 0
    assert (tmp_path / "out" / "plots" / "rounds_vs_logsN.txt").exists()


def test_failing_cells_still_exit_zero(tmp_path):
    path = write_cfg(tmp_path, grid=[{"n": 20, "k": 2, "p": 0.1, "q": 0.1}])
    assert main(["run", "--config", str(path), "--seed-offset", "3"]) == 0
    rows = (tmp_path / "out" / "report.csv").read_text().splitlines()[1:]
    assert [r.split(",")[7] for r in rows] == ["3", "4"]


def test_config_errors_exit_two(tmp_path):
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["run", "--config", str(write_cfg(tmp_path, algorithm="bogus"))]) == 2
    assert main(["run", "--config", str(write_cfg(tmp_path, grid=[{"n": 4, "k": 1, "p": 0.5, "q": 0.1}]))]) == 2
    assert main(["report", "--out", str(tmp_path / "nowhere")]) == 2


def test_bad_flag_exits_two(tmp_path):
    import pytest
    with pytest.raises(SystemExit) as exc:
        main(["run", "--config", "x.json", "--algo", "quantum"])
    assert exc.value.code == 2
