import json
import subprocess
import sys

import pytest

from wgmhd.cli import ConfigError, build_parser, main, read_config, resolve_run_options


def _opts(argv):
    return resolve_run_options(build_parser().parse_args(["run"] + argv))


def test_defaults():
    o = _opts([])
    assert o["example"] == 1 and o["k"] == 1 and o["condense"] is True and o["format"] == "csv"
    assert o["meshes"] == [2, 4, 8, 16] and o["tol"] == 1e-8


def test_config_then_flags_win(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# study\nexample = 2\nk=2\nmeshes = 4, 8\ncondense = off\n--tol = 1e-9  # trailing\n")
    o = _opts(["--config", str(cfg)])
    assert (o["example"], o["k"], o["meshes"], o["condense"], o["tol"]) == (2, 2, [4, 8], False, 1e-9)
    o = _opts(["--config", str(cfg), "--k", "1", "--condense", "on", "--meshes", "2"])
    assert (o["example"], o["k"], o["meshes"], o["condense"]) == (2, 1, [2], True)


@pytest.mark.parametrize("text", ["nonsense\n", "colour = red\n", "k = two\n", "condense = maybe\n",
                                  "example = 3\n", "meshes = ,\n"])
def test_bad_config(tmp_path, text):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(text)
    with pytest.raises(ConfigError):
        _opts(["--config", str(cfg)])


def test_missing_config():
    with pytest.raises(ConfigError):
        read_config("/nonexistent/wgmhd.cfg")


def test_run_writes_report(tmp_path, capsys):
    out = tmp_path / "t.md"
    assert main(["run", "--meshes", "2,4", "--format", "md", "--out", str(out)]) == 0
    assert "| 4×4 |" in out.read_text()
    assert capsys.readouterr().out == ""


def test_run_failure_summary(capsys):
    code = main(["run", "--meshes", "2", "--max-iter", "1", "--tol", "1e-14"])
    assert code == 1
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary["status"] == "fail" and summary["failures"][0]["n"] == 2


def test_run_usage_error(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("bogus = 1\n")
    assert main(["run", "--config", str(cfg)]) == 2
    assert main(["run", "--meshes", "4,2"]) == 2


def test_check_subset(capsys):
    assert main(["check", "--only", "mesh_invariants,commutativity"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2 and all(line.startswith("PASS") for line in lines)


def test_check_json(capsys):
    assert main(["check", "--only", "quadrature_exactness", "--json"]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["passed"] is True and rec["name"] == "quadrature_exactness"


def test_check_failure_exit_code(monkeypatch, capsys):
    from wgmhd import checks

    def broken():
        raise RuntimeError("boom")

    monkeypatch.setitem(checks.CHECKS, "mesh_invariants", broken)
    assert main(["check", "--only", "mesh_invariants"]) == 1
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary["failures"][0]["detail"] == "RuntimeError: boom"


def test_check_unknown_name():
    assert main(["check", "--only", "nope"]) == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "wgmhd", "check"], capture_output=True, text=True, timeout=300)
    assert res.returncode == 0, res.stdout + res.stderr
    assert "FAIL" not in res.stdout
