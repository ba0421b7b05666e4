import subprocess

import pytest
import yaml

from exoign import cli


@pytest.fixture
def repo(tmp_path, monkeypatch):
    (tmp_path / "sim").mkdir()
    monkeypatch.setattr(cli, "_repo_root", lambda: tmp_path)
    return tmp_path


def test_parse_value():
    assert cli._parse_value("8") == 8
    assert cli._parse_value("0.2") == 0.2
    assert cli._parse_value("true") is True
    assert cli._parse_value("[50, 55]") == [50, 55]
    assert cli._parse_value("scenario-3") == "scenario-3"
    assert cli._parse_value("[oops") == "[oops"


def test_set_dotted():
    data = {"campaign": {"workers": 1}, "scenario": 3}
    cli._set_dotted(data, "campaign.workers", 4)
    cli._set_dotted(data, "scenario.range_km", [5, 5])
    assert data == {"campaign": {"workers": 4}, "scenario": {"range_km": [5, 5]}}
    with pytest.raises(ValueError):
        cli._set_dotted(data, "workers", 4)


def test_config_set_and_show(repo, capsys):
    assert cli.main(["config", "set", "campaign.workers", "4"]) == 0
    data = yaml.safe_load((repo / "sim" / "config.yaml").read_text(encoding="utf-8"))
    assert data == {"campaign": {"workers": 4}}
    capsys.readouterr()
    assert cli.main(["config", "show", "campaign.workers"]) == 0
    assert capsys.readouterr().out.splitlines()[0] == "4"
    assert cli.main(["config", "show", "campaign.seed"]) == 1


def test_config_set_rejects_bare_key(repo):
    assert cli.main(["config", "set", "workers", "4"]) == 2


def test_engine_command_is_forwarded(repo, monkeypatch):
    (repo / "sim" / "runner.py").write_text("", encoding="utf-8")
    calls = []

    def fake_run(cmd, cwd, env, check):
        calls.append((cmd, cwd, env))
        return subprocess.CompletedProcess(cmd, 0)

    monkeypatch.setattr(cli.subprocess, "run", fake_run)
    assert cli.main(["montecarlo", "--workers", "3", "--", "--episodes", "10"]) == 0
    cmd, cwd, env = calls[0]
    assert cmd[2:] == ["montecarlo", "--episodes", "10"]
    assert cwd == str(repo / "sim")
    assert env["EXOIGN_WORKERS"] == "3"
    assert cli.main(["bench", "--workers", "0"]) == 2


def test_missing_engine(repo):
    assert cli.main(["simulate"]) == 1
