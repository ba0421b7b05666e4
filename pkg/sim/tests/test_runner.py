import json

import pytest
import yaml

import config_loader
import runner


@pytest.fixture
def config_file(tmp_path, monkeypatch):
    monkeypatch.delenv("EXOIGN_WORKERS", raising=False)
    monkeypatch.delenv("EXOIGN_SEED", raising=False)
    config_loader.reset_config()
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump({
        "logging": {"level": "WARNING", "save_to_file": False},
        "scenario": {"range_km": [5.0, 5.0]},
    }), encoding="utf-8")
    yield str(path)
    config_loader.reset_config()


def test_gradcheck_command(config_file, capsys):
    assert runner.main(["--config", config_file, "gradcheck"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["passed"]


def test_montecarlo_command(config_file, tmp_path, capsys):
    out = tmp_path / "mc"
    code = runner.main(["--config", config_file, "montecarlo", "--episodes", "2", "--controller", "never",
                        "--out", str(out)])
    assert code == 0
    stdout = capsys.readouterr().out
    assert json.loads(stdout[:stdout.index("\nwrote:") + 1])["episodes"] == 2
    assert (out / "episodes.csv").exists()


def test_simulate_replay_check(config_file, tmp_path, capsys):
    out = tmp_path / "sim"
    code = runner.main(["--config", config_file, "simulate", "--controller", "apn", "--index", "3",
                        "--out", str(out), "--replay-check"])
    assert code == 0
    assert "replay: ok" in capsys.readouterr().out
    assert (out / "track.csv").exists()


def test_configuration_fault_exit_code(config_file, capsys):
    code = runner.main(["--config", config_file, "montecarlo", "--controller", "policy", "--episodes", "1"])
    assert code == 2
    record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert record["fault"] == "config-fault"


def test_train_defaults_to_error_free_sensors(config_file, monkeypatch, tmp_path, capsys):
    seen = {}

    class _Report:
        def as_dict(self):
            return {"updates": 0}

    def fake_training(cfg, ppo_cfg, out_dir=None, params=None):
        seen["cfg"] = cfg
        return _Report()

    monkeypatch.setattr(runner, "run_training", fake_training)
    assert runner.main(["--config", config_file, "train", "--out", str(tmp_path)]) == 0
    cfg = seen["cfg"]
    assert cfg.preset == "optimization"
    assert (cfg.scenario.e_theta.lo, cfg.scenario.e_theta.hi) == (0.0, 0.0)
    assert (cfg.scenario.sigma_omega.lo, cfg.scenario.sigma_omega.hi) == (0.0, 0.0)
    assert json.loads(capsys.readouterr().out) == {"updates": 0}
