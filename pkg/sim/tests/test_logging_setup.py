import io
import logging

from src.logging_setup import RunMetrics, setup_logging


def test_console_goes_to_given_stream():
    stream = io.StringIO()
    assert setup_logging("WARNING", save_to_file=False, stream=stream) is None
    logging.getLogger("src.harness").info("hidden")
    logging.getLogger("src.harness").warning("shown %d", 3)
    text = stream.getvalue()
    assert "hidden" not in text
    assert "shown 3" in text


def test_file_logging(tmp_path):
    log_file = setup_logging("INFO", save_to_file=True, log_dir=str(tmp_path), stream=io.StringIO())
    logging.getLogger("runner").error("boom")
    for handler in logging.getLogger().handlers:
        handler.flush()
    assert log_file.parent == tmp_path
    assert "boom" in log_file.read_text(encoding="utf-8")
    errors = [p for p in tmp_path.iterdir() if p.name.startswith("error_")]
    assert len(errors) == 1 and "boom" in errors[0].read_text(encoding="utf-8")
    setup_logging("WARNING", save_to_file=False, stream=io.StringIO())


def test_run_metrics():
    metrics = RunMetrics()
    metrics.log_episode(0.5, 20)
    metrics.log_episode(1.5, 30)
    metrics.log_update(4.0, episodes=3, steps=60)
    metrics.log_fault(2)
    stats = metrics.get_stats()
    assert stats["episodes"] == 5
    assert stats["steps"] == 110
    assert stats["episode_avg"] == 2.0 / 5
    assert stats["update_avg"] == 4.0
    assert stats["faults"] == 2
