"""
Logging setup
- Colored console output and dated log files
- Run metrics (episodes, steps, updates, faults) with a summary at exit
"""
import logging
import sys
from datetime import datetime
from pathlib import Path
from typing import Optional


class ColoredFormatter(logging.Formatter):
    """Console formatter with colored level names"""

    COLORS = {
        "DEBUG": "\033[36m",
        "INFO": "\033[32m",
        "WARNING": "\033[33m",
        "ERROR": "\033[31m",
        "CRITICAL": "\033[35m",
        "RESET": "\033[0m",
    }

    def format(self, record):
        levelname = record.levelname
        if levelname in self.COLORS:
            record = logging.makeLogRecord(record.__dict__)
            record.levelname = f"{self.COLORS[levelname]}{levelname}{self.COLORS['RESET']}"
        return super().format(record)


class RunMetrics:
    """Counters and timings for one process"""

    def __init__(self):
        self.metrics = {
            "episodes": 0,
            "episode_total_time": 0.0,
            "steps": 0,
            "updates": 0,
            "update_total_time": 0.0,
            "faults": 0,
        }
        self.log = logging.getLogger("performance")

    def log_episode(self, duration: float, steps: int):
        self.metrics["episodes"] += 1
        self.metrics["episode_total_time"] += duration
        self.metrics["steps"] += steps
        avg = self.metrics["episode_total_time"] / self.metrics["episodes"]
        self.log.debug("Episode: %.3fs, %d steps (avg: %.3fs)", duration, steps, avg)

    def log_update(self, duration: float, episodes: int, steps: int):
        self.metrics["updates"] += 1
        self.metrics["update_total_time"] += duration
        self.metrics["episodes"] += episodes
        self.metrics["steps"] += steps
        avg = self.metrics["update_total_time"] / self.metrics["updates"]
        self.log.debug("Update: %.2fs (avg: %.2fs)", duration, avg)

    def log_fault(self, count: int = 1):
        self.metrics["faults"] += count

    def get_stats(self) -> dict:
        stats = self.metrics.copy()
        stats["episode_avg"] = (
            stats["episode_total_time"] / stats["episodes"] if stats["episodes"] > 0 else 0
        )
        stats["update_avg"] = (
            stats["update_total_time"] / stats["updates"] if stats["updates"] > 0 else 0
        )
        return stats

    def print_stats(self):
        stats = self.get_stats()
        self.log.info("=" * 50)
        self.log.info("Run Statistics")
        self.log.info("-" * 50)
        self.log.info("Episodes: %s (avg: %.3fs)", stats["episodes"], stats["episode_avg"])
        self.log.info("Steps: %s", stats["steps"])
        self.log.info("Updates: %s (avg: %.2fs)", stats["updates"], stats["update_avg"])
        self.log.info("Faults: %s", stats["faults"])
        self.log.info("=" * 50)


def setup_logging(level: str = "INFO", save_to_file: bool = True, log_dir: str = "logs",
                  stream=None) -> Optional[Path]:
    """Configure the root logger; returns the log file path when file logging is on"""
    log_level = getattr(logging, level.upper(), logging.INFO)

    root_logger = logging.getLogger()
    root_logger.setLevel(log_level)
    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)

    console_format = "%(asctime)s | %(levelname)-8s | %(name)-15s | %(message)s"
    file_format = "%(asctime)s | %(levelname)-8s | %(name)-15s | %(filename)s:%(lineno)d | %(message)s"
    date_format = "%Y-%m-%d %H:%M:%S"

    # stdout carries result paths and JSON; logs go to stderr
    console_handler = logging.StreamHandler(stream or sys.stderr)
    console_handler.setLevel(log_level)
    console_handler.setFormatter(ColoredFormatter(console_format, datefmt=date_format))
    root_logger.addHandler(console_handler)

    log_file = None
    if save_to_file:
        log_path = Path(log_dir)
        log_path.mkdir(parents=True, exist_ok=True)
        today = datetime.now().strftime("%Y%m%d")

        log_file = log_path / f"sim_{today}.log"
        file_handler = logging.FileHandler(log_file, encoding="utf-8")
        file_handler.setLevel(log_level)
        file_formatter = logging.Formatter(file_format, datefmt=date_format)
        file_handler.setFormatter(file_formatter)
        root_logger.addHandler(file_handler)

        error_handler = logging.FileHandler(log_path / f"error_{today}.log", encoding="utf-8")
        error_handler.setLevel(logging.ERROR)
        error_handler.setFormatter(file_formatter)
        root_logger.addHandler(error_handler)

        logging.getLogger(__name__).info("Logging to: %s", log_file)

    logging.getLogger(__name__).debug("Logging initialized (level: %s)", level)
    return log_file


run_metrics = RunMetrics()


def get_run_metrics() -> RunMetrics:
    return run_metrics
