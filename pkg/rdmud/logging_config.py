"""
Logging Configuration for RD-MUD simulations
Handles run, error and debug logging for the simulation toolkit.
"""

import logging
import os
from datetime import datetime
from pathlib import Path
from typing import Optional


class SimulationLogger:
    """Centralized logging system for the simulator."""

    LOG_TYPES = ("runs", "errors", "debug")

    def __init__(self, log_dir: Optional[str] = None):
        self.log_dir = Path(log_dir) if log_dir else None

        if self.log_dir is not None:
            self.log_dir.mkdir(parents=True, exist_ok=True)
            for log_type in self.LOG_TYPES:
                (self.log_dir / log_type).mkdir(exist_ok=True)

        self._setup_loggers()

    def _setup_loggers(self):
        """Setup different loggers for different purposes."""

        # Runs, sweep points, matrix searches
        self.run_logger = self._create_logger(
            name="rdmud_runs",
            log_file=self._log_file("runs"),
            level=logging.INFO
        )

        self.error_logger = self._create_logger(
            name="rdmud_errors",
            log_file=self._log_file("errors"),
            level=logging.ERROR
        )

        # Detector diagnostics and worker chunk stats
        self.debug_logger = self._create_logger(
            name="rdmud_debug",
            log_file=self._log_file("debug"),
            level=logging.DEBUG
        )

    def _log_file(self, log_type: str) -> Optional[Path]:
        if self.log_dir is None:
            return None
        return self.log_dir / log_type / f"{log_type}.log"

    def _create_logger(self, name: str, log_file: Optional[Path], level: int) -> logging.Logger:
        """Create a logger with an optional file handler and a console handler."""
        logger = logging.getLogger(name)
        logger.setLevel(level)
        logger.propagate = False

        # Clear existing handlers
        logger.handlers.clear()

        formatter = logging.Formatter(
            '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
        )

        if log_file is not None:
            file_handler = logging.FileHandler(log_file, encoding='utf-8')
            file_handler.setLevel(level)
            file_handler.setFormatter(formatter)
            logger.addHandler(file_handler)

        # stderr, stdout carries tables and CSV
        console_handler = logging.StreamHandler()
        console_handler.setLevel(_console_level())
        console_handler.setFormatter(formatter)
        logger.addHandler(console_handler)

        return logger

    def log_run_start(self, command: str, config: dict):
        """Log the start of a CLI command or library run."""
        self.run_logger.info(f"Run Start - {command} - Config: {config}")

    def log_run_finish(self, command: str, total_trials: int, duration: float):
        """Log the end of a run with wall time."""
        self.run_logger.info(
            f"Run Finish - {command} - Trials: {total_trials} - Duration: {duration:.2f}s"
        )

    def log_estimate(self, detector: str, sweep_var: str, sweep_value, pe: float,
                     trials: int, duration: float):
        """Log one probability-of-error estimate."""
        self.run_logger.info(
            f"Estimate - Detector: {detector} - {sweep_var}={sweep_value} - "
            f"Pe: {pe:.6g} - Trials: {trials} - Duration: {duration:.2f}s"
        )

    def log_matrix_search(self, kind: str, rows: int, cols: int, candidates: int,
                          best_mu: float, best_index: int):
        """Log the outcome of a min-coherence search."""
        self.run_logger.info(
            f"Matrix Search - Kind: {kind} - Size: {rows}x{cols} - Candidates: {candidates} - "
            f"Best mu: {best_mu:.6f} (candidate {best_index})"
        )

    def log_detector_diagnostic(self, detector: str, diagnostics: dict):
        """Log detector diagnostics such as RDDF re-selections."""
        self.debug_logger.debug(f"Detector Diagnostic - {detector} - {diagnostics}")

    def log_worker_chunk(self, start: int, stop: int, joint_errors: int, duration: float,
                         failures: Optional[dict] = None):
        """Log one finished chunk of Monte Carlo trials and any detector failures in it."""
        self.debug_logger.debug(
            f"Worker Chunk - Trials [{start}, {stop}) - Joint errors: {joint_errors} - "
            f"Time: {duration:.2f}s"
        )
        if failures:
            self.run_logger.warning(f"Detector Failures - Trials [{start}, {stop}) - {failures}")

    def log_error(self, error: Exception, context: str = "", additional_info: dict = None):
        """Log errors with context."""
        error_info = {
            "error_type": type(error).__name__,
            "error_message": str(error),
            "context": context,
            "timestamp": datetime.now().isoformat()
        }

        if additional_info:
            error_info.update(additional_info)

        self.error_logger.error(f"Error occurred: {error_info}")

        # Also log to debug for more details
        self.debug_logger.debug(f"Full error details: {error_info}")

    def get_log_files(self) -> dict:
        """Get list of all log files."""
        log_files = {}
        if self.log_dir is None:
            return log_files
        for log_type in self.LOG_TYPES:
            log_dir = self.log_dir / log_type
            if log_dir.exists():
                log_files[log_type] = [f.name for f in log_dir.glob("*.log")]
        return log_files


def _console_level() -> int:
    level_name = os.getenv("RDMUD_LOG_LEVEL", "WARNING").upper()
    return getattr(logging, level_name, logging.WARNING)


# Global logger instance, created on first use
_logger: Optional[SimulationLogger] = None


def get_simulation_logger() -> SimulationLogger:
    """Return the global logger, configured from RDMUD_LOG_DIR on first use."""
    global _logger
    if _logger is None:
        _logger = SimulationLogger(os.getenv("RDMUD_LOG_DIR") or None)
    return _logger


def configure_logging(log_dir: Optional[str] = None) -> SimulationLogger:
    """Replace the global logger, e.g. when the CLI receives --log-dir."""
    global _logger
    _logger = SimulationLogger(log_dir)
    return _logger


# Convenience functions
def log_run_start(command: str, config: dict):
    """Log run start."""
    get_simulation_logger().log_run_start(command, config)


def log_run_finish(command: str, total_trials: int, duration: float):
    """Log run finish."""
    get_simulation_logger().log_run_finish(command, total_trials, duration)


def log_estimate(detector: str, sweep_var: str, sweep_value, pe: float, trials: int, duration: float):
    """Log estimate."""
    get_simulation_logger().log_estimate(detector, sweep_var, sweep_value, pe, trials, duration)


def log_matrix_search(kind: str, rows: int, cols: int, candidates: int, best_mu: float, best_index: int):
    """Log matrix search."""
    get_simulation_logger().log_matrix_search(kind, rows, cols, candidates, best_mu, best_index)


def log_detector_diagnostic(detector: str, diagnostics: dict):
    """Log detector diagnostic."""
    get_simulation_logger().log_detector_diagnostic(detector, diagnostics)


def log_worker_chunk(start: int, stop: int, joint_errors: int, duration: float,
                     failures: Optional[dict] = None):
    """Log worker chunk."""
    get_simulation_logger().log_worker_chunk(start, stop, joint_errors, duration, failures)


def log_error(error: Exception, context: str = "", additional_info: dict = None):
    """Log error."""
    get_simulation_logger().log_error(error, context, additional_info)
