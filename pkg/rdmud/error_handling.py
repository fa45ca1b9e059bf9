"""
Error Handling for RD-MUD
Exception hierarchy plus wrappers that keep long Monte Carlo runs and CLI
commands from crashing on a single numerical failure.
"""

import functools
import sys
import traceback
from collections import Counter
from typing import Any, Callable, Dict, Optional

from pydantic import ValidationError

from .logging_config import log_error


class RDMUDError(Exception):
    """Base class for all toolkit errors."""


class DimensionMismatchError(RDMUDError, ValueError):
    """Matrix or vector shapes do not agree."""


class SingularGramError(RDMUDError, ValueError):
    """Gram matrix is not positive definite or is numerically singular."""


class WhiteningUndefinedError(RDMUDError, ValueError):
    """A G^-1 A^H is rank deficient, so its inverse square root does not exist."""


class UnsupportedDimensionError(RDMUDError, ValueError):
    """Requested matrix size is not supported by the construction."""


class UndefinedCoherenceError(RDMUDError, ValueError):
    """Coherence needs at least two columns."""


class MatrixParseError(RDMUDError):
    """Malformed RDMUD-MAT file."""

    def __init__(self, path: str, line: int, message: str):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class LeastSquaresSingularError(RDMUDError, ValueError):
    """Columns on the detected support are linearly dependent."""


class SingularMMSEError(RDMUDError, ValueError):
    """The RD-MMSE matrix A_I R_I^2 A_I^H + sigma^2 A G^-1 A^H is singular."""


class ExhaustiveSearchRefusedError(RDMUDError, ValueError):
    """RD-ML refused to enumerate 3^N candidates."""


class ConfigError(RDMUDError, ValueError):
    """Invalid experiment configuration."""


class DetectorErrorHandler:
    """Runs detector calls, logging and tallying failures instead of raising."""

    def __init__(self, context: str = "detector"):
        self.context = context
        self.failures: Counter = Counter()

    def wrap(self, call: Callable[[], Any], additional_info: Optional[Dict[str, Any]] = None) -> Any:
        """Return call() or None when it raises an RDMUDError."""
        try:
            return call()
        except RDMUDError as e:
            self.failures[type(e).__name__] += 1
            log_error(
                error=e,
                context=f"{self.context} failed",
                additional_info=additional_info,
            )
            return None

    @property
    def total_failures(self) -> int:
        return sum(self.failures.values())

    def stats(self) -> Dict[str, int]:
        return dict(self.failures)


EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def cli_error_boundary(command: Callable[..., int]) -> Callable[..., int]:
    """Map failures inside a CLI command to exit code 1 with a one-line message."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs) -> int:
        try:
            return command(*args, **kwargs)
        except FileNotFoundError as e:
            log_error(e, context=f"{command.__name__}: missing file")
            print(f"error: file not found: {e.filename}", file=sys.stderr)
            return EXIT_RUNTIME
        except ValidationError as e:
            log_error(e, context=f"{command.__name__}: invalid config")
            print("error: invalid config:", file=sys.stderr)
            for problem in e.errors():
                location = ".".join(str(part) for part in problem["loc"])
                print(f"  {location}: {problem['msg']}", file=sys.stderr)
            return EXIT_RUNTIME
        except (RDMUDError, OSError) as e:
            log_error(
                e,
                context=f"{command.__name__} failed",
                additional_info={"traceback": traceback.format_exc()},
            )
            print(f"error: {e}", file=sys.stderr)
            return EXIT_RUNTIME

    return wrapper
