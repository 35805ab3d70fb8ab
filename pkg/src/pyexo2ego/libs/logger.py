#!/usr/bin/env python3
"""
PYEXO2EGO: Parallel GAN for exocentric to egocentric view generation,
with synthetic paired-view data and a full evaluation metric suite.

This module provides the application logging system:
- Console output with color-coded log levels
- Optional file logging with timestamped entries
- Shortened exception chains for verbose console errors
- Structured "key = value" records for configs and loss reports

Training runs are long and mostly silent in the console (progress bars
do the talking); the log file, enabled via CLI (-d or -D), keeps the
full history of a run.

Copyright 2024 © Thierry Thiers <webcoder31@gmail.com>
License: CeCILL-C (http://www.cecill.info)
Repository: https://github.com/webcoder31/pyexo2ego
"""

# Python core modules
import logging
from pathlib import Path
import sys
import traceback
from typing import Any, Mapping, Optional, Union

# Third party packages
from colorama import Fore, Style

# ------------------------
# Constants
# ------------------------

DEBUG = logging.DEBUG
INFO = logging.INFO
WARNING = logging.WARNING
ERROR = logging.ERROR
CRITICAL = logging.CRITICAL

LOGGER_NAME = "pyexo2ego"
LOG_FORMAT = "%(asctime)s.%(msecs)03d | %(levelname)s | %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

LOG_LEVELS: dict[str, int] = {
    "DEBUG": DEBUG,
    "INFO": INFO,
    "WARNING": WARNING,
    "ERROR": ERROR,
    "CRITICAL": CRITICAL
}

LOG_COLORS: dict[int, str] = {
    DEBUG: Fore.BLUE,
    INFO: Fore.GREEN,
    WARNING: Fore.YELLOW,
    ERROR: Fore.RED,
    CRITICAL: Fore.MAGENTA
}

# ------------------------
# Helpers
# ------------------------

def _level(value: Union[str, int], fallback: int) -> int:
    """
    Resolve a level given as name or logging constant.
    """

    if isinstance(value, int):
        return value
    return LOG_LEVELS.get(str(value).upper(), fallback)


def short_tracebacks(exc_info: tuple) -> list[str]:
    """
    Flatten an exception chain into one line per exception.

    Follows __cause__ and __context__ so that a wrapped error
    (e.g. a CheckpointException raised from a struct.error) shows
    its whole story without a full stack trace.

    Args:
        exc_info (tuple): Triple as returned by sys.exc_info()

    Returns:
        list[str]: "Type: message" lines, most recent first

    Example:
        >>> try:
        ...     raise ValueError("bad shape") from KeyError("w")
        ... except ValueError:
        ...     short_tracebacks(sys.exc_info())
        ['ValueError: bad shape', "KeyError: 'w'"]
    """

    lines = []
    tbe = traceback.TracebackException(*exc_info)
    while tbe:
        lines.append("".join(tbe.format_exception_only()).replace("\n", ""))
        tbe = tbe.__cause__ or tbe.__context__
    return lines


# ------------------------
# Formatters
# ------------------------

class ConsoleFormatter(logging.Formatter):
    """
    Format console records as colored "[LEVEL] message" lines.

    When the owning logger has verbose errors enabled, records carrying
    exception info get the numbered exception chain appended:

        [ERROR] Checkpoint could not be loaded
                [2] CheckpointException: Truncated tensor "g1/dec1.weight"
                [1] error: unpack requires a buffer of 4 bytes
    """

    def __init__(self, owner: "Logger") -> None:
        super().__init__("%(message)s")
        self.owner = owner


    def format(self, record: logging.LogRecord) -> str:
        color = LOG_COLORS.get(record.levelno, "")
        entry = f"{color}{Style.BRIGHT}[{record.levelname}] " \
            + f"{record.getMessage()}{Style.RESET_ALL}"

        if record.exc_info and self.owner.verbose_errors_enabled:
            chain = short_tracebacks(record.exc_info)
            indent = " " * (len(record.levelname) + 3)
            for i, line in enumerate(chain):
                entry += f"\n{color}{indent}{Style.BRIGHT}[{len(chain) - i}]" \
                    + f"{Style.NORMAL} {line}{Style.RESET_ALL}"

        return entry


class FileFormatter(logging.Formatter):
    """
    Format file records with millisecond timestamps.

    Stack traces are written for CRITICAL records always, and for other
    records carrying exception info only when tracebacks are enabled.
    """

    def __init__(self, owner: "Logger") -> None:
        super().__init__(LOG_FORMAT, DATE_FORMAT)
        self.owner = owner


    def format(self, record: logging.LogRecord) -> str:
        if record.exc_info and self.owner.verbose_errors_enabled:
            message = record.getMessage()
            chain = short_tracebacks(record.exc_info)
            for i, line in enumerate(chain):
                message += f"\n\t[{len(chain) - i}] {line}"
            record.msg, record.args = message, None

        if not self.owner.file_traceback_enabled \
            and record.levelno != CRITICAL:
            record.exc_info = None

        entry = super().format(record)

        # Keep traced entries visually apart from the surrounding log
        if record.exc_info and record.levelno >= ERROR:
            entry = f"\n{entry}\n"

        return entry


# ------------------------
# Logger Class
# ------------------------

class Logger:
    """
    Console and file logger used by every PYEXO2EGO module.

    Attributes:
        logger (logging.Logger): Underlying stdlib logger
        verbose_errors_enabled (bool): Append exception chains to errors
        file_traceback_enabled (bool): Write full tracebacks to the file
    """

    def __init__(
        self,
        console_level: Union[str, int] = WARNING,
        verbose_errors_enabled: bool = False,
        log_file: Optional[Union[str, Path]] = None,
        file_level: Union[str, int] = DEBUG,
        file_traceback_enabled: bool = False
    ) -> None:
        """
        Initialize a logger with a console handler and optional file handler.

        Args:
            console_level (Union[str, int], optional): Minimum console level.
                Defaults to WARNING.
            verbose_errors_enabled (bool, optional): Show exception chains.
                Defaults to False.
            log_file (Optional[Union[str, Path]], optional): Log file path;
                file logging is enabled when given. Defaults to None.
            file_level (Union[str, int], optional): Minimum file level.
                Defaults to DEBUG.
            file_traceback_enabled (bool, optional): Write full tracebacks
                for errors to the file. Defaults to False.
        """

        self.logger = logging.getLogger(LOGGER_NAME)
        self.logger.setLevel(DEBUG)
        self.logger.propagate = False

        self.verbose_errors_enabled = verbose_errors_enabled
        self.file_traceback_enabled = file_traceback_enabled

        self.console_handler: Optional[logging.StreamHandler] = None
        self.console_level = _level(console_level, WARNING)

        self.file_handler: Optional[logging.FileHandler] = None
        self.log_file = Path(log_file) if log_file else None
        self.file_level = _level(file_level, DEBUG)

        self.enable_console_handler()
        if self.log_file:
            self.enable_file_handler()


    def enable_console_handler(self) -> None:
        """
        Attach the colored stdout handler (no-op if already attached).
        """

        if not self.console_handler:
            self.console_handler = logging.StreamHandler(sys.stdout)
            self.console_handler.setLevel(self.console_level)
            self.console_handler.setFormatter(ConsoleFormatter(self))
            self.logger.addHandler(self.console_handler)


    def disable_console_handler(self) -> None:
        if self.console_handler:
            self.logger.removeHandler(self.console_handler)
            self.console_handler = None


    def set_console_level(self, level: Union[str, int]) -> None:
        """
        Change the minimum level shown in the console.

        Args:
            level (Union[str, int]): Level name or logging constant
        """

        self.console_level = _level(level, WARNING)
        if self.console_handler:
            self.console_handler.setLevel(self.console_level)


    def enable_file_handler(
        self,
        log_file: Optional[Union[str, Path]] = None,
        level: Optional[Union[str, int]] = None,
        enable_traceback: Optional[bool] = None
    ) -> None:
        """
        Enable or reconfigure logging to file.

        Any argument left to None keeps its current value.

        Args:
            log_file (Optional[Union[str, Path]]): Path to log file
            level (Optional[Union[str, int]]): Minimum level to log
            enable_traceback (Optional[bool]): Write full tracebacks

        Example:
            >>> logger.enable_file_handler("run.log", enable_traceback=True)
        """

        self.disable_file_handler()

        if log_file is not None:
            self.log_file = Path(log_file)
        if level is not None:
            self.file_level = _level(level, DEBUG)
        if enable_traceback is not None:
            self.file_traceback_enabled = enable_traceback

        if self.log_file:
            self.file_handler = logging.FileHandler(self.log_file)
            self.file_handler.setLevel(self.file_level)
            self.file_handler.setFormatter(FileFormatter(self))
            self.logger.addHandler(self.file_handler)


    def disable_file_handler(self) -> None:
        """
        Close and detach the file handler; the log file stays on disk.
        """

        if self.file_handler:
            self.logger.removeHandler(self.file_handler)
            self.file_handler.close()
            self.file_handler = None


    def enable_verbose_errors(self) -> None:
        self.verbose_errors_enabled = True


    def disable_verbose_errors(self) -> None:
        self.verbose_errors_enabled = False


    def debug(self, msg: Any) -> None:
        self.logger.debug(str(msg))


    def info(self, msg: Any) -> None:
        self.logger.info(str(msg))


    def warning(self, msg: Any) -> None:
        self.logger.warning(str(msg))


    def error(self, error: Union[Exception, str], msg: Optional[str] = None) -> None:
        """
        Log a recoverable error.

        Args:
            error (Union[Exception, str]): Error or message
            msg (Optional[str], optional): Context message; when given, the
                error is attached as exception info. Defaults to None.
        """

        self.logger.error(msg or str(error), exc_info=bool(msg))


    def critical(self, error: Union[Exception, str], msg: Optional[str] = None) -> None:
        """
        Log an error that aborts the current command.

        Always attaches exception info, so the file gets the full trace.

        Args:
            error (Union[Exception, str]): Error or message
            msg (Optional[str], optional): Context message. Defaults to None.
        """

        self.logger.critical(msg or str(error), exc_info=True)


    def fields(
        self,
        title: str,
        values: Mapping[str, Any],
        level: int = INFO
    ) -> None:
        """
        Log a flat mapping as one "title: key = value, ..." record.

        Used for effective configurations, loss reports and metric
        summaries so that a log file can be grepped by key.

        Args:
            title (str): Record prefix (e.g. "Epoch 3 losses")
            values (Mapping[str, Any]): Values to log, in mapping order
            level (int, optional): Logging level. Defaults to INFO.

        Example:
            >>> logger.fields("Step 10", {"d1": 1.386, "total": 21.6})
            # 2024-... | INFO | Step 10: d1 = 1.386, total = 21.6
        """

        body = ", ".join(
            f"{key} = {value:.6g}" if isinstance(value, float)
            else f"{key} = {value}"
            for key, value in values.items()
        )
        self.logger.log(level, f"{title}: {body}")


# Global logger instance (singleton) shared by all application modules.
#
# The console only shows WARNING and above: commands talk to the user
# through colored prints and progress bars. The file handler is disabled
# by default and can be enabled via CLI (-d or -D).
logger = Logger(console_level="WARNING")
