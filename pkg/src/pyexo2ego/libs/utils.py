#!/usr/bin/env python3
"""
PYEXO2EGO: Parallel GAN for exocentric to egocentric view generation,
with synthetic paired-view data and a full evaluation metric suite.

This module provides utility helpers used throughout the application:
- Text formatting and styling (labels, counters, banners, echo lines)
- Terminal progress bars, including a proglog logger for training loops
- Fuzzy suggestion of the closest known key for typos in config files
- Strict construction of nested dataclasses from JSON mappings
- File-system-safe naming of ablation variants
- Seeded random generators

Copyright 2024 © Thierry Thiers <webcoder31@gmail.com>
License: CeCILL-C (http://www.cecill.info)
Repository: https://github.com/webcoder31/pyexo2ego
"""

# Python core modules
from dataclasses import dataclass, fields, is_dataclass
from typing import Any, Callable, Iterable, Mapping, Optional, Union, get_type_hints

# Third party packages
from colorama import Back, Fore, Style
import numpy as np
from proglog import ProgressBarLogger
from slugify import slugify
from thefuzz import process

# pyexo2ego libs
from pyexo2ego.libs.exceptions import ConfigException

# ------------------------
# Constants
# ------------------------

# Fuzzy matching configuration
MIN_SUGGESTION_SCORE = 70       # Minimum score to suggest a config key

# Display formatting
DEFAULT_LABEL_WIDTH = 28        # Default width for echo labels
MIN_NUMBER_WIDTH = 2            # Minimum width for counter digits
PROGRESS_BAR_WIDTH = 40         # Number of cells of a terminal bar

# ------------------------
# Formatting Classes
# ------------------------

@dataclass
class LabelFormatter:
    """
    Formats text labels with consistent width and styling.

    Args:
        width (int): Width to pad labels to. Longer labels are not truncated.
    """

    width: int

    def format(self, label: str) -> str:
        """
        Pad a label and render it dim white.

        Args:
            label (str): Text to format

        Returns:
            str: Formatted label
        """

        return (
            f"{Fore.WHITE}{Style.DIM}"
            f"{label.ljust(self.width)}"
            f"{Style.RESET_ALL}"
        )


    def pad_only(self, label: str) -> str:
        return f"{label.ljust(self.width)}"


@dataclass
class CountFormatter:
    """
    Format step/epoch counters like "007/035" with fixed width.

    Args:
        total_count (int): Maximum count value (determines width)
    """

    total_count: int

    def __post_init__(self) -> None:
        self.number_width = max(MIN_NUMBER_WIDTH, len(str(self.total_count)))
        self.width = self.number_width * 2 + 1


    def format(self, current: int) -> str:
        """
        Format a counter: bright blue current count, dim blue total.

        Args:
            current (int): Current count to display

        Returns:
            str: Formatted counter string (e.g., "07/35")
        """

        return (
            f"{Fore.LIGHTBLUE_EX}{Style.BRIGHT}"
            f"{str(current).rjust(self.number_width, '0')}"
            f"{Style.DIM}/{Style.RESET_ALL}{Fore.BLUE}"
            f"{str(self.total_count).rjust(self.number_width, '0')}"
            f"{Style.RESET_ALL}"
        )


    def placeholder(self, text: str = "") -> str:
        """
        Create a blank (or short text) slot matching the counter width.
        """

        return (
            f"{Fore.LIGHTBLUE_EX}"
            f"{text[:self.width].ljust(self.width)}"
            f"{Style.RESET_ALL}"
        )


# ------------------------
# Console Output Functions
# ------------------------

def print_banner(text: str, color: str = Back.YELLOW) -> None:
    """
    Print a full-background banner line, e.g. " Training model ".

    Args:
        text (str): Banner text
        color (str, optional): colorama background. Defaults to Back.YELLOW.
    """

    print(f"\n{color}{Style.BRIGHT} {text} {Style.RESET_ALL}\n")


def format_echo_line(
    label: str,
    value: Any,
    label_width: int = DEFAULT_LABEL_WIDTH
) -> str:
    """
    Format one "⇨ Label ..... value" echo line.

    Floats are shown with 6 significant digits.

    Args:
        label (str): Setting or measure name
        value (Any): Value to show
        label_width (int, optional): Label column width.
            Defaults to DEFAULT_LABEL_WIDTH.

    Returns:
        str: Styled echo line

    Example:
        >>> print(format_echo_line("Batch size", 4))
        ⇨ Batch size ................ 4
    """

    shown = f"{value:.6g}" if isinstance(value, float) else str(value)
    dots = "." * max(2, label_width - len(label))
    return (
        f"{Fore.WHITE}{Style.DIM}⇨ {label} {dots} {Style.RESET_ALL}"
        f"{Fore.LIGHTBLUE_EX}{shown}{Style.RESET_ALL}"
    )


def flatten_mapping(values: Mapping[str, Any], prefix: str = "") -> dict[str, Any]:
    """
    Flatten nested mappings into dotted keys.

    Example:
        >>> flatten_mapping({"train": {"epochs": 35}})
        {'train.epochs': 35}
    """

    flat: dict[str, Any] = {}
    for key, value in values.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, Mapping):
            flat.update(flatten_mapping(value, f"{dotted}."))
        else:
            flat[dotted] = value
    return flat


def echo_settings(title: str, values: Mapping[str, Any]) -> None:
    """
    Print a titled block of echo lines for a (possibly nested) mapping.

    Used by every command to echo its effective configuration.

    Args:
        title (str): Block title
        values (Mapping[str, Any]): Settings, nested mappings allowed
    """

    flat = flatten_mapping(values)
    width = max((len(key) for key in flat), default=0) + 2
    print(f"{Style.BRIGHT}{Fore.WHITE}{title}{Style.RESET_ALL}")
    for key, value in flat.items():
        print(format_echo_line(key, value, width))


# ------------------------
# Progress Bars
# ------------------------

class TerminalProgressBar:
    """
    In-place terminal progress bar drawn with ■/□ cells.

    The bar redraws on the same line until it reaches 100%, then
    moves to a new line. An optional suffix (e.g. the latest loss)
    is shown after the percentage.

    Attributes:
        label (str): Text shown before the bar
        progress_value (int): Last displayed percentage
    """

    def __init__(
        self,
        label: str = "",
        label_width: int = DEFAULT_LABEL_WIDTH,
        progress_callback: Optional[Callable[[int, str, str], None]] = None
    ) -> None:
        self.label = label
        self.progress_value = -1
        self.suffix = ""
        self.label_formatter = LabelFormatter(label_width)
        self.progress_callback = progress_callback or self.display


    def display(self, progress_value: int, label: str, suffix: str) -> None:
        """
        Draw the bar.

        Args:
            progress_value (int): Percentage in 0..100
            label (str): Text before the bar
            suffix (str): Text after the percentage
        """

        filled = int(progress_value * PROGRESS_BAR_WIDTH / 100)
        bar = (
            f"{Fore.LIGHTRED_EX}{'■' * filled}"
            f"{'□' * (PROGRESS_BAR_WIDTH - filled)}{Fore.RESET}"
        )
        print(("", "\x1b[K")[progress_value < 100], end="\r")
        print(
            f"{self.label_formatter.format(label)}{bar}"
            f" {Style.DIM}{progress_value:3d}%{Style.RESET_ALL}"
            f" {Fore.LIGHTBLUE_EX}{suffix}{Style.RESET_ALL}",
            end=("\n", "")[progress_value < 100],
            flush=True
        )


    def update(self, new_value: Union[int, float], suffix: str = "") -> None:
        """
        Update the displayed percentage; redraws only on change.

        Args:
            new_value (Union[int, float]): Progress percentage
            suffix (str, optional): Text after the percentage. Defaults to "".
        """

        new_value = max(0, min(100, int(new_value)))
        if new_value != self.progress_value or suffix != self.suffix:
            self.progress_callback(new_value, self.label, suffix)
        self.progress_value = new_value
        self.suffix = suffix


class StepProgressBar(ProgressBarLogger):
    """
    proglog logger turning loop progress into a terminal bar.

    Library loops (training, classifier fitting, rendering) report
    progress through a proglog logger, e.g.
    ``for batch in bar_logger.iter_bar(step=batches)``; this subclass
    draws those updates with TerminalProgressBar and shows the latest
    value of a watched state key (such as "total" loss) after the bar.

    Attributes:
        progress_bar (TerminalProgressBar): The drawn bar
        watch (Optional[str]): State key shown after the percentage
    """

    def __init__(
        self,
        label: str = "",
        watch: Optional[str] = None,
        **kwargs: Any
    ) -> None:
        kwargs.setdefault("logged_bars", None)
        super().__init__(**kwargs)
        self.progress_bar = TerminalProgressBar(label=label)
        self.watch = watch


    def bars_callback(
        self,
        bar: str,
        attr: str,
        value: Any,
        old_value: Optional[Any] = None
    ) -> None:
        """
        Convert proglog index updates into percentages.

        Args:
            bar (str): Bar identifier (e.g. "step")
            attr (str): Updated attribute ("index", "total", ...)
            value (Any): New attribute value
            old_value (Optional[Any]): Previous value
        """

        total = self.bars[bar].get("total") or 0
        if attr != "index" or total <= 0:
            return
        watched = self.state.get(self.watch) if self.watch else None
        suffix = f"{self.watch} {watched:.4f}" \
            if isinstance(watched, float) else ""
        self.progress_bar.update(value * 100 / total, suffix)


# ------------------------
# Naming and Suggestion Helpers
# ------------------------

def suggest_closest(name: str, candidates: Iterable[str]) -> Optional[str]:
    """
    Return the known name closest to a mistyped one, if close enough.

    Args:
        name (str): The unknown name (e.g. "learning_rat")
        candidates (Iterable[str]): Known names

    Returns:
        Optional[str]: Best candidate with a score of at least
            MIN_SUGGESTION_SCORE, or None

    Example:
        >>> suggest_closest("learning_rat", ["epochs", "learning_rate"])
        'learning_rate'
    """

    choices = list(candidates)
    if not choices:
        return None
    best = process.extractOne(name, choices)
    if best and best[1] >= MIN_SUGGESTION_SCORE:
        return best[0]
    return None


def variant_name(*parts: Any) -> str:
    """
    Build a file-system-safe variant name such as "no-cross-cycle" or
    "shared-prefix-2".

    Args:
        parts (Any): Name fragments, joined with spaces before slugifying

    Returns:
        str: Lowercase hyphenated slug
    """

    return slugify(" ".join(str(part) for part in parts))


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """
    Create an independent seeded generator for (seed, stream...) keys.

    Distinct streams of one seed never overlap (numpy SeedSequence
    spawning semantics), so e.g. shuffling and augmentation draws
    stay reproducible independently of each other.

    Args:
        seed (int): Base seed
        stream (int): Extra integers selecting a sub-stream

    Returns:
        np.random.Generator: PCG64 generator
    """

    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, *stream]))


def _coerce(value: Any, hint: Any, key: str) -> Any:
    if hint is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if hint in (int, str, bool):
        valid = isinstance(value, hint) and (hint is bool or not isinstance(value, bool))
        if not valid:
            raise ConfigException(
                f"Config key '{key}' expects {hint.__name__}, got {type(value).__name__} {value!r}"
            )
    return value


def dataclass_from_mapping(cls: type, data: Any, path: str = "") -> Any:
    """
    Build a (nested) dataclass from a JSON mapping, rejecting unknown keys.

    Missing keys keep their defaults; nested dataclass fields recurse;
    ints are accepted where floats are expected.

    Args:
        cls (type): Dataclass to build
        data (Any): Mapping loaded from JSON
        path (str, optional): Dotted prefix of this mapping, for messages.
            Defaults to "".

    Returns:
        Any: The dataclass instance

    Raises:
        ConfigException: On unknown key (with a suggestion when one is
            close), wrong value type or missing required key

    Example:
        >>> dataclass_from_mapping(LossWeights, {"lambda4": 0}).lambda4
        0.0
    """

    if not isinstance(data, Mapping):
        raise ConfigException(f"Config section '{path.rstrip('.') or '<root>'}' must be an object")
    hints = get_type_hints(cls)
    known = {item.name: item for item in fields(cls)}
    values = {}
    for key, value in data.items():
        dotted = f"{path}{key}"
        if key not in known:
            suggestion = suggest_closest(key, known)
            hint = f" (did you mean '{path}{suggestion}'?)" if suggestion else ""
            raise ConfigException(f"Unknown config key '{dotted}'{hint}")
        if is_dataclass(hints[key]):
            values[key] = dataclass_from_mapping(hints[key], value, f"{dotted}.")
        else:
            values[key] = _coerce(value, hints[key], dotted)
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigException(f"Incomplete config section '{path.rstrip('.') or '<root>'}': {exc}") from exc
