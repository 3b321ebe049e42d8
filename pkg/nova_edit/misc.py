"""Terminal styling of the messages nova writes."""

from __future__ import annotations  # Support of `|` for type union in Python 3.9

from typing import TextIO
import sys

STYLES: dict[str, str] = {
    "emph": "\033[1m\033[95m",
    "bold": "\033[1m",
    "red": "\033[31m",
    "orange": "\033[33m",
    "green": "\033[32m",
}
RESET: str = "\033[0m"


def paint(string: str, *styles: str) -> str:
    """Wraps a string in terminal styles, e.g. `paint("FAIL", "bold", "red")`."""
    return "".join(STYLES[s] for s in styles) + string + RESET


def emph(string: str) -> str:
    return paint(string, "emph")


def _tagged(tag: str, color: str, msg: str, out: TextIO) -> None:
    print(paint(f"[{tag}] ", "bold", color) + msg, file=out)


def print_error(msg: str, out: TextIO = sys.stderr) -> None:
    _tagged("Error", "red", msg, out)


def print_warning(msg: str, out: TextIO = sys.stdout) -> None:
    _tagged("Warning", "orange", msg, out)


def print_notice(msg: str, out: TextIO = sys.stdout) -> None:
    _tagged("notice", "orange", msg, out)


def verdict(ok: bool) -> str:
    """Coloured PASS/FAIL tag."""
    return paint("PASS", "bold", "green") if ok else paint("FAIL", "bold", "red")
