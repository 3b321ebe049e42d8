"""
Tests for terminal styling.
"""

from io import StringIO

import pytest

from nova_edit.misc import RESET, STYLES, paint, print_error, print_notice, verdict


def test_paint() -> None:
    assert paint("x") == "x" + RESET
    assert paint("FAIL", "bold", "red") == STYLES["bold"] + STYLES["red"] + "FAIL" + RESET
    with pytest.raises(KeyError):
        paint("x", "blink")


def test_tagged_messages() -> None:
    out = StringIO()
    print_error("bad interval", out)
    print_notice("step 2", out)
    lines = out.getvalue().splitlines()
    assert lines[0] == paint("[Error] ", "bold", "red") + "bad interval"
    assert lines[1].endswith("[notice] " + RESET + "step 2")
    assert "PASS" in verdict(True) and "FAIL" in verdict(False)
