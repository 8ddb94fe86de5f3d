"""Collects one pass/fail line per acceptance criterion and prints them after the run."""

from __future__ import annotations

import contextlib

_RESULTS: dict = {}


@contextlib.contextmanager
def criterion(number: int, title: str):
    """Record the outcome of acceptance criterion ``number``; ``info["detail"]`` is shown beside it."""
    info: dict = {}
    try:
        yield info
    except BaseException as exc:
        _RESULTS[number] = ("FAIL", title, info.get("detail") or f"{type(exc).__name__}: {exc}".splitlines()[0])
        print(f"criterion {number:2d} FAIL  {title}")
        raise
    _RESULTS[number] = ("PASS", title, info.get("detail", ""))
    print(f"criterion {number:2d} PASS  {title}  {info.get('detail', '')}")


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        status, title, detail = _RESULTS[number]
        line = f"criterion {number:2d} {status}  {title}"
        terminalreporter.write_line(f"{line}  [{detail}]" if detail else line)
