"""Collector for acceptance-criterion result lines; the conftest prints them
in the terminal summary so they are visible on both pass and fail."""

LINES: list[str] = []


def record(name: str, ok: bool, detail: str) -> bool:
    LINES.append(f"{name}: {'PASS' if ok else 'FAIL'} - {detail}")
    return ok
