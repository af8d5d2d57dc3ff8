"""Collects one verdict line per acceptance criterion for the terminal summary."""

LINES = []


def verdict(number: int, ok: bool, detail: str) -> str:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
    LINES.append(line)
    print(line)
    return line
