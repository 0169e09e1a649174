"""Collects one line per acceptance criterion for the terminal summary."""

LINES: dict = {}


def report(criterion: int, passed: bool, detail: str) -> str:
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {criterion:2d}: {detail}"
    LINES[criterion] = line
    print(line)
    return line
