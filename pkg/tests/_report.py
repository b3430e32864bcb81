"""Acceptance result lines, collected for the end-of-run summary."""

LINES: list[str] = []


def record(n: int, ok: bool, detail: str) -> str:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} | {detail}"
    LINES.append(line)
    print(line)
    return line
