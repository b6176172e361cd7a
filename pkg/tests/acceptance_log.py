"""Shared record of acceptance outcomes, printed by the conftest summary hook."""

RESULTS: list[tuple[int, str, bool, str]] = []


def record(number: int, name: str, passed: bool, detail: str) -> bool:
    RESULTS.append((number, name, bool(passed), detail))
    print(f"criterion {number} {'PASS' if passed else 'FAIL'} {name}: {detail}", flush=True)
    return passed
