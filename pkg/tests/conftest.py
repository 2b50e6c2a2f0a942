import os

import pytest

ACCEPTANCE_LINES = []


def record_criterion(number, title, ok, detail=""):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}" + (f" -- {detail}" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def search_cache(request):
    """Directory for reusable grid-search stores (pytest's cache unless
    MARKOVROOT_SEARCH_CACHE points elsewhere)."""
    path = os.environ.get("MARKOVROOT_SEARCH_CACHE")
    if path:
        os.makedirs(path, exist_ok=True)
        return path
    return str(request.config.cache.mkdir("markovroot_searches"))
