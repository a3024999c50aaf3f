import random

import pytest

from crset.registry import IssuerAccount

ACCOUNT = "eip155:1:0x32Be343B94f860124dC4fEe278FDCBD38C102D53"

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def rng():
    return random.Random(0xC0FFEE)


@pytest.fixture
def account():
    return IssuerAccount.parse(ACCOUNT)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
