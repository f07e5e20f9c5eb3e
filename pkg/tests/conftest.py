import random

import pytest

from heda import crypto
from heda import protocols as proto

BITS = crypto.TEST_KEY_BITS

# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list = []


@pytest.fixture(scope="session")
def keys():
    rng = random.Random(20240601)
    return {
        "alice_paillier": crypto.paillier_keygen(BITS, rng),
        "alice_rsa": crypto.rsa_keygen(BITS, rng),
        "bob_paillier": crypto.paillier_keygen(BITS, rng),
    }


@pytest.fixture(scope="session")
def parties(keys):
    return proto.make_pair(keys["alice_paillier"], keys["alice_rsa"], keys["bob_paillier"])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
