import itertools

import numpy as np

from csplab.core import satisfies


def naive_sat(inst):
    """Reference satisfiability by enumerating every assignment in pure Python."""
    for a in itertools.product(range(1, inst.d + 1), repeat=inst.n):
        if satisfies(inst, a):
            return True
    return False


def rng(seed=0):
    return np.random.default_rng(seed)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
