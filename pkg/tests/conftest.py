import pytest
import torch

from hypercodon.hierarchy import build_codon_tree
from hypercodon.treembed import codon_prototypes

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def codon_tree():
    return build_codon_tree()


@pytest.fixture(scope="session")
def codon_protos():
    """Refined codon prototypes at the default n_p=128, c=1, tau=2."""
    protos, report = codon_prototypes()
    return protos, report


_ACCEPTANCE: list[str] = []


@pytest.fixture(scope="session")
def acceptance_line():
    """Record one PASS/FAIL line; all lines are printed in the terminal summary."""

    def record(number: int, ok: bool, detail: str) -> bool:
        _ACCEPTANCE.append(f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
