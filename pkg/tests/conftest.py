import functools
import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from typicality.eigen import diagonalize  # noqa: E402
from typicality.model import ModelParams, build_hamiltonian, enumerate_basis  # noqa: E402

DATA = Path(__file__).parent / "data"
ACCEPTANCE_CACHE = Path(os.environ.get("TYPICALITY_ACCEPTANCE_CACHE", Path(__file__).parents[1] / ".cache" / "acceptance"))


@functools.lru_cache(maxsize=None)
def solved(m_sites: int, n_bath: int, **kw):
    """Diagonalized small system, shared across tests."""
    params = ModelParams(m_sites=m_sites, n_bath=n_bath, **kw)
    h = build_hamiltonian(enumerate_basis(params), params)
    return params, h, diagonalize(h)


@pytest.fixture
def solve():
    return solved


def pytest_terminal_summary(terminalreporter):
    from criteria import summary_lines

    lines = summary_lines()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
