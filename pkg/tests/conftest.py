import numpy as np
import pytest

from qreadout.matrix import basis_from_indices, build_qram, generate_low_rank

# three rows in the plane: two orthonormal, one on the diagonal
TRI = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])


def overlap_pair(c=0.6, n=3):
    """Two unit rows with inner product ``c`` embedded in R^n."""
    rows = np.zeros((2, n))
    rows[0, 0] = 1.0
    rows[1, 0], rows[1, 1] = c, np.sqrt(1 - c * c)
    return rows


@pytest.fixture
def tri():
    return TRI.copy()


@pytest.fixture
def pair_basis():
    rows = overlap_pair()
    return rows, build_qram(rows), basis_from_indices(rows, [0, 1])


@pytest.fixture(scope="session")
def instance_16():
    return generate_low_rank(16, 16, 3, 4.0, seed=7)


def pytest_terminal_summary(terminalreporter):
    import sys
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number])
