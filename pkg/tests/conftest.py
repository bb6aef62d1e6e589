import os
from pathlib import Path

import pytest

DEFAULT_DATA = Path("/root/data/mnist")


def mnist_location() -> Path | None:
    d = Path(os.environ.get("CRDM_DATA_DIR", DEFAULT_DATA))
    return d if (d / "train-labels-idx1-ubyte").exists() else None


requires_mnist = pytest.mark.skipif(mnist_location() is None, reason="MNIST IDX files not found (set CRDM_DATA_DIR)")


@pytest.fixture(scope="session")
def mnist_dir() -> Path:
    d = mnist_location()
    if d is None:
        pytest.skip("MNIST IDX files not found (set CRDM_DATA_DIR)")
    return d


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
