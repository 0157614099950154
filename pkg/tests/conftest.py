import numpy as np
import pytest

from rlscatter import generate_disk_mesh


@pytest.fixture(scope="session")
def coarse_mesh():
    return generate_disk_mesh(1.0, 0.2)


@pytest.fixture(scope="session")
def mesh_k2():
    """Twelve elements per wavelength at k = 2."""
    return generate_disk_mesh(1.0, np.pi / 12)


def bump(center=(0.1, -0.2), width=0.15, amp=1.0):
    cx, cy = center

    def f(points):
        p = np.asarray(points)
        return amp * np.exp(-((p[..., 0] - cx) ** 2 + (p[..., 1] - cy) ** 2) / width)

    return f


@pytest.fixture(scope="session")
def mesh_k2_fine():
    """Twenty-four elements per wavelength at k = 2."""
    return generate_disk_mesh(1.0, np.pi / 24)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
