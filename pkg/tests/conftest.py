import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from femurseg import phantom  # noqa: E402

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def hip_phantom():
    """Two-sided phantom volume with ground truth (expensive, build once)."""
    return phantom.make_phantom(sides=("left", "right"))


@pytest.fixture(scope="session")
def hip_phantom_contact():
    return phantom.make_phantom(sides=("left",), contact=True)


@pytest.fixture(scope="session")
def left_delineation(hip_phantom):
    from femurseg import femur
    volume, _ = hip_phantom
    return femur.delineate_femur(volume, femur.FemurParams(side="left"))
