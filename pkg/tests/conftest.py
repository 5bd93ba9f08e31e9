import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from vista import accel


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # Pay JIT compilation up front so timed acceptance sections measure compute only.
    accel.warmup()
