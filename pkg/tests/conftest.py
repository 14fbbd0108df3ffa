import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from mapfkit.grid import GridMap

DATA = Path(__file__).resolve().parent.parent / "data"


@pytest.fixture(scope="session")
def bench_map_path() -> str:
    return str(DATA / "random-32-32-10.map")


@pytest.fixture(scope="session")
def bench_scen_paths() -> list[str]:
    return [str(DATA / "scen" / f"random-32-32-10-random-{i}.scen") for i in range(1, 26)]


@pytest.fixture
def empty3() -> GridMap:
    return GridMap(3, 3)


@pytest.fixture
def empty4() -> GridMap:
    return GridMap(4, 4)
