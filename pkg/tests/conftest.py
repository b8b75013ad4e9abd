import numpy as np
import pytest

from navtune.world import ScanConfig, SimConfig, WorldMap
from navtune.worlds import empty_room, four_region_maze


@pytest.fixture(scope="session")
def maze():
    return four_region_maze()


@pytest.fixture(scope="session")
def room():
    return empty_room(10.0)


@pytest.fixture
def sim_cfg():
    return SimConfig()


def make_world(rows: list[str], resolution: float = 0.1,
               poses: dict | None = None) -> WorldMap:
    """Build a world from ASCII art; first row is the top (max y)."""
    h = len(rows)
    w = len(rows[0])
    occ = np.zeros((h, w), dtype=bool)
    for i, row in enumerate(rows):
        assert len(row) == w, "ragged ascii map"
        occ[h - 1 - i] = np.frombuffer(row.encode(), dtype=np.uint8) == ord("#")
    return WorldMap(w, h, resolution, occ, poses or {})
