import math
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from partshare.dictionary import HierarchicalDictionary  # noqa: E402
from partshare.lattice import build_hierarchy  # noqa: E402

LOG = math.log


def shared_part_dictionary() -> HierarchicalDictionary:
    """1D, q=1/2, H=2, r=2, C_r=2.  Both objects use level-1 part 0."""
    d = HierarchicalDictionary(H=2, r=2, q="1/2", C_r=2)
    d.add_leaf([0.1, 0.6, 0.1, 0.1, 0.1])
    d.add_leaf([0.1, 0.1, 0.6, 0.1, 0.1])
    d.compose([0, 1], [(((0,), (1,)), LOG(0.7)), (((1,), (0,)), LOG(0.3))], 1)
    d.compose([1, 0], [(((-1,), (1,)), LOG(0.5)), (((0,), (1,)), LOG(0.5))], 1)
    d.compose([0, 1], [(((0,), (1,)), LOG(0.6)), (((-1,), (0,)), LOG(0.4))], 2)
    d.compose([0, 0], [(((1,), (0,)), LOG(0.2)), (((0,), (1,)), LOG(0.8))], 2)
    return d


@pytest.fixture
def shared_dict():
    return shared_part_dictionary()


@pytest.fixture
def lattice_8():
    return build_hierarchy(8, "1/2", 2)
