import pytest

from rramchip.array import N_SUB_ARRAYS, SubArrayState
from rramchip.config import ChipConfig
from rramchip.controller import Chip


def build_chip(cells=None, config: ChipConfig = ChipConfig(), chip_id: int = 0) -> Chip:
    """Chip of default 100 kOhm cells with ``cells`` = {(sa, row, col): spec or (spec, state)}."""
    arrays = [SubArrayState() for _ in range(N_SUB_ARRAYS)]
    for (sa, row, col), dev in (cells or {}).items():
        spec, state = dev if isinstance(dev, tuple) else (dev, None)
        arrays[sa].set_device(row, col, spec, state)
    return Chip(arrays, config, chip_id)


@pytest.fixture
def make_chip():
    return build_chip
