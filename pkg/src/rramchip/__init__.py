"""Behavioral model of a four sub-array RRAM characterization chip.

The chip side (devices, front end, array, controller, serializer) is
driven only through SPI register transactions and observed only through
the serializer bitstream; :mod:`rramchip.host` is the matching driver.
"""

from .array import CellAddress, Polarity, gray_decode, gray_encode
from .config import ChipConfig, load_config
from .controller import Chip, SpiTransaction
from .population import Population

__version__ = "0.1.0"

__all__ = ["CellAddress", "Polarity", "gray_encode", "gray_decode", "ChipConfig", "load_config",
           "Chip", "SpiTransaction", "Population", "__version__"]
