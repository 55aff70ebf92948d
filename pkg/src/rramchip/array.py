"""Sub-array model: 512x512 1T1R cells, gray-coded row decoder, set column muxes.

Cell parameters live in struct-of-arrays form so a full sub-array stays
cheap; ``DeviceModelSpec``/``DeviceState`` values are materialised on access.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .devices import (
    CellElectrical,
    DefectKind,
    DeviceModelSpec,
    DeviceState,
    Variant,
    apply_write_pulse,
    cell_path_resistance,
    defect_resistance,
)
from .errors import InputError, SelectionError, SetConflictError
from .frontend import AdcConfig, ReadoutResult, ResistorBank, TheveninSource, autorange_convert

N_SUB_ARRAYS = 4
N_ROWS = 512
N_COLS = 512
COLS_PER_SET = 16
N_SETS = N_COLS // COLS_PER_SET
ROW_BITS = 9

# Per-cell kind codes in SubArrayState.kind.
KIND_LINEAR = 0
KIND_BISTABLE = 1
KIND_STUCK_OPEN = 2
KIND_STUCK_SHORT = 3


class Polarity(enum.IntEnum):
    FORWARD = 0
    REVERSE = 1

    @property
    def sign(self) -> int:
        return 1 if self is Polarity.FORWARD else -1


@dataclass(frozen=True, order=True)
class CellAddress:
    sub_array: int
    row: int
    col: int

    def __post_init__(self):
        if not 0 <= self.sub_array < N_SUB_ARRAYS:
            raise SelectionError(f"sub_array {self.sub_array} out of range")
        if not 0 <= self.row < N_ROWS:
            raise SelectionError(f"row {self.row} out of range")
        if not 0 <= self.col < N_COLS:
            raise SelectionError(f"col {self.col} out of range")

    @property
    def set_index(self) -> int:
        return self.col // COLS_PER_SET

    @property
    def col_in_set(self) -> int:
        return self.col % COLS_PER_SET

    def __str__(self):
        return f"{self.sub_array}:{self.row}:{self.col}"

    @classmethod
    def parse(cls, text: str) -> CellAddress:
        try:
            sa, row, col = (int(p) for p in text.split(":"))
        except ValueError:
            raise InputError(f"address {text!r} is not sub_array:row:col") from None
        return cls(sa, row, col)


def gray_encode(n: int) -> int:
    if not 0 <= n < N_ROWS:
        raise InputError(f"{n} is not a 9-bit row index")
    return n ^ (n >> 1)


def gray_decode(g: int) -> int:
    if not 0 <= g < N_ROWS:
        raise InputError(f"{g} is not a 9-bit gray code")
    n = 0
    while g:
        n ^= g
        g >>= 1
    return n


class SubArrayState:
    """Mutable state of one 512x512 sub-array plus its row/column selection."""

    def __init__(self, fill: DeviceModelSpec | None = None):
        shape = (N_ROWS, N_COLS)
        self.kind = np.zeros(shape, dtype=np.uint8)
        self.resistance = np.empty(shape)
        self.r_low = np.zeros(shape)
        self.r_high = np.zeros(shape)
        self.v_set = np.zeros(shape)
        self.v_reset = np.zeros(shape)
        self.min_width = np.zeros(shape)
        self.switch_count = np.zeros(shape, dtype=np.int64)
        self.enabled_row: int | None = None
        self.selected_col_per_set = np.zeros(N_SETS, dtype=np.uint8)
        self.fill(fill or DeviceModelSpec.linear(1e5))

    def fill(self, spec: DeviceModelSpec, high: bool = True):
        rows = slice(None)
        self._assign((rows, rows), spec, spec.initial_state(high))

    def _assign(self, idx, spec: DeviceModelSpec, state: DeviceState):
        if spec.variant is Variant.LINEAR:
            self.kind[idx] = KIND_LINEAR
        elif spec.variant is Variant.BISTABLE:
            self.kind[idx] = KIND_BISTABLE
        elif spec.defect_kind is DefectKind.STUCK_OPEN:
            self.kind[idx] = KIND_STUCK_OPEN
        else:
            self.kind[idx] = KIND_STUCK_SHORT
        self.r_low[idx] = spec.r_low_ohms
        self.r_high[idx] = spec.r_high_ohms
        self.v_set[idx] = spec.v_set_volts
        self.v_reset[idx] = spec.v_reset_volts
        self.min_width[idx] = spec.min_switch_width_s
        self.resistance[idx] = state.current_resistance_ohms
        self.switch_count[idx] = state.switch_count

    def set_device(self, row: int, col: int, spec: DeviceModelSpec, state: DeviceState | None = None):
        self._assign((row, col), spec, state or spec.initial_state())

    def spec_at(self, row: int, col: int) -> DeviceModelSpec:
        kind = self.kind[row, col]
        if kind == KIND_LINEAR:
            return DeviceModelSpec.linear(float(self.resistance[row, col]))
        if kind == KIND_BISTABLE:
            return DeviceModelSpec.bistable(
                float(self.r_low[row, col]), float(self.r_high[row, col]),
                float(self.v_set[row, col]), float(self.v_reset[row, col]),
                float(self.min_width[row, col]))
        defect = DefectKind.STUCK_OPEN if kind == KIND_STUCK_OPEN else DefectKind.STUCK_SHORT
        return DeviceModelSpec.defective(defect)

    def state_at(self, row: int, col: int) -> DeviceState:
        return DeviceState(float(self.resistance[row, col]), int(self.switch_count[row, col]))

    def update_state(self, row: int, col: int, state: DeviceState):
        self.resistance[row, col] = state.current_resistance_ohms
        self.switch_count[row, col] = state.switch_count

    def check_invariants(self):
        if self.enabled_row is not None and not 0 <= self.enabled_row < N_ROWS:
            raise AssertionError("enabled row out of range")
        if len(self.selected_col_per_set) != N_SETS or self.selected_col_per_set.max() >= COLS_PER_SET:
            raise AssertionError("column selection must be one 4-bit value per set")
        bistable = self.kind == KIND_BISTABLE
        r = self.resistance[bistable]
        if not np.all((r == self.r_low[bistable]) | (r == self.r_high[bistable])):
            raise AssertionError("bistable device off its two levels")

    def copy(self) -> SubArrayState:
        other = SubArrayState.__new__(SubArrayState)
        for name, value in vars(self).items():
            setattr(other, name, value.copy() if isinstance(value, np.ndarray) else value)
        return other


def select_row(arr: SubArrayState, gray_addr: int, select: bool) -> SubArrayState:
    """Drive the row decoder; one decoder means at most one enabled row."""
    row = gray_decode(gray_addr)
    arr.enabled_row = row if select else None
    return arr


def select_column(arr: SubArrayState, set_index: int, col_in_set: int) -> SubArrayState:
    if not 0 <= set_index < N_SETS or not 0 <= col_in_set < COLS_PER_SET:
        raise SelectionError(f"bad column selection set={set_index} col={col_in_set}")
    arr.selected_col_per_set[set_index] = col_in_set
    return arr


def dut_voltage(v_drive: float, r_dut: float, r_series: float) -> float:
    """Voltage across the device for a drive through ``r_series`` of other resistance."""
    return v_drive * r_dut / (r_dut + r_series)


def drive_cell(arr: SubArrayState, addr: CellAddress, v_drive: float, pol: Polarity,
               cell: CellElectrical = CellElectrical()) -> TheveninSource:
    """Equivalent source seen at the converter input for the addressed cell.

    The open-circuit voltage is the set-node drive magnitude; polarity only
    decides which way the device sees it, since the H-bridge commutes the
    return path before the converter.
    """
    if arr.enabled_row != addr.row:
        raise SelectionError(f"row {addr.row} is not enabled")
    selected = arr.selected_col_per_set[addr.set_index] == addr.col_in_set
    state = arr.state_at(addr.row, addr.col)
    return TheveninSource(abs(v_drive), cell_path_resistance(state, cell, bool(selected)))


def read_cell(arr: SubArrayState, addr: CellAddress, v_drive: float, pol: Polarity,
              cell: CellElectrical, bank: ResistorBank, adc: AdcConfig,
              stress_width_s: float | None = None, noise_sigma_volts: float = 0.0,
              rng: np.random.Generator | None = None) -> ReadoutResult:
    """Drive one selected cell and convert its current.

    When ``stress_width_s`` is given, the read bias is first applied to the
    device as a pulse of that width (the largest DUT voltage occurs on the
    first, smallest bank stage), so reads above the switching threshold
    disturb the cell like a write would.
    """
    src = drive_cell(arr, addr, v_drive, pol, cell)
    if stress_width_s is not None and arr.selected_col_per_set[addr.set_index] == addr.col_in_set:
        state = arr.state_at(addr.row, addr.col)
        r = state.current_resistance_ohms
        v_dut = dut_voltage(abs(v_drive), r, cell.r_access_on_ohms + bank.r_ohms[0])
        new = apply_write_pulse(state, arr.spec_at(addr.row, addr.col), pol.sign * v_dut, stress_width_s)
        if new != state:
            arr.update_state(addr.row, addr.col, new)
            src = drive_cell(arr, addr, v_drive, pol, cell)
    return autorange_convert(src, bank, adc, noise_sigma_volts, rng)


def parallel_read(arrs: Sequence[SubArrayState], addresses: Iterable[CellAddress],
                  v_read: float | Sequence[float], pol: Polarity = Polarity.FORWARD,
                  cell: CellElectrical = CellElectrical(), bank: ResistorBank = ResistorBank(),
                  adc: AdcConfig = AdcConfig()) -> list[ReadoutResult]:
    """Read one cell per set, up to 32 per sub-array, all sub-arrays at once.

    ``v_read`` is either one drive voltage or one per address (column-parallel
    DACs). Addresses sharing a sub-array must share a row, and no two may
    fall in the same set.
    """
    addresses = list(addresses)
    drives = [v_read] * len(addresses) if np.isscalar(v_read) else list(v_read)
    if len(drives) != len(addresses):
        raise InputError("need one drive voltage per address")

    rows: dict[int, int] = {}
    used: set[tuple[int, int]] = set()
    for a in addresses:
        key = (a.sub_array, a.set_index)
        if key in used:
            raise SetConflictError(f"two addresses in sub-array {a.sub_array} set {a.set_index}")
        used.add(key)
        if rows.setdefault(a.sub_array, a.row) != a.row:
            raise SelectionError(f"sub-array {a.sub_array} can enable only one row per read")

    for sa, row in rows.items():
        select_row(arrs[sa], gray_encode(row), True)
    for a in addresses:
        select_column(arrs[a.sub_array], a.set_index, a.col_in_set)
    results = [read_cell(arrs[a.sub_array], a, v, pol, cell, bank, adc)
               for a, v in zip(addresses, drives)]
    for sa in rows:
        select_row(arrs[sa], 0, False)
    return results


def defect_counts(arr: SubArrayState) -> dict[str, int]:
    return {
        "StuckOpen": int(np.count_nonzero(arr.kind == KIND_STUCK_OPEN)),
        "StuckShort": int(np.count_nonzero(arr.kind == KIND_STUCK_SHORT)),
    }


__all__ = [
    "N_SUB_ARRAYS", "N_ROWS", "N_COLS", "COLS_PER_SET", "N_SETS",
    "Polarity", "CellAddress", "SubArrayState", "gray_encode", "gray_decode",
    "select_row", "select_column", "drive_cell", "read_cell", "parallel_read",
    "dut_voltage", "defect_counts", "defect_resistance",
]
