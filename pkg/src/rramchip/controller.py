"""On-chip controller: SPI register file and the per-sub-array WRITE/READ FSM.

Register addresses are 8 bits: ``[7:6]`` pick the sub-array, ``[5:0]`` the
register (see ``docs/register_map.md``). The simulation clock ticks every
5 ns, the minimum programmable pulse width. All four sub-arrays share the
clock but otherwise run independently.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .array import (
    COLS_PER_SET,
    KIND_BISTABLE,
    N_SETS,
    N_SUB_ARRAYS,
    CellAddress,
    Polarity,
    SubArrayState,
    dut_voltage,
    gray_decode,
    read_cell,
    select_column,
    select_row,
)
from .config import ChipConfig
from .devices import apply_write_pulse
from .errors import AccessError, BusyError, InputError
from .frontend import DEFAULT_GAIN, DEFAULT_THRESHOLD_CODE, dac_code_to_voltage
from .serializer import (
    FRAME_CYCLES,
    N_DATA_PACKETS,
    Frame,
    build_frame,
    pack_packet,
    status_bits,
    stream_frame,
)


class OpMode(enum.IntEnum):
    IDLE = 0
    WRITE = 1
    READ = 2


@dataclass(frozen=True)
class Register:
    name: str
    index: int
    width: int
    reset: int = 0
    access: str = "rw"  # rw, ro, wo
    minimum: int = 0


def _build_map() -> list[Register]:
    regs = [
        Register("ROW_ADDR", 0x00, 9),
        Register("COL_ADDR", 0x01, 9),
        Register("DAC_CODE", 0x02, 8),
        Register("POLARITY", 0x03, 1),
        Register("PULSE_WIDTH", 0x04, 16, reset=1, minimum=1),
        Register("THRESHOLD", 0x05, 12, reset=DEFAULT_THRESHOLD_CODE),
        Register("AMP_GAIN", 0x06, 8, reset=int(DEFAULT_GAIN), minimum=1),
        Register("OP_MODE", 0x07, 2),
        Register("CONFIG", 0x08, 1),
        Register("SET_MASK_LO", 0x09, 16),
        Register("SET_MASK_HI", 0x0A, 16),
        Register("GO", 0x0B, 1, access="wo"),
    ]
    regs += [Register(f"COLSEL_{i}", 0x10 + i, 16) for i in range(8)]
    regs += [Register(f"DACSET_{i}", 0x18 + i, 16) for i in range(16)]
    regs += [
        Register("FRAME_COUNT", 0x3C, 16, access="ro"),
        Register("STATUS", 0x3D, 4, access="ro"),
        Register("CHIP_ID", 0x3E, 16, access="ro"),
    ]
    return regs


REGISTER_MAP = {r.name: r for r in _build_map()}
CONFIG_PER_SET_DAC = 0x1
STATUS_BUSY = 0x1
STATUS_DONE = 0x2


def reg_address(sub_array: int, name: str) -> int:
    return (sub_array << 6) | REGISTER_MAP[name].index


def register_checksum(values: dict[str, int], chip_id: int) -> int:
    """XOR-fold of every read/write register plus the chip id."""
    acc = chip_id & 0xFFFF
    for name, reg in REGISTER_MAP.items():
        if reg.access == "rw":
            acc ^= values[name]
    return acc


@dataclass(frozen=True)
class SpiTransaction:
    """25-bit frame, MSB first: [24] rw (1 = write), [23:16] address, [15:0] payload."""

    rw: int
    reg_addr: int
    payload: int = 0

    def __post_init__(self):
        if self.rw not in (0, 1) or not 0 <= self.reg_addr <= 0xFF or not 0 <= self.payload <= 0xFFFF:
            raise AccessError("SPI transaction field out of range")

    def encode(self) -> int:
        return (self.rw << 24) | (self.reg_addr << 16) | self.payload

    @classmethod
    def decode(cls, frame: int) -> SpiTransaction:
        if not 0 <= frame < 1 << 25:
            raise AccessError(f"SPI frame {frame:#x} wider than 25 bits")
        return cls(frame >> 24, (frame >> 16) & 0xFF, frame & 0xFFFF)

    def bits(self) -> list[int]:
        word = self.encode()
        return [(word >> (24 - i)) & 1 for i in range(25)]

    @classmethod
    def write(cls, sub_array: int, name: str, value: int) -> SpiTransaction:
        return cls(1, reg_address(sub_array, name), value)

    @classmethod
    def read(cls, sub_array: int, name: str) -> SpiTransaction:
        return cls(0, reg_address(sub_array, name))


@dataclass(frozen=True)
class TimingEntry:
    start_tick: int
    sub_array: int
    op: str
    phase: str
    ticks: int


@dataclass
class _Phase:
    name: str
    ticks: int
    on_start: Callable[[], None] | None = None
    on_end: Callable[[], None] | None = None
    emit: np.ndarray | None = None
    elapsed: int = 0
    start_tick: int = 0


class SubArrayController:
    """Register file and FSM of one sub-array."""

    def __init__(self, index: int, array: SubArrayState, config: ChipConfig, chip_id: int,
                 ledger: list[TimingEntry], rng: np.random.Generator | None = None):
        self.index = index
        self.array = array
        self.config = config
        self.chip_id = chip_id
        self.now = 0
        self._ledger = ledger
        self._rng = rng
        self.regs = {name: reg.reset for name, reg in REGISTER_MAP.items()}
        self.regs["THRESHOLD"] = config.threshold_code
        self.regs["AMP_GAIN"] = config.amp_gain
        self.regs["CHIP_ID"] = chip_id
        self._by_index = {reg.index: reg for reg in REGISTER_MAP.values()}
        self.phases: deque[_Phase] = deque()
        self.done = False
        self.current_op = OpMode.IDLE
        self.frame_counter = 0
        self.output: list[np.ndarray] = []
        self.frames: list[Frame] = []
        self.last_frame: Frame | None = None

    # -- register access ---------------------------------------------------

    @property
    def busy(self) -> bool:
        return bool(self.phases)

    def _status(self) -> int:
        return (STATUS_BUSY if self.busy else 0) | (STATUS_DONE if self.done else 0)

    def access(self, rw: int, index: int, payload: int) -> int:
        reg = self._by_index.get(index)
        if reg is None:
            raise AccessError(f"no register at sub-array {self.index} index {index:#04x}")
        if not rw:
            if reg.access == "wo":
                return 0
            if reg.name == "STATUS":
                return self._status()
            if reg.name == "FRAME_COUNT":
                return self.frame_counter & 0xFFFF
            return self.regs[reg.name]
        if reg.access == "ro":
            raise AccessError(f"{reg.name} is read-only")
        if payload >= 1 << reg.width or payload < reg.minimum:
            raise AccessError(f"{reg.name} value {payload:#x} outside its {reg.width}-bit range")
        if reg.name == "OP_MODE" and payload not in tuple(OpMode):
            raise AccessError(f"OP_MODE {payload} is not a defined mode")
        if reg.name == "GO":
            if payload:
                self._go()
            return 0
        self.regs[reg.name] = payload
        return payload

    def register_checksum(self) -> int:
        return register_checksum(self.regs, self.chip_id)

    # -- operations --------------------------------------------------------

    def _go(self):
        if self.busy:
            raise BusyError(f"sub-array {self.index} busy; GO rejected")
        mode = OpMode(self.regs["OP_MODE"])
        if mode is OpMode.IDLE:
            return
        self.done = False
        self.current_op = mode
        if mode is OpMode.WRITE:
            self._schedule_write()
        else:
            self._schedule_read()
        self._enter_head()

    def _finish(self):
        select_row(self.array, 0, False)
        self.done = True
        self.current_op = OpMode.IDLE

    def _schedule_write(self):
        r = dict(self.regs)
        cfg = self.config
        addr = CellAddress(self.index, gray_decode(r["ROW_ADDR"]), r["COL_ADDR"])
        pol = Polarity(r["POLARITY"])
        width_ticks = r["PULSE_WIDTH"]
        v_drive = dac_code_to_voltage(r["DAC_CODE"], cfg.dac)

        def select():
            select_row(self.array, r["ROW_ADDR"], True)
            select_column(self.array, addr.set_index, addr.col_in_set)
            self.array.check_invariants()

        def end_pulse():
            state = self.array.state_at(addr.row, addr.col)
            v_dut = dut_voltage(v_drive, state.current_resistance_ohms, cfg.cell.r_access_on_ohms)
            new = apply_write_pulse(state, self.array.spec_at(addr.row, addr.col),
                                    pol.sign * v_dut, width_ticks * cfg.tick_s)
            self.array.update_state(addr.row, addr.col, new)
            self._finish()

        self.phases.extend([
            _Phase("setup", cfg.write_setup_ticks, on_start=select),
            _Phase("pulse", width_ticks, on_end=end_pulse),
        ])

    def _read_targets(self, r: dict) -> list[tuple[int, int, int]]:
        """(set, col_in_set, dac_code) for every set taking part in the read."""
        mask = r["SET_MASK_LO"] | (r["SET_MASK_HI"] << 16)
        per_set_dac = bool(r["CONFIG"] & CONFIG_PER_SET_DAC)

        def dac_for(s):
            if not per_set_dac:
                return r["DAC_CODE"]
            return (r[f"DACSET_{s // 2}"] >> (8 * (s % 2))) & 0xFF

        if not mask:
            s, c = divmod(r["COL_ADDR"], COLS_PER_SET)
            return [(s, c, dac_for(s))]
        return [(s, (r[f"COLSEL_{s // 4}"] >> (4 * (s % 4))) & 0xF, dac_for(s))
                for s in range(N_SETS) if mask >> s & 1]

    def _schedule_read(self):
        r = dict(self.regs)
        cfg = self.config
        row = gray_decode(r["ROW_ADDR"])
        pol = Polarity(r["POLARITY"])
        bank = cfg.bank(r["THRESHOLD"], r["AMP_GAIN"])
        targets = self._read_targets(r)
        # read bias stresses the device for the first (lowest-resistance) stage
        stress_s = bank.stage_ticks(0) * cfg.tick_s
        words = [0] * N_DATA_PACKETS
        convert = _Phase("convert", 0)
        serialize = _Phase("serialize", FRAME_CYCLES)

        def select():
            select_row(self.array, r["ROW_ADDR"], True)
            for s, c, _ in targets:
                select_column(self.array, s, c)
            self.array.check_invariants()

        def convert_all():
            seq = self.frame_counter & 0x3
            window = 0
            for s, c, code in targets:
                addr = CellAddress(self.index, row, s * COLS_PER_SET + c)
                stress = stress_s if self.array.kind[addr.row, addr.col] == KIND_BISTABLE else None
                res = read_cell(self.array, addr, dac_code_to_voltage(code, cfg.dac), pol,
                                cfg.cell, bank, cfg.adc, stress_width_s=stress,
                                noise_sigma_volts=cfg.noise_sigma_volts, rng=self._rng)
                words[s] = pack_packet(res.adc_code, res.gain_sel, c,
                                       status_bits(True, res.saturated_high, res.saturated_low, seq))
                # the controller waits for the slowest set's comparator chain
                window = max(window, bank.stage_ticks(res.stage))
            convert.ticks = window

        def frame_out():
            frame = build_frame(words, self.frame_counter, self.register_checksum(),
                                op_mode=int(OpMode.READ), busy=True, done=True)
            self.last_frame = frame
            serialize.emit = stream_frame(frame)

        def end_serialize():
            self.frames.append(self.last_frame)
            self.frame_counter = (self.frame_counter + 1) & 0xFFFF
            self._finish()

        convert.on_start = convert_all
        serialize.on_start = frame_out
        serialize.on_end = end_serialize
        self.phases.extend([
            _Phase("setup", cfg.read_setup_ticks, on_start=select),
            convert,
            _Phase("adc", cfg.adc_ticks),
            serialize,
        ])

    # -- clocking ----------------------------------------------------------

    def remaining_ticks(self) -> int:
        return sum(p.ticks - p.elapsed for p in self.phases)

    def _enter_head(self):
        """Start the head phase and retire any that take no time."""
        while self.phases:
            phase = self.phases[0]
            phase.start_tick = self.now
            if phase.on_start is not None:
                phase.on_start()
            if phase.elapsed < phase.ticks:
                return
            self._retire()

    def _retire(self):
        phase = self.phases.popleft()
        op = "write" if self.current_op is OpMode.WRITE else "read"
        self._ledger.append(TimingEntry(phase.start_tick, self.index, op, phase.name, phase.ticks))
        if phase.on_end is not None:
            phase.on_end()

    def advance(self, n: int):
        """Advance this sub-array by ``n`` ticks of the shared clock."""
        end = self.now + n
        while self.phases and self.now < end:
            phase = self.phases[0]
            step = min(end - self.now, phase.ticks - phase.elapsed)
            if phase.emit is not None:
                self.output.append(phase.emit[phase.elapsed: phase.elapsed + step])
            phase.elapsed += step
            self.now += step
            if phase.elapsed >= phase.ticks:
                self._retire()
                self._enter_head()
        self.now = end

    def bitstream(self) -> np.ndarray:
        if not self.output:
            return np.zeros(0, dtype=np.uint8)
        return np.concatenate(self.output)


class Chip:
    """Four sub-array controllers on one 5 ns clock."""

    def __init__(self, arrays: list[SubArrayState], config: ChipConfig = ChipConfig(), chip_id: int = 0):
        if len(arrays) != N_SUB_ARRAYS:
            raise InputError(f"chip needs {N_SUB_ARRAYS} sub-arrays")
        self.config = config
        self.chip_id = chip_id & 0xFFFF
        self.tick = 0
        self.ledger: list[TimingEntry] = []
        rng = None
        if config.noise_sigma_volts:
            if config.noise_seed is None:
                raise InputError("front-end noise needs noise_seed")
            rng = np.random.default_rng(config.noise_seed)
        self.sub_arrays = [SubArrayController(i, a, config, self.chip_id, self.ledger, rng)
                           for i, a in enumerate(arrays)]

    @classmethod
    def from_population(cls, population, config: ChipConfig = ChipConfig()) -> Chip:
        return cls(population.build(), config, population.chip_id)

    @property
    def time_s(self) -> float:
        return self.tick * self.config.tick_s

    def spi_access(self, t: SpiTransaction | int) -> int:
        if isinstance(t, int):
            t = SpiTransaction.decode(t)
        sa, index = t.reg_addr >> 6, t.reg_addr & 0x3F
        return self.sub_arrays[sa].access(t.rw, index, t.payload)

    def run_ticks(self, n: int) -> Chip:
        if n < 0:
            raise InputError("cannot run a negative number of ticks")
        for ctrl in self.sub_arrays:
            ctrl.advance(n)
        self.tick += n
        return self

    def remaining_ticks(self, sub_array: int) -> int:
        """Ticks left in the scheduled phases; data-dependent phases may extend it."""
        return self.sub_arrays[sub_array].remaining_ticks()

    def run_until_idle(self, sub_array: int) -> int:
        """Clock the chip until ``sub_array`` is idle; returns the ticks spent."""
        spent = 0
        while self.sub_arrays[sub_array].busy:
            n = self.remaining_ticks(sub_array)
            self.run_ticks(n)
            spent += n
        return spent

    def bitstream(self, sub_array: int) -> np.ndarray:
        return self.sub_arrays[sub_array].bitstream()

    def drain(self, sub_array: int, cursor: int) -> tuple[np.ndarray, int]:
        """Lane symbols emitted since output chunk ``cursor``, and the new cursor."""
        chunks = self.sub_arrays[sub_array].output
        new = chunks[cursor:]
        if not new:
            return np.zeros(0, dtype=np.uint8), cursor
        return np.concatenate(new), len(chunks)


def run_ticks(chip: Chip, n_ticks: int) -> Chip:
    return chip.run_ticks(n_ticks)


def spi_access(chip: Chip, t: SpiTransaction) -> int:
    return chip.spi_access(t)


def _run_op(chip: Chip, sub_array: int, mode: OpMode) -> int:
    ctrl = chip.sub_arrays[sub_array]
    if ctrl.regs["OP_MODE"] != mode:
        raise AccessError(f"OP_MODE is {OpMode(ctrl.regs['OP_MODE']).name}, not {mode.name}")
    start = len(chip.ledger)
    chip.spi_access(SpiTransaction.write(sub_array, "GO", 1))
    chip.run_until_idle(sub_array)
    return start


def execute_write(chip: Chip, sub_array: int) -> list[TimingEntry]:
    """Fire a programmed WRITE and run it to completion; returns its timing report."""
    start = _run_op(chip, sub_array, OpMode.WRITE)
    return [e for e in chip.ledger[start:] if e.sub_array == sub_array]


def execute_read(chip: Chip, sub_array: int) -> Frame:
    """Fire a programmed READ and run it through serialization; returns the frame sent."""
    _run_op(chip, sub_array, OpMode.READ)
    return chip.sub_arrays[sub_array].last_frame
