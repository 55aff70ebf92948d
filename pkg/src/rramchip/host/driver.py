"""Host-side driver: programs the chip over SPI and turns packets into resistances.

Everything here talks to the chip only through register transactions and
the serializer bitstream, so a session can be recorded and replayed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..array import COLS_PER_SET, N_SUB_ARRAYS, CellAddress, Polarity, dut_voltage, gray_encode
from ..config import ChipConfig
from ..controller import (
    CONFIG_PER_SET_DAC,
    REGISTER_MAP,
    Chip,
    OpMode,
    SpiTransaction,
    register_checksum,
)
from ..devices import MIN_PULSE_WIDTH_S
from ..errors import IntegrityError, PulseWidthError, RangeError
from ..frontend import ReadoutResult, TheveninSource, autorange_convert, dac_code_to_voltage, reconstruct_current
from ..serializer import DataPacket, Frame, FrameReceiver
from .records import FLAG_SAT_HIGH, FLAG_SAT_LOW, MeasurementRecord
from .transcript import TranscriptWriter, bitstream_hash

# First-pass resistance guess: geometric middle of the 1 kOhm - 10 MOhm band.
R_MID = 1e5


class ChipSession:
    """SPI master plus bitstream receiver for one simulated chip.

    Register writes go through a shadow copy and are skipped when the value
    is already in place. Every transaction, clock run and received frame is
    appended to ``transcript`` when one is attached.
    """

    def __init__(self, chip: Chip, transcript: TranscriptWriter | None = None, simulator: bool = True):
        self.chip = chip
        self.config: ChipConfig = chip.config
        self.transcript = transcript
        self.simulator = simulator
        self.shadow = []
        for _ in range(N_SUB_ARRAYS):
            regs = {name: reg.reset for name, reg in REGISTER_MAP.items() if reg.access == "rw"}
            regs["THRESHOLD"] = self.config.threshold_code
            regs["AMP_GAIN"] = self.config.amp_gain
            self.shadow.append(regs)
        self._cursor = [0] * N_SUB_ARRAYS
        self._rx = [FrameReceiver() for _ in range(N_SUB_ARRAYS)]
        self.chip_id = self.read_reg(0, "CHIP_ID")

    # -- register level ----------------------------------------------------

    def _spi(self, t: SpiTransaction) -> int:
        value = self.chip.spi_access(t)
        if self.transcript is not None:
            self.transcript.spi(t, value if not t.rw else None)
        return value

    def write_reg(self, sa: int, name: str, value: int, force: bool = False):
        if not force and self.shadow[sa].get(name) == value:
            return
        self._spi(SpiTransaction.write(sa, name, value))
        if name in self.shadow[sa]:
            self.shadow[sa][name] = value

    def read_reg(self, sa: int, name: str) -> int:
        return self._spi(SpiTransaction.read(sa, name))

    def go(self, sa: int):
        self._spi(SpiTransaction.write(sa, "GO", 1))

    def run_until_idle(self, sa: int) -> int:
        ticks = self.chip.run_until_idle(sa)
        if self.transcript is not None:
            self.transcript.run(ticks)
        return ticks

    def receive(self, sa: int) -> list[Frame]:
        """Decode newly emitted frames and check their register checksum."""
        symbols, self._cursor[sa] = self.chip.drain(sa, self._cursor[sa])
        frames = self._rx[sa].feed(symbols)
        expected = register_checksum(self.shadow[sa], self.chip_id)
        for f in frames:
            if f.register_checksum != expected:
                raise IntegrityError(
                    f"sub-array {sa} frame {f.frame_counter}: register checksum "
                    f"{f.register_checksum:04X}, host expects {expected:04X}")
            if self.transcript is not None:
                self.transcript.frame(sa, f)
        return frames

    def close(self) -> str:
        digest = bitstream_hash(self.chip)
        if self.transcript is not None:
            self.transcript.finish(digest)
        return digest

    @property
    def time_s(self) -> float:
        return self.chip.time_s

    # -- operations --------------------------------------------------------

    def read_sets(self, sa: int, row: int, targets: list[tuple[int, int, int]],
                  polarity: Polarity) -> dict[int, DataPacket]:
        """One READ op over ``targets`` = [(set, col_in_set, dac_code)]; packets keyed by set."""
        if not targets:
            return {}
        self.write_reg(sa, "ROW_ADDR", gray_encode(row))
        self.write_reg(sa, "POLARITY", int(polarity))
        if len(targets) == 1:
            s, c, code = targets[0]
            self.write_reg(sa, "SET_MASK_LO", 0)
            self.write_reg(sa, "SET_MASK_HI", 0)
            self.write_reg(sa, "CONFIG", 0)
            self.write_reg(sa, "COL_ADDR", s * COLS_PER_SET + c)
            self.write_reg(sa, "DAC_CODE", code)
        else:
            mask = 0
            colsel = [self.shadow[sa][f"COLSEL_{i}"] for i in range(8)]
            dacset = [self.shadow[sa][f"DACSET_{i}"] for i in range(16)]
            for s, c, code in targets:
                mask |= 1 << s
                colsel[s // 4] = (colsel[s // 4] & ~(0xF << 4 * (s % 4))) | (c << 4 * (s % 4))
                dacset[s // 2] = (dacset[s // 2] & ~(0xFF << 8 * (s % 2))) | (code << 8 * (s % 2))
            for i, v in enumerate(colsel):
                self.write_reg(sa, f"COLSEL_{i}", v)
            for i, v in enumerate(dacset):
                self.write_reg(sa, f"DACSET_{i}", v)
            self.write_reg(sa, "CONFIG", CONFIG_PER_SET_DAC)
            self.write_reg(sa, "SET_MASK_LO", mask & 0xFFFF)
            self.write_reg(sa, "SET_MASK_HI", mask >> 16)
        self.write_reg(sa, "OP_MODE", int(OpMode.READ))
        self.go(sa)
        self.run_until_idle(sa)
        frames = self.receive(sa)
        if len(frames) != 1:
            raise IntegrityError(f"expected one frame from sub-array {sa}, got {len(frames)}")
        packets = frames[0].packets()
        out = {}
        for s, c, _ in targets:
            p = packets[s]
            if not p.valid or p.col_in_set != c:
                raise IntegrityError(f"set {s} packet missing or for the wrong column")
            out[s] = p
        return out

    def write_cell(self, addr: CellAddress, dac_code: int, polarity: Polarity, pulse_ticks: int):
        sa = addr.sub_array
        self.write_reg(sa, "ROW_ADDR", gray_encode(addr.row))
        self.write_reg(sa, "COL_ADDR", addr.col)
        self.write_reg(sa, "DAC_CODE", dac_code)
        self.write_reg(sa, "POLARITY", int(polarity))
        self.write_reg(sa, "PULSE_WIDTH", pulse_ticks)
        self.write_reg(sa, "OP_MODE", int(OpMode.WRITE))
        self.go(sa)
        self.run_until_idle(sa)

    def truth(self, addr: CellAddress) -> float | None:
        """Simulator-only ground truth for the addressed device."""
        if not self.simulator:
            return None
        return float(self.chip.sub_arrays[addr.sub_array].array.resistance[addr.row, addr.col])


# -- drive solving ---------------------------------------------------------

def _min_code(r_dut: float, r_series: float, target: float, cfg: ChipConfig) -> int:
    """Smallest DAC code whose drive puts at least ``target`` volts on the device."""
    dac = cfg.dac

    def v_dut(code):
        return dut_voltage(dac_code_to_voltage(code, dac), r_dut, r_series)

    needed = target * (r_dut + r_series) / r_dut
    code = min(max(math.ceil((needed - dac.v_min_volts) / dac.lsb), 0), dac.max_code)
    while code > 0 and v_dut(code - 1) >= target:
        code -= 1
    while v_dut(code) < target:
        if code == dac.max_code:
            raise RangeError(f"{target:g} V across {r_dut:g} ohm needs more than "
                             f"{dac.v_max_volts:g} V of drive")
        code += 1
    return code


def predicted_stage(r_dut: float, dac_code: int, cfg: ChipConfig) -> int:
    src = TheveninSource(dac_code_to_voltage(dac_code, cfg.dac), r_dut + cfg.cell.r_access_on_ohms)
    return autorange_convert(src, cfg.bank(), cfg.adc).stage


def solve_drive_voltage(r_estimate: float, v_dut_target: float, cfg: ChipConfig = ChipConfig(),
                        mode: str = "read") -> int:
    """DAC code that puts at least ``v_dut_target`` across a device of ``r_estimate``.

    Reads see the access resistance plus whichever bank resistor the
    converter settles on, so the stage is re-predicted for up to five rounds.
    Writes bypass the bank.
    """
    if not r_estimate > 0:
        raise RangeError("resistance estimate must be positive")
    target = abs(v_dut_target)
    r_acc = cfg.cell.r_access_on_ohms
    if mode == "write":
        return _min_code(r_estimate, r_acc, target, cfg)
    bank_ohms = cfg.bank_ohms
    stage = 0
    # A code solved for stage k still meets the target if the converter then
    # settles on a stage at or below k, since the series drop only shrinks.
    safe = []
    for _ in range(len(bank_ohms)):
        code = _min_code(r_estimate, r_acc + bank_ohms[stage], target, cfg)
        nxt = predicted_stage(r_estimate, code, cfg)
        if nxt <= stage:
            safe.append(code)
        if nxt == stage:
            break
        stage = nxt
    if safe:
        return min(safe)
    # No safe candidate in five rounds: walk up until the settled stage agrees.
    while True:
        k = predicted_stage(r_estimate, code, cfg)
        if dut_voltage(dac_code_to_voltage(code, cfg.dac), r_estimate, r_acc + bank_ohms[k]) >= target:
            return code
        if code == cfg.dac.max_code:
            raise RangeError(f"{target:g} V across {r_estimate:g} ohm is out of DAC range")
        code += 1


# -- measurements ----------------------------------------------------------

def packet_to_record(addr: CellAddress, polarity: Polarity, dac_code: int, packet: DataPacket,
                     cfg: ChipConfig, sim_time_s: float, r_true: float | None = None) -> MeasurementRecord:
    bank = cfg.bank()
    res = ReadoutResult(packet.adc_code, packet.gain_sel, packet.saturated_low, packet.saturated_high)
    i = reconstruct_current(res, bank, cfg.adc)
    v_drive = dac_code_to_voltage(dac_code, cfg.dac)
    v_dut = v_drive - i * (cfg.cell.r_access_on_ohms + bank.r_ohms[res.stage])
    r = v_dut / i if v_dut > 0 else math.nan
    flags = "|".join(f for f, on in ((FLAG_SAT_LOW, res.saturated_low), (FLAG_SAT_HIGH, res.saturated_high)) if on)
    sign = polarity.sign
    return MeasurementRecord(str(addr), "Forward" if polarity is Polarity.FORWARD else "Reverse",
                             sign * v_dut, dac_code, res.adc_code, res.gain_sel, sign * i, r, flags,
                             sim_time_s, r_true)


def read_resistance(session: ChipSession, addr: CellAddress, v_read: float = 0.5,
                    polarity: Polarity = Polarity.FORWARD, r_hint: float | None = None) -> MeasurementRecord:
    """Measure one cell at a compensated DUT voltage.

    Without ``r_hint`` this is a two-pass read: first at the drive solved for
    a mid-band device, then, if that readout was clean, again at the drive
    solved for the first estimate. A hint skips straight to the second pass.
    """
    cfg = session.config
    sa, s, c = addr.sub_array, addr.set_index, addr.col_in_set
    truth = session.truth(addr)
    code = solve_drive_voltage(R_MID if r_hint is None else r_hint, v_read, cfg)
    packet = session.read_sets(sa, addr.row, [(s, c, code)], polarity)[s]
    rec = packet_to_record(addr, polarity, code, packet, cfg, session.time_s, truth)
    if r_hint is None and rec.clean:
        try:
            code2 = solve_drive_voltage(rec.r_ohms, v_read, cfg)
        except RangeError:
            return rec
        if code2 != code:
            packet = session.read_sets(sa, addr.row, [(s, c, code2)], polarity)[s]
            rec = packet_to_record(addr, polarity, code2, packet, cfg, session.time_s, truth)
    return rec


def read_row_batch(session: ChipSession, sa: int, row: int, col_in_set: int, sets: list[int],
                   v_read: float = 0.5, polarity: Polarity = Polarity.FORWARD) -> list[MeasurementRecord]:
    """Two-pass read of one cell per set, all sets in parallel, per-set DAC codes."""
    cfg = session.config
    addrs = {s: CellAddress(sa, row, s * COLS_PER_SET + col_in_set) for s in sets}
    truth = {s: session.truth(a) for s, a in addrs.items()}
    code1 = solve_drive_voltage(R_MID, v_read, cfg)
    packets = session.read_sets(sa, row, [(s, col_in_set, code1) for s in sets], polarity)
    records = {s: packet_to_record(addrs[s], polarity, code1, packets[s], cfg, session.time_s, truth[s])
               for s in sets}

    second = []
    for s in sets:
        if not records[s].clean:
            continue
        try:
            code2 = solve_drive_voltage(records[s].r_ohms, v_read, cfg)
        except RangeError:
            continue
        if code2 != code1:
            second.append((s, col_in_set, code2))
    if second:
        packets = session.read_sets(sa, row, second, polarity)
        for s, _, code2 in second:
            records[s] = packet_to_record(addrs[s], polarity, code2, packets[s], cfg, session.time_s, truth[s])
    return [records[s] for s in sorted(sets)]


@dataclass(frozen=True)
class WriteReport:
    address: str
    polarity: str
    dac_code: int
    v_dut_expected: float
    pulse_ticks: int
    width_s: float
    r_before: float | None
    r_after: float | None


def write_pulse(session: ChipSession, addr: CellAddress, v_dut_target: float, width_s: float,
                polarity: Polarity = Polarity.FORWARD, r_estimate: float | None = None) -> WriteReport:
    """Issue one programming pulse of at least ``width_s`` (rounded up to whole 5 ns ticks)."""
    cfg = session.config
    if not width_s >= MIN_PULSE_WIDTH_S * (1 - 1e-9):
        raise PulseWidthError(f"pulse width {width_s:g} s is below the {MIN_PULSE_WIDTH_S:g} s minimum")
    ticks = math.ceil(width_s / cfg.tick_s - 1e-9)
    if ticks >= 1 << 16:
        raise RangeError(f"pulse of {width_s:g} s exceeds the 16-bit width register")
    if r_estimate is None:
        before = read_resistance(session, addr, polarity=Polarity.FORWARD)
        r_estimate = before.r_ohms if before.clean else R_MID
    code = solve_drive_voltage(r_estimate, v_dut_target, cfg, mode="write")
    v_exp = dut_voltage(dac_code_to_voltage(code, cfg.dac), r_estimate, cfg.cell.r_access_on_ohms)
    r_before = session.truth(addr)
    session.write_cell(addr, code, polarity, ticks)
    return WriteReport(str(addr), polarity.name.title(), code, polarity.sign * v_exp, ticks,
                       ticks * cfg.tick_s, r_before, session.truth(addr))


def voltage_grid(v_start: float, v_stop: float, v_step: float) -> list[float]:
    """Inclusive monotone grid from ``v_start`` toward ``v_stop`` in steps of ``|v_step|``."""
    if not v_step > 0:
        raise RangeError("v_step must be positive")
    n = int(math.floor(abs(v_stop - v_start) / v_step + 1e-9)) + 1
    direction = 1 if v_stop >= v_start else -1
    return [v_start + direction * k * v_step for k in range(n)]


def run_iv_sweep(session: ChipSession, addr: CellAddress, v_start: float, v_stop: float,
                 v_step: float, polarity_mode: str = "Forward") -> list[MeasurementRecord]:
    """Read the cell at each DUT-voltage magnitude on the grid.

    ``polarity_mode`` is Forward, Reverse or Both; Both reads forward then
    reverse at each magnitude. Each point reuses the previous estimate at
    that polarity to solve the drive, so a switching device shows up as a
    jump between consecutive records.
    """
    pols = {"Forward": [Polarity.FORWARD], "Reverse": [Polarity.REVERSE],
            "Both": [Polarity.FORWARD, Polarity.REVERSE]}[polarity_mode]
    hints: dict[Polarity, float | None] = {p: None for p in pols}
    records = []
    for v in voltage_grid(v_start, v_stop, v_step):
        for pol in pols:
            rec = read_resistance(session, addr, abs(v), pol, hints[pol])
            if rec.clean:
                hints[pol] = rec.r_ohms
            records.append(rec)
    return records


__all__ = [
    "ChipSession", "R_MID", "solve_drive_voltage", "predicted_stage", "packet_to_record",
    "read_resistance", "read_row_batch", "write_pulse", "WriteReport", "voltage_grid",
    "run_iv_sweep",
]
