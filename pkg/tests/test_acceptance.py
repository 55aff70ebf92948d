"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import io
import random
import time

import numpy as np
import pytest

from conftest import build_chip
from rramchip.array import CellAddress, Polarity, gray_decode, gray_encode
from rramchip.config import ChipConfig
from rramchip.controller import Chip, OpMode, SpiTransaction, execute_write
from rramchip.devices import DeviceModelSpec, apply_write_pulse
from rramchip.errors import PulseWidthError
from rramchip.frontend import ResistorBank, TheveninSource, autorange_convert
from rramchip.host.analysis import gain_plateaus, log_current_grid, stage_boundaries, transfer_curve
from rramchip.host.campaign import AddressSpan, mass_characterize
from rramchip.host.driver import ChipSession, read_resistance, run_iv_sweep, solve_drive_voltage, write_pulse
from rramchip.host.transcript import TranscriptWriter, replay_transcript
from rramchip.population import Population
from rramchip.serializer import (
    N_PACKETS,
    OneStageSerializer,
    TwoStageSerializer,
    build_frame,
    pack_packet,
    status_bits,
    unpack_packet,
)

CFG = ChipConfig()


@pytest.fixture
def report(capsys):
    def _report(number: int, title: str, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\n[criterion {number:2d}] {'PASS' if ok else 'FAIL'}  {title}: {detail}")
        assert ok, detail
    return _report


def test_c01_current_range_coverage(report):
    t0 = time.perf_counter()
    currents = np.geomspace(20e-9, 2e-3, 1000)
    results = [autorange_convert(TheveninSource.current_source(float(i))) for i in currents]
    elapsed = time.perf_counter() - t0
    saturated = sum(r.saturated_low or r.saturated_high for r in results)
    stages = {r.stage for r in results}
    ok = saturated == 0 and stages == {0, 1, 2, 3, 4} and elapsed < 1.0
    report(1, "20 nA - 2 mA coverage", ok,
           f"{saturated} saturated of 1000, stages used {sorted(stages)}, {elapsed:.3f} s")


def test_c02_five_gain_transfer_curve(report):
    curve = transfer_curve(log_current_grid(20e-9, 2e-3, 1000))
    plateaus = gain_plateaus(curve)
    bank = CFG.bank()
    grid = curve.currents
    worst = 0
    for stage, i_first in stage_boundaries(curve):
        k_obs = int(np.searchsorted(grid, i_first))
        k_ana = int(np.searchsorted(grid, bank.crossover_current(stage)))
        worst = max(worst, abs(k_obs - k_ana))
    slopes_ok = all(abs(p.slope_ohms / (bank.amp_gain * bank.r_ohms[p.stage]) - 1) < 0.02 for p in plateaus)
    ok = len(plateaus) == 5 and worst <= 1 and slopes_ok
    report(2, "five-gain transfer curve", ok,
           f"{len(plateaus)} plateaus, worst boundary offset {worst} grid steps")


def test_c03_cell_max_current(report):
    session = ChipSession(build_chip({(0, 0, 0): DeviceModelSpec.linear(1e3)}))
    code = solve_drive_voltage(1e3, 1.5)
    rec = read_resistance(session, CellAddress(0, 0, 0), v_read=1.5, r_hint=1e3)
    err = abs(rec.i_amps - 1.5e-3) / 1.5e-3
    report(3, "1.5 mA at 1.5 V across 1 kOhm", rec.clean and err <= 0.02,
           f"DAC code {code}, reconstructed {rec.i_amps * 1e3:.4f} mA ({err:.2%} off)")


def _frame(rng):
    words = [pack_packet(rng.randrange(4096), 1 << rng.randrange(5), rng.randrange(16),
                         status_bits(True, False, False, 0)) for _ in range(32)]
    return build_frame(words, rng.randrange(1 << 16), rng.randrange(1 << 16))


def test_c04_serializer_latency(report):
    frame = _frame(random.Random(40))
    bad = []
    for n in range(N_PACKETS):
        two = TwoStageSerializer()
        two.load(frame, [n])
        symbols = []
        while not two.idle:
            s = two.tick()
            symbols.append(0 if s is None else s)
        one = OneStageSerializer(frame)
        tail = [one.tick() for _ in range((n + 1) * 13)][-13:]
        word = 0
        for s in symbols[-13:]:
            word = word << 2 | s
        if two.cycle != 1 + n + 13 or one.cycle != n * 13 + 13 or word != frame.entries[n] \
                or tail != symbols[-13:]:
            bad.append(n)
    report(4, "serializer latency 1+N+13 vs N*13+13", not bad,
           f"N = 0..33 checked on the cycle loop, mismatches at {bad or 'none'}")


def concat_oracle(adc, gain, col, status):
    return int(f"{adc:012b}{gain:05b}{col:04b}{status:05b}", 2)


def test_c05_packet_format(report):
    golden = [(0, 0, 0, 0), (0xFFF, 1, 0xF, 0x10), (1, 16, 0, 0x13), (0x800, 4, 8, 0x18),
              (0x7FF, 8, 7, 0x15), (0x123, 2, 3, 0x11), (0xABC, 1, 0xA, 0x16), (0xFFF, 31, 15, 31),
              (0x555, 10, 5, 10), (0x0F0, 16, 12, 0x14)]
    golden_bad = [g for g in golden if pack_packet(*g) != concat_oracle(*g)]
    rng = np.random.default_rng(50)
    tuples = np.stack([rng.integers(0, 4096, 100_000), rng.integers(0, 32, 100_000),
                       rng.integers(0, 16, 100_000), rng.integers(0, 32, 100_000)], axis=1)
    rt_bad = 0
    for a, g, c, s in tuples.tolist():
        p = unpack_packet(pack_packet(a, g, c, s))
        rt_bad += (p.adc_code, p.gain_sel, p.col_in_set, p.status) != (a, g, c, s)
    ok = not golden_bad and rt_bad == 0 and pack_packet(0xFFF, 1, 0xF, 0x10) == 0x3FFC3F0
    report(5, "26-bit packet format", ok,
           f"{len(golden) - len(golden_bad)}/10 golden words, {100_000 - rt_bad}/100000 roundtrips")


def test_c06_autorange_oracle(report):
    bank = ResistorBank()
    rng = np.random.default_rng(60)
    n = 20_000
    currents = 10 ** rng.uniform(-12, -2, n)
    r_src = 10 ** rng.uniform(2, 9, n)
    mismatches = 0
    for i, r in zip(currents.tolist(), r_src.tolist()):
        src = TheveninSource(i * (r + bank.r_ohms[0]), r)
        above = [k for k, rk in enumerate(bank.r_ohms)
                 if bank.amp_gain * rk * src.v_open_volts / (r + rk) > bank.v_threshold_volts]
        expected = above[0] if above else 4
        mismatches += autorange_convert(src, bank).stage != expected
    report(6, "autorange vs brute force", mismatches == 0,
           f"{n - mismatches}/{n} sources over 10 decades agree")


def test_c07_gray_code(report):
    rt = all(gray_decode(gray_encode(n)) == n for n in range(512))
    adj = all(bin(gray_encode(n) ^ gray_encode(n + 1)).count("1") == 1 for n in range(511))
    report(7, "gray-code laws", rt and adj, f"roundtrip {rt}, single-bit adjacency {adj} over 0..511")


def test_c08_end_to_end_accuracy(report):
    pop = Population.log_uniform(2024, [0])
    t0 = time.perf_counter()
    session = ChipSession(Chip.from_population(pop))
    summary = mass_characterize(session, [AddressSpan(0)], io.StringIO())
    elapsed = time.perf_counter() - t0
    ok = (summary.n_records == 512 * 512 and summary.within_1pct >= 0.95
          and summary.within_3pct == 1.0 and elapsed < 60.0)
    report(8, "512x512 resistance accuracy", ok,
           f"{summary.n_records} records, {summary.n_clean} clean, {summary.within_1pct:.4%} within 1%, "
           f"{summary.within_3pct:.4%} within 3%, max error {summary.max_rel_error:.3%}, {elapsed:.1f} s")


def test_c09_write_read_semantics(report):
    spec = DeviceModelSpec.bistable()
    failures = []
    # device level: amplitude and width grid around the thresholds
    for v in (-2.0, -1.5, -1.49, -0.5, 0.5, 1.49, 1.5, 2.0):
        for w_ticks in (1, 2, 3, 20):
            for high in (True, False):
                before = spec.initial_state(high)
                after = apply_write_pulse(before, spec, v, w_ticks * 5e-9)
                switches = w_ticks * 5e-9 >= 10e-9 and ((v >= 1.5 and high) or (v <= -1.5 and not high))
                if (after != before) != switches:
                    failures.append((v, w_ticks, high))
    try:
        apply_write_pulse(spec.initial_state(), spec, 2.0, 4.9e-9)
        failures.append("4.9 ns accepted")
    except PulseWidthError:
        pass

    # chip level: pulses leave the controller in whole 5 ns ticks
    chip = build_chip({(0, 0, 0): (spec, spec.initial_state(True))})
    session = ChipSession(chip)
    addr = CellAddress(0, 0, 0)
    for width, ticks, expect in ((5e-9, 1, 1e6), (12e-9, 3, 1e3)):
        rep = write_pulse(session, addr, 1.5, width)
        if rep.pulse_ticks != ticks or rep.r_after != expect:
            failures.append((width, rep.pulse_ticks, rep.r_after))
    rep = write_pulse(session, addr, 1.5, 100e-9, Polarity.REVERSE)
    if rep.r_after != 1e6:
        failures.append("reverse reset")
    for name, value in (("DAC_CODE", 200), ("PULSE_WIDTH", 7), ("OP_MODE", int(OpMode.WRITE))):
        chip.spi_access(SpiTransaction.write(0, name, value))
    timing = execute_write(chip, 0)
    if timing[-1].ticks * CFG.tick_s != pytest.approx(35e-9):
        failures.append("pulse timing")
    report(9, "write/read semantics", not failures, f"failures: {failures or 'none'}")


def test_c10_replay_determinism(report):
    pop = Population.log_uniform(77, [0, 3], stuck_open=0.02)
    tw = TranscriptWriter()
    session = ChipSession(Chip.from_population(pop), tw)
    mass_characterize(session, [AddressSpan(0, (0, 2), (0, 96)), AddressSpan(3, (10, 11))], io.StringIO())
    run_iv_sweep(session, CellAddress(3, 4, 4), 0.1, 0.9, 0.2, "Both")
    write_pulse(session, CellAddress(0, 1, 1), 1.2, 50e-9)
    digest = session.close()
    result = replay_transcript(tw.text(), Chip.from_population(pop))
    ok = result.bitstream_hash == digest and not result.warnings
    report(10, "transcript replay determinism", ok,
           f"hash {'identical' if result.bitstream_hash == digest else 'differs'}, "
           f"{len(result.warnings)} warnings, {sum(map(len, result.frames.values()))} frames")
