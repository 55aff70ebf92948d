"""Characterization campaigns over address ranges."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..array import COLS_PER_SET, N_COLS, N_ROWS, N_SETS, CellAddress, Polarity
from ..devices import R_DUT_MAX, R_DUT_MIN, R_STUCK_OPEN, R_STUCK_SHORT
from ..errors import InputError
from .driver import ChipSession, read_resistance, read_row_batch, run_iv_sweep, write_pulse
from .records import FLAG_SAT_HIGH, FLAG_SAT_LOW, MeasurementRecord, RecordWriter

KINDS = ("IvSweep", "ReadResistance", "WritePulse", "MassCharacterize")
POLARITY_MODES = ("Forward", "Reverse", "Both")


@dataclass(frozen=True)
class AddressSpan:
    """Half-open block of cells in one sub-array."""

    sub_array: int
    rows: tuple[int, int] = (0, N_ROWS)
    cols: tuple[int, int] = (0, N_COLS)

    def __post_init__(self):
        (r0, r1), (c0, c1) = self.rows, self.cols
        if not (0 <= r0 <= r1 <= N_ROWS and 0 <= c0 <= c1 <= N_COLS):
            raise InputError(f"span rows={self.rows} cols={self.cols} out of bounds")
        CellAddress(self.sub_array, 0, 0)

    def __len__(self):
        return (self.rows[1] - self.rows[0]) * (self.cols[1] - self.cols[0])

    def cells(self):
        for row in range(*self.rows):
            for col in range(*self.cols):
                yield CellAddress(self.sub_array, row, col)

    @classmethod
    def parse(cls, text: str) -> AddressSpan:
        """``sa`` or ``sa:r0-r1:c0-c1`` (half-open ranges)."""
        parts = text.split(":")
        try:
            sa = int(parts[0])
            rows = tuple(int(x) for x in parts[1].split("-")) if len(parts) > 1 else (0, N_ROWS)
            cols = tuple(int(x) for x in parts[2].split("-")) if len(parts) > 2 else (0, N_COLS)
        except (ValueError, IndexError):
            raise InputError(f"bad address span {text!r}") from None
        if len(rows) != 2 or len(cols) != 2:
            raise InputError(f"bad address span {text!r}")
        return cls(sa, rows, cols)


@dataclass(frozen=True)
class CampaignSpec:
    kind: str
    address_range: tuple[AddressSpan, ...] = ()
    v_start: float = 0.05
    v_stop: float = 1.5
    v_step: float = 0.05
    v_read: float = 0.5
    v_write: float = 1.5
    polarity_mode: str = "Forward"
    pulse_width_s: float = 100e-9
    output_path: str = "campaign.csv"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"campaign kind must be one of {KINDS}")
        if self.polarity_mode not in POLARITY_MODES:
            raise InputError(f"polarity_mode must be one of {POLARITY_MODES}")
        if not self.v_step > 0:
            raise InputError("v_step must be positive")
        object.__setattr__(self, "address_range", tuple(self.address_range))

    @classmethod
    def from_dict(cls, d: dict) -> CampaignSpec:
        d = dict(d)
        spans = []
        for s in d.pop("address_range", []):
            spans.append(AddressSpan.parse(s) if isinstance(s, str)
                         else AddressSpan(s["sub_array"], tuple(s.get("rows", (0, N_ROWS))),
                                          tuple(s.get("cols", (0, N_COLS)))))
        return cls(address_range=tuple(spans), **d)

    @classmethod
    def load(cls, path) -> CampaignSpec:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class CampaignSummary:
    n_records: int = 0
    n_clean: int = 0
    n_saturated_low: int = 0
    n_saturated_high: int = 0
    n_out_of_band: int = 0
    histogram: dict[str, int] = field(default_factory=dict)
    truth_defects: dict[str, int] | None = None
    within_1pct: float | None = None
    within_3pct: float | None = None
    max_rel_error: float | None = None
    median_rel_error: float | None = None
    sim_time_s: float = 0.0

    def to_dict(self) -> dict:
        return dict(vars(self))


class _Stats:
    def __init__(self, with_truth: bool):
        self.summary = CampaignSummary()
        self.errors: list[float] = []
        self.resistances: list[float] = []
        self.with_truth = with_truth
        self.truth_open = 0
        self.truth_short = 0

    def add(self, rec: MeasurementRecord):
        s = self.summary
        s.n_records += 1
        s.n_saturated_low += FLAG_SAT_LOW in rec.flags
        s.n_saturated_high += FLAG_SAT_HIGH in rec.flags
        if rec.r_true_ohms is not None:
            self.truth_open += rec.r_true_ohms == R_STUCK_OPEN
            self.truth_short += rec.r_true_ohms == R_STUCK_SHORT
        if rec.clean:
            s.n_clean += 1
            self.resistances.append(rec.r_ohms)
            if not R_DUT_MIN * 0.97 <= rec.r_ohms <= R_DUT_MAX * 1.03:
                s.n_out_of_band += 1
            if rec.r_true_ohms is not None:
                self.errors.append(rec.relative_error)

    def finish(self, sim_time_s: float) -> CampaignSummary:
        s = self.summary
        s.sim_time_s = sim_time_s
        if self.resistances:
            decades = np.floor(np.log10(np.asarray(self.resistances))).astype(int)
            values, counts = np.unique(decades, return_counts=True)
            s.histogram = {f"1e{v}-1e{v + 1}": int(c) for v, c in zip(values, counts)}
        if self.with_truth:
            s.truth_defects = {"StuckOpen": self.truth_open, "StuckShort": self.truth_short}
        if self.errors:
            e = np.asarray(self.errors)
            s.within_1pct = float(np.mean(e <= 0.01))
            s.within_3pct = float(np.mean(e <= 0.03))
            s.max_rel_error = float(e.max())
            s.median_rel_error = float(np.median(e))
        return s


def mass_characterize(session: ChipSession, spans, out, v_read: float = 0.5,
                      polarity: Polarity = Polarity.FORWARD, keep_records: bool = False):
    """Read every cell in ``spans`` 32 at a time (one per set) and stream them to CSV.

    ``out`` is a path or a text file object. Records are written in
    (sub-array, row, column) order whatever order the sets were read in.
    Returns the summary, plus the records when ``keep_records`` is set.
    """
    with_truth = session.simulator
    stats = _Stats(with_truth)
    kept = []
    own = isinstance(out, (str, Path))
    fh = open(out, "w", encoding="utf-8", newline="") if own else out
    try:
        writer = RecordWriter(fh, with_truth)
        for span in sorted(spans, key=lambda s: (s.sub_array, s.rows, s.cols)):
            c0, c1 = span.cols
            for row in range(*span.rows):
                row_records = []
                for cis in range(COLS_PER_SET):
                    sets = [s for s in range(N_SETS) if c0 <= s * COLS_PER_SET + cis < c1]
                    if sets:
                        row_records += read_row_batch(session, span.sub_array, row, cis, sets,
                                                      v_read, polarity)
                row_records.sort(key=lambda r: CellAddress.parse(r.address).col)
                for rec in row_records:
                    writer.write(rec)
                    stats.add(rec)
                if keep_records:
                    kept += row_records
    finally:
        if own:
            fh.close()
    summary = stats.finish(session.time_s)
    return (summary, kept) if keep_records else summary


def run_campaign(session: ChipSession, spec: CampaignSpec, out=None):
    """Dispatch a campaign by kind; returns (summary, records).

    Mass characterization streams and keeps no records; the other kinds
    return their records as well as writing them.
    """
    out = spec.output_path if out is None else out
    if spec.kind == "MassCharacterize":
        pol = Polarity.REVERSE if spec.polarity_mode == "Reverse" else Polarity.FORWARD
        return mass_characterize(session, spec.address_range, out, spec.v_read, pol), []

    records = []
    for span in spec.address_range:
        for addr in span.cells():
            if spec.kind == "IvSweep":
                records += run_iv_sweep(session, addr, spec.v_start, spec.v_stop, spec.v_step,
                                        spec.polarity_mode)
            elif spec.kind == "ReadResistance":
                for pol in _polarities(spec.polarity_mode):
                    records.append(read_resistance(session, addr, spec.v_read, pol))
            else:
                for pol in _polarities(spec.polarity_mode):
                    write_pulse(session, addr, spec.v_write, spec.pulse_width_s, pol)
                    records.append(read_resistance(session, addr, spec.v_read))
    stats = _Stats(session.simulator)
    own = isinstance(out, (str, Path))
    fh = open(out, "w", encoding="utf-8", newline="") if own else out
    try:
        writer = RecordWriter(fh, session.simulator)
        for rec in records:
            writer.write(rec)
            stats.add(rec)
    finally:
        if own:
            fh.close()
    return stats.finish(session.time_s), records


def _polarities(mode: str):
    return {"Forward": [Polarity.FORWARD], "Reverse": [Polarity.REVERSE],
            "Both": [Polarity.FORWARD, Polarity.REVERSE]}[mode]


def binomial_band(n: int, p: float, z: float = 4.0) -> tuple[float, float]:
    """Mean +/- ``z`` standard deviations for a Binomial(n, p) count."""
    mean = n * p
    sd = math.sqrt(n * p * (1 - p))
    return mean - z * sd, mean + z * sd


__all__ = ["AddressSpan", "CampaignSpec", "CampaignSummary", "mass_characterize", "run_campaign",
           "binomial_band"]
