"""Measurement records and their CSV form."""

from __future__ import annotations

import csv
import io
from dataclasses import astuple, dataclass, fields

FLAG_SAT_LOW = "saturated_low"
FLAG_SAT_HIGH = "saturated_high"


@dataclass(frozen=True)
class MeasurementRecord:
    address: str
    polarity: str
    v_dut_volts: float
    dac_code: int
    adc_code: int
    gain_sel: int
    i_amps: float
    r_ohms: float
    flags: str
    sim_time_s: float
    r_true_ohms: float | None = None

    @property
    def clean(self) -> bool:
        return not self.flags

    @property
    def relative_error(self) -> float | None:
        if self.r_true_ohms is None:
            return None
        return abs(self.r_ohms - self.r_true_ohms) / self.r_true_ohms

    def same_measurement(self, other: MeasurementRecord) -> bool:
        """Equal in everything but the simulated timestamp."""
        a, b = astuple(self), astuple(other)
        skip = [f.name for f in fields(self)].index("sim_time_s")
        return a[:skip] + a[skip + 1:] == b[:skip] + b[skip + 1:]


CSV_FIELDS = [f.name for f in fields(MeasurementRecord)]


def csv_header(with_truth: bool) -> list[str]:
    return CSV_FIELDS if with_truth else CSV_FIELDS[:-1]


def _cell(value):
    if isinstance(value, float):
        return repr(value)
    return "" if value is None else str(value)


class RecordWriter:
    """Streams records to CSV; the truth column is present only for simulator runs."""

    def __init__(self, fh, with_truth: bool = True):
        self.with_truth = with_truth
        self._writer = csv.writer(fh, lineterminator="\n")
        self._writer.writerow(csv_header(with_truth))
        self.count = 0

    def write(self, rec: MeasurementRecord):
        names = CSV_FIELDS if self.with_truth else CSV_FIELDS[:-1]
        row = [getattr(rec, n) for n in names]
        self._writer.writerow([_cell(v) for v in row])
        self.count += 1


def records_to_csv(records, with_truth: bool = True) -> str:
    buf = io.StringIO()
    w = RecordWriter(buf, with_truth)
    for r in records:
        w.write(r)
    return buf.getvalue()


def read_records(fh) -> list[MeasurementRecord]:
    out = []
    for row in csv.DictReader(fh):
        truth = row.get("r_true_ohms")
        out.append(MeasurementRecord(
            row["address"], row["polarity"], float(row["v_dut_volts"]), int(row["dac_code"]),
            int(row["adc_code"]), int(row["gain_sel"]), float(row["i_amps"]), float(row["r_ohms"]),
            row["flags"], float(row["sim_time_s"]), float(truth) if truth else None))
    return out
