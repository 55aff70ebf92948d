"""Chip constants and their JSON config file.

Every key is optional; missing keys keep the defaults below. See
``docs/config.md`` for the key list.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from .devices import CellElectrical
from .errors import InputError
from .frontend import (
    DEFAULT_BANK_OHMS,
    DEFAULT_GAIN,
    DEFAULT_STAGE_PHASES,
    DEFAULT_THRESHOLD_CODE,
    AdcConfig,
    DacConfig,
    ResistorBank,
    adc_code_to_voltage,
)

TICK_S = 5e-9


@dataclass(frozen=True)
class ChipConfig:
    cell: CellElectrical = field(default_factory=CellElectrical)
    dac: DacConfig = field(default_factory=DacConfig)
    adc: AdcConfig = field(default_factory=AdcConfig)
    bank_ohms: tuple[float, ...] = DEFAULT_BANK_OHMS
    stage_phases: tuple[tuple[int, int], ...] = DEFAULT_STAGE_PHASES
    amp_gain: int = int(DEFAULT_GAIN)
    threshold_code: int = DEFAULT_THRESHOLD_CODE
    tick_s: float = TICK_S
    write_setup_ticks: int = 4
    read_setup_ticks: int = 200
    noise_sigma_volts: float = 0.0
    noise_seed: int | None = None

    @property
    def adc_ticks(self) -> int:
        return math.ceil(1.0 / self.adc.sample_rate_hz / self.tick_s - 1e-9)

    def bank(self, threshold_code: int | None = None, amp_gain: int | None = None) -> ResistorBank:
        code = self.threshold_code if threshold_code is None else threshold_code
        gain = self.amp_gain if amp_gain is None else amp_gain
        cache = self.__dict__.setdefault("_banks", {})
        bank = cache.get((code, gain))
        if bank is None:
            bank = cache[(code, gain)] = ResistorBank(
                self.bank_ohms, float(gain), adc_code_to_voltage(code, self.adc), self.stage_phases)
        return bank

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name in ("cell", "dac", "adc"):
                value = {g.name: getattr(value, g.name) for g in fields(value)}
            elif isinstance(value, tuple):
                value = [list(v) if isinstance(v, tuple) else v for v in value]
            out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> ChipConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InputError(f"unknown config keys: {', '.join(sorted(unknown))}")
        kwargs = dict(data)
        for name, typ in (("cell", CellElectrical), ("dac", DacConfig), ("adc", AdcConfig)):
            if name in kwargs:
                kwargs[name] = typ(**kwargs[name])
        if "bank_ohms" in kwargs:
            kwargs["bank_ohms"] = tuple(float(r) for r in kwargs["bank_ohms"])
        if "stage_phases" in kwargs:
            kwargs["stage_phases"] = tuple(tuple(int(t) for t in p) for p in kwargs["stage_phases"])
        cfg = cls(**kwargs)
        cfg.bank()  # validates bank shape
        return cfg


def load_config(path) -> ChipConfig:
    if path is None:
        return ChipConfig()
    with open(Path(path), encoding="utf-8") as fh:
        return ChipConfig.from_dict(json.load(fh))

