"""Per-set analog chain: 8-bit DAC, autoranging I-to-V converter, 12-bit ADC.

The converter walks a five-decade resistor bank from the smallest resistor
upward, amplifying the bank voltage by a switched-capacitor gain stage and
stopping at the first stage whose output strictly exceeds the comparator
threshold. The last stage is taken unconditionally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

N_STAGES = 5
DEFAULT_BANK_OHMS = (25.0, 250.0, 2_500.0, 25_000.0, 250_000.0)
DEFAULT_GAIN = 32.0
# Comparator threshold on the ADC scale; code 153 sits just under 0.16 V
# so that a 20 nA input still terminates cleanly on the last stage.
DEFAULT_THRESHOLD_CODE = 153
BANK_VOLTAGE_LIMIT = 0.050

# (sample, amplify) ticks per stage; high-resistance stages settle slower.
DEFAULT_STAGE_PHASES = ((20, 20), (20, 20), (40, 40), (80, 80), (160, 160))


@dataclass(frozen=True)
class DacConfig:
    bits: int = 8
    v_min_volts: float = 0.05
    v_max_volts: float = 3.0

    def __post_init__(self):
        if not self.v_min_volts < self.v_max_volts:
            raise InputError("DAC v_min must be below v_max")

    @property
    def max_code(self) -> int:
        return (1 << self.bits) - 1

    @property
    def lsb(self) -> float:
        return (self.v_max_volts - self.v_min_volts) / self.max_code


@dataclass(frozen=True)
class AdcConfig:
    bits: int = 12
    v_lo_volts: float = 0.1
    v_hi_volts: float = 1.7
    sample_rate_hz: float = 250e3

    def __post_init__(self):
        if not self.v_lo_volts < self.v_hi_volts:
            raise InputError("ADC v_lo must be below v_hi")

    @property
    def max_code(self) -> int:
        return (1 << self.bits) - 1

    @property
    def lsb(self) -> float:
        return (self.v_hi_volts - self.v_lo_volts) / self.max_code


def _default_threshold() -> float:
    adc = AdcConfig()
    return adc.v_lo_volts + DEFAULT_THRESHOLD_CODE * adc.lsb


@dataclass(frozen=True)
class ResistorBank:
    r_ohms: tuple[float, ...] = DEFAULT_BANK_OHMS
    amp_gain: float = DEFAULT_GAIN
    v_threshold_volts: float = field(default_factory=_default_threshold)
    stage_phases: tuple[tuple[int, int], ...] = DEFAULT_STAGE_PHASES

    def __post_init__(self):
        object.__setattr__(self, "r_ohms", tuple(float(r) for r in self.r_ohms))
        object.__setattr__(self, "stage_phases", tuple(tuple(p) for p in self.stage_phases))
        if len(self.r_ohms) != N_STAGES:
            raise InputError(f"resistor bank needs exactly {N_STAGES} stages")
        if any(r <= 0 for r in self.r_ohms):
            raise InputError("bank resistors must be positive")
        if any(b <= a for a, b in zip(self.r_ohms, self.r_ohms[1:])):
            raise InputError("bank resistors must be strictly increasing")
        if self.amp_gain <= 0 or self.v_threshold_volts <= 0:
            raise InputError("amp_gain and v_threshold_volts must be positive")
        if len(self.stage_phases) != N_STAGES:
            raise InputError(f"need {N_STAGES} (sample, amplify) phase pairs")

    def crossover_current(self, k: int) -> float:
        """Input current above which stage ``k`` terminates the search."""
        return self.v_threshold_volts / (self.amp_gain * self.r_ohms[k])

    def stage_ticks(self, k: int) -> int:
        """Ticks spent in the converter when the search ends on stage ``k``."""
        return sum(s + a for s, a in self.stage_phases[: k + 1])


@dataclass(frozen=True)
class TheveninSource:
    v_open_volts: float
    r_source_ohms: float

    def __post_init__(self):
        if not self.r_source_ohms > 0:
            raise InputError("r_source_ohms must be positive")
        if not (math.isfinite(self.v_open_volts) and math.isfinite(self.r_source_ohms)):
            raise InputError("source parameters must be finite")

    @classmethod
    def current_source(cls, amps: float, r_source_ohms: float = 1e12) -> TheveninSource:
        """A stiff source: the bank resistors are negligible against ``r_source_ohms``."""
        return cls(amps * r_source_ohms, r_source_ohms)


@dataclass(frozen=True)
class ReadoutResult:
    adc_code: int
    gain_sel: int
    saturated_low: bool = False
    saturated_high: bool = False

    def __post_init__(self):
        if not 0 <= self.adc_code <= 0xFFF:
            raise InputError("adc_code is 12 bits")
        if self.gain_sel <= 0 or self.gain_sel >= 1 << N_STAGES or self.gain_sel & (self.gain_sel - 1):
            raise InputError(f"gain_sel {self.gain_sel:#x} is not one-hot over {N_STAGES} bits")

    @property
    def stage(self) -> int:
        return self.gain_sel.bit_length() - 1


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def dac_code_to_voltage(code: int, cfg: DacConfig = DacConfig()) -> float:
    if not 0 <= code <= cfg.max_code:
        raise InputError(f"DAC code {code} out of range")
    return cfg.v_min_volts + code * (cfg.v_max_volts - cfg.v_min_volts) / cfg.max_code


def voltage_to_dac_code(v: float, cfg: DacConfig = DacConfig()) -> int:
    if not math.isfinite(v):
        raise InputError(f"non-finite voltage {v!r}")
    x = (v - cfg.v_min_volts) / (cfg.v_max_volts - cfg.v_min_volts) * cfg.max_code
    return min(max(_round_half_up(x), 0), cfg.max_code)


def adc_sample(v: float, cfg: AdcConfig = AdcConfig()) -> int:
    if not math.isfinite(v):
        raise InputError(f"non-finite voltage {v!r}")
    v = min(max(v, cfg.v_lo_volts), cfg.v_hi_volts)
    return _round_half_up((v - cfg.v_lo_volts) / (cfg.v_hi_volts - cfg.v_lo_volts) * cfg.max_code)


def adc_code_to_voltage(code: int, cfg: AdcConfig = AdcConfig()) -> float:
    if not 0 <= code <= cfg.max_code:
        raise InputError(f"ADC code {code} out of range")
    return cfg.v_lo_volts + code * (cfg.v_hi_volts - cfg.v_lo_volts) / cfg.max_code


def threshold_code_to_voltage(code: int, cfg: AdcConfig = AdcConfig()) -> float:
    return adc_code_to_voltage(code, cfg)


def amplified_output(src: TheveninSource, bank: ResistorBank, k: int) -> float:
    i_k = src.v_open_volts / (src.r_source_ohms + bank.r_ohms[k])
    return bank.amp_gain * i_k * bank.r_ohms[k]


def autorange_convert(src: TheveninSource, bank: ResistorBank = ResistorBank(),
                      adc: AdcConfig = AdcConfig(), noise_sigma_volts: float = 0.0,
                      rng: np.random.Generator | None = None) -> ReadoutResult:
    """Run the comparator-terminated stage search and digitise the result.

    ``noise_sigma_volts`` adds Gaussian input-referred noise to the bank
    voltage at every comparison; it needs a seeded ``rng``.
    """
    if noise_sigma_volts and rng is None:
        raise InputError("noise needs a seeded numpy Generator")
    # H-bridge commutes polarity ahead of the converter.
    src_mag = TheveninSource(abs(src.v_open_volts), src.r_source_ohms)

    last = N_STAGES - 1
    for k in range(N_STAGES):
        v_amp = amplified_output(src_mag, bank, k)
        if noise_sigma_volts:
            v_amp += bank.amp_gain * rng.normal(0.0, noise_sigma_volts)
        if v_amp > bank.v_threshold_volts or k == last:
            break

    return ReadoutResult(
        adc_code=adc_sample(v_amp, adc),
        gain_sel=1 << k,
        saturated_low=(k == last and v_amp <= bank.v_threshold_volts),
        saturated_high=v_amp > adc.v_hi_volts,
    )


def reconstruct_current(r: ReadoutResult, bank: ResistorBank = ResistorBank(),
                        adc: AdcConfig = AdcConfig()) -> float:
    """Invert the chain: ADC code and selected stage back to input current.

    Saturated readouts return the clamped floor/ceiling value; callers carry
    the result's flags as a quality annotation.
    """
    k = r.stage
    return adc_code_to_voltage(r.adc_code, adc) / (bank.amp_gain * bank.r_ohms[k])
