"""Resistive device-under-test models and the 1T1R cell series path.

All devices are ohmic at any instant; a bistable memristor flips between two
resistance levels when a write pulse exceeds both its voltage threshold and
its minimum switching width.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

from .errors import InputError, PulseWidthError

R_DUT_MIN = 1e3
R_DUT_MAX = 1e7
V_TERMINAL_MAX = 5.0
MIN_PULSE_WIDTH_S = 5e-9

R_STUCK_SHORT = 100.0
R_STUCK_OPEN = 1e12

# Float slack for widths built as ticks * 5 ns.
_WIDTH_EPS = 1e-18


class Variant(enum.Enum):
    LINEAR = "LinearResistor"
    BISTABLE = "BistableMemristor"
    DEFECTIVE = "Defective"


class DefectKind(enum.Enum):
    STUCK_OPEN = "StuckOpen"
    STUCK_SHORT = "StuckShort"


@dataclass(frozen=True)
class DeviceModelSpec:
    variant: Variant
    resistance_ohms: float = 1e5
    r_low_ohms: float = 1e3
    r_high_ohms: float = 1e6
    v_set_volts: float = 1.5
    v_reset_volts: float = 1.5
    min_switch_width_s: float = 10e-9
    defect_kind: DefectKind | None = None

    def __post_init__(self):
        if self.variant is Variant.LINEAR:
            _check_band(self.resistance_ohms, "resistance_ohms")
        elif self.variant is Variant.BISTABLE:
            _check_band(self.r_low_ohms, "r_low_ohms")
            _check_band(self.r_high_ohms, "r_high_ohms")
            if not self.r_low_ohms < self.r_high_ohms:
                raise InputError("r_low_ohms must be below r_high_ohms")
            if self.v_set_volts <= 0 or self.v_reset_volts <= 0:
                raise InputError("switching thresholds are magnitudes and must be positive")
            if self.min_switch_width_s <= 0:
                raise InputError("min_switch_width_s must be positive")
        elif self.variant is Variant.DEFECTIVE:
            if self.defect_kind is None:
                raise InputError("Defective devices need a defect_kind")

    @classmethod
    def linear(cls, resistance_ohms: float) -> DeviceModelSpec:
        return cls(Variant.LINEAR, resistance_ohms=resistance_ohms)

    @classmethod
    def bistable(cls, r_low_ohms=1e3, r_high_ohms=1e6, v_set_volts=1.5, v_reset_volts=1.5,
                 min_switch_width_s=10e-9) -> DeviceModelSpec:
        return cls(Variant.BISTABLE, r_low_ohms=r_low_ohms, r_high_ohms=r_high_ohms,
                   v_set_volts=v_set_volts, v_reset_volts=v_reset_volts,
                   min_switch_width_s=min_switch_width_s)

    @classmethod
    def defective(cls, kind: DefectKind) -> DeviceModelSpec:
        return cls(Variant.DEFECTIVE, defect_kind=kind)

    def initial_state(self, high: bool = True) -> DeviceState:
        """Fresh state; bistable devices start in HRS unless ``high`` is False."""
        if self.variant is Variant.LINEAR:
            r = self.resistance_ohms
        elif self.variant is Variant.BISTABLE:
            r = self.r_high_ohms if high else self.r_low_ohms
        else:
            r = defect_resistance(self.defect_kind)
        return DeviceState(r)


@dataclass(frozen=True)
class DeviceState:
    current_resistance_ohms: float
    switch_count: int = 0


@dataclass(frozen=True)
class CellElectrical:
    r_access_on_ohms: float = 50.0
    r_off_ohms: float = 1e10

    def __post_init__(self):
        if not 0 < self.r_access_on_ohms < R_DUT_MIN:
            raise InputError("r_access_on_ohms must be positive and well below 1 kOhm")
        if self.r_off_ohms < 1e10:
            raise InputError("r_off_ohms must be at least 1e10")


def _check_band(r, name):
    if not (R_DUT_MIN <= r <= R_DUT_MAX):
        raise InputError(f"{name}={r!r} outside [{R_DUT_MIN:g}, {R_DUT_MAX:g}] ohm")


def defect_resistance(kind: DefectKind) -> float:
    return R_STUCK_OPEN if kind is DefectKind.STUCK_OPEN else R_STUCK_SHORT


def device_current(state: DeviceState, spec: DeviceModelSpec, v_across: float) -> float:
    if not math.isfinite(v_across):
        raise InputError(f"non-finite voltage {v_across!r}")
    if abs(v_across) > V_TERMINAL_MAX:
        raise InputError(f"|v_across|={abs(v_across):g} V exceeds {V_TERMINAL_MAX} V")
    return v_across / state.current_resistance_ohms


def apply_write_pulse(state: DeviceState, spec: DeviceModelSpec, v_across: float,
                      width_s: float) -> DeviceState:
    """Return the device state after a rectangular pulse of ``v_across`` volts.

    Positive pulses at or beyond ``v_set`` drive a bistable device to LRS,
    negative pulses at or beyond ``-v_reset`` drive it to HRS. The switch
    counter only advances on an actual transition, so repeated pulses of the
    same polarity are idempotent.
    """
    if not math.isfinite(v_across) or not math.isfinite(width_s):
        raise InputError("pulse amplitude and width must be finite")
    if width_s < MIN_PULSE_WIDTH_S - _WIDTH_EPS:
        raise PulseWidthError(f"pulse width {width_s:g} s below the 5 ns minimum")
    if spec.variant is not Variant.BISTABLE:
        return state
    if width_s < spec.min_switch_width_s - _WIDTH_EPS:
        return state

    if v_across >= spec.v_set_volts:
        target = spec.r_low_ohms
    elif v_across <= -spec.v_reset_volts:
        target = spec.r_high_ohms
    else:
        return state
    if state.current_resistance_ohms == target:
        return state
    return replace(state, current_resistance_ohms=target, switch_count=state.switch_count + 1)


def cell_path_resistance(state: DeviceState, cell: CellElectrical, selected: bool) -> float:
    if not selected:
        return cell.r_off_ohms
    return state.current_resistance_ohms + cell.r_access_on_ohms
