"""Converter transfer curves and gain-plateau analysis."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..config import ChipConfig
from ..frontend import TheveninSource, adc_code_to_voltage, autorange_convert


@dataclass(frozen=True)
class TransferCurve:
    currents: np.ndarray
    adc_codes: np.ndarray
    stages: np.ndarray
    volts: np.ndarray  # decoded ADC input voltage


@dataclass(frozen=True)
class Plateau:
    first: int  # index into the curve, inclusive
    last: int
    slope_ohms: float  # median dV/dI over the run
    stage: int


def log_current_grid(i_min: float, i_max: float, n: int) -> np.ndarray:
    return np.geomspace(i_min, i_max, n)


def transfer_curve(currents, cfg: ChipConfig = ChipConfig()) -> TransferCurve:
    """Drive each current through the auto-ranging converter from a stiff source."""
    bank = cfg.bank()
    currents = np.asarray(currents, dtype=float)
    codes = np.empty(currents.size, dtype=int)
    stages = np.empty(currents.size, dtype=int)
    for n, i in enumerate(currents):
        res = autorange_convert(TheveninSource.current_source(float(i)), bank, cfg.adc)
        codes[n], stages[n] = res.adc_code, res.stage
    volts = np.array([adc_code_to_voltage(int(c), cfg.adc) for c in codes])
    return TransferCurve(currents, codes, stages, volts)


def gain_plateaus(curve: TransferCurve, min_points: int = 3) -> list[Plateau]:
    """Split the curve into monotone rising runs; each run is one gain plateau.

    A stage hand-off shows up as the decoded voltage falling back toward the
    threshold, so runs are broken wherever the voltage does not increase.
    The stage of each run is taken from the output alone (its slope), not
    from the recorded stage selection.
    """
    v, i = curve.volts, curve.currents
    breaks = np.flatnonzero(np.diff(v) <= 0) + 1
    bounds = np.concatenate(([0], breaks, [v.size]))
    out = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        if b - a < min_points:
            continue
        slope = float(np.median(np.diff(v[a:b]) / np.diff(i[a:b])))
        out.append(Plateau(int(a), int(b - 1), slope, int(np.bincount(curve.stages[a:b]).argmax())))
    return out


def stage_boundaries(curve: TransferCurve) -> list[tuple[int, float]]:
    """(new stage, first current on it) for every change in selected stage."""
    idx = np.flatnonzero(np.diff(curve.stages) != 0) + 1
    return [(int(curve.stages[k]), float(curve.currents[k])) for k in idx]


__all__ = ["TransferCurve", "Plateau", "log_current_grid", "transfer_curve", "gain_plateaus",
           "stage_boundaries"]
