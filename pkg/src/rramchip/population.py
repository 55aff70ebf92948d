"""Array population files: which device sits in which cell.

A population is a JSON document (schema in ``docs/population.md``) holding a
seed, a default device, randomised regions and explicit per-cell overrides.
Building it is deterministic in the seed: regions are drawn in file order
from a single ``numpy`` generator.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .array import (
    KIND_BISTABLE,
    KIND_LINEAR,
    KIND_STUCK_OPEN,
    KIND_STUCK_SHORT,
    N_COLS,
    N_ROWS,
    N_SUB_ARRAYS,
    SubArrayState,
)
from .devices import (
    R_DUT_MAX,
    R_DUT_MIN,
    R_STUCK_OPEN,
    R_STUCK_SHORT,
    DefectKind,
    DeviceModelSpec,
    Variant,
)
from .errors import InputError

SCHEMA_VERSION = 1


def spec_from_dict(d: dict) -> DeviceModelSpec:
    variant = Variant(d.get("variant", Variant.LINEAR.value))
    if variant is Variant.LINEAR:
        return DeviceModelSpec.linear(float(d.get("resistance_ohms", 1e5)))
    if variant is Variant.BISTABLE:
        return DeviceModelSpec.bistable(
            float(d.get("r_low_ohms", 1e3)), float(d.get("r_high_ohms", 1e6)),
            float(d.get("v_set_volts", 1.5)), float(d.get("v_reset_volts", 1.5)),
            float(d.get("min_switch_width_s", 10e-9)))
    return DeviceModelSpec.defective(DefectKind(d["defect_kind"]))


class Population:
    def __init__(self, doc: dict):
        if doc.get("version", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise InputError(f"unsupported population version {doc.get('version')}")
        if "seed" not in doc:
            raise InputError("population needs a seed")
        self.doc = doc
        self.seed = int(doc["seed"])

    @classmethod
    def load(cls, path) -> Population:
        with open(Path(path), encoding="utf-8") as fh:
            return cls(json.load(fh))

    def save(self, path):
        Path(path).write_text(json.dumps(self.doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def log_uniform(cls, seed: int, sub_arrays=range(N_SUB_ARRAYS), r_min=R_DUT_MIN, r_max=R_DUT_MAX,
                    stuck_open=0.0, stuck_short=0.0) -> Population:
        """Linear resistors log-uniform in [r_min, r_max] over whole sub-arrays."""
        regions = [{
            "sub_array": sa, "rows": [0, N_ROWS], "cols": [0, N_COLS],
            "variant": Variant.LINEAR.value, "distribution": "log_uniform",
            "r_min_ohms": r_min, "r_max_ohms": r_max,
            "defects": {"StuckOpen": stuck_open, "StuckShort": stuck_short},
        } for sa in sub_arrays]
        return cls({"version": SCHEMA_VERSION, "seed": seed, "regions": regions, "cells": []})

    @property
    def chip_id(self) -> int:
        """16-bit identity of this population, exposed in the CHIP_ID register."""
        canon = json.dumps(self.doc, sort_keys=True).encode()
        return int.from_bytes(hashlib.sha256(canon).digest()[:2], "big")

    def build(self) -> list[SubArrayState]:
        default = spec_from_dict(self.doc.get("default", {"variant": "LinearResistor"}))
        arrays = [SubArrayState(default) for _ in range(N_SUB_ARRAYS)]
        rng = np.random.default_rng(self.seed)
        for region in self.doc.get("regions", []):
            _fill_region(arrays[int(region["sub_array"])], region, rng)
        for cell in self.doc.get("cells", []):
            spec = spec_from_dict(cell)
            high = cell.get("state", "HRS") != "LRS"
            arrays[int(cell["sub_array"])].set_device(int(cell["row"]), int(cell["col"]), spec,
                                                      spec.initial_state(high))
        return arrays


def _fill_region(arr: SubArrayState, region: dict, rng: np.random.Generator):
    r0, r1 = region.get("rows", [0, N_ROWS])
    c0, c1 = region.get("cols", [0, N_COLS])
    if not (0 <= r0 < r1 <= N_ROWS and 0 <= c0 < c1 <= N_COLS):
        raise InputError(f"region bounds rows={r0, r1} cols={c0, c1} out of range")
    idx = (slice(r0, r1), slice(c0, c1))
    shape = (r1 - r0, c1 - c0)
    variant = Variant(region.get("variant", Variant.LINEAR.value))
    sigma = float(region.get("variability_sigma", 0.0))

    if variant is Variant.LINEAR:
        if region.get("distribution", "fixed") == "log_uniform":
            lo = np.log(float(region.get("r_min_ohms", R_DUT_MIN)))
            hi = np.log(float(region.get("r_max_ohms", R_DUT_MAX)))
            r = np.exp(rng.uniform(lo, hi, shape))
        else:
            r = np.full(shape, float(region.get("resistance_ohms", 1e5)))
        if sigma:
            r = r * rng.lognormal(0.0, sigma, shape)
        arr.kind[idx] = KIND_LINEAR
        arr.resistance[idx] = np.clip(r, R_DUT_MIN, R_DUT_MAX)
    elif variant is Variant.BISTABLE:
        nominal = spec_from_dict(region)
        r_low = np.full(shape, nominal.r_low_ohms)
        r_high = np.full(shape, nominal.r_high_ohms)
        if sigma:
            r_low = r_low * rng.lognormal(0.0, sigma, shape)
            r_high = r_high * rng.lognormal(0.0, sigma, shape)
        r_low = np.clip(r_low, R_DUT_MIN, R_DUT_MAX)
        r_high = np.clip(r_high, R_DUT_MIN, R_DUT_MAX)
        r_high = np.maximum(r_high, np.nextafter(r_low, np.inf))
        state = region.get("state", "HRS")
        if state == "random":
            high = rng.random(shape) < 0.5
        else:
            high = np.full(shape, state != "LRS")
        arr.kind[idx] = KIND_BISTABLE
        arr.r_low[idx] = r_low
        arr.r_high[idx] = r_high
        arr.v_set[idx] = nominal.v_set_volts
        arr.v_reset[idx] = nominal.v_reset_volts
        arr.min_width[idx] = nominal.min_switch_width_s
        arr.resistance[idx] = np.where(high, r_high, r_low)
    else:
        kind = KIND_STUCK_OPEN if region["defect_kind"] == "StuckOpen" else KIND_STUCK_SHORT
        arr.kind[idx] = kind
        arr.resistance[idx] = R_STUCK_OPEN if kind == KIND_STUCK_OPEN else R_STUCK_SHORT
    arr.switch_count[idx] = 0

    defects = region.get("defects", {})
    p_open = float(defects.get("StuckOpen", 0.0))
    p_short = float(defects.get("StuckShort", 0.0))
    if p_open or p_short:
        if p_open < 0 or p_short < 0 or p_open + p_short > 1:
            raise InputError("defect rates must be probabilities summing to at most 1")
        u = rng.random(shape)
        sub_kind = arr.kind[idx]
        sub_r = arr.resistance[idx]
        is_open = u < p_open
        is_short = (u >= p_open) & (u < p_open + p_short)
        sub_kind[is_open] = KIND_STUCK_OPEN
        sub_r[is_open] = R_STUCK_OPEN
        sub_kind[is_short] = KIND_STUCK_SHORT
        sub_r[is_short] = R_STUCK_SHORT


__all__ = ["Population", "spec_from_dict"]
