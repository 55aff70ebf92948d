import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from rramchip.devices import (
    MIN_PULSE_WIDTH_S,
    R_STUCK_OPEN,
    CellElectrical,
    DefectKind,
    DeviceModelSpec,
    DeviceState,
    Variant,
    apply_write_pulse,
    cell_path_resistance,
    device_current,
)
from rramchip.errors import InputError, PulseWidthError

BISTABLE = DeviceModelSpec.bistable(r_low_ohms=1e3, r_high_ohms=1e6)
HRS = BISTABLE.initial_state(high=True)
LRS = BISTABLE.initial_state(high=False)


def test_ohmic_current_examples():
    spec = DeviceModelSpec.linear(1e3)
    assert device_current(spec.initial_state(), spec, 1.5) == pytest.approx(1.5e-3)
    assert device_current(spec.initial_state(), spec, 0.0) == 0.0
    big = DeviceModelSpec.linear(1e7)
    assert device_current(big.initial_state(), big, 0.5) == pytest.approx(50e-9)


def test_terminal_limit_and_nonfinite_rejected():
    spec = DeviceModelSpec.linear(1e3)
    with pytest.raises(InputError):
        device_current(spec.initial_state(), spec, 5.01)
    with pytest.raises(InputError):
        device_current(spec.initial_state(), spec, math.nan)


def test_set_and_reset():
    after = apply_write_pulse(HRS, BISTABLE, 1.5, 100e-9)
    assert after.current_resistance_ohms == 1e3 and after.switch_count == 1
    assert apply_write_pulse(LRS, BISTABLE, 0.5, 100e-9) == LRS
    reset = apply_write_pulse(LRS, BISTABLE, -1.5, 100e-9)
    assert reset.current_resistance_ohms == 1e6


def test_short_pulses():
    # Above the hard minimum but under the switching width: no change.
    assert apply_write_pulse(HRS, BISTABLE, 2.0, 5e-9) == HRS
    with pytest.raises(PulseWidthError):
        apply_write_pulse(HRS, BISTABLE, 2.0, 4e-9)


def test_non_bistable_devices_never_switch():
    for spec in (DeviceModelSpec.linear(5e4), DeviceModelSpec.defective(DefectKind.STUCK_OPEN)):
        st0 = spec.initial_state()
        assert apply_write_pulse(st0, spec, 3.0, 1e-6) == st0


def test_path_resistance():
    cell = CellElectrical()
    st0 = DeviceModelSpec.linear(1e3).initial_state()
    assert cell_path_resistance(st0, cell, True) == 1050.0
    assert cell_path_resistance(st0, cell, False) == 1e10
    open_spec = DeviceModelSpec.defective(DefectKind.STUCK_OPEN)
    assert cell_path_resistance(open_spec.initial_state(), cell, True) >= R_STUCK_OPEN


def test_spec_validation():
    with pytest.raises(InputError):
        DeviceModelSpec.linear(10.0)
    with pytest.raises(InputError):
        DeviceModelSpec.bistable(r_low_ohms=1e6, r_high_ohms=1e3)
    assert DeviceModelSpec.defective(DefectKind.STUCK_SHORT).variant is Variant.DEFECTIVE


voltages = st.floats(-5, 5, allow_nan=False)
widths = st.floats(MIN_PULSE_WIDTH_S, 1e-5)


@given(st.lists(st.tuples(voltages, widths), max_size=20), st.booleans())
def test_state_stays_on_two_levels(pulses, high):
    state = BISTABLE.initial_state(high)
    for v, w in pulses:
        new = apply_write_pulse(state, BISTABLE, v, w)
        assert new.current_resistance_ohms in (1e3, 1e6)
        assert new.switch_count - state.switch_count == int(new != state)
        state = new


@given(voltages, widths, st.booleans())
def test_pulse_idempotent(v, w, high):
    once = apply_write_pulse(BISTABLE.initial_state(high), BISTABLE, v, w)
    assert apply_write_pulse(once, BISTABLE, v, w) == once


@given(st.floats(-1.49, 1.49), widths)
def test_subthreshold_never_switches(v, w):
    assert apply_write_pulse(HRS, BISTABLE, v, w) == HRS
    assert apply_write_pulse(LRS, BISTABLE, v, w) == LRS


def test_device_state_fields():
    s = DeviceState(2e3, 0)
    assert s.current_resistance_ohms == 2e3
