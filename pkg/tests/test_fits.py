import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nevlab.fits import fit_power_law


def test_exact_square():
    fit = fit_power_law([(j, j * j) for j in range(1, 41)])
    assert abs(fit.exponent - 2) <= 1e-12
    assert fit.residual <= 1e-12
    assert fit.window == (3, 40)


def test_constant_sequence():
    fit = fit_power_law([(j, 0.5) for j in range(-20, 21) if j])
    assert abs(fit.exponent) <= 1e-9


def test_window_is_recorded_and_enforced():
    data = [(j, j ** 1.5) for j in range(1, 100)]
    fit = fit_power_law(data, 5, 40)
    assert fit.window == (5, 40)
    with pytest.raises(ValueError):
        fit_power_law(data, 5, 9)
    with pytest.raises(ValueError):
        fit_power_law([(j, 0.0) for j in range(1, 20)])


@given(st.floats(-3, 3), st.floats(0.01, 100))
def test_recovers_any_power_law(e, c):
    fit = fit_power_law([(j, c * j ** e) for j in range(3, 30)])
    assert abs(fit.exponent - e) <= 1e-9
    assert fit.constant == pytest.approx(c, rel=1e-8)


def test_json_round_trip():
    import json
    fit = fit_power_law([(j, 2.0 * j) for j in range(3, 12)])
    d = json.loads(fit.to_json())
    assert d["window"] == [3, 11] and abs(d["exponent"] - 1) < 1e-12
