import math

import numpy as np
import pytest

from containment.errors import NegativeTime
from containment.gains import (
    Flag, GainSpec, PRESETS, classify, closed_form_integral, cumulative_integral, derivative,
    evaluate, gain_from_params, integral_to, numeric_witness, square_integral_to,
)

H, F, U = Flag.HOLDS, Flag.FAILS, Flag.UNKNOWN


def test_point_values():
    assert evaluate(GainSpec.log_over_linear(), 0.0) == 0.0
    assert evaluate(GainSpec.power_law(1.0, 1.0), 1.0) == 0.5
    assert evaluate(GainSpec.log_over_linear(), math.e - 1) == pytest.approx(1 / math.e, rel=1e-15)


def test_negative_time():
    with pytest.raises(NegativeTime):
        evaluate(GainSpec.constant(), -0.1)
    with pytest.raises(NegativeTime):
        integral_to(GainSpec.constant(), -1.0)


@pytest.mark.parametrize("gain, flags", [
    (GainSpec.log_over_linear(), (H, H, H)),
    (GainSpec.constant(1.0), (H, F, F)),
    (GainSpec.power_law(1.0, 2.0), (F, H, H)),
    (GainSpec.power_law(1.0, 1.0), (H, H, H)),
    (GainSpec.power_law(1.0, 0.5), (H, F, H)),
    (GainSpec.power_law(1.0, 0.0), (H, F, F)),
    (GainSpec.power_law(1.0, 0.75), (H, H, H)),
])
def test_classification_table(gain, flags):
    assert classify(gain).as_tuple() == flags


def test_custom_classification():
    g = GainSpec.custom([0, 1, 2], [1.0, 0.5, 0.0])
    assert classify(g).as_tuple() == (U, U, H)
    assert evaluate(g, 0.5) == 0.75
    assert evaluate(g, 10.0) == 0.0


def test_integrals_known_values():
    assert integral_to(GainSpec.power_law(1, 1), math.e - 1) == pytest.approx(1.0, abs=1e-8)
    assert integral_to(GainSpec.constant(1), 10) == pytest.approx(10.0, abs=1e-8)
    assert square_integral_to(GainSpec.constant(1), 10) == pytest.approx(10.0, abs=1e-8)
    assert integral_to(GainSpec.log_over_linear(), math.e - 1) == pytest.approx(0.5, abs=1e-8)


@pytest.mark.parametrize("gain", [GainSpec.log_over_linear(2.0), GainSpec.power_law(1.5, 0.7),
                                  GainSpec.power_law(1.0, 2.0), GainSpec.power_law(1.0, 1.0),
                                  GainSpec.constant(0.3)])
@pytest.mark.parametrize("T", [0.5, 7.0, 300.0, 5e4])
def test_quadrature_matches_closed_form(gain, T):
    assert integral_to(gain, T) == pytest.approx(closed_form_integral(gain, T), rel=1e-6)


def test_square_integral_closed_form():
    # int_0^T log(t+1)^2/(t+1)^2 dt = 2 - (u^2 + 2u + 2)/e^u with u = log(T+1)
    u = math.log(101.0)
    ref = 2.0 - (u * u + 2 * u + 2) * math.exp(-u)
    assert square_integral_to(GainSpec.log_over_linear(), 100.0) == pytest.approx(ref, rel=1e-8)


def test_integral_monotone():
    g = GainSpec.log_over_linear()
    vals = [integral_to(g, T) for T in np.linspace(0, 200, 21)]
    assert np.all(np.diff(vals) >= 0)


def test_derivatives_match_finite_differences():
    t = np.array([0.0, 0.3, 2.0, 40.0])
    for g in (GainSpec.log_over_linear(1.3), GainSpec.power_law(2.0, 0.6), GainSpec.constant(4.0)):
        fd = (evaluate(g, t + 1e-6) - evaluate(g, t)) / 1e-6
        np.testing.assert_allclose(derivative(g, t), fd, rtol=1e-4, atol=1e-6)
    g = GainSpec.custom([0, 1, 3], [0.0, 2.0, 1.0])
    assert derivative(g, 0.5) == pytest.approx(2.0)
    assert derivative(g, 2.0) == pytest.approx(-0.5)


def test_witness_trends():
    w = numeric_witness(GainSpec.log_over_linear(), horizons=(1e2, 1e3, 1e4, 1e5))
    # divergent mass keeps growing; squared mass has a Cauchy tail
    assert np.all(np.diff(w["integral"]) > 1.0)
    sq_steps = np.diff(w["square_integral"])
    assert np.all(sq_steps > 0) and np.all(np.diff(sq_steps) < 0)
    assert w["square_integral"][-1] < 2.0
    w2 = numeric_witness(GainSpec.power_law(1, 2), horizons=(1e6, 1e7))
    assert abs(w2["integral"][1] - w2["integral"][0]) < 1e-6


def test_cumulative_integral_grid():
    g = GainSpec.power_law(1.0, 2.0)
    grid = np.linspace(0, 5, 11)
    np.testing.assert_allclose(cumulative_integral(g, grid), 1 - 1 / (grid + 1))
    c = GainSpec.custom([0, 2], [1.0, 1.0])
    np.testing.assert_allclose(cumulative_integral(c, grid), grid)


def test_family_names_and_presets():
    assert gain_from_params("log-over-linear", c=2.0).c == 2.0
    assert gain_from_params("power-law", c=1.0, p=2.0).p == 2.0
    assert PRESETS["inverse-square"].classification.A2 == F
    with pytest.raises(ValueError):
        gain_from_params("sine")
    with pytest.raises(ValueError):
        GainSpec.constant(-1.0)
