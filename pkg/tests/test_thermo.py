import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hofsc.errors import AdmissibilityError, ConfigError, GapError
from hofsc.lattice_model import FluxRational
from hofsc.thermo import (ThermoParams, density, density_zero_temperature, fermi_dirac,
                          grand_potential_density, hall_current, hall_current_from_flow,
                          magnetization, pressure, pressure_zero_temperature, streda_check)

FLUX = FluxRational(1, 3)


def test_fermi_dirac_values():
    assert fermi_dirac(0.0, 5.0, 0.0) == pytest.approx(0.5)
    assert fermi_dirac(1.0, 2.0, 0.0) == pytest.approx(1 / (1 + np.exp(2.0)))
    assert fermi_dirac(-1e6, 1.0, 0.0) == 1.0
    assert fermi_dirac(1e6, 1.0, 0.0) == 0.0
    with pytest.raises(ConfigError):
        fermi_dirac(0.0, 0.0, 0.0)


def test_grand_potential_overflow_free():
    assert grand_potential_density(-1e4, 10.0, 0.0) == pytest.approx(1e4)
    assert grand_potential_density(1e4, 10.0, 0.0) == 0.0


def test_params_validation():
    for bad in (dict(beta=np.inf, mu=0.0), dict(beta=-1.0, mu=0.0), dict(beta=1.0, mu=0.0, epsilon=-0.1),
                dict(beta=1.0, mu=0.0, N=4)):
        with pytest.raises(ConfigError):
            ThermoParams(**bad)


def test_pressure_golden_value():
    # independent oracle: per-site trace of beta^-1 ln(1 + e^{-beta(H - mu)}) on an L = 48 torus
    assert pressure(FLUX, ThermoParams(5.0, 0.0)) == pytest.approx(0.8769404542884575, abs=1e-11)


def test_pressure_vanishes_far_below_spectrum():
    assert pressure(FLUX, ThermoParams(2.0, -30.0)) < 1e-20


def test_full_filling_density_is_one():
    for eps in (0.0, 0.01, 0.05):
        assert density(FLUX, ThermoParams(20.0, 40.0, eps, 1.0)) == pytest.approx(1.0, abs=1e-8)


def test_density_is_mu_derivative_of_pressure():
    h = 1e-5
    p = lambda mu: pressure(FLUX, ThermoParams(3.0, mu, 0.02, 1.0))
    fd = (p(0.3 + h) - p(0.3 - h)) / (2 * h)
    assert density(FLUX, ThermoParams(3.0, 0.3, 0.02, 1.0)) == pytest.approx(fd, abs=1e-8)


@settings(max_examples=20, deadline=None)
@given(st.floats(-4, 4), st.floats(0.01, 1.0))
def test_density_increases_with_mu(mu, dmu):
    lo = density(FLUX, ThermoParams(2.0, mu, 0.01, 1.0), check=False)
    hi = density(FLUX, ThermoParams(2.0, mu + dmu, 0.01, 1.0), check=False)
    assert hi >= lo


@pytest.mark.parametrize("b", [1.0, -2.0])
def test_magnetization_is_field_derivative(b):
    params = ThermoParams(4.0, -0.5, 0.01, b)
    formula = magnetization(FLUX, params)
    assert magnetization(FLUX, params, "finite_difference") == pytest.approx(formula, abs=1e-9)
    h = 1e-4
    p = lambda eps: pressure(FLUX, ThermoParams(4.0, -0.5, eps, b))
    assert (p(0.01 + h) - p(0.01 - h)) / (2 * h) / b == pytest.approx(formula, abs=1e-6)


def test_magnetization_unknown_method():
    with pytest.raises(ConfigError):
        magnetization(FLUX, ThermoParams(1.0, 0.0), "other")


def test_single_band_has_no_magnetization():
    assert magnetization(FluxRational(0, 1), ThermoParams(2.0, 0.5)) == pytest.approx(0.0, abs=1e-14)


def test_even_denominator_rejected():
    with pytest.raises(GapError) as err:
        pressure(FluxRational(1, 2), ThermoParams(1.0, 0.0))
    assert err.value.pair == (1, 2)


def test_zero_temperature_density_counts_chern():
    assert density_zero_temperature(FLUX, -1.5) == pytest.approx(1 / 3, abs=1e-13)
    assert density_zero_temperature(FLUX, -1.5, 0.02, 1.0) == pytest.approx(1 / 3 + 0.02 / (2 * np.pi), abs=1e-10)
    # two bands filled: c1 + c2 = -1
    assert density_zero_temperature(FLUX, 1.5, 0.02, 1.0) == pytest.approx(2 / 3 - 0.02 / (2 * np.pi), abs=1e-10)
    with pytest.raises(AdmissibilityError):
        density_zero_temperature(FLUX, -2.5)


def test_zero_temperature_pressure_is_low_temperature_limit():
    p0 = pressure_zero_temperature(FLUX, -1.5, 0.01, 1.0)
    assert pressure(FLUX, ThermoParams(200.0, -1.5, 0.01, 1.0)) == pytest.approx(p0, abs=1e-10)


@pytest.mark.parametrize("filled,csum", [(1, 1), (2, -1)])
def test_streda(filled, csum):
    res = streda_check(FLUX, filled)
    assert res.chern_sum == csum
    assert res.residual <= 1e-6
    assert res.intercept == pytest.approx(filled / 3, abs=1e-12)


def test_hall_current_values():
    assert np.allclose(hall_current(FLUX, 1, (1.0, 0.0)), [0.0, 1 / (2 * np.pi)], atol=1e-15)
    assert np.allclose(hall_current(FLUX, 2, (0.0, 1.0)), [1 / (2 * np.pi), 0.0], atol=1e-15)
    assert np.allclose(hall_current(FLUX, 3, (0.3, -0.7)), 0.0)


def test_hall_current_is_linear():
    a, b = np.array([0.3, -0.2]), np.array([-1.1, 0.4])
    assert np.allclose(hall_current(FLUX, 1, 2 * a + b), 2 * hall_current(FLUX, 1, a) + hall_current(FLUX, 1, b))


def test_hall_current_matches_flow_average():
    for filled in (1, 2):
        for field in ((1.0, 0.0), (0.2, -0.5)):
            assert np.allclose(hall_current_from_flow(FLUX, filled, field, 0.01),
                               hall_current(FLUX, filled, field), atol=1e-10)


def test_hall_current_argument_checks():
    with pytest.raises(ConfigError):
        hall_current(FLUX, 4, (1.0, 0.0))
    with pytest.raises(ConfigError):
        hall_current(FLUX, 1, (1.0, 0.0, 0.0))
