import json

import numpy as np
import pytest
from scipy.linalg import expm

from hofsc.band_geometry import band_ranges
from hofsc.classical_core import ClassicalSystem
from hofsc.errors import AdmissibilityError, BoundaryProximityError, ConfigError, NumericError
from hofsc.lattice_model import FiniteLattice, FluxRational, finite_hamiltonian, phase_space_position, site_grid
from hofsc.quantum_oracle import (Profile, Scenario, band_window, chebyshev_apply, chebyshev_fit,
                                  chebyshev_propagate, classical_trace_per_site, ensemble_expectation,
                                  equilibrium_compare, evolve_expectation, exact_spectrum, fit_slope,
                                  make_wavepacket, spectral_bounds, strip_expectation, trace_f_per_site)

FLUX = FluxRational(1, 3)


def test_fit_slope_on_power_law():
    x = np.array([0.1, 0.05, 0.025])
    fit = fit_slope(x, 3.0 * x ** 2)
    assert fit.slope == pytest.approx(2.0) and fit.intercept == pytest.approx(np.log(3.0))
    assert fit.r2 == pytest.approx(1.0)
    with pytest.raises(NumericError):
        fit_slope(x, [1.0, 0.0, 1.0])


def test_profiles():
    assert Profile()(0.0) == 1.0
    assert Profile("cosine", freq=2.0, phase=0.5)(1.0) == pytest.approx(np.cos(2.5))
    assert Profile("fermi_log", center=0.0, width=0.2)(-3.0) == pytest.approx(3.0, abs=1e-6)
    with pytest.raises(ConfigError):
        Profile("square")
    with pytest.raises(ConfigError):
        Profile(width=0.0)


def test_spectral_bounds_contain_spectrum():
    lat = FiniteLattice(9, 9, FLUX.B0 + 2 * np.pi / 81 * 3)
    lo, hi = spectral_bounds(finite_hamiltonian(lat))
    ev = exact_spectrum(lat)
    assert lo <= ev.min() and ev.max() <= hi and hi - lo <= 8.0 + 1e-12


def test_dense_limit():
    with pytest.raises(AdmissibilityError):
        exact_spectrum(FiniteLattice(102, 102, 0.0))


def test_chebyshev_fit_and_apply():
    H = np.diag([-1.5, 0.2, 2.0])
    coef = chebyshev_fit(np.exp, -3, 3)
    out = chebyshev_apply(H, np.ones(3), coef, -3, 3)
    assert np.allclose(out, np.exp([-1.5, 0.2, 2.0]), atol=1e-13)


def test_chebyshev_propagation_matches_matrix_exponential(rng):
    lat = FiniteLattice(6, 6, FLUX.B0, "open_box", 0.5)
    H = finite_hamiltonian(lat)
    psi = rng.normal(size=36) + 1j * rng.normal(size=36)
    for tau in (0.7, -3.0, 12.0):
        exact = expm(-1j * tau * H.toarray()) @ psi
        assert np.max(np.abs(chebyshev_propagate(H, psi, tau) - exact)) < 1e-9


@pytest.mark.parametrize("f,expected", [(lambda x: np.ones_like(x), 1.0), (lambda x: x, 0.0),
                                        (lambda x: x ** 2, 4.0)])
def test_trace_moments(f, expected):
    # tr H = 0 and tr H^2 = 4 n (four unit hoppings per site)
    lat = FiniteLattice(12, 12, FLUX.B0 + 2 * np.pi / 144)
    assert trace_f_per_site(lat, f) == pytest.approx(expected, abs=1e-12)


def test_site_trace_matches_dense():
    lat = FiniteLattice(24, 24, FLUX.B0 + 2 * np.pi / 24, epsilon=2 * np.pi / 24)
    f = Profile()
    assert trace_f_per_site(lat, f, "site") == pytest.approx(trace_f_per_site(lat, f, "dense"), abs=1e-12)
    with pytest.raises(ConfigError):
        trace_f_per_site(FiniteLattice(6, 6, 0.0, "open_box"), f, "site")


def test_classical_trace_at_zero_eps_matches_torus():
    lat = FiniteLattice(24, 24, FLUX.B0)
    f = Profile()
    assert classical_trace_per_site(FLUX, f, 0.0, 1) == pytest.approx(trace_f_per_site(lat, f), abs=1e-12)


def test_scenario_validation_and_round_trip():
    sc = Scenario(sizes=(24, 48), observable=Profile("sine", phase=0.3))
    back = Scenario.from_dict(json.loads(sc.to_json()))
    assert back == sc
    assert sc.epsilons == pytest.approx([2 * np.pi / 24, 2 * np.pi / 48])
    for bad in (dict(sizes=(24,)), dict(sizes=(48, 24)), dict(sizes=(25, 50)), dict(b=0.5), dict(band=4)):
        with pytest.raises(ConfigError):
            Scenario(**bad)
    with pytest.raises(ConfigError):
        Scenario.from_dict({"size": [24, 48]})


def test_small_equilibrium_ladder_improves_with_corrections():
    cmp = equilibrium_compare(Scenario(sizes=(12, 24)))
    for row in cmp.rows:
        assert row["error"] < row["error_plain"]
    cols, rows = cmp.table()
    assert cols[0] == "epsilon" and len(rows) == 2


def test_band_window_edges():
    ranges = band_ranges(FLUX)
    lo, hi = band_window(FLUX, 2)
    assert lo == pytest.approx(0.5 * (ranges[0, 1] + ranges[1, 0]))
    assert band_window(FLUX, 1)[0] == -np.inf
    with pytest.raises(AdmissibilityError):
        band_window(FLUX, 2, 0.7)


def test_strip_expectation_of_constant_is_one():
    val = strip_expectation(FLUX, 1, 2 * np.pi / 24, 1, 1.0, 0.25, Profile(), Profile("constant"), k2_points=8)
    assert val == pytest.approx(1.0, abs=1e-12)


def test_strip_expectation_rejects_narrow_strip():
    with pytest.raises(BoundaryProximityError):
        strip_expectation(FLUX, 1, 2 * np.pi / 24, 1, 1.0, 0.25, Profile(width=3.0), Profile("cosine"),
                          k2_points=4, half_width=4.0)


def test_ensemble_expectation_at_time_zero():
    sys = ClassicalSystem(FLUX, 1, 0.1, 1.0)
    val = ensemble_expectation(sys, Profile(), Profile("cosine"), 0.0)
    # Gaussian average of cos(r1) with unit width is exp(-1/2)
    assert val == pytest.approx(np.exp(-0.5), abs=1e-12)
    with pytest.raises(ConfigError):
        ensemble_expectation(sys, Profile("cosine"), Profile("cosine"), 0.0)


@pytest.fixture(scope="module")
def packet_setup():
    eps = 2 * np.pi / 96
    lat = FiniteLattice(160, 160, FLUX.B0, "open_box", eps)
    center = (80 * eps, -80 * eps)
    wp = make_wavepacket(lat, FLUX, 1, center, (0.4, 0.9))
    return lat, wp, eps


def test_wavepacket_is_normalized_band_state(packet_setup):
    lat, wp, eps = packet_setup
    assert np.linalg.norm(wp.psi) == pytest.approx(1.0, abs=1e-12)
    assert wp.band_weight > 0.99
    j1, j2 = site_grid(lat.L1, lat.L2)
    r = phase_space_position(np.stack([j1, j2], axis=-1), eps)
    assert np.allclose(np.abs(wp.psi) ** 2 @ r, wp.center, atol=1e-3)


def test_wavepacket_drift_follows_band_velocity(packet_setup):
    lat, wp, eps = packet_setup
    times = np.linspace(0.0, 1.0, 5)
    one = evolve_expectation(lat, wp.psi, lambda r: np.ones(len(r)), times)
    assert np.allclose(one, 1.0, atol=1e-10)
    v_quantum = [np.polyfit(times, evolve_expectation(lat, wp.psi, lambda r, i=i: r[:, i], times), 1)[0]
                 for i in (0, 1)]
    v_classical = ClassicalSystem(FLUX, 1).vector_field(np.array([*wp.center, *wp.kappa]))[:2]
    assert np.linalg.norm(np.array(v_quantum) - v_classical) <= 0.05 * np.linalg.norm(v_classical)


def test_wavepacket_near_boundary_rejected():
    eps = 2 * np.pi / 96
    lat = FiniteLattice(60, 60, FLUX.B0, "open_box", eps)
    with pytest.raises(BoundaryProximityError):
        make_wavepacket(lat, FLUX, 1, (10 * eps, -10 * eps), (0.4, 0.9))
    with pytest.raises(ConfigError):
        make_wavepacket(FiniteLattice(60, 60, FLUX.B0), FLUX, 1, (0.0, 0.0), (0.4, 0.9))


def test_evolution_detects_boundary_hit():
    eps = 0.5
    lat = FiniteLattice(12, 12, FLUX.B0, "open_box", eps)
    psi = np.zeros(144, complex)
    psi[6 * 12 + 6] = 1.0
    with pytest.raises(BoundaryProximityError):
        evolve_expectation(lat, psi, np.ones(144), [0.0, 20.0])
