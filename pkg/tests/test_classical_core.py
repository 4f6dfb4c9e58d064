import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hofsc.classical_core import (ClassicalSystem, PeriodicInterpolant, closedness_residual,
                                  divergence_residual, pfaffian4)
from hofsc.errors import AdmissibilityError, ConfigError, DegenerateFormError
from hofsc.lattice_model import FluxRational, PotentialSpec
from hofsc.quantum_oracle import fit_slope

SQRT3 = np.sqrt(3.0)
FLUX = FluxRational(1, 3)
V = PotentialSpec.cosines([(0.25, (1, 0), 0.0), (0.1, (0, 1), 0.4)])


@pytest.fixture(scope="module")
def system():
    return ClassicalSystem(FLUX, 1, epsilon=0.05, b=1.0, potential=V)


def points(rng, n):
    return np.column_stack([rng.uniform(-4, 4, (n, 2)), rng.uniform(-np.pi, np.pi, (n, 2))])


def test_energy_examples():
    z = np.zeros(4)
    assert ClassicalSystem(FLUX, 1).h(z) == pytest.approx(-2.0, abs=1e-12)
    sys = ClassicalSystem(FLUX, 1, epsilon=0.05, b=1.0)
    assert sys.h(z) == pytest.approx(-2 + 0.05 * SQRT3, abs=1e-11)
    assert sys.curvature(np.zeros(2)) == pytest.approx(5 / SQRT3, abs=1e-10)
    # uncorrected model drops the moment
    assert ClassicalSystem(FLUX, 1, epsilon=0.05, b=1.0, geometric=False).h(z) == pytest.approx(-2.0, abs=1e-12)


def test_form_blocks(system):
    W = system.symplectic_form(np.array([0.1, 0.2, 0.0, 0.0]))
    assert np.allclose(W, -W.T)
    assert np.allclose(W[:2, :2], -np.array([[0, 1], [-1, 0]]))
    assert W[2, 3] == pytest.approx(0.05 * 5 / SQRT3, abs=1e-10)


def test_canonical_form_is_standard_at_zero_eps():
    sys = ClassicalSystem(FLUX, 1, epsilon=0.0, b=1.0)
    W = sys.symplectic_form_canonical(np.array([0.3, -0.2, 0.5, 0.1]))
    w0 = np.block([[np.zeros((2, 2)), np.eye(2)], [-np.eye(2), np.zeros((2, 2))]])
    assert np.allclose(W, w0, atol=1e-14)


def test_pfaffian_is_liouville_density(system, rng):
    z = points(rng, 100)
    W = system.symplectic_form(z)
    nu = system.liouville_density(z[:, 2:])
    assert np.max(np.abs(np.abs(pfaffian4(W)) - nu)) <= 1e-13
    assert np.allclose(pfaffian4(W) ** 2, np.linalg.det(W), atol=1e-12)


def test_mean_liouville_density_counts_chern_number():
    # mean of Omega over the reduced torus is c * q / (2 pi); c1 = 1 for flux 1/3
    sys = ClassicalSystem(FLUX, 1, epsilon=0.05, b=1.0)
    assert np.mean(1 + sys.coupling * sys.band.omega) == pytest.approx(1 + 0.05 * 3 / (2 * np.pi), abs=1e-10)


def test_degenerate_form_rejected():
    with pytest.raises(DegenerateFormError):
        ClassicalSystem(FLUX, 1, epsilon=1.0, b=-1.0)


def test_negative_epsilon_rejected():
    with pytest.raises(ConfigError):
        ClassicalSystem(FLUX, 1, epsilon=-0.1)


def test_unknown_mode(system):
    with pytest.raises(ConfigError):
        system.vector_field(np.zeros(4), "approximate")


def test_zero_eps_field_is_canonical(rng):
    sys = ClassicalSystem(FLUX, 2, potential=V)
    z = points(rng, 20)
    g = sys.grad_h(z)
    X = sys.vector_field(z)
    assert np.allclose(X[:, :2], g[:, 2:]) and np.allclose(X[:, 2:], -g[:, :2])
    for mode in ("exact_solve", "paper_truncated"):
        assert np.allclose(sys.vector_field(z, mode), X, atol=1e-14)


def test_closed_form_matches_linear_solve(system, rng):
    z = points(rng, 50)
    assert np.max(np.abs(system.vector_field(z) - system.vector_field(z, "exact_solve"))) < 1e-13


def test_field_conserves_energy_pointwise(system, rng):
    z = points(rng, 50)
    for mode in ("exact", "exact_solve"):
        assert np.max(np.abs(np.sum(system.grad_h(z) * system.vector_field(z, mode), axis=-1))) < 1e-12


def test_truncated_field_differs_at_second_order(rng):
    z = points(rng, 30)
    eps = np.array([0.02, 0.01, 0.005])
    diffs = []
    for e in eps:
        sys = ClassicalSystem(FLUX, 1, epsilon=e, b=1.0, potential=V)
        diffs.append(np.max(np.abs(sys.vector_field(z) - sys.vector_field(z, "paper_truncated"))))
    assert abs(fit_slope(eps, diffs).slope - 2.0) <= 0.2


def test_bracket_of_coordinates(system):
    z = np.array([0.1, 0.2, 0.3, 0.4])
    e = np.eye(4)
    assert ClassicalSystem(FLUX, 1).poisson_bracket(e[2], e[0], z) == pytest.approx(1.0)
    # the corrected form rescales the canonical pair by 1 / (1 + eps b Omega)
    nu = system.liouville_density(z[2:])
    assert system.poisson_bracket(e[2], e[0], z) == pytest.approx(1 / nu, abs=1e-13)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=12, max_size=12))
def test_bracket_antisymmetric(vals):
    sys = ClassicalSystem(FLUX, 1, epsilon=0.05, b=1.0, band=_BAND)
    v = np.array(vals)
    z, f, g = v[:4], v[4:8], v[8:]
    assert sys.poisson_bracket(f, g, z) == pytest.approx(-sys.poisson_bracket(g, f, z), abs=1e-12)
    assert abs(sys.poisson_bracket(f, f, z)) < 1e-12


_BAND = ClassicalSystem(FLUX, 1).band


@pytest.mark.parametrize("coords", ["kinetic", "canonical"])
def test_form_is_closed(system, rng, coords):
    assert closedness_residual(system, points(rng, 100), coords=coords) <= 1e-6


def test_closedness_rejects_bad_step(system):
    with pytest.raises(ConfigError):
        closedness_residual(system, np.zeros(4), step=0.5)


def test_liouville_measure_is_invariant(system, rng):
    assert np.max(divergence_residual(system, points(rng, 100))) <= 1e-6


def test_interpolant_reproduces_trigonometric_data(rng):
    N, period = 32, 2 * np.pi / 3
    x = np.arange(N) * period / N
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    w = 2 * np.pi / period

    def f(a, b):
        return np.cos(w * a) * np.sin(2 * w * b) + 0.3 * np.cos(w * (a - b))

    interp = PeriodicInterpolant(f(X1, X2), period)
    pts = rng.uniform(0, 5, (40, 2))
    assert np.allclose(interp(pts), f(pts[:, 0], pts[:, 1]), atol=1e-13)
    dfa = -w * np.sin(w * pts[:, 0]) * np.sin(2 * w * pts[:, 1]) - 0.3 * w * np.sin(w * (pts[:, 0] - pts[:, 1]))
    assert np.allclose(interp(pts, (1, 0)), dfa, atol=1e-12)
    many = rng.uniform(0, 5, (2000, 2))
    assert np.allclose(interp(many), f(many[:, 0], many[:, 1]), atol=1e-10)


def test_interpolant_rejects_unresolved_data():
    N = 16
    x = np.arange(N) * 2 * np.pi / N
    rough = np.abs(np.sin(x))[:, None] * np.ones(N)
    with pytest.raises(AdmissibilityError):
        PeriodicInterpolant(rough, 2 * np.pi)


def test_spline_path_agrees_with_direct_sum(system, rng):
    kap = rng.uniform(-3, 3, (1000, 2))
    spline = system.energy(kap, (0, 1))
    direct = np.concatenate([system.energy(kap[i:i + 200], (0, 1)) for i in range(0, 1000, 200)])
    assert np.max(np.abs(spline - direct)) < 1e-10
