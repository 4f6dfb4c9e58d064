import numpy as np
import pytest

from hofsc.band_geometry import berry_curvature, magnetic_moment
from hofsc.lattice_model import FluxRational, PotentialSpec
from hofsc.symbol_calculus import (HofstadterSymbols, MatrixSymbol, generalized_bracket,
                                   hsc_defect_order1, kinetic_momentum, liouville_scalar,
                                   moment_from_brackets, pi1_diagonal, poisson_bracket_matrix)


def random_points(rng, n):
    return np.column_stack([rng.uniform(-3, 3, (n, 2)), rng.uniform(-np.pi, np.pi, (n, 2))])


def random_symbol(rng, q=3):
    C = rng.normal(size=(5, q, q)) + 1j * rng.normal(size=(5, q, q))
    return MatrixSymbol(lambda z: C[0] + np.einsum("a,aij->ij", np.sin(z), C[1:]),
                        lambda z: np.cos(z)[:, None, None] * C[1:])


def test_scalar_self_bracket_vanishes():
    A = MatrixSymbol.scalar(lambda z: np.sin(z[0]) * z[2] ** 2,
                            lambda z: np.array([np.cos(z[0]) * z[2] ** 2, 0, 2 * np.sin(z[0]) * z[2], 0]), 2)
    z = np.array([0.3, 0.1, 0.7, -0.2])
    assert np.allclose(poisson_bracket_matrix(A, A, z), 0)


def test_scalar_bracket_antisymmetric():
    A = MatrixSymbol.scalar(lambda z: z[0] * z[3], lambda z: np.array([z[3], 0, 0, z[0]]), 1)
    B = MatrixSymbol.scalar(lambda z: np.cos(z[1] + z[2]),
                            lambda z: -np.sin(z[1] + z[2]) * np.array([0, 1, 1, 0]), 1)
    z = np.array([0.5, -0.4, 1.2, 0.8])
    assert np.allclose(poisson_bracket_matrix(A, B, z), -poisson_bracket_matrix(B, A, z))


def test_bracket_convention_momentum_position():
    # {k1, r1} = 1 with k in the momentum slot
    r1 = MatrixSymbol.scalar(lambda z: z[0], lambda z: np.array([1.0, 0, 0, 0]), 1)
    k1 = MatrixSymbol.scalar(lambda z: z[2], lambda z: np.array([0, 0, 1.0, 0]), 1)
    assert poisson_bracket_matrix(k1, r1, np.zeros(4))[0, 0] == pytest.approx(1.0)


def test_trace_of_self_bracket_vanishes(rng):
    for z in random_points(rng, 10):
        A = random_symbol(rng)
        assert abs(np.trace(poisson_bracket_matrix(A, A, z))) < 1e-12


def test_generalized_bracket_reductions(rng):
    A, C = random_symbol(rng), random_symbol(rng)
    eye = MatrixSymbol(lambda z: np.eye(3), lambda z: np.zeros((4, 3, 3)))
    const = MatrixSymbol(lambda z: np.ones((3, 3)), lambda z: np.zeros((4, 3, 3)))
    z = random_points(rng, 1)[0]
    assert np.allclose(generalized_bracket(A, eye, C, z), poisson_bracket_matrix(A, C, z))
    assert np.allclose(generalized_bracket(const, A, const, z), 0)


def test_finite_difference_gradient_fallback(rng):
    A = random_symbol(rng)
    fd = MatrixSymbol(A.value)
    z = random_points(rng, 1)[0]
    assert np.allclose(fd.gradient(z), A.gradient(z), atol=1e-8)


@pytest.mark.parametrize("form", ["def", "alt1", "alt2", "alt3"])
def test_bracket_moment_forms_match_band_moment(flux13, rng, form):
    b = 1.0
    sym = HofstadterSymbols(flux13, 1, b)
    for z in random_points(rng, 5):
        kap = kinetic_momentum(z, b)
        assert moment_from_brackets(sym, z, form) == pytest.approx(
            b * magnetic_moment(flux13, 1, kap), abs=1e-8)


def test_liouville_scalar_is_b_times_curvature(flux13, rng):
    for b in (1.0, -2.0):
        for z in random_points(rng, 5):
            kap = kinetic_momentum(z, b)
            assert liouville_scalar(flux13, 2, z, b) == pytest.approx(
                b * berry_curvature(flux13, 2, kap), abs=1e-7)


def test_pi1_diagonal_structure(flux13, rng):
    z = random_points(rng, 1)[0]
    P1 = pi1_diagonal(flux13, 1, z)
    assert np.abs(P1 - P1.conj().T).max() < 1e-12
    assert np.linalg.matrix_rank(P1, tol=1e-10) <= 1
    assert np.trace(P1).real == pytest.approx(0.5 * liouville_scalar(flux13, 1, z), abs=1e-10)


def test_pi1_diagonal_single_band():
    assert np.allclose(pi1_diagonal(FluxRational(0, 1), 1, np.array([0.1, 0.2, 0.3, 0.4])), 0)


def test_defect_cancels(flux13, rng):
    for z in random_points(rng, 20):
        assert np.abs(hsc_defect_order1(flux13, 1, z)).max() <= 1e-8


def test_defect_cancels_with_potential(flux13, rng):
    V = PotentialSpec.cosines([(0.3, (1, 0), 0.0), (0.2, (0, 1), 0.5)])
    for z in random_points(rng, 5):
        assert np.abs(hsc_defect_order1(flux13, 2, z, b=-1.0, potential=V)).max() <= 1e-8


def test_defect_single_band_vanishes():
    z = np.array([0.2, -0.1, 0.6, 1.1])
    assert np.abs(hsc_defect_order1(FluxRational(0, 1), 1, z)).max() < 1e-12


def test_defect_detects_wrong_moment(flux13):
    z = np.array([0.0, 0.0, 0.0, 0.0])
    assert np.abs(hsc_defect_order1(flux13, 1, z, moment_scale=1.1)).max() > 1e-3
