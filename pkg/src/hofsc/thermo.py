"""Band-integral thermodynamics of the Hofstadter model at B = B0 + eps*b.

All integrals are (q/(2pi)^2) sum_j int_{T_q} ... dkappa evaluated with the
periodic trapezoid rule, i.e. the grid mean divided by q.  Every quantity
depends on eps and b only through s = eps*b.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import expit

from .band_geometry import band_data, band_ranges, chern_number, gap_check
from .errors import AdmissibilityError, ConfigError, GapError, NumericError

QUAD_TOL = 1e-9
FD_STEP = 1e-4
J = np.array([[0.0, 1.0], [-1.0, 0.0]])


@dataclass(frozen=True)
class ThermoParams:
    beta: float
    mu: float
    epsilon: float = 0.0
    b: float = 0.0
    N: int = 64

    def __post_init__(self):
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise ConfigError("beta must be finite and positive; use the zero-temperature functions")
        if self.epsilon < 0:
            raise ConfigError("epsilon must be non-negative")
        if self.N < 8:
            raise ConfigError("grid N must be at least 8")

    @property
    def coupling(self):
        return self.epsilon * self.b


def fermi_dirac(E, beta, mu):
    """(1 + exp(beta (E - mu)))^-1 without overflow."""
    if beta <= 0:
        raise ConfigError("beta must be positive")
    return expit(-beta * (np.asarray(E, dtype=float) - mu))


def grand_potential_density(E, beta, mu):
    """beta^-1 ln(1 + exp(-beta (E - mu))), overflow-free."""
    return np.logaddexp(0.0, -beta * (np.asarray(E, dtype=float) - mu)) / beta


def check_gaps(flux):
    """Raise GapError unless all q bands are separated (q odd)."""
    if flux.q % 2 == 0:
        lo, hi = gap_check(flux).middle_pair
        raise GapError(f"bands {lo} and {hi} touch for even q = {flux.q}", pair=(lo, hi))


@lru_cache(maxsize=32)
def _bands(p, q, N):
    from .lattice_model import FluxRational

    return tuple(band_data(FluxRational(p, q), j, N) for j in range(1, q + 1))


def _band_integral(flux, N, integrand):
    """(q/(2pi)^2) sum_j int_{T_q} integrand(e, Omega, M) dkappa."""
    total = 0.0
    for bd in _bands(flux.p, flux.q, N):
        total += float(np.mean(integrand(bd.e, bd.omega, bd.moment))) / flux.q
    return total


def _converged(flux, params, integrand, check):
    value = _band_integral(flux, params.N, integrand)
    if check:
        fine = _band_integral(flux, 2 * params.N, integrand)
        if abs(fine - value) > QUAD_TOL * max(1.0, abs(value)):
            raise NumericError(
                f"band quadrature not converged: N={params.N} and {2 * params.N} differ by {abs(fine - value):.1e}")
    return value


def _pressure_s(flux, params, s, check):
    beta, mu = params.beta, params.mu
    return _converged(flux, params,
                      lambda e, om, M: (1 + s * om) * grand_potential_density(e + s * M, beta, mu), check)


def pressure(flux, params, check=True):
    """p = (q/(2pi)^2) sum_j int (1 + s Omega) beta^-1 ln(1 + e^{-beta(h - mu)}), h = e + s M."""
    check_gaps(flux)
    return _pressure_s(flux, params, params.coupling, check)


def density(flux, params, check=True):
    """rho = d p / d mu = (q/(2pi)^2) sum_j int (1 + s Omega) f(h)."""
    check_gaps(flux)
    s, beta, mu = params.coupling, params.beta, params.mu
    return _converged(flux, params, lambda e, om, M: (1 + s * om) * fermi_dirac(e + s * M, beta, mu), check)


MAGNETIZATION_METHODS = ("formula", "finite_difference")


def magnetization(flux, params, method="formula", check=True):
    """d p / d B at fixed beta, mu, where B = B0 + s.

    ``formula`` integrates Omega g(h) - (1 + s Omega) f(h) M with
    g = beta^-1 ln(1 + e^{-beta(h - mu)}); ``finite_difference`` takes a central
    difference of the pressure in s with step 1e-4.
    """
    check_gaps(flux)
    s, beta, mu = params.coupling, params.beta, params.mu
    if method == "formula":
        def integrand(e, om, M):
            h = e + s * M
            return om * grand_potential_density(h, beta, mu) - (1 + s * om) * fermi_dirac(h, beta, mu) * M

        return _converged(flux, params, integrand, check)
    if method == "finite_difference":
        hi = _pressure_s(flux, params, s + FD_STEP, check)
        lo = _pressure_s(flux, params, s - FD_STEP, check)
        return (hi - lo) / (2 * FD_STEP)
    raise ConfigError(f"unknown method {method!r}; expected one of {MAGNETIZATION_METHODS}")


def _filled_bands(flux, mu, N=32):
    """Number of bands lying entirely below mu; mu must sit in a gap."""
    ranges = band_ranges(flux, N)
    below = ranges[:, 1] < mu
    above = ranges[:, 0] > mu
    if not np.all(below | above):
        j = int(np.flatnonzero(~(below | above))[0]) + 1
        raise AdmissibilityError(f"mu = {mu} lies inside band {j}; zero temperature needs mu in a gap")
    return int(np.sum(below))


def density_zero_temperature(flux, mu, epsilon=0.0, b=0.0, N=64):
    """Density with step-function filling; mu must lie in a gap or outside the spectrum."""
    check_gaps(flux)
    m = _filled_bands(flux, mu)
    s = epsilon * b
    bands = _bands(flux.p, flux.q, N)[:m]
    return sum(float(np.mean(1 + s * bd.omega)) / flux.q for bd in bands)


def pressure_zero_temperature(flux, mu, epsilon=0.0, b=0.0, N=64):
    """Pressure (mu - h)_+ weighted by 1 + s Omega; mu must lie in a gap."""
    check_gaps(flux)
    m = _filled_bands(flux, mu)
    s = epsilon * b
    bands = _bands(flux.p, flux.q, N)[:m]
    return sum(float(np.mean((1 + s * bd.omega) * (mu - bd.e - s * bd.moment))) / flux.q for bd in bands)


@dataclass(frozen=True)
class StredaResult:
    filled: int
    chern_sum: int
    slope: float
    expected_slope: float
    intercept: float
    residual: float


def streda_check(flux, filled, couplings=(0.0, 0.01, 0.02, 0.04), N=64):
    """Slope of the gap density in s = eps*b against sum_{j<=m} c_j / 2pi."""
    check_gaps(flux)
    if not 1 <= filled <= flux.q:
        raise ConfigError(f"filled band count must lie in 1..{flux.q}")
    bands = _bands(flux.p, flux.q, N)[:filled]
    s = np.asarray(couplings, dtype=float)
    rho = np.array([sum(float(np.mean(1 + x * bd.omega)) / flux.q for bd in bands) for x in s])
    slope, intercept = np.polyfit(s, rho, 1)
    csum = sum(chern_number(flux, j).chern for j in range(1, filled + 1))
    expected = csum / (2 * np.pi)
    return StredaResult(filled, csum, float(slope), expected, float(intercept), abs(float(slope) - expected))


def hall_current(flux, filled, field, N=60):
    """Leading-order current density with bands 1..m filled.

    j = E_perp * sum_{j<=m} c_j / 2pi with E_perp = (-E2, E1), the quarter
    turn that the anomalous velocity -eps Omega J E produces.
    """
    check_gaps(flux)
    if not 1 <= filled <= flux.q:
        raise ConfigError(f"filled band count must lie in 1..{flux.q}")
    field = np.asarray(field, dtype=float)
    if field.shape != (2,):
        raise ConfigError("field must be a 2-vector")
    csum = sum(chern_number(flux, j, N).chern for j in range(1, filled + 1))
    return -(J @ field) * csum / (2 * np.pi)


def hall_current_from_flow(flux, filled, field, epsilon, b=0.0, N=64):
    """Current from the band average of nu * r' under V = field . r, divided by eps.

    Independent of the Chern-number route: it averages the exact vector field
    of the classical system over the filled bands.
    """
    from .classical_core import ClassicalSystem
    from .lattice_model import PotentialSpec

    check_gaps(flux)
    if epsilon <= 0:
        raise ConfigError("epsilon must be positive")
    field = np.asarray(field, dtype=float)
    pot = PotentialSpec(field=tuple(float(x) for x in field))
    total = np.zeros(2)
    for bd in _bands(flux.p, flux.q, N)[:filled]:
        sys = ClassicalSystem(flux, bd.band_index, epsilon, b, pot, N=N, band=bd)
        z = np.concatenate([np.zeros(bd.k.shape), bd.k], axis=-1).reshape(-1, 4)
        nu = sys.liouville_density(z[:, 2:])
        v = sys.vector_field(z)[:, :2]
        total += np.mean(nu[:, None] * v, axis=0) / flux.q
    return total / epsilon
