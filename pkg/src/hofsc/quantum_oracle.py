"""Finite-lattice quantum computations used as oracles for the classical model.

Equilibrium: per-site traces tr f(H^B) / L^2 on a magnetic torus, compared with
the band integral (q/(2pi)^2) sum_j int (1 + eps b Omega) f(e + eps b M).

Dynamics: a band-projected density P a0(eps x1) P on a magnetic strip evolves
under exp(-i H t / eps); the expectation of a(eps x1) is compared with the
classical ensemble average of a(r1(t)) weighted by the Liouville density.  The
strip is translation invariant along its periodic direction, so it splits
exactly into Harper chains, one per momentum k2.

Wavepackets on an open box are provided for pure-state experiments.
"""
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh_tridiagonal
from scipy.special import erf, jv

from .band_geometry import band_ranges
from .classical_core import ClassicalSystem
from .errors import (AdmissibilityError, BoundaryProximityError, ConfigError,
                     FilterLeakageError, NumericError)
from .flow import flow_map
from .lattice_model import (FiniteLattice, FluxRational, PotentialSpec, bloch_matrix,
                            finite_hamiltonian, phase_space_position, site_grid,
                            strip_sector_hamiltonian)
from .thermo import _bands

log = logging.getLogger(__name__)

DENSE_LIMIT = 10_000
DENSE_TRACE_AUTO = 2_500
SITE_SPREAD_TOL = 1e-10


# -- slope fits ---------------------------------------------------------------

@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r2: float


def fit_slope(x, y):
    """Least-squares line through (log x, log y)."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    if not (np.all(np.isfinite(x) & (x > 0)) and np.all(np.isfinite(y) & (y > 0))):
        raise NumericError("slope fit needs positive finite data")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss if ss > 0 else 1.0
    return SlopeFit(float(slope), float(intercept), float(r2))


# -- scalar profiles ----------------------------------------------------------

PROFILE_KINDS = ("gaussian", "cosine", "sine", "tanh", "constant", "fermi_log")


@dataclass(frozen=True)
class Profile:
    """A smooth scalar function of one variable, serializable as JSON.

    gaussian: exp(-(x - center)^2 / (2 width^2)); cosine / sine:
    cos or sin(freq x + phase); tanh: tanh((x - center) / width);
    fermi_log: beta^-1 ln(1 + exp(-beta (x - center))) with beta = 1/width.
    """

    kind: str = "gaussian"
    center: float = 0.0
    width: float = 1.0
    freq: float = 1.0
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ConfigError(f"unknown profile kind {self.kind!r}; expected one of {PROFILE_KINDS}")
        if self.width <= 0:
            raise ConfigError("profile width must be positive")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "gaussian":
            return np.exp(-0.5 * ((x - self.center) / self.width) ** 2)
        if self.kind == "cosine":
            return np.cos(self.freq * x + self.phase)
        if self.kind == "sine":
            return np.sin(self.freq * x + self.phase)
        if self.kind == "tanh":
            return np.tanh((x - self.center) / self.width)
        if self.kind == "fermi_log":
            return self.width * np.logaddexp(0.0, -(x - self.center) / self.width)
        return np.ones_like(x)


# -- spectra and Chebyshev machinery -----------------------------------------

def spectral_bounds(H):
    """Gershgorin interval [lo, hi] containing the spectrum of Hermitian H."""
    H = sp.csr_matrix(H)
    d = H.diagonal().real
    radius = np.asarray(abs(H).sum(axis=1)).ravel() - np.abs(d)
    return float(np.min(d - radius)), float(np.max(d + radius))


def exact_spectrum(lattice, vectors=False):
    """Dense diagonalization of the finite Hamiltonian."""
    if lattice.n_sites > DENSE_LIMIT:
        raise AdmissibilityError(f"{lattice.n_sites} sites exceed the dense limit {DENSE_LIMIT}")
    H = finite_hamiltonian(lattice).toarray()
    if vectors:
        return np.linalg.eigh(H)
    return np.linalg.eigvalsh(H)


def chebyshev_fit(f, lo, hi, tol=1e-14, max_degree=8192):
    """Chebyshev coefficients of f on [lo, hi], degree doubled until the tail is below tol."""
    half, mid = 0.5 * (hi - lo), 0.5 * (hi + lo)
    deg = 32
    while True:
        c = np.polynomial.chebyshev.chebinterpolate(lambda x: f(mid + half * x), deg)
        scale = max(1.0, float(np.max(np.abs(c))))
        # rounding in the samples puts a floor of a few hundred ulps under the tail
        if np.max(np.abs(c[-8:])) < max(tol, 256 * np.finfo(float).eps) * scale:
            keep = np.flatnonzero(np.abs(c) >= 0.01 * tol * scale)
            return c[: keep[-1] + 1] if len(keep) else c[:1]
        if deg >= max_degree:
            raise NumericError(f"Chebyshev fit did not converge by degree {max_degree}")
        deg *= 2


def chebyshev_apply(H, v, coef, lo, hi):
    """sum_n coef[n] T_n(Hs) v with Hs = (H - mid) / half mapped onto [-1, 1]."""
    half, mid = 0.5 * (hi - lo), 0.5 * (hi + lo)

    def Hs(x):
        return (H @ x - mid * x) / half

    t0 = np.array(v, dtype=complex)
    out = coef[0] * t0
    if len(coef) == 1:
        return out
    t1 = Hs(t0)
    out = out + coef[1] * t1
    for c in coef[2:]:
        t0, t1 = t1, 2 * Hs(t1) - t0
        out = out + c * t1
    return out


def chebyshev_propagate(H, psi, tau, bounds=None, tol=1e-10):
    """exp(-i H tau) psi from the Bessel expansion of the exponential."""
    lo, hi = bounds if bounds is not None else spectral_bounds(H)
    half, mid = 0.5 * (hi - lo), 0.5 * (hi + lo)
    x = half * abs(tau)
    nmax = int(x + 10 * np.cbrt(max(x, 1.0)) + 30)
    n = np.arange(nmax)
    J = jv(n, x)
    while np.max(np.abs(J[-5:])) > tol:
        nmax *= 2
        n = np.arange(nmax)
        J = jv(n, x)
    keep = np.flatnonzero(np.abs(J) > 0.01 * tol)
    n = n[: keep[-1] + 1]
    sign = np.sign(tau) if tau else 1.0
    coef = (2.0 - (n == 0)) * (-1j * sign) ** n * J[: len(n)]
    return np.exp(-1j * mid * tau) * chebyshev_apply(H, psi, coef, lo, hi)


# -- equilibrium traces ------------------------------------------------------

def _uniform_torus(lattice):
    return lattice.boundary == "magnetic_torus" and lattice.potential.is_zero


def trace_f_per_site(lattice, f, method="auto", probes=3):
    """(1/n_sites) tr f(H).

    ``dense`` diagonalizes.  ``site`` evaluates <e_i, f(H) e_i> by a Chebyshev
    expansion at a few probe sites; on a magnetic torus with V = 0 the
    magnetic translations make every diagonal entry equal, and the probes
    verify this to 1e-10.
    """
    if method == "auto":
        method = "dense" if lattice.n_sites <= DENSE_TRACE_AUTO or not _uniform_torus(lattice) else "site"
    if method == "dense":
        return float(np.mean(f(exact_spectrum(lattice))))
    if method != "site":
        raise ConfigError(f"unknown trace method {method!r}")
    if not _uniform_torus(lattice):
        raise ConfigError("single-site traces need a magnetic torus without potential")
    H = finite_hamiltonian(lattice)
    lo, hi = spectral_bounds(H)
    coef = chebyshev_fit(f, lo, hi)
    n = lattice.n_sites
    sites = np.unique(np.linspace(0, n - 1, max(1, probes)).astype(int))
    V = np.zeros((n, len(sites)))
    V[sites, np.arange(len(sites))] = 1.0
    W = chebyshev_apply(H, V, coef, lo, hi)
    diag = W[sites, np.arange(len(sites))].real
    if np.ptp(diag) > SITE_SPREAD_TOL:
        raise NumericError(f"diagonal of f(H) not uniform across sites (spread {np.ptp(diag):.1e})")
    return float(np.mean(diag))


def classical_trace_per_site(flux0, f, epsilon, b, N=64, corrected=True):
    """(q/(2pi)^2) sum_j int (1 + s Omega) f(e + s M), s = eps b; plain int f(e) when not corrected."""
    s = epsilon * b if corrected else 0.0
    total = 0.0
    for bd in _bands(flux0.p, flux0.q, N):
        total += float(np.mean((1 + s * bd.omega) * f(bd.e + s * bd.moment))) / flux0.q
    return total


# -- scenarios ----------------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    """Parameters of an eps-ladder comparison; eps = 2 pi / L for each size L."""

    flux0: str = "1/3"
    b: int = 1
    sizes: tuple = (24, 48, 96)
    band: int = 1
    function: Profile = field(default_factory=Profile)
    t: float = 1.0
    potential_amplitude: float = 0.25
    initial: Profile = field(default_factory=Profile)
    observable: Profile = field(default_factory=lambda: Profile("cosine"))
    grid: int = 64
    k2_points: int = 32
    half_width: float = 9.0
    r_nodes: int = 40
    kappa_nodes: int = 24
    dt: float = 0.05

    def __post_init__(self):
        flux = self.flux
        if len(self.sizes) < 2:
            raise ConfigError("a scenario needs at least two sizes for a slope")
        if list(self.sizes) != sorted(set(self.sizes)):
            raise ConfigError("sizes must be strictly increasing (eps decreasing)")
        if float(self.b) != int(self.b):
            raise ConfigError("b must be an integer so that every torus carries integer flux")
        for L in self.sizes:
            if L % flux.q:
                raise ConfigError(f"q = {flux.q} must divide L = {L}")
        if not 1 <= self.band <= flux.q:
            raise ConfigError(f"band index {self.band} outside 1..{flux.q}")

    @property
    def flux(self):
        return FluxRational.parse(self.flux0)

    @property
    def epsilons(self):
        return [2 * np.pi / L for L in self.sizes]

    def field_at(self, L):
        return self.flux.B0 + 2 * np.pi / L * self.b

    def to_json(self):
        d = asdict(self)
        d["sizes"] = list(self.sizes)
        return json.dumps(d, sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        for key in ("function", "initial", "observable"):
            if key in data and isinstance(data[key], dict):
                data[key] = Profile(**data[key])
        if "sizes" in data:
            data["sizes"] = tuple(int(L) for L in data["sizes"])
        return cls(**data)


@dataclass(frozen=True)
class Comparison:
    """Rows of (epsilon, L, quantum, classical, error) for the corrected and plain models."""

    rows: tuple
    fit: SlopeFit
    ablation_fit: SlopeFit

    def table(self):
        cols = ("epsilon", "L", "quantum", "classical", "error", "classical_plain", "error_plain")
        return cols, [tuple(r[c] for c in cols) for r in self.rows]


def _comparison(rows):
    eps = [r["epsilon"] for r in rows]
    return Comparison(tuple(rows), fit_slope(eps, [r["error"] for r in rows]),
                      fit_slope(eps, [r["error_plain"] for r in rows]))


def equilibrium_compare(scenario):
    """Per-site trace of f(H^B) against the corrected and the plain band integrals."""
    flux, f = scenario.flux, scenario.function
    rows = []
    for L in scenario.sizes:
        eps = 2 * np.pi / L
        lat = FiniteLattice(L, L, scenario.field_at(L), "magnetic_torus", eps)
        qv = trace_f_per_site(lat, f)
        cv = classical_trace_per_site(flux, f, eps, scenario.b, scenario.grid)
        pv = classical_trace_per_site(flux, f, eps, scenario.b, scenario.grid, corrected=False)
        rows.append(dict(epsilon=eps, L=L, quantum=qv, classical=cv, error=abs(qv - cv),
                         classical_plain=pv, error_plain=abs(qv - pv)))
        log.info("equilibrium L=%d quantum=%.12g error=%.3e plain=%.3e", L, qv, abs(qv - cv), abs(qv - pv))
    return _comparison(rows)


# -- dynamics on a magnetic strip ---------------------------------------------

def band_window(flux, band, shift=0.0):
    """Energy interval containing band j when a potential of sup-norm ``shift`` is added.

    The edges are the midpoints of the neighbouring gaps; AdmissibilityError if
    the shifted band reaches a midpoint.
    """
    ranges = band_ranges(flux)
    j = band - 1
    lo = -np.inf if j == 0 else 0.5 * (ranges[j - 1, 1] + ranges[j, 0])
    hi = np.inf if j == flux.q - 1 else 0.5 * (ranges[j, 1] + ranges[j + 1, 0])
    if ranges[j, 0] - shift <= lo or ranges[j, 1] + shift >= hi:
        raise AdmissibilityError(f"potential of size {shift} closes a gap around band {band}")
    return lo, hi


def strip_expectation(flux0, b, epsilon, band, t, potential_amplitude, initial, observable,
                      k2_points=32, half_width=9.0):
    """tr(rho(t) a) / tr(rho(0)) for rho(0) = P a0 P on a magnetic strip.

    V(r1) = v cos(r1), a0 = ``initial`` and a = ``observable`` act as
    multiplication by functions of r1 = eps n1 on a chain of sites with
    |r1| <= half_width; P is the spectral projection of H onto the band window.
    """
    v = float(potential_amplitude)
    lo, hi = band_window(flux0, band, abs(v))
    B = flux0.B0 + epsilon * b
    L1 = 2 * int(half_width / epsilon) + 1
    r1 = epsilon * (np.arange(L1) - L1 // 2)
    onsite, A0, A = v * np.cos(r1), initial(r1), observable(r1)
    edge = max(abs(A0[0]), abs(A0[-1]))
    if edge > 1e-12 * np.max(np.abs(A0)):
        raise BoundaryProximityError(f"initial profile is {edge:.1e} at the strip edge; widen the strip")
    num = den = 0.0
    for k2 in np.arange(k2_points) * (2 * np.pi / k2_points):
        d, off = strip_sector_hamiltonian(L1, B, k2, onsite)
        lam, U = eigh_tridiagonal(d, off, lapack_driver="stev")
        sel = (lam > lo) & (lam < hi)
        Ub, lb = U[:, sel], lam[sel]
        M0 = Ub.T @ (A0[:, None] * Ub)
        M = Ub.T @ (A[:, None] * Ub)
        D = np.exp(-1j * lb * t / epsilon)
        num += float(np.sum((D[:, None] * M0 * D.conj()[None, :]) * M.T).real)
        den += float(np.trace(M0))
    return num / den


def ensemble_expectation(system, initial, observable, t, r_nodes=40, kappa_nodes=24, dt=0.05,
                         mode="exact"):
    """int nu a0(r1) a(r1(t)) / int nu a0(r1) over r1 and one reduced torus in kappa.

    a0 must be Gaussian; r1 uses Gauss-Hermite nodes, kappa a periodic grid.
    """
    if initial.kind != "gaussian":
        raise ConfigError("the classical ensemble needs a Gaussian initial profile")
    x, w = np.polynomial.hermite_e.hermegauss(r_nodes)
    x = initial.center + initial.width * x
    ks = np.arange(kappa_nodes) * (system.period / kappa_nodes)
    K1, K2, X = np.meshgrid(ks, ks, x, indexing="ij")
    W = np.broadcast_to(w, X.shape).ravel()
    z = np.stack([X.ravel(), np.zeros(X.size), K1.ravel(), K2.ravel()], axis=-1)
    nu = system.liouville_density(z[:, 2:])
    zt = flow_map(system, z, t, dt, mode=mode)
    return float(np.sum(W * nu * observable(zt[:, 0])) / np.sum(W * nu))


def egorov_compare(scenario):
    """Strip expectation against the corrected and the plain classical transport."""
    flux = scenario.flux
    pot = PotentialSpec.cosines([(scenario.potential_amplitude, (1, 0), 0.0)])
    rows = []
    for L in scenario.sizes:
        eps = 2 * np.pi / L
        qv = strip_expectation(flux, scenario.b, eps, scenario.band, scenario.t,
                               scenario.potential_amplitude, scenario.initial, scenario.observable,
                               scenario.k2_points, scenario.half_width)
        vals = []
        for geometric in (True, False):
            system = ClassicalSystem(flux, scenario.band, eps, scenario.b, pot, scenario.grid,
                                     geometric=geometric)
            vals.append(ensemble_expectation(system, scenario.initial, scenario.observable, scenario.t,
                                             scenario.r_nodes, scenario.kappa_nodes, scenario.dt))
        rows.append(dict(epsilon=eps, L=L, quantum=qv, classical=vals[0], error=abs(qv - vals[0]),
                         classical_plain=vals[1], error_plain=abs(qv - vals[1])))
        log.info("egorov L=%d quantum=%.12g error=%.3e plain=%.3e", L, qv, abs(qv - vals[0]),
                 abs(qv - vals[1]))
    return _comparison(rows)


# -- wavepackets on an open box -----------------------------------------------

@dataclass(frozen=True)
class Wavepacket:
    band: int
    center: tuple
    kappa: tuple
    sigma: float
    psi: np.ndarray
    band_weight: float


def bloch_wave(flux, band, k, n):
    """Band-j Bloch wave of H^{B0} at momentum k on integer sites n (shape (..., 2))."""
    w, U = np.linalg.eigh(bloch_matrix(flux, np.asarray(k, float)))
    u = U[:, band - 1]
    n1, n2 = n[..., 0], n[..., 1]
    phase = np.exp(1j * (k[0] * n1 - k[1] * n2) + 0.5j * flux.B0 * n1 * n2)
    return phase * u[np.mod(-n1, flux.q)]


def _window_function(lo, hi, smooth):
    def chi(x):
        a = 1.0 if np.isinf(lo) else 0.5 * (1 + erf((x - lo) / smooth))
        c = 1.0 if np.isinf(hi) else 0.5 * (1 - erf((x - hi) / smooth))
        return a * c
    return chi


def band_filter(H, psi, lo, hi, smooth=0.05, bounds=None):
    """chi(H) psi for an erf-smoothed indicator of [lo, hi]."""
    blo, bhi = bounds if bounds is not None else spectral_bounds(H)
    coef = chebyshev_fit(_window_function(lo, hi, smooth), blo, bhi, tol=1e-12)
    return chebyshev_apply(H, psi, coef, blo, bhi)


def band_weight(H, psi, lo, hi, smooth=0.01, bounds=None):
    """<psi, chi(H) psi> with a sharper smoothed indicator."""
    return float(np.vdot(psi, band_filter(H, psi, lo, hi, smooth, bounds)).real)


PACKET_WIDTH = 3.0


def make_wavepacket(lattice, flux0, band, center, kappa, sigma=None, min_weight=0.99):
    """Gaussian packet of width sigma/eps sites carrying the band Bloch vector at kappa.

    The default sigma = 3 sqrt(eps) gives a width of 3/sqrt(eps) sites, which
    balances the spread in position against the spread in momentum.

    ``center`` is the phase-space position r0; the packet is built around the
    nearest site by a dual magnetic translation, filtered onto the band window
    and normalized.
    """
    if lattice.boundary != "open_box":
        raise ConfigError("wavepackets live on an open box")
    eps = lattice.epsilon
    if sigma is None:
        sigma = PACKET_WIDTH * np.sqrt(eps)
    c = np.rint(np.array([center[0], -center[1]]) / eps).astype(int)
    width = sigma / eps
    for ci, L in zip(c, (lattice.L1, lattice.L2)):
        if ci < 5 * width or L - 1 - ci < 5 * width:
            raise BoundaryProximityError("packet center closer than 5 widths to the boundary")
    j1, j2 = site_grid(lattice.L1, lattice.L2)
    n = np.stack([j1, j2], axis=-1)
    m = n - c
    envelope = np.exp(-0.25 * np.sum(m.astype(float) ** 2, axis=-1) / width ** 2)
    gauge = np.exp(-0.5j * lattice.B * (c[0] * j2 - c[1] * j1))
    psi = gauge * envelope * bloch_wave(flux0, band, np.asarray(kappa, float), m)
    H = finite_hamiltonian(lattice)
    bounds = spectral_bounds(H)
    vmax = 0.0
    if not lattice.potential.is_zero:
        vmax = float(np.max(np.abs(lattice.potential.value(phase_space_position(n, eps)))))
    lo, hi = band_window(flux0, band, vmax)
    psi = band_filter(H, psi, lo, hi, bounds=bounds)
    psi /= np.linalg.norm(psi)
    weight = band_weight(H, psi, lo, hi, bounds=bounds)
    if weight < min_weight:
        raise FilterLeakageError(f"band weight {weight:.4f} below {min_weight}")
    r0 = tuple(float(x) for x in phase_space_position(c, eps))
    return Wavepacket(band, r0, tuple(float(x) for x in kappa), float(sigma), psi, weight)


def _edge_weight(lattice, psi, margin=3):
    j1, j2 = site_grid(lattice.L1, lattice.L2)
    near = ((j1 < margin) | (j1 >= lattice.L1 - margin) | (j2 < margin) | (j2 >= lattice.L2 - margin))
    return float(np.sum(np.abs(psi[near]) ** 2))


def evolve_expectation(lattice, psi, observable, times, edge_tol=1e-8):
    """<psi(t), a psi(t)> with psi(t) = exp(-i H t / eps) psi.

    ``observable`` is a function of phase-space positions r (shape (n, 2)) or
    an array of site values.  BoundaryProximityError if the state reaches the
    last three rows of an open boundary.
    """
    eps = lattice.epsilon
    j1, j2 = site_grid(lattice.L1, lattice.L2)
    if callable(observable):
        a = observable(phase_space_position(np.stack([j1, j2], axis=-1), eps))
    else:
        a = np.asarray(observable)
    H = finite_hamiltonian(lattice)
    bounds = spectral_bounds(H)
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or times[0] < 0:
        raise ConfigError("times must be non-negative and increasing")
    out = np.empty(len(times))
    state, now = np.array(psi, dtype=complex), 0.0
    for i, t in enumerate(times):
        if t > now:
            state = chebyshev_propagate(H, state, (t - now) / eps, bounds)
            now = t
        norm = np.linalg.norm(state)
        if abs(norm - np.linalg.norm(psi)) > 1e-10:
            raise NumericError(f"propagation lost unitarity (norm {norm:.12f})")
        if lattice.boundary == "open_box" and _edge_weight(lattice, state) > edge_tol:
            raise BoundaryProximityError(f"state reached the boundary by t = {t}")
        out[i] = float(np.vdot(state, a * state).real)
    return out
