"""Hofstadter Bloch matrix and finite-lattice magnetic Hamiltonians.

The fiber matrix ``H0(k)`` acts on C^q for a background flux B0 = 2*pi*p/q per
plaquette.  Finite lattices carry the symmetric-gauge hopping

    (T_n psi)_j = exp(i/2 * B * (n1*j2 - n2*j1)) psi_{j-n},   |n| = 1,

on an L1 x L2 patch of Z^2, either wrapped into a magnetic torus, cut open
into a box, or wrapped in the second direction only (a magnetic strip).

Lattice site n sits at phase-space position r = eps * (n1, -n2).  The
reflection of the second axis aligns the orientation of the lattice field with
the orientation in which the fiber matrix is written: with it, the band
velocity of a Bloch wave is d(e)/d(kappa) and the Streda count of torus states
grows with +b * c_1.
"""
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from math import gcd

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError

log = logging.getLogger(__name__)

BOUNDARIES = ("magnetic_torus", "open_box", "magnetic_strip")
_HOPS = ((1, 0), (-1, 0), (0, 1), (0, -1))


@dataclass(frozen=True)
class FluxRational:
    """Reduced flux p/q per plaquette, B0 = 2*pi*p/q, with 0 <= p < q."""

    p: int
    q: int

    def __post_init__(self):
        if not isinstance(self.p, (int, np.integer)) or not isinstance(self.q, (int, np.integer)):
            raise ConfigError("flux numerator and denominator must be integers")
        if self.q < 1:
            raise ConfigError(f"flux denominator must be positive, got {self.q}")
        if not 0 <= self.p < self.q:
            raise ConfigError(f"flux numerator must satisfy 0 <= p < q, got {self.p}/{self.q}")
        if gcd(int(self.p), int(self.q)) != 1:
            raise ConfigError(f"flux {self.p}/{self.q} is not reduced")

    @property
    def B0(self):
        return 2 * np.pi * self.p / self.q

    @classmethod
    def parse(cls, text):
        """Read ``"p/q"``, reducing p modulo q."""
        try:
            num, _, den = str(text).partition("/")
            p, q = int(num), int(den or 1)
        except ValueError as exc:
            raise ConfigError(f"cannot parse flux {text!r}; expected p/q") from exc
        if q < 1:
            raise ConfigError(f"flux denominator must be positive in {text!r}")
        g = gcd(p, q)
        return cls((p // g) % (q // g), q // g)

    @classmethod
    def from_field(cls, B, max_denominator=64, tol=1e-12):
        """Snap a field value B to the nearest p/q with q <= max_denominator.

        The snap is logged at warning level whenever it moves B by more than tol.
        """
        frac = Fraction(float(B) / (2 * np.pi)).limit_denominator(max_denominator)
        snapped = 2 * np.pi * float(frac)
        if abs(snapped - B) > tol:
            log.warning("field %.17g snapped to 2*pi*%s (shift %.3e)", B, frac, snapped - B)
        return cls(frac.numerator % frac.denominator, frac.denominator)

    def __str__(self):
        return f"{self.p}/{self.q}"


def _as_k(k):
    k = np.asarray(k, dtype=float)
    if k.shape[-1] != 2:
        raise ConfigError("momenta must have a trailing axis of length 2")
    return k


def bloch_matrix(flux, k):
    """Fiber Hamiltonian H0(k) for every momentum in ``k`` (shape (..., 2)).

    Diagonal 2cos(k2 + m*B0), m = 0..q-1; exp(-i k1) on the cyclic
    superdiagonal (including the corner H[q-1, 0]) and exp(+i k1) on the cyclic
    subdiagonal.  For q = 1 both hops land on the diagonal.
    """
    k = _as_k(k)
    q = flux.q
    k1, k2 = k[..., 0], k[..., 1]
    H = np.zeros(k.shape[:-1] + (q, q), dtype=complex)
    m = np.arange(q)
    H[..., m, m] = 2 * np.cos(k2[..., None] + m * flux.B0)
    up = np.exp(-1j * k1)[..., None]
    H[..., m, (m + 1) % q] += up
    H[..., (m + 1) % q, m] += np.conj(up)
    return H


def bloch_gradient(flux, k):
    """Closed-form derivatives (dH0/dk1, dH0/dk2), each shaped like bloch_matrix."""
    k = _as_k(k)
    q = flux.q
    k1, k2 = k[..., 0], k[..., 1]
    d1 = np.zeros(k.shape[:-1] + (q, q), dtype=complex)
    d2 = np.zeros_like(d1)
    m = np.arange(q)
    d2[..., m, m] = -2 * np.sin(k2[..., None] + m * flux.B0)
    up = (-1j * np.exp(-1j * k1))[..., None]
    d1[..., m, (m + 1) % q] += up
    d1[..., (m + 1) % q, m] += np.conj(up)
    return d1, d2


def check_dual_vector(flux, gamma, tol=1e-9):
    """Return the integer coordinates of gamma in (2pi/q)Z x 2piZ or raise."""
    gamma = np.asarray(gamma, dtype=float)
    c = np.array([gamma[0] * flux.q / (2 * np.pi), gamma[1] / (2 * np.pi)])
    if np.any(np.abs(c - np.round(c)) > tol):
        raise ConfigError(f"{gamma.tolist()} is not in the dual lattice (2pi/{flux.q})Z x 2piZ")
    return np.round(c).astype(int)


def tau(flux, gamma):
    """diag(1, exp(-i g1), ..., exp(-i (q-1) g1)) for a dual vector gamma."""
    check_dual_vector(flux, gamma)
    return np.diag(np.exp(-1j * np.arange(flux.q) * gamma[0]))


def tau_equivariance_residual(flux, k, gamma):
    """Max-norm of H0(k + gamma) - tau(-gamma) H0(k) tau(gamma).

    The displayed fiber matrix satisfies the equivariance with tau(-gamma) on
    the left; with tau(gamma) on the left it fails for q >= 3.
    """
    gamma = np.asarray(gamma, dtype=float)
    T = tau(flux, gamma)
    lhs = bloch_matrix(flux, np.asarray(k, float) + gamma)
    rhs = T.conj().T @ bloch_matrix(flux, k) @ T
    return float(np.max(np.abs(lhs - rhs)))


# -- potentials --------------------------------------------------------------

@dataclass(frozen=True)
class PotentialSpec:
    """V(r) = sum_m c_m exp(i m.r) + field . r.

    ``bulk`` is a tuple of ((m1, m2), c_m) entries with integer m; the
    coefficients must be Hermitian-symmetric, c_{-m} = conj(c_m), so V is real.
    """

    bulk: tuple = ()
    field: tuple = (0.0, 0.0)

    def __post_init__(self):
        coeffs = {}
        for entry in self.bulk:
            (m1, m2), c = entry
            key = (int(m1), int(m2))
            if key in coeffs:
                raise ConfigError(f"duplicate Fourier mode {key}")
            coeffs[key] = complex(c)
        for (m1, m2), c in coeffs.items():
            partner = coeffs.get((-m1, -m2))
            if partner is None or abs(partner - np.conj(c)) > 1e-14 * max(1.0, abs(c)):
                raise ConfigError(f"bulk coefficient for mode {(m1, m2)} lacks its conjugate partner")
        if len(self.field) != 2:
            raise ConfigError("field must have two components")

    @classmethod
    def cosines(cls, terms=(), field=(0.0, 0.0)):
        """Build sum of a*cos(m.r + phase) from (a, (m1, m2), phase) triples."""
        coeffs = {}
        for a, (m1, m2), phase in terms:
            if (m1, m2) == (0, 0):
                coeffs[(0, 0)] = coeffs.get((0, 0), 0) + a * np.cos(phase)
                continue
            c = 0.5 * a * np.exp(1j * phase)
            coeffs[(m1, m2)] = coeffs.get((m1, m2), 0) + c
            coeffs[(-m1, -m2)] = coeffs.get((-m1, -m2), 0) + np.conj(c)
        return cls(tuple(sorted(coeffs.items())), tuple(float(x) for x in field))

    @property
    def has_bulk(self):
        return any(abs(c) > 0 for _, c in self.bulk)

    @property
    def is_zero(self):
        return not self.has_bulk and not any(self.field)

    def _modes(self):
        if not self.bulk:
            return np.zeros((0, 2)), np.zeros(0, complex)
        m = np.array([e[0] for e in self.bulk], dtype=float)
        c = np.array([e[1] for e in self.bulk], dtype=complex)
        return m, c

    def value(self, r):
        r = np.asarray(r, dtype=float)
        m, c = self._modes()
        out = r @ np.asarray(self.field, float)
        if len(c):
            out = out + (np.exp(1j * (r @ m.T)) @ c).real
        return out

    def gradient(self, r):
        r = np.asarray(r, dtype=float)
        m, c = self._modes()
        out = np.broadcast_to(np.asarray(self.field, float), r.shape).copy()
        if len(c):
            w = 1j * np.exp(1j * (r @ m.T)) * c
            out += (w @ m).real
        return out


# -- finite lattices ---------------------------------------------------------

@dataclass(frozen=True)
class FiniteLattice:
    L1: int
    L2: int
    B: float
    boundary: str = "magnetic_torus"
    epsilon: float = 1.0
    potential: PotentialSpec = field(default_factory=PotentialSpec)

    def __post_init__(self):
        if self.L1 < 1 or self.L2 < 1:
            raise ConfigError("lattice sides must be positive")
        if self.boundary not in BOUNDARIES:
            raise ConfigError(f"unknown boundary {self.boundary!r}; expected one of {BOUNDARIES}")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        periodic = self.periodic_axes
        if periodic[0] and periodic[1]:
            nflux = self.B * self.L1 * self.L2 / (2 * np.pi)
            if abs(nflux - round(nflux)) > 1e-9:
                raise ConfigError(f"total torus flux B*L1*L2/2pi = {nflux:.12g} is not an integer")
        for axis, (per, L) in enumerate(zip(periodic, (self.L1, self.L2))):
            if not per:
                continue
            if self.potential.field[axis] != 0:
                raise ConfigError("a linear potential is incompatible with a periodic direction")
            if self.potential.has_bulk:
                turns = self.epsilon * L / (2 * np.pi)
                if abs(turns - round(turns)) > 1e-9 or round(turns) < 1:
                    raise ConfigError("bulk potential on a periodic direction needs epsilon*L in 2*pi*Z")

    @property
    def periodic_axes(self):
        return {"magnetic_torus": (True, True), "open_box": (False, False),
                "magnetic_strip": (False, True)}[self.boundary]

    @property
    def n_sites(self):
        return self.L1 * self.L2


def site_grid(L1, L2):
    """Integer coordinates (j1, j2) of all sites in row-major order j1*L2 + j2."""
    j1, j2 = np.meshgrid(np.arange(L1), np.arange(L2), indexing="ij")
    return j1.ravel(), j2.ravel()


def phase_space_position(n, eps):
    """Phase-space position r = eps*(n1, -n2) of lattice sites n (shape (..., 2))."""
    n = np.asarray(n, dtype=float)
    return eps * np.stack([n[..., 0], -n[..., 1]], axis=-1)


def potential_on_sites(lattice):
    j1, j2 = site_grid(lattice.L1, lattice.L2)
    r = phase_space_position(np.stack([j1, j2], axis=-1), lattice.epsilon)
    return lattice.potential.value(r)


def _translation(lattice, shift, sign):
    """Operator psi -> exp(sign*i/2 * B*(s1*j2 - s2*j1)) psi_{j - shift}.

    Targets outside the patch are mapped back with magnetic-periodic phases on
    periodic axes and dropped on open ones.
    """
    L1, L2, B = lattice.L1, lattice.L2, lattice.B
    per = lattice.periodic_axes
    s1, s2 = shift
    if (per[0] and abs(s1) > L1) or (per[1] and abs(s2) > L2):
        raise ConfigError("translation longer than a period")
    j1, j2 = site_grid(L1, L2)
    t1, t2 = j1 - s1, j2 - s2
    w1, w2 = t1 % L1, t2 % L2
    n1, n2 = (t1 - w1) // L1, (t2 - w2) // L2
    keep = np.ones(j1.shape, bool)
    if not per[0]:
        keep &= n1 == 0
    if not per[1]:
        keep &= n2 == 0
    phase = sign * 0.5 * B * (s1 * j2 - s2 * j1)
    # psi_{w + (n1 L1, n2 L2)} expressed through psi_w
    phase = phase - 0.5 * B * n1 * L1 * w2 + 0.5 * B * n2 * L2 * (w1 + n1 * L1)
    rows = (j1 * L2 + j2)[keep]
    cols = (w1 * L2 + w2)[keep]
    vals = np.exp(1j * phase[keep])
    N = L1 * L2
    return sp.csr_matrix((vals, (rows, cols)), shape=(N, N))


def finite_hamiltonian(lattice):
    """Sparse H^B = sum over unit hops of T_n, plus the diagonal potential."""
    H = sum(_translation(lattice, n, +1) for n in _HOPS)
    if not lattice.potential.is_zero:
        H = H + sp.diags(potential_on_sites(lattice))
    return sp.csr_matrix(H)


def dual_translation(lattice, gamma):
    """Dual magnetic translation psi -> exp(-i/2 * B * gamma x j) psi_{j-gamma}."""
    return _translation(lattice, tuple(int(g) for g in gamma), -1)


def dual_translation_residual(lattice, flux=None):
    """Max entry of [H^B, T~_gamma] over the generators (q, 0) and (0, 1) of Gamma_q."""
    if lattice.boundary != "magnetic_torus":
        raise ConfigError("dual translations are checked on the magnetic torus only")
    if not lattice.potential.is_zero:
        raise ConfigError("dual translation invariance needs V = 0")
    if flux is None:
        flux = FluxRational.from_field(lattice.B)
    if lattice.L1 % flux.q:
        raise ConfigError(f"q = {flux.q} does not divide L1 = {lattice.L1}")
    H = finite_hamiltonian(lattice)
    worst = 0.0
    for gamma in ((flux.q, 0), (0, 1)):
        T = dual_translation(lattice, gamma)
        C = (H @ T - T @ H).tocoo()
        if C.nnz:
            worst = max(worst, float(np.max(np.abs(C.data))))
    return worst


def strip_sector_hamiltonian(L1, B, k2, onsite=None):
    """Harper chain for one dual-translation sector of a magnetic strip.

    On a strip (open in the first direction, magnetic-periodic with period L2 in
    the second) the symmetric-gauge states psi_j = exp(i k2 j2 + i/2 B j1 j2)
    phi_{j1}, k2 in 2*pi*Z/L2, diagonalize the dual translation by (0, 1); H^B
    acts on phi as the real symmetric tridiagonal matrix returned here.
    """
    j1 = np.arange(L1)
    diag = 2 * np.cos(k2 + B * j1)
    if onsite is not None:
        diag = diag + onsite
    off = np.ones(L1 - 1)
    return diag, off


def farey_fractions(q_max):
    """Reduced fractions p/q in [0, 1) with q <= q_max, in increasing order."""
    out = {(0, 1)}
    for q in range(2, q_max + 1):
        for p in range(1, q):
            if gcd(p, q) == 1:
                out.add((p, q))
    return sorted(out, key=lambda pq: Fraction(*pq))


def butterfly(q_max, grid=8):
    """(flux, eigenvalue) pairs of H0(k) on a grid x grid mesh of each reduced torus."""
    rows = []
    for p, q in farey_fractions(q_max):
        flux = FluxRational(p, q)
        ks = np.arange(grid) * (2 * np.pi / q) / grid
        K = np.stack(np.meshgrid(ks, ks, indexing="ij"), axis=-1).reshape(-1, 2)
        ev = np.linalg.eigvalsh(bloch_matrix(flux, K))
        ev = np.sort(ev.ravel())
        rows.append((flux, ev))
    return rows
