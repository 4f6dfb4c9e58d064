"""Band projections, Berry curvature, magnetic moment and Chern numbers.

Everything here is assembled from spectral projections of the fiber matrix,
never from eigenvector phases.  Bands are numbered 1..q from the bottom.
All point-wise functions accept a single momentum (shape (2,)) or a batch
(shape (..., 2)).
"""
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import AdmissibilityError, ConfigError, DegeneracyError
from .lattice_model import bloch_gradient, bloch_matrix

DEGENERACY_TOL = 1e-10
MOMENT_FORMS = ("trace", "def", "alt1", "alt2", "alt3")


def _tr(A):
    return np.trace(A, axis1=-2, axis2=-1)


def eigensystem(H, tol=DEGENERACY_TOL):
    """Ascending eigenvalues and rank-one projections of Hermitian H (..., q, q).

    Returns (e, P) with e of shape (..., q) and P of shape (..., q, q, q), where
    P[..., j, :, :] projects onto the eigenspace of e[..., j].
    """
    H = np.asarray(H)
    e, U = np.linalg.eigh(H)
    if H.shape[-1] > 1:
        gaps = np.diff(e, axis=-1)
        if np.min(gaps) < tol:
            j = int(np.unravel_index(np.argmin(gaps), gaps.shape)[-1])
            raise DegeneracyError(
                f"eigenvalues {j + 1} and {j + 2} are degenerate (spacing {np.min(gaps):.2e})",
                pair=(j + 1, j + 2))
    P = np.einsum("...an,...bn->...nab", U, U.conj())
    return e, P


def _check_band(flux, j):
    if not 1 <= j <= flux.q:
        raise ConfigError(f"band index {j} outside 1..{flux.q}")


def _band_jet(flux, j, k):
    """H, (dH1, dH2), e_j, pi_j, (dpi1, dpi2) at momenta k."""
    _check_band(flux, j)
    H = bloch_matrix(flux, k)
    dH = bloch_gradient(flux, k)
    e, P = eigensystem(H)
    n = j - 1
    pj, ej = P[..., n, :, :], e[..., n]
    # reduced resolvent R = (H - e)^-1 (1 - pi) = sum_{l != j} pi_l / (e_l - e_j)
    R = np.zeros_like(H)
    for l in range(flux.q):
        if l != n:
            R += P[..., l, :, :] / (e[..., l] - ej)[..., None, None]
    # first-order perturbation theory: d pi = -(pi dH R + R dH pi)
    dP = tuple(-(pj @ d @ R + R @ d @ pj) for d in dH)
    return H, dH, ej, pj, dP


def band_projection(flux, j, k):
    _check_band(flux, j)
    return eigensystem(bloch_matrix(flux, k))[1][..., j - 1, :, :]


def band_energy(flux, j, k):
    _check_band(flux, j)
    return eigensystem(bloch_matrix(flux, k))[0][..., j - 1]


def projection_derivative(flux, j, k, direction):
    """d(pi_j)/dk_direction for direction 1 or 2."""
    if direction not in (1, 2):
        raise ConfigError("direction must be 1 or 2")
    return _band_jet(flux, j, k)[4][direction - 1]


def _curvature(p, dp):
    c = -1j * _tr(p @ (dp[0] @ dp[1] - dp[1] @ dp[0]))
    return c.real


def berry_curvature(flux, j, k):
    """Omega_j(k) = -i tr(pi [d1 pi, d2 pi])."""
    _, _, _, p, dp = _band_jet(flux, j, k)
    return _curvature(p, dp)


def _bracket3(dA, Bm, dC):
    """Generalized bracket for symbols of kappa alone, per unit field b.

    With phase-space coordinates (q, p) = (r, k) and kappa = k + b J r / 2,
    d/dr1 = -(b/2) d2 and d/dr2 = (b/2) d1, so
    {A|B|C} = b (d2A B d1C - d1A B d2C).
    """
    return dA[1] @ Bm @ dC[0] - dA[0] @ Bm @ dC[1]


def _moment(H, dH, e, p, dp, form):
    q = H.shape[-1]
    eye = np.eye(q)
    He = H - e[..., None, None] * eye
    if form == "trace":
        return _tr(p @ dp[0] @ He @ dp[1]).imag
    if form == "def":
        return (0.5j * _tr(_bracket3(dp, H, dp))).real
    if form == "alt1":
        return (0.5j * _tr(_bracket3(dp, He, dp))).real
    if form == "alt2":
        return (0.5j * _tr(_bracket3(dp, He, dp) @ p)).real
    if form == "alt3":
        # d(H - e) with de = tr(pi dH)
        dHe = tuple(d - _tr(p @ d).real[..., None, None] * eye for d in dH)
        pb = dp[1] @ dHe[0] - dp[0] @ dHe[1]
        return (-0.5j * _tr(p @ pb)).real
    raise ConfigError(f"unknown moment form {form!r}; expected one of {MOMENT_FORMS}")


def magnetic_moment(flux, j, k, form="trace"):
    """Moment M_j(k) = Im tr(pi d1pi (H0 - e) d2pi), or one of its bracket forms."""
    H, dH, e, p, dp = _band_jet(flux, j, k)
    return _moment(H, dH, e, p, dp, form)


def torus_grid(flux, N):
    """N x N periodic mesh of the reduced torus [0, 2pi/q)^2, shape (N, N, 2)."""
    ks = np.arange(N) * (2 * np.pi / flux.q) / N
    return np.stack(np.meshgrid(ks, ks, indexing="ij"), axis=-1)


@dataclass(frozen=True)
class BandData:
    """Grid samples of one band on the reduced torus."""

    flux: object
    band_index: int
    N: int
    k: np.ndarray
    e: np.ndarray
    pi: np.ndarray
    omega: np.ndarray
    moment: np.ndarray

    @property
    def spacing(self):
        return 2 * np.pi / (self.flux.q * self.N)


def band_data(flux, j, N=64):
    k = torus_grid(flux, N)
    H, dH, e, p, dp = _band_jet(flux, j, k)
    return BandData(flux, j, N, k, e, p, _curvature(p, dp), _moment(H, dH, e, p, dp, "trace"))


def all_bands(flux, N=64):
    return [band_data(flux, j, N) for j in range(1, flux.q + 1)]


@dataclass(frozen=True)
class ChernResult:
    band_index: int
    chern: int
    grid_size: int
    plaquette_fluxes: np.ndarray
    residual: float
    total: float


def chern_number(flux, j, N=60):
    """Chern number of band j from plaquette products of projections.

    The plaquette fluxes arg tr(pi1 pi2 pi3 pi4) are taken counterclockwise on
    an N x N mesh of the reduced torus [0, 2pi/q)^2; the mesh is closed with the
    actual projections at the far edges, which are unitarily conjugate to the
    near ones.  The q reduced tori tile the full magnetic Brillouin zone with
    identical fluxes, so the Chern number is q times the reduced-torus sum over
    2pi.
    """
    _check_band(flux, j)
    h = 2 * np.pi / (flux.q * N)
    ks = np.arange(N + 1) * h
    k = np.stack(np.meshgrid(ks, ks, indexing="ij"), axis=-1)
    P = band_projection(flux, j, k)
    loop = (P[:-1, :-1] @ P[1:, :-1] @ P[1:, 1:] @ P[:-1, 1:])
    fluxes = np.angle(_tr(loop))
    worst = float(np.max(np.abs(fluxes)))
    if worst >= np.pi:
        raise AdmissibilityError(f"plaquette flux {worst:.3f} reaches pi; refine the grid")
    total = flux.q * float(np.sum(fluxes)) / (2 * np.pi)
    c = int(np.round(total))
    return ChernResult(j, c, N, fluxes, abs(total - c), total)


def curvature_integral(flux, j, N=120):
    """(q/2pi) * integral of Omega_j over the reduced torus, periodic trapezoid rule."""
    bd = band_data(flux, j, N)
    return flux.q * float(np.sum(bd.omega)) * bd.spacing ** 2 / (2 * np.pi)


@dataclass(frozen=True)
class GapReport:
    gaps: np.ndarray
    flagged: tuple
    middle_pair: tuple


def gap_check(flux, N=50, tol=DEGENERACY_TOL):
    """Minimum over the mesh of e_{j+1} - e_j for j = 1..q-1.

    ``flagged`` lists the 1-based lower indices of gaps below tol;
    ``middle_pair`` names the touching middle bands for even q.
    """
    if flux.q == 1:
        return GapReport(np.zeros(0), (), ())
    e = np.linalg.eigvalsh(bloch_matrix(flux, torus_grid(flux, N)))
    gaps = np.min(np.diff(e, axis=-1), axis=(0, 1))
    flagged = tuple(int(i) + 1 for i in np.flatnonzero(gaps < tol))
    middle = (flux.q // 2, flux.q // 2 + 1) if flux.q % 2 == 0 else ()
    return GapReport(gaps, flagged, middle)


def band_ranges(flux, N=32):
    """(min, max) of each band, grid extrema polished by a local optimizer."""
    k = torus_grid(flux, N)
    e = np.linalg.eigvalsh(bloch_matrix(flux, k))
    out = np.empty((flux.q, 2))
    for n in range(flux.q):
        for col, sign in ((0, 1.0), (1, -1.0)):
            idx = np.unravel_index(np.argmin(sign * e[..., n]), e.shape[:2])

            def fun(x, n=n, sign=sign):
                H = bloch_matrix(flux, x)
                w, U = np.linalg.eigh(H)
                u = U[:, n]
                grad = [np.vdot(u, d @ u).real for d in bloch_gradient(flux, x)]
                return sign * w[n], sign * np.array(grad)

            res = minimize(fun, k[idx], jac=True, method="BFGS", options={"gtol": 1e-12})
            out[n, col] = sign * min(res.fun, sign * e[idx + (n,)])
    return out
