"""The eps-corrected classical system of one band in kinetic-momentum coordinates.

Phase-space points are z = (r1, r2, kappa1, kappa2) with kappa = k + b J r / 2
and J = [[0, 1], [-1, 0]].  For band j the system is

    h(z)   = e(kappa) + V(r) + eps * b * M(kappa)
    omega  = [[-b J, I], [-I, eps * Omega(kappa) J]]

and the Hamiltonian vector field X solves omega(X, .) = dh, i.e.
X = -omega^{-1} grad h.  With this convention the field reduces to
r' = dh/dkappa, kappa' = -dh/dr at eps = b = 0, the bracket
{f, g} = grad f . omega^{-1} grad g gives {kappa_i, r_i} = 1, and the density
1 + eps*b*Omega = |Pf omega| is carried along the flow.

Setting ``geometric=False`` removes every eps-correction (Omega and M)
while keeping the field increment b in the form; this is the uncorrected
model used in ablation runs.
"""
import numpy as np
from scipy import ndimage

from .band_geometry import band_data
from .errors import AdmissibilityError, ConfigError, DegenerateFormError
from .lattice_model import PotentialSpec

J = np.array([[0.0, 1.0], [-1.0, 0.0]])
I2 = np.eye(2)
MIN_DENSITY = 0.1
FIELD_MODES = ("exact", "exact_solve", "paper_truncated")


class PeriodicInterpolant:
    """Trigonometric interpolant of samples on an N x N periodic grid.

    Values and derivatives come from the truncated Fourier series of the grid
    data.  Small batches are summed directly; large batches are read off a
    spectrally upsampled grid with periodic quintic splines, which reproduces
    the series to about 1e-11 for band data.
    """

    direct_limit = 256

    def __init__(self, values, period, tol=1e-10, upsample=8):
        values = np.asarray(values, dtype=float)
        N = values.shape[0]
        if values.shape != (N, N) or N < 8:
            raise ConfigError("interpolation grid must be square with N >= 8")
        self.N, self.period = N, float(period)
        c = np.fft.fft2(values) / N ** 2
        m = np.fft.fftfreq(N, 1.0 / N)
        shell = np.maximum(np.abs(m)[:, None], np.abs(m)[None, :])
        scale = max(np.max(np.abs(c)), 1e-300)
        self.tail = float(np.max(np.abs(c[shell >= N // 2 - 1]))) / scale
        if self.tail > tol:
            raise AdmissibilityError(
                f"band data too coarse for interpolation (relative Fourier tail {self.tail:.1e}); raise N")
        if N % 2 == 0:
            c[shell == N // 2] = 0.0
        K = (N - 1) // 2
        idx = np.r_[0:K + 1, N - K:N]
        self._modes = np.r_[0:K + 1, -K:0].astype(float)
        self._coef = c[np.ix_(idx, idx)]
        self._spectrum = c
        self._upsample = upsample
        self._fine = {}
        self.omega0 = 2 * np.pi / self.period

    def coefficients(self, deriv=(0, 0)):
        w = 1j * self.omega0 * self._modes
        return self._coef * np.multiply.outer(w ** deriv[0], w ** deriv[1])

    def basis(self, x):
        """Exponentials exp(i w m x1), exp(i w m x2) for the retained modes."""
        w = self.omega0 * self._modes
        return (np.exp(1j * np.multiply.outer(x[..., 0], w)),
                np.exp(1j * np.multiply.outer(x[..., 1], w)))

    def _direct(self, x, deriv):
        E1, E2 = self.basis(x)
        return np.einsum("...a,ab,...b->...", E1, self.coefficients(deriv), E2).real

    def _fine_grid(self, deriv):
        if deriv not in self._fine:
            N, up = self.N, self._upsample
            M = N * up
            m = np.fft.fftfreq(N, 1.0 / N)
            w = self.omega0 * m
            c = self._spectrum * np.multiply.outer((1j * w) ** deriv[0], (1j * w) ** deriv[1])
            big = np.zeros((M, M), complex)
            h = N // 2
            lo, hi = np.r_[0:h], np.r_[N - h:N]
            big_lo, big_hi = np.r_[0:h], np.r_[M - h:M]
            for src_r, dst_r in ((lo, big_lo), (hi, big_hi)):
                for src_c, dst_c in ((lo, big_lo), (hi, big_hi)):
                    big[np.ix_(dst_r, dst_c)] = c[np.ix_(src_r, src_c)]
            fine = (np.fft.ifft2(big) * M ** 2).real
            self._fine[deriv] = ndimage.spline_filter(fine, order=5, mode="grid-wrap")
        return self._fine[deriv]

    def __call__(self, x, deriv=(0, 0)):
        x = np.asarray(x, dtype=float)
        deriv = tuple(int(d) for d in deriv)
        if x[..., 0].size <= self.direct_limit:
            return self._direct(x, deriv)
        fine = self._fine_grid(deriv)
        h = self.period / fine.shape[0]
        coords = np.stack([x[..., 0].ravel() / h, x[..., 1].ravel() / h])
        out = ndimage.map_coordinates(fine, coords, order=5, mode="grid-wrap", prefilter=False)
        return out.reshape(x.shape[:-1])


def pfaffian4(A):
    """Pfaffian a12 a34 - a13 a24 + a14 a23 of (..., 4, 4) antisymmetric arrays."""
    A = np.asarray(A)
    return (A[..., 0, 1] * A[..., 2, 3] - A[..., 0, 2] * A[..., 1, 3]
            + A[..., 0, 3] * A[..., 1, 2])


class ClassicalSystem:
    """Classical Hamiltonian system (h, omega_eps) of one Hofstadter band."""

    def __init__(self, flux, band_index, epsilon=0.0, b=0.0, potential=None, N=64,
                 geometric=True, band=None):
        if epsilon < 0:
            raise ConfigError("epsilon must be non-negative")
        self.flux, self.band_index = flux, band_index
        self.epsilon, self.b = float(epsilon), float(b)
        self.potential = potential if potential is not None else PotentialSpec()
        self.geometric = bool(geometric)
        self.band = band if band is not None else band_data(flux, band_index, N)
        period = 2 * np.pi / flux.q
        self.period = period
        self._e = PeriodicInterpolant(self.band.e, period)
        self._omega = PeriodicInterpolant(self.band.omega, period)
        self._moment = PeriodicInterpolant(self.band.moment, period)
        density = 1 + self.coupling * self.band.omega
        if np.min(density) < MIN_DENSITY:
            raise DegenerateFormError(
                f"1 + eps*b*Omega reaches {np.min(density):.3f} < {MIN_DENSITY}; the corrected form degenerates")
        self.bJ = self.b * J
        # fields needed by the vector field, evaluated together
        self._stack_spec = [(self._e, (1, 0)), (self._e, (0, 1)),
                            (self._moment, (1, 0)), (self._moment, (0, 1)), (self._omega, (0, 0))]
        stack = np.stack([f.coefficients(d) for f, d in self._stack_spec])
        self._stack = np.ascontiguousarray(stack.transpose(1, 0, 2)).reshape(stack.shape[1], -1)

    def _field_stack(self, kap):
        """(de/dk1, de/dk2, dM/dk1, dM/dk2, Omega) at kap, shape (..., 5)."""
        if kap[..., 0].size <= PeriodicInterpolant.direct_limit:
            E1, E2 = self._e.basis(kap)
            T = (E1 @ self._stack).reshape(E1.shape[:-1] + (len(self._stack_spec), -1))
            return np.sum(T * E2[..., None, :], axis=-1).real
        return np.stack([f(kap, d) for f, d in self._stack_spec], axis=-1)

    @property
    def coupling(self):
        """eps * b, or 0 for the uncorrected model."""
        return self.epsilon * self.b if self.geometric else 0.0

    # -- scalar fields -------------------------------------------------------
    def energy(self, kappa, deriv=(0, 0)):
        return self._e(kappa, deriv)

    def curvature(self, kappa, deriv=(0, 0)):
        return self._omega(kappa, deriv)

    def moment(self, kappa, deriv=(0, 0)):
        return self._moment(kappa, deriv)

    def h(self, z):
        z = np.asarray(z, dtype=float)
        r, kap = z[..., :2], z[..., 2:]
        out = self._e(kap) + self.potential.value(r)
        if self.coupling:
            out = out + self.coupling * self._moment(kap)
        return out

    def _grad_and_curvature(self, z):
        r, kap = z[..., :2], z[..., 2:]
        F = self._field_stack(kap)
        gk = F[..., 0:2]
        if self.coupling:
            gk = gk + self.coupling * F[..., 2:4]
        w = self.epsilon * F[..., 4] if (self.geometric and self.epsilon) else np.zeros(kap.shape[:-1])
        return np.concatenate([self.potential.gradient(r), gk], axis=-1), w

    def grad_h(self, z):
        return self._grad_and_curvature(np.asarray(z, dtype=float))[0]

    def _omega_eps(self, kap):
        """eps * Omega(kappa) in the form, zero for the uncorrected model."""
        if not (self.geometric and self.epsilon):
            return np.zeros(np.shape(kap)[:-1])
        return self.epsilon * self._omega(kap)

    def liouville_density(self, kappa):
        kappa = np.asarray(kappa, dtype=float)
        if not self.coupling:
            return np.ones(kappa.shape[:-1])
        nu = 1 + self.coupling * self._omega(kappa)
        if np.any(nu <= 0):
            raise DegenerateFormError("Liouville density is not positive")
        return nu

    def symplectic_form(self, z):
        z = np.asarray(z, dtype=float)
        w = self._omega_eps(z[..., 2:])
        W = np.zeros(z.shape[:-1] + (4, 4))
        W[..., :2, :2] = -self.bJ
        W[..., :2, 2:] = I2
        W[..., 2:, :2] = -I2
        W[..., 2, 3] = w
        W[..., 3, 2] = -w
        if np.any(1 + self.b * w <= 0):
            raise DegenerateFormError("1 + eps*b*Omega <= 0: the corrected form is degenerate")
        return W

    def jacobian_to_kinetic(self):
        """d(r, kappa)/d(r, k)."""
        T = np.eye(4)
        T[2:, :2] = 0.5 * self.bJ
        return T

    def symplectic_form_canonical(self, zc):
        """The form in canonical coordinates (r, k), evaluated at zc = (r, k)."""
        zc = np.asarray(zc, dtype=float)
        T = self.jacobian_to_kinetic()
        W = self.symplectic_form(self.to_kinetic(zc))
        return np.einsum("ba,...bc,cd->...ad", T, W, T)

    def to_kinetic(self, zc):
        zc = np.asarray(zc, dtype=float)
        return zc @ self.jacobian_to_kinetic().T

    def vector_field(self, z, mode="exact"):
        """Hamiltonian vector field (r', kappa') at z.

        ``exact`` solves omega(X, .) = dh exactly, using the closed-form inverse
        of the block form; ``exact_solve`` does the same with a generic 4x4
        linear solve and serves as a cross-check.
        ``paper_truncated`` inverts the form in canonical coordinates only to
        first order in eps, omega^{-1} ~ omega0^{-1} - eps omega0^{-1} Omega omega0^{-1},
        and maps the result back to kinetic coordinates; it differs from the
        exact field at order eps^2.
        """
        z = np.asarray(z, dtype=float)
        g, w = self._grad_and_curvature(z)
        if mode == "exact":
            # closed form of -omega^{-1} grad h; nu = 1 + eps*b*Omega is the Pfaffian
            nu = 1 + self.b * w
            if np.any(nu <= 0):
                raise DegenerateFormError("1 + eps*b*Omega <= 0: the corrected form is degenerate")
            gr, gk = g[..., :2], g[..., 2:]
            rdot = (gk - w[..., None] * (gr @ J.T)) / nu[..., None]
            kdot = (-gr + gk @ self.bJ.T) / nu[..., None]
            return np.concatenate([rdot, kdot], axis=-1)
        if mode == "exact_solve":
            W = self.symplectic_form(z)
            return np.linalg.solve(W, -g[..., None])[..., 0]
        if mode == "paper_truncated":
            T = self.jacobian_to_kinetic()
            # curvature part of the form in canonical coordinates: T^t [[0,0],[0,eps Omega J]] T
            Wc = np.zeros(z.shape[:-1] + (4, 4))
            Wc[..., 2, 3] = w
            Wc[..., 3, 2] = -w
            Wc = np.einsum("ba,...bc,cd->...ad", T, Wc, T)
            w0 = np.zeros((4, 4))
            w0[:2, 2:] = I2
            w0[2:, :2] = -I2
            # -omega^{-1} ~ w0 + w0 Wc w0 (note -w0^{-1} = w0)
            P = w0 + np.einsum("ab,...bc,cd->...ad", w0, Wc, w0)
            gc = g @ T
            Xc = np.einsum("...ab,...b->...a", P, gc)
            return Xc @ T.T
        raise ConfigError(f"unknown field mode {mode!r}; expected one of {FIELD_MODES}")

    def poisson_bracket(self, grad_f, grad_g, z):
        """{f, g} = grad f . omega^{-1} grad g with the exact inverse."""
        W = self.symplectic_form(z)
        sol = np.linalg.solve(W, np.asarray(grad_g, float)[..., None])[..., 0]
        return np.einsum("...a,...a->...", np.asarray(grad_f, float), sol)


def closedness_residual(sys, z, step=1e-4, coords="kinetic"):
    """Max cyclic sum d_g w_ab + d_a w_bg + d_b w_ga over index triples (central differences).

    ``coords='canonical'`` evaluates the form in (r, k) coordinates, where all
    four blocks depend on the point.
    """
    if not 0 < step <= 1e-2:
        raise ConfigError("step must lie in (0, 1e-2]")
    z = np.asarray(z, dtype=float)
    form = sys.symplectic_form if coords == "kinetic" else sys.symplectic_form_canonical
    dW = []
    for g in range(4):
        dz = np.zeros(4)
        dz[g] = step
        dW.append((form(z + dz) - form(z - dz)) / (2 * step))
    worst = 0.0
    for a in range(4):
        for b in range(4):
            for c in range(4):
                s = dW[c][..., a, b] + dW[a][..., b, c] + dW[b][..., c, a]
                worst = max(worst, float(np.max(np.abs(s))))
    return worst


def divergence_residual(sys, z, step=1e-4, mode="exact"):
    """|div(nu X)| at z by central differences, nu = 1 + eps*b*Omega."""
    z = np.asarray(z, dtype=float)
    total = 0.0
    for a in range(4):
        dz = np.zeros(4)
        dz[a] = step
        fp = sys.liouville_density((z + dz)[..., 2:]) * sys.vector_field(z + dz, mode)[..., a]
        fm = sys.liouville_density((z - dz)[..., 2:]) * sys.vector_field(z - dz, mode)[..., a]
        total = total + (fp - fm) / (2 * step)
    return np.abs(total)
