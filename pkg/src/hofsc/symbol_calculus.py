"""First-order symbol calculus on the phase space z = (r1, r2, k1, k2).

Position r plays the role of q and crystal momentum k the role of p, so that
{A, B} = dA/dp . dB/dq - dA/dq . dB/dp.  Symbols are matrix-valued; the
Hofstadter symbols depend on z through r and the kinetic momentum
kappa = k + b J r / 2, with J = [[0, 1], [-1, 0]].

Only the principal and first-order terms of the Moyal expansion are
implemented, which is what the identities checked here need.
"""
import numpy as np

from .band_geometry import _band_jet, _moment
from .errors import ConfigError
from .lattice_model import PotentialSpec, bloch_gradient, bloch_matrix

J = np.array([[0.0, 1.0], [-1.0, 0.0]])
FD_STEP = 1e-5


class MatrixSymbol:
    """Matrix-valued function of z with its gradient.

    ``value(z)`` returns a (q, q) array.  ``gradient(z)`` returns a (4, q, q)
    array ordered as (d/dr1, d/dr2, d/dk1, d/dk2); when it is not supplied,
    central differences with step 1e-5 are used.
    """

    def __init__(self, value, gradient=None, hermitian=False):
        self._value = value
        self._gradient = gradient
        self.hermitian = hermitian

    def value(self, z):
        return np.asarray(self._value(np.asarray(z, float)))

    def gradient(self, z):
        z = np.asarray(z, float)
        if self._gradient is not None:
            return np.asarray(self._gradient(z))
        out = []
        for a in range(4):
            dz = np.zeros(4)
            dz[a] = FD_STEP
            out.append((self.value(z + dz) - self.value(z - dz)) / (2 * FD_STEP))
        return np.array(out)

    @classmethod
    def scalar(cls, fun, grad, q):
        eye = np.eye(q)
        return cls(lambda z: fun(z) * eye,
                   lambda z: np.asarray(grad(z))[:, None, None] * eye, hermitian=True)


def _split(grad):
    """(d/dq, d/dp) halves of a gradient array."""
    return grad[:2], grad[2:]


def poisson_bracket_matrix(A, B, z):
    dqA, dpA = _split(A.gradient(z))
    dqB, dpB = _split(B.gradient(z))
    return sum(dpA[a] @ dqB[a] - dqA[a] @ dpB[a] for a in range(2))


def generalized_bracket(A, B, C, z):
    """{A|B|C} = dA/dp . B dC/dq - dA/dq . B dC/dp, with B undifferentiated."""
    dqA, dpA = _split(A.gradient(z))
    dqC, dpC = _split(C.gradient(z))
    Bz = B.value(z)
    return sum(dpA[a] @ Bz @ dqC[a] - dqA[a] @ Bz @ dpC[a] for a in range(2))


def kinetic_momentum(z, b):
    z = np.asarray(z, float)
    return z[2:] + 0.5 * b * (J @ z[:2])


def _chain(dk, b):
    """Lift kappa-derivatives (dk1 X, dk2 X) to the full (r, k) gradient."""
    # d kappa_c / d r_a = b J[c, a] / 2
    dr = [0.5 * b * (J[0, a] * dk[0] + J[1, a] * dk[1]) for a in range(2)]
    return np.array([dr[0], dr[1], dk[0], dk[1]])


class HofstadterSymbols:
    """Principal symbols of the Hofstadter problem for one band.

    H(r, k) = H0(kappa) + V(r), its band projection pi0, band energy
    e0 = e_j(kappa) + V(r), and the first-order scalar b * M_j(kappa).
    """

    def __init__(self, flux, j, b=1.0, potential=None):
        self.flux, self.j, self.b = flux, j, float(b)
        self.potential = potential if potential is not None else PotentialSpec()
        q = flux.q
        eye = np.eye(q)
        pot = self.potential

        def H_val(z):
            return bloch_matrix(flux, kinetic_momentum(z, self.b)) + pot.value(z[:2]) * eye

        def H_grad(z):
            g = _chain(bloch_gradient(flux, kinetic_momentum(z, self.b)), self.b)
            dV = pot.gradient(z[:2])
            g[0] = g[0] + dV[0] * eye
            g[1] = g[1] + dV[1] * eye
            return g

        self.H = MatrixSymbol(H_val, H_grad, hermitian=True)
        self.pi = MatrixSymbol(lambda z: self._jet(z)[3],
                               lambda z: _chain(self._jet(z)[4], self.b), hermitian=True)

        def e_val(z):
            return self._jet(z)[2] + pot.value(z[:2])

        def e_grad(z):
            H, dH, e, p, dp = self._jet(z)
            dk = [np.trace(p @ d).real for d in dH]
            g = _chain(np.array(dk), self.b)
            return g + np.concatenate([pot.gradient(z[:2]), np.zeros(2)])

        self.e = MatrixSymbol.scalar(e_val, e_grad, q)

    def _jet(self, z):
        return _band_jet(self.flux, self.j, kinetic_momentum(z, self.b))

    def moment(self, z):
        """b * M_j(kappa), the first-order correction to the band energy."""
        H, dH, e, p, dp = self._jet(z)
        return self.b * float(_moment(H, dH, e, p, dp, "trace"))


def moment_from_brackets(sym, z, form="def"):
    """The moment from its phase-space bracket expressions (same value for every form)."""
    p = sym.pi
    H = sym.H
    He = MatrixSymbol(lambda x: H.value(x) - sym.e.value(x),
                      lambda x: H.gradient(x) - sym.e.gradient(x))
    if form == "def":
        return complex(0.5j * np.trace(generalized_bracket(p, H, p, z))).real
    if form == "alt1":
        return complex(0.5j * np.trace(generalized_bracket(p, He, p, z))).real
    if form == "alt2":
        return complex(0.5j * np.trace(generalized_bracket(p, He, p, z) @ p.value(z))).real
    if form == "alt3":
        return complex(-0.5j * np.trace(p.value(z) @ poisson_bracket_matrix(p, He, z))).real
    raise ConfigError(f"unknown bracket form {form!r}")


def pi1_diagonal(flux, j, z, b=1.0):
    """Diagonal block pi0 pi1 pi0 = (i/2) pi0 {pi0, pi0} pi0 of the first-order projection."""
    sym = HofstadterSymbols(flux, j, b)
    p = sym.pi.value(z)
    return 0.5j * p @ poisson_bracket_matrix(sym.pi, sym.pi, z) @ p


def liouville_scalar(flux, j, z, b=1.0):
    """i tr(pi0 {pi0, pi0}), the first-order Liouville density correction per unit eps."""
    sym = HofstadterSymbols(flux, j, b)
    return complex(1j * np.trace(sym.pi.value(z) @ poisson_bracket_matrix(sym.pi, sym.pi, z))).real


def _triple_order1(A, B, C, z, A1=None, B1=None, C1=None):
    """Order-eps coefficient of A#B#C for principal symbols A, B, C and optional
    first-order parts A1, B1, C1 (plain matrices at z)."""
    a, bm, c = A.value(z), B.value(z), C.value(z)
    out = -0.5j * (a @ poisson_bracket_matrix(B, C, z)
                   + poisson_bracket_matrix(A, B, z) @ c
                   + generalized_bracket(A, B, C, z))
    if A1 is not None:
        out = out + A1 @ bm @ c
    if B1 is not None:
        out = out + a @ B1 @ c
    if C1 is not None:
        out = out + a @ bm @ C1
    return out


def hsc_defect_order1(flux, j, z, b=1.0, potential=None, moment_scale=1.0):
    """Order-eps coefficient of pi#h#pi - pi#H#pi, with h = e0 + eps*M.

    The first-order projection enters through its diagonal block only; its
    contributions cancel between the two products.  ``moment_scale`` multiplies
    M and exists for sensitivity checks: any value other than 1 leaves a defect
    of size |moment_scale - 1| * |M|.
    """
    sym = HofstadterSymbols(flux, j, b, potential)
    pi1 = pi1_diagonal(flux, j, z, b)
    q = flux.q
    M1 = moment_scale * sym.moment(z) * np.eye(q)
    with_h = _triple_order1(sym.pi, sym.e, sym.pi, z, A1=pi1, B1=M1, C1=pi1)
    with_H = _triple_order1(sym.pi, sym.H, sym.pi, z, A1=pi1, C1=pi1)
    return with_h - with_H
