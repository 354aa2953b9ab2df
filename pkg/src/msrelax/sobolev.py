"""Fourier-based homogeneous fractional Sobolev norms on periodic signals.

Conventions, for a real signal f on an interval of length 2P (half-period P):

    f_hat(k) = (1/sqrt(2P)) int f(x) exp(-i (pi/P) k x) dx,

so Parseval reads ||f||_L2^2 = sum_k |f_hat(k)|^2, and

    ||f||_{H^sigma}^2 = sum_{k != 0} |(pi/P) k|^{2 sigma} |f_hat(k)|^2.

Curve norms ||f||_{H^sigma(Gamma)} resample f to uniform arc length (spectral
interpolation of the cumulative length, Newton-inverted) and apply the same
machinery with 2P = L(Gamma).
"""

from dataclasses import dataclass

import numpy as np

from .errors import NonZeroMean
from . import geometry

MEAN_TOL = 1e-12


@dataclass(frozen=True)
class PeriodicSignal:
    """Real periodic signal stored as complex coefficients for k in [-K, K].

    coeffs[K + k] = f_hat(k); conjugate symmetry f_hat(-k) = conj(f_hat(k))
    is enforced at construction.
    """

    P: float
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        object.__setattr__(self, "coeffs", c)
        if c.size % 2 != 1:
            raise ValueError("coeffs must have odd length 2K+1")
        K = c.size // 2
        sym = np.max(np.abs(c[K + 1:] - np.conj(c[K - 1::-1])))
        if sym > 1e-10 * max(1.0, np.max(np.abs(c))):
            raise ValueError("coefficients are not conjugate-symmetric")

    @property
    def K(self):
        return self.coeffs.size // 2

    def wavenumbers(self):
        return np.arange(-self.K, self.K + 1)

    def mean(self):
        """Signal mean = f_hat(0)/sqrt(2P)."""
        return float(self.coeffs[self.K].real) / np.sqrt(2.0 * self.P)


def from_samples(values, P):
    """Build a PeriodicSignal from M uniform samples on [0, 2P)."""
    values = np.asarray(values, dtype=float)
    M = values.size
    a = np.fft.fft(values) / M            # a_k, f = sum a_k e^{i pi k x / P}
    K = M // 2 - 1 if M % 2 == 0 else M // 2
    coeffs = np.zeros(2 * K + 1, dtype=complex)
    coeffs[K] = a[0]
    for k in range(1, K + 1):
        coeffs[K + k] = a[k]
        coeffs[K - k] = a[-k]
    return PeriodicSignal(P, np.sqrt(2.0 * P) * coeffs)


def to_samples(signal, M):
    """Evaluate the signal at M uniform points on [0, 2P)."""
    K = signal.K
    a = np.zeros(M, dtype=complex)
    a[0] = signal.coeffs[K]
    for k in range(1, K + 1):
        a[k % M] += signal.coeffs[K + k]
        a[-k % M] += signal.coeffs[K - k]
    return (np.fft.ifft(a) * M).real / np.sqrt(2.0 * signal.P)


def h_norm(signal, sigma):
    """Homogeneous Sobolev norm of order sigma (any real sigma).

    For sigma < 0 the signal must have zero mean; raises NonZeroMean
    otherwise (silent projection would mask bugs).
    """
    K = signal.K
    if sigma < 0 and abs(signal.coeffs[K]) > MEAN_TOL * np.sqrt(2 * signal.P):
        raise NonZeroMean(f"mean coefficient {abs(signal.coeffs[K]):.3e}")
    k = signal.wavenumbers().astype(float)
    w = np.abs(np.pi * k / signal.P)
    w[K] = 1.0  # excluded below
    terms = w ** (2.0 * sigma) * np.abs(signal.coeffs) ** 2
    terms[K] = 0.0
    return float(np.sqrt(np.sum(terms)))


def l2_norm(signal):
    return float(np.sqrt(np.sum(np.abs(signal.coeffs) ** 2)))


def fractional_derivative(signal, sigma):
    """|d|^sigma: multiply coefficients by |(pi/P) k|^sigma, zero the mean."""
    K = signal.K
    k = signal.wavenumbers().astype(float)
    w = np.abs(np.pi * k / signal.P)
    w[K] = 1.0
    c = signal.coeffs * w**sigma
    c[K] = 0.0
    return PeriodicSignal(signal.P, c)


def interpolation_check(signal, alpha, sigma, beta):
    """||f||_sigma <= ||f||_alpha^{1/p} ||f||_beta^{1/q},
    p = (beta-alpha)/(beta-sigma), q = (beta-alpha)/(sigma-alpha)."""
    if not alpha < sigma < beta:
        raise ValueError("need alpha < sigma < beta")
    p = (beta - alpha) / (beta - sigma)
    q = (beta - alpha) / (sigma - alpha)
    lhs = h_norm(signal, sigma)
    rhs = h_norm(signal, alpha) ** (1.0 / p) * h_norm(signal, beta) ** (1.0 / q)
    ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else np.inf)
    return {"lhs": lhs, "rhs": rhs, "ratio": ratio}


def poincare_check(signal, sigma):
    """||f - mean||_L2^2 <= (P/pi)^{2 sigma} ||f||_{H^sigma}^2."""
    K = signal.K
    c = signal.coeffs.copy()
    c[K] = 0.0
    lhs = float(np.sum(np.abs(c) ** 2))
    rhs = (signal.P / np.pi) ** (2.0 * sigma) * h_norm(signal, sigma) ** 2
    return {"lhs": lhs, "rhs": rhs}


# ---------------------------------------------------------------------------
# norms on curves
# ---------------------------------------------------------------------------

def arclength_angles(cache, n_points=None, tol=1e-13):
    """Angles phi_j with s(phi_j) = j * L / M: uniform arc-length nodes.

    The cumulative length s(phi) is integrated spectrally and inverted by
    Newton iteration (s' = ell > 0, so the map is strictly monotone).
    """
    M = cache.M if n_points is None else n_points
    length = geometry.perimeter(cache)
    mean_ell = length / (2.0 * np.pi)

    # spectral antiderivative of ell - mean
    X = np.fft.rfft(cache.ell)
    kk = np.arange(X.size)
    Xi = np.zeros_like(X)
    Xi[1:] = X[1:] / (1j * kk[1:])
    periodic = np.fft.irfft(Xi, cache.M)
    periodic -= periodic[0]
    coeff = np.fft.rfft(periodic)  # reuse for off-node evaluation

    def s_of(phi):
        # evaluate the periodic part by direct trig synthesis
        acc = np.full_like(phi, coeff[0].real / cache.M)
        for k in range(1, coeff.size):
            scale = 1.0 if k == cache.M // 2 else 2.0
            acc += scale * (coeff[k].real * np.cos(k * phi)
                            - coeff[k].imag * np.sin(k * phi)) / cache.M
        return mean_ell * phi + acc

    def ell_of(phi):
        return np.hypot(geometry.eval_rho(cache.curve, phi),
                        geometry.eval_rho(cache.curve, phi, 1))

    s_targets = length * np.arange(M) / M
    phi = s_targets / mean_ell  # uniform initial guess
    for _ in range(60):
        res = s_of(phi) - s_targets
        phi -= res / ell_of(phi)
        if np.max(np.abs(res)) < tol * length:
            break
    else:
        raise RuntimeError("arc-length inversion did not converge")
    return phi


def curve_signal(cache, f_nodes, sigma_hint=None, n_points=None):
    """Resample node values of f to uniform arc length as a PeriodicSignal
    with half-period P = L(Gamma)/2."""
    phi = arclength_angles(cache, n_points)
    # spectral interpolation of f from the phi-nodes
    fh = geometry.coeffs_from_nodes(np.asarray(f_nodes, dtype=float))
    interp = geometry.RadialCurve(cache.curve.R, _safe_hat(fh),
                                  np.zeros(2), "plane")
    f_arc = geometry.eval_rho(interp, phi)
    return from_samples(f_arc, geometry.perimeter(cache) / 2.0)


def _safe_hat(fh):
    """RadialCurve is reused as a cheap trig evaluator; pad tiny series."""
    N = max(fh.shape[0], 16)
    out = np.zeros((N, 2))
    out[: fh.shape[0]] = fh
    out[0, 1] = 0.0
    return out


def curve_norm(cache, f_nodes, sigma):
    """Homogeneous H^sigma(Gamma) norm of node values f via arc-length
    resampling.  For sigma < 0, f must have zero mean along Gamma."""
    sig = curve_signal(cache, f_nodes)
    if sigma < 0:
        K = sig.K
        c = sig.coeffs.copy()
        mean_scale = np.sqrt(2.0 * sig.P)
        if abs(c[K]) > 1e-10 * mean_scale * max(1.0, np.max(np.abs(c))):
            raise NonZeroMean("curve_norm with sigma<0 needs zero-mean data")
        c[K] = 0.0
        sig = PeriodicSignal(sig.P, c)
    return h_norm(sig, sigma)
