"""Pointwise evaluation of the half-space Green's function.

Frequency domain (Im omega > 0):

    G_omega(x, y) = e^{i w r+}/(4 pi r+) + e^{i w r-}/(4 pi r-) + C(x, y; w)

with r+ = |x - y|, r- = |x - y'| the image distance (y' = (y1, y2, -y3)), and
the absorbing correction

    C = (beta/2pi) * int_0^inf e^{beta s} e^{i w r(a+s)} / r(a+s) ds,
    beta = i w alpha_inf,  a = x3 + y3,  r(eta) = sqrt(R^2 + eta^2).

Time domain (wave speed 1, lag tau = t - s), for real alpha_inf >= 0:

    G(tau) = delta(tau - r+)/(4 pi r+) + delta(tau - r-)/(4 pi r-)
             + d/dtau [ H(tau - r-) * u0(tau) ],
    u0(tau) = -(alpha_inf/2pi) / D(tau),
    D(tau)  = sqrt( (tau + alpha_inf*a)^2 + (alpha_inf^2 - 1) R^2 ).

The smooth part of the correction is sigma_s = d u0/dtau, available here;
assembly integrates the Heaviside jump by parts in the lag variable.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .timeshapes import gauss01

TWO_PI = 2.0 * np.pi
FOUR_PI = 4.0 * np.pi


@dataclass(frozen=True)
class KernelParams:
    """alpha_inf: half-space absorption (complex allowed only for frequency
    diagnostics; time-domain evaluation needs real alpha_inf >= 0).
    sigma: Laplace abscissa for frequency-domain diagnostics (> 0)."""
    alpha_inf: complex = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if complex(self.alpha_inf).real < 0:
            raise ValueError("Re alpha_inf must be >= 0")
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")

    def real_alpha_inf(self):
        a = complex(self.alpha_inf)
        if a.imag != 0.0:
            raise ValueError("time-domain kernel requires real alpha_inf")
        if a.real < 0:
            raise ValueError("time-domain kernel requires alpha_inf >= 0")
        return a.real


class PointPair:
    """A source/observation point pair in the closed upper half-space."""

    def __init__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x[2] < -1e-12 or y[2] < -1e-12:
            raise ValueError("points must satisfy x3 >= 0")
        self.x = x
        self.y = y
        d = x - y
        self.R2 = d[0] ** 2 + d[1] ** 2
        self.rplus = float(np.linalg.norm(d))
        self.a = x[2] + y[2]
        self.rminus = float(np.sqrt(self.R2 + self.a ** 2))


def retarded_times(pp):
    """Arrival times (r+, r-) of the direct and reflected wavefronts."""
    return pp.rplus, pp.rminus


def correction_decay_rate(omega, alpha_inf):
    """Exponential decay rate of the correction integrand; must be > 0."""
    beta = 1j * omega * complex(alpha_inf)
    return omega.imag - beta.real


def eval_correction_omega(a, R2, omega, alpha_inf, tol=1e-12):
    """Adaptive evaluation of the correction C for scalar geometry inputs."""
    alpha_inf = complex(alpha_inf)
    if alpha_inf == 0:
        return 0.0 + 0.0j
    beta = 1j * omega * alpha_inf
    rate = correction_decay_rate(complex(omega), alpha_inf)
    if rate <= 0:
        raise ValueError("correction integrand does not decay for these "
                         f"omega={omega}, alpha_inf={alpha_inf}")
    cut = 45.0 / rate

    def f(s):
        r = np.sqrt(R2 + (a + s) ** 2)
        return np.exp(beta * s + 1j * omega * r) / r

    re = quad(lambda s: f(s).real, 0.0, cut, epsabs=tol, epsrel=tol, limit=400)[0]
    im = quad(lambda s: f(s).imag, 0.0, cut, epsabs=tol, epsrel=tol, limit=400)[0]
    return beta / TWO_PI * (re + 1j * im)


def eval_G_omega(pp, omega, params):
    """Half-space Green's function in the frequency domain."""
    omega = complex(omega)
    if pp.rplus <= 0:
        raise ValueError("singular evaluation: x == y")
    if omega.imag < params.sigma:
        raise ValueError("Im omega must be >= sigma")
    g = (np.exp(1j * omega * pp.rplus) / (FOUR_PI * pp.rplus)
         + np.exp(1j * omega * pp.rminus) / (FOUR_PI * pp.rminus))
    return g + eval_correction_omega(pp.a, pp.R2, omega, params.alpha_inf)


def correction_omega_grid(a, R2, omega, alpha_inf, n_panels=32, n_gauss=8):
    """Vectorized fixed-rule correction for arrays a, R2 (shared omega).
    Used by frequency-domain assembly; validated against the adaptive path."""
    alpha_inf = complex(alpha_inf)
    if alpha_inf == 0:
        return np.zeros(np.broadcast(a, R2).shape, dtype=complex)
    beta = 1j * omega * alpha_inf
    rate = correction_decay_rate(complex(omega), alpha_inf)
    if rate <= 0:
        raise ValueError("correction integrand does not decay")
    cut = 45.0 / rate
    x, w = gauss01(n_gauss)
    # geometric panels resolve the fast initial variation
    edges = cut * (np.linspace(0, 1, n_panels + 1) ** 1.5)
    lo, hi = edges[:-1], edges[1:]
    s = (lo[:, None] + x[None, :] * (hi - lo)[:, None]).ravel()
    ws = ((hi - lo)[:, None] * w[None, :]).ravel()
    a = np.asarray(a, dtype=float)[..., None]
    R2 = np.asarray(R2, dtype=float)[..., None]
    r = np.sqrt(R2 + (a + s) ** 2)
    vals = np.exp(beta * s + 1j * omega * r) / r
    return beta / TWO_PI * np.sum(vals * ws, axis=-1)


# ------------------------------------------------------- time-domain pieces

def disc(tau, a, R2, alpha_inf):
    """D(tau)^2 = (tau + alpha*a)^2 + (alpha^2 - 1) R^2."""
    return (tau + alpha_inf * a) ** 2 + (alpha_inf ** 2 - 1.0) * R2


def eval_sigma_smooth(tau, pp, alpha_inf):
    """Smooth part of the absorbing correction,
    sigma_s(tau) = (alpha/2pi) (tau + alpha*a) / D(tau)^3, for tau > r-."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= pp.rminus):
        raise ValueError("sigma_smooth requires tau > r-")
    if alpha_inf < 0:
        raise ValueError("alpha_inf must be >= 0")
    if alpha_inf == 0:
        return np.zeros(tau.shape) if tau.shape else 0.0
    P = disc(tau, pp.a, pp.R2, alpha_inf)
    assert np.all(P > 0), "discriminant must be positive inside the reflected cone"
    val = (alpha_inf / TWO_PI) * (tau + alpha_inf * pp.a) / P ** 1.5
    return val if tau.shape else float(val)
