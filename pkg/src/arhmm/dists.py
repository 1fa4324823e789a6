"""State-dependent densities: gamma (mean/SD) and von Mises, plus AR means.

The gamma distribution is parameterised by its mean and standard deviation,
giving ``shape = (mean / sd)**2`` and ``rate = mean / sd**2``. The von Mises
normaliser uses a modified Bessel function of order zero evaluated by power
series below ``BESSEL_SPLIT`` and by the large-argument asymptotic expansion
above it.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import DomainError
from .geometry import wrap_angle

__all__ = [
    "GammaMeanSd",
    "VonMises",
    "gamma_logpdf",
    "gamma_cdf",
    "log_bessel_i0",
    "bessel_i1_i0_ratio",
    "vonmises_logpdf",
    "vonmises_cdf",
    "ar_step_mean",
    "ar_turn_mean",
    "sample_gamma",
    "sample_vonmises",
]

BESSEL_SPLIT = 15.0
LOG_2PI = math.log(2.0 * math.pi)
RESULTANT_FLOOR = 1e-12


@dataclass(frozen=True)
class GammaMeanSd:
    mean: float
    sd: float

    def __post_init__(self):
        if not (self.mean > 0 and self.sd > 0 and math.isfinite(self.mean) and math.isfinite(self.sd)):
            raise DomainError(f"gamma needs mean > 0 and sd > 0, got mean={self.mean}, sd={self.sd}")

    @property
    def shape(self):
        return (self.mean / self.sd) ** 2

    @property
    def rate(self):
        return self.mean / self.sd**2


@dataclass(frozen=True)
class VonMises:
    mu: float
    kappa: float

    def __post_init__(self):
        if not (self.kappa >= 0 and math.isfinite(self.kappa)):
            raise DomainError(f"von Mises needs kappa >= 0, got {self.kappa}")


def gamma_logpdf(x, d):
    """Log density of the gamma distribution ``d`` at ``x > 0``."""
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError("gamma density requires x > 0")
    a, b = d.shape, d.rate
    out = a * math.log(b) - math.lgamma(a) + (a - 1.0) * np.log(x) - b * x
    return out if out.ndim else float(out)


def gamma_cdf(x, d):
    """Regularised lower incomplete gamma at ``(shape, rate * x)``."""
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError("gamma cdf requires x > 0")
    out = special.gammainc(d.shape, d.rate * x)
    return out if out.ndim else float(out)


def _i0_series(k):
    q = 0.25 * k * k
    term = total = 1.0
    n = 0
    while term > 1e-17 * total:
        n += 1
        term *= q / (n * n)
        total += term
    return total


def _i1_series(k):
    q = 0.25 * k * k
    term = total = 1.0
    n = 0
    while term > 1e-17 * total:
        n += 1
        term *= q / (n * (n + 1))
        total += term
    return 0.5 * k * total


def _asymptotic_sum(k, order):
    """Sum in I_nu(k) ~ exp(k) / sqrt(2 pi k) * sum, truncated at its smallest term."""
    mu = 4.0 * order * order
    term = total = 1.0
    m = 0
    while True:
        m += 1
        nxt = -term * (mu - (2 * m - 1) ** 2) / (m * 8.0 * k)
        if abs(nxt) >= abs(term) or abs(nxt) < 1e-17 * abs(total):
            break
        term = nxt
        total += term
    return total


def log_bessel_i0(kappa):
    """log I0(kappa) for kappa >= 0."""
    if kappa < 0:
        raise DomainError(f"kappa must be non-negative, got {kappa}")
    if kappa < BESSEL_SPLIT:
        return math.log(_i0_series(kappa))
    return kappa - 0.5 * math.log(2.0 * math.pi * kappa) + math.log(_asymptotic_sum(kappa, 0))


def bessel_i1_i0_ratio(kappa):
    """I1(kappa) / I0(kappa), the derivative of log I0."""
    if kappa < 0:
        raise DomainError(f"kappa must be non-negative, got {kappa}")
    if kappa == 0:
        return 0.0
    if kappa < BESSEL_SPLIT:
        return _i1_series(kappa) / _i0_series(kappa)
    return _asymptotic_sum(kappa, 1) / _asymptotic_sum(kappa, 0)


def vonmises_logpdf(x, d):
    """Log density of the von Mises distribution ``d`` at angle(s) ``x``."""
    x = np.asarray(x, dtype=float)
    out = d.kappa * np.cos(x - d.mu) - LOG_2PI - log_bessel_i0(d.kappa)
    return out if out.ndim else float(out)


def _vonmises_cdf_scalar(x, d, lognorm):
    if x >= math.pi:
        return 1.0
    if x <= -math.pi:
        return 0.0

    def dens(u):
        return math.exp(d.kappa * math.cos(u - d.mu) - lognorm)

    # hint the mode so narrow peaks are not missed
    mode = float(wrap_angle(d.mu))
    pts = [mode] if -math.pi < mode < x else None
    val, _ = integrate.quad(dens, -math.pi, x, points=pts, epsabs=1e-10, epsrel=1e-10, limit=200)
    return min(1.0, max(0.0, val))


def vonmises_cdf(x, d):
    """P(X <= x) for X ~ ``d`` on (-pi, pi], by adaptive quadrature from -pi."""
    lognorm = LOG_2PI + log_bessel_i0(d.kappa)
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        return _vonmises_cdf_scalar(float(x), d, lognorm)
    return np.array([_vonmises_cdf_scalar(float(v), d, lognorm) for v in x.ravel()]).reshape(x.shape)


def _check_lengths(history, phi):
    if len(history) != len(phi):
        raise ValueError(f"history length {len(history)} does not match {len(phi)} AR coefficients")


def ar_step_mean(history, phi, mu_steady):
    """AR mean of the step length.

    ``history[k]`` is the step ``k + 1`` periods back.
    """
    _check_lengths(history, phi)
    phi = np.asarray(phi, dtype=float)
    if phi.size == 0:
        return float(mu_steady)
    return float(np.dot(phi, np.asarray(history, dtype=float)) + (1.0 - phi.sum()) * mu_steady)


def ar_turn_mean(history, phi, mu_steady):
    """AR mean direction of the turning angle.

    The argument of the convex combination of unit vectors at the past turns
    and at the steady-state direction. If the resultant vanishes the
    steady-state direction is returned.
    """
    _check_lengths(history, phi)
    z = (1.0 - float(np.sum(phi))) * cmath.exp(1j * mu_steady)
    for p, h in zip(phi, history):
        z += p * cmath.exp(1j * h)
    if abs(z) < RESULTANT_FLOOR:
        return float(wrap_angle(mu_steady))
    return float(wrap_angle(cmath.phase(z)))


def sample_gamma(rng, d, size=None):
    return rng.gamma(d.shape, 1.0 / d.rate, size=size)


def sample_vonmises(rng, d, size=None):
    return wrap_angle(rng.vonmises(d.mu, d.kappa, size=size))
