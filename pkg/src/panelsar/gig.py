"""Generalized-inverse-Gaussian moments and samplers.

Parametrization used throughout: ``gig(lam, a, b)`` has density proportional
to ``x**(lam-1) * exp(-(a*x + b/x)/2)`` on x > 0. Moments reduce to ratios of
modified Bessel functions of the second kind,

    E[x**s] = (b/a)**(s/2) * K_{lam+s}(omega) / K_lam(omega),  omega = sqrt(a*b),

which are evaluated through ``scipy.special.kve`` so the ``exp(-omega)``
factors cancel exactly. A small-argument series fallback keeps log K_nu(z)
finite where ``kve`` overflows (tiny z combined with large |nu|).
"""
from __future__ import annotations

import numpy as np
from scipy import special, stats

from .exceptions import NumericalError


def log_kv(nu, z):
    """log K_nu(z) for real order, elementwise, stable for extreme arguments."""
    nu = np.abs(np.asarray(nu, dtype=float))  # K is symmetric in its order
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise ValueError("log_kv requires z > 0")
    with np.errstate(over="ignore"):
        out = np.log(special.kve(nu, z)) - z
    bad = ~np.isfinite(out)
    if np.any(bad):
        # K_nu(z) ~ Gamma(nu)/2 * (2/z)^nu as z -> 0 (nu > 0)
        nu_b = np.where(bad, np.maximum(nu, 1e-8), 1.0)
        z_b = np.where(bad, z, 1.0)
        approx = special.gammaln(nu_b) - np.log(2.0) + nu_b * (np.log(2.0) - np.log(z_b))
        out = np.where(bad, approx, out)
    return out


def _bessel_ratio(lam, shift, omega):
    """K_{lam+shift}(omega) / K_lam(omega) in log space."""
    return np.exp(log_kv(lam + shift, omega) - log_kv(lam, omega))


def gig_mean(lam: float, a, b):
    """E[x] of gig(lam, a, b)."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    omega = np.sqrt(a * b)
    return np.sqrt(b / a) * _bessel_ratio(lam, 1.0, omega)


def gig_inv_mean(lam: float, a, b):
    """E[1/x] of gig(lam, a, b)."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    omega = np.sqrt(a * b)
    return np.sqrt(a / b) * _bessel_ratio(lam, -1.0, omega)


def gig_log_norm_const(lam: float, a, b):
    """Log of the normalizing integral of ``x**(lam-1) exp(-(ax + b/x)/2)``."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    omega = np.sqrt(a * b)
    return np.log(2.0) + (lam / 2.0) * (np.log(b) - np.log(a)) + log_kv(lam, omega)


def gig_moments(lam: float, b):
    """(E[x], E[1/x], log K_lam(sqrt(b))) for gig(lam, 1, b), sharing Bessel calls.

    Direct ``kve`` ratios avoid the log/exp round trip of the generic
    helpers; elements that overflow fall back to the log-space route.
    """
    b = np.asarray(b, dtype=float)
    omega = np.sqrt(b)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        k_lo = special.kve(abs(lam - 1.0), omega)  # K is symmetric in its order
        k_mid = special.kve(abs(lam), omega)
        k_hi = special.kve(abs(lam + 1.0), omega)
        mean = omega * (k_hi / k_mid)
        inv_mean = (k_lo / k_mid) / omega
        log_k_mid = np.log(k_mid) - omega
    bad = ~(np.isfinite(mean) & np.isfinite(inv_mean) & np.isfinite(log_k_mid))
    if np.any(bad):
        mean = np.where(bad, gig_mean(lam, 1.0, b), mean)
        inv_mean = np.where(bad, gig_inv_mean(lam, 1.0, b), inv_mean)
        log_k_mid = np.where(bad, log_kv(lam, omega), log_k_mid)
    return mean, inv_mean, log_k_mid


def gig_rvs(lam: float, a, b, rng: np.random.Generator):
    """Draw from gig(lam, a, b) elementwise over broadcast a, b."""
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    omega = np.sqrt(a * b)
    draws = stats.geninvgauss.rvs(lam, omega, size=omega.shape, random_state=rng)
    draws = draws * np.sqrt(b / a)
    if not np.all(np.isfinite(draws)) or np.any(draws <= 0):
        raise NumericalError("generalized-inverse-Gaussian sampler produced bad draws")
    return draws


def inverse_gaussian_rvs(mean, shape, rng: np.random.Generator):
    """Inverse-Gaussian draws (mean/shape parametrization)."""
    draws = rng.wald(mean, shape)
    if not np.all(np.isfinite(draws)) or np.any(draws <= 0):
        raise NumericalError("inverse-Gaussian sampler produced bad draws")
    return draws
