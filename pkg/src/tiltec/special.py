"""Hermite polynomials and standard normal distribution functions."""

import math

import numpy as np
from scipy import special as sc

SQRT2 = math.sqrt(2.0)
SQRT2PI = math.sqrt(2.0 * math.pi)


def hermite(m, x):
    """Probabilists' Hermite polynomial ``He_m(x)``.

    Evaluated with the three-term recurrence
    ``He_m = x He_{m-1} - (m-1) He_{m-2}``; accepts scalars or arrays.
    """
    if m < 0:
        raise ValueError(f"hermite order must be >= 0, got {m}; use hermite_ext for m = -1")
    x = np.asarray(x, dtype=float)
    h_prev = np.ones_like(x)
    if m == 0:
        return h_prev[()]
    h = x.copy()
    for j in range(2, m + 1):
        h_prev, h = h, x * h - (j - 1) * h_prev
    return h[()]


def hermite_ext(m, x):
    """Hermite polynomial extended to ``m = -1``.

    ``H_{-1}(x) = sqrt(2 pi) Psi(x) exp(x^2 / 2)``, computed with the scaled
    complementary error function so it stays finite for large ``x``.
    """
    if m < -1:
        raise ValueError(f"hermite_ext order must be >= -1, got {m}")
    if m >= 0:
        return hermite(m, x)
    x = np.asarray(x, dtype=float)
    return (SQRT2PI * 0.5 * sc.erfcx(x / SQRT2))[()]


def norm_pdf(x):
    x = np.asarray(x, dtype=float)
    return (np.exp(-0.5 * x * x) / SQRT2PI)[()]


def norm_cdf(x):
    x = np.asarray(x, dtype=float)
    return (0.5 * sc.erfc(-x / SQRT2))[()]


def norm_survival(x):
    """Upper tail ``Psi(x) = 1 - Phi(x)``, via ``erfc`` (no cancellation)."""
    x = np.asarray(x, dtype=float)
    return (0.5 * sc.erfc(x / SQRT2))[()]


def mills_survival(x):
    """``Psi(x) * exp(x^2 / 2)``, stable for large positive ``x``."""
    x = np.asarray(x, dtype=float)
    return (0.5 * sc.erfcx(x / SQRT2))[()]
