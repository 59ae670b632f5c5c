"""Exact EC densities of the chi-square random field, used as an oracle.

``Y = sum_{i<=n} X_i^2`` for i.i.d. unit-variance Gaussian fields ``X_i`` with
derivative variance ``I/4``; the standardized field ``Z = (Y - n)/sqrt(n)``
then has variance 2 and unit second spectral moment.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import astuple, dataclass
from math import comb, factorial, lgamma

import numpy as np
from scipy import special as sc

from .ec_density import HermiteArg, Rho0Method, rho0, rho_gaussian, rho_tilted
from .saddlepoint import Chi2Normalized, SaddlepointState

__all__ = [
    "Regime",
    "TABLE_COLUMNS",
    "chi2_closed_form_state",
    "chi2_comparison_table",
    "chi2_exact_density",
    "chi2_normalized_density",
    "chi2_tail",
    "c_n",
    "r_polynomial",
    "r_polynomial_closed_form",
    "regime_grid",
    "write_table_csv",
]

TABLE_COLUMNS = ("n", "u", "rho_exact", "rho_tilted", "rho_gaussian", "ratio_tilted", "ratio_gaussian")
TABLE_SCHEMA = "# schema: tiltec.chi2_comparison/v1 columns=" + ",".join(TABLE_COLUMNS)


def _double_sum_terms(k, n, y):
    # terms of the chi-square EC density sum, indicator 1{n >= k - 2j - l} included
    for j in range((k - 1) // 2 + 1):
        for l in range(k - 1 - 2 * j + 1):
            if n >= k - 2 * j - l:
                yield comb(n - 1, k - 1 - 2 * j - l) * (-1) ** (k - 1) * (-y) ** (j + l) / (
                    factorial(l) * factorial(j) * 2**j
                )


def chi2_exact_density(k, n, y):
    """EC density of the chi-square field ``Y`` at level ``y`` (``k >= 1``).

    Follows the classical convention, which is ``2^k`` times the density in
    unit-spectral-moment form.
    """
    if k < 1:
        raise ValueError("k must be >= 1; use chi2_tail for k = 0")
    if not y > 0:
        raise ValueError(f"y must be positive, got {y}")
    log_pre = (
        lgamma(k)
        + 0.5 * (n - k) * math.log(y)
        - 0.5 * y
        - 0.5 * k * math.log(2 * math.pi)
        - lgamma(0.5 * n)
        - (0.5 * n - 1) * math.log(2.0)
    )
    return math.exp(log_pre) * math.fsum(_double_sum_terms(k, n, y))


def chi2_tail(n, y):
    """``P{chi2_n >= y}`` as a regularized upper incomplete gamma function."""
    return float(sc.gammaincc(0.5 * n, 0.5 * y)) if y > 0 else 1.0


def chi2_normalized_density(k, n, u):
    """Exact EC density of ``Z = (Y - n)/sqrt(n)`` with unit spectral moment."""
    if not 0 <= k <= 3:
        raise ValueError("k must be in 0..3")
    y = math.sqrt(n) * u + n
    if not y > 0:
        raise ValueError(f"sqrt(n) u + n must be positive, got {y}")
    if k == 0:
        return chi2_tail(n, y)
    return 2.0**-k * chi2_exact_density(k, n, y)


def c_n(n):
    """``sqrt(2 pi) e^{-n/2} Gamma(n/2)^{-1} (n/2)^{(n-1)/2}``; tends to 1."""
    return math.exp(0.5 * math.log(2 * math.pi) - 0.5 * n - lgamma(0.5 * n) + 0.5 * (n - 1) * math.log(0.5 * n))


def r_polynomial(k, n, x):
    """Degree-``k`` polynomial replacing ``H_k(x/sqrt 2)`` in the exact density.

    Evaluated from its general double sum, valid for every ``x > -sqrt(n)``.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if n < k:
        raise ValueError(f"need n >= k, got n={n}, k={k}")
    rn = math.sqrt(n)
    base = 1.0 + x / rn
    if not base > 0:
        raise ValueError("x must exceed -sqrt(n)")
    log_pre = (
        -0.5 * (k - 2) * math.log(2.0)
        + math.log(factorial(k))
        + 0.5 * math.log(2 * math.pi)
        - 0.5 * n
        - lgamma(0.5 * n)
        + 0.5 * (n + 1) * math.log(0.5 * n)
    )
    terms = []
    for j in range(k // 2 + 1):
        for l in range(k - 2 * j + 1):
            terms.append(
                comb(n - 1, k - 2 * j - l)
                * (-1) ** (k + j + l)
                * n ** (j + l - k / 2 - 1)
                / (factorial(l) * factorial(j) * 2**j)
                * base ** (j + l + (k + 1) / 2)
            )
    return math.exp(log_pre) * math.fsum(terms)


def r_polynomial_closed_form(k, n, x):
    """Factored forms of ``R_{0,n}``, ``R_{1,n}``, ``R_{2,n}``."""
    rn = math.sqrt(n)
    c = c_n(n)
    if k == 0:
        return c * math.sqrt(1 + x / rn)
    if k == 1:
        if x == 0:
            raise ZeroDivisionError("factored R_1 has a 1/x term; use r_polynomial at x = 0")
        return c * x / math.sqrt(2) * (1 + x / rn + 1 / (x * rn) + 1 / n)
    if k == 2:
        return c * (x * x / 2 - 1 + x / (2 * rn) + 1 / n) * (1 + x / rn) ** 1.5
    raise ValueError("closed forms exist for k = 0, 1, 2 only")


def chi2_closed_form_state(n, u):
    """Saddlepoint quantities of the standardized chi-square in closed form."""
    rn = math.sqrt(n)
    theta = rn * u / (2 * (u + rn))
    one_minus = 1.0 - 2.0 * theta / rn
    return SaddlepointState(
        u=float(u),
        theta_hat=theta,
        tau2=2 * (1 + u / rn) ** 2,
        rate=rn * u / 2 - 0.5 * n * math.log1p(u / rn),
        k3_tilted=8 / rn / one_minus**3,
        k4_tilted=48 / n / one_minus**4,
    )


class Regime(str, enum.Enum):
    GROW_BOTH = "grow-both"  # u = c n^{1/6}
    FIXED_U = "fixed-u"
    FIXED_N = "fixed-n"


def regime_grid(regime, ns=(10, 100, 1000, 10000), us=(1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0), c=1.0, u=2.0, n=500):
    """``(n, u)`` pairs for one of the three asymptotic regimes."""
    regime = Regime(regime)
    if regime is Regime.GROW_BOTH:
        return [(int(m), c * m ** (1 / 6)) for m in ns]
    if regime is Regime.FIXED_U:
        return [(int(m), float(u)) for m in ns]
    return [(int(n), float(v)) for v in us]


@dataclass(frozen=True)
class TableRow:
    n: int
    u: float
    rho_exact: float
    rho_tilted: float
    rho_gaussian: float
    ratio_tilted: float
    ratio_gaussian: float


def chi2_comparison_table(k, grid, rho0_method=Rho0Method.ROBINSON):
    """Exact, tilted and Gaussian densities and their ratios on an ``(n, u)`` grid.

    For ``k = 0`` the tilted column uses ``rho0_method`` on the chi-square
    cgf; for ``k >= 1`` it uses the closed-form tilt with the tilted Hermite
    argument. The Gaussian column uses ``sigma = sqrt(2)``.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("grid must be nonempty")
    rows = []
    sigma = math.sqrt(2.0)
    for n, u in grid:
        exact = chi2_normalized_density(k, n, u)
        if k == 0:
            tilted = rho0(Chi2Normalized(n), u, rho0_method)
        else:
            tilted = rho_tilted(k, chi2_closed_form_state(n, u), HermiteArg.TILTED)
        gauss = float(rho_gaussian(k, u, sigma))
        rows.append(TableRow(int(n), float(u), exact, tilted, gauss, tilted / exact, gauss / exact))
    return rows


def write_table_csv(rows, stream=None):
    """Write comparison rows as CSV with a leading schema comment; returns the text."""
    buf = io.StringIO()
    buf.write(TABLE_SCHEMA + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TABLE_COLUMNS)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in astuple(row)])
    text = buf.getvalue()
    if stream is not None:
        stream.write(text)
    return text


def table_as_array(rows):
    return np.array([astuple(r) for r in rows], dtype=float)
