"""Search-region geometry and the expected Euler characteristic.

The expected EC of an excursion set of an isotropic field on a region ``T``
is ``sum_k lambda^{k/2} V_k(T) rho_k(u)``. This module provides the
intrinsic volumes ``V_k`` of boxes, assembles the sum for Gaussian and
tilted density choices, and inverts it for p-value thresholds.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .ec_density import HermiteArg, Rho0Method, rho0, rho_gaussian, rho_tilted, rho_tilted_refined
from .saddlepoint import solve_saddlepoint, tilted_lambda

__all__ = [
    "Density",
    "ECMethodSpec",
    "Region",
    "Spectral",
    "ThresholdError",
    "expected_ec",
    "expected_ec_terms",
    "intrinsic_volumes",
    "pvalue_ratio",
    "threshold_for_pvalue",
    "unit_ball_volume",
]


class ThresholdError(RuntimeError):
    pass


@dataclass(frozen=True)
class Region:
    """Axis-aligned box with side lengths ``dims`` (at most three)."""

    dims: tuple

    def __post_init__(self):
        dims = tuple(float(d) for d in self.dims)
        if len(dims) > 3:
            raise ValueError("regions of dimension > 3 are not supported")
        if any(not d > 0 for d in dims):
            raise ValueError(f"all sides must be positive, got {dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def ndim(self):
        return len(self.dims)

    @classmethod
    def square(cls, side):
        return cls((side, side))


def unit_ball_volume(k):
    return math.pi ** (k / 2) / math.gamma(k / 2 + 1)


def intrinsic_volumes(region):
    """``[V_0, ..., V_N]`` of a box: the elementary symmetric polynomials of its sides."""
    coeffs = np.array([1.0])
    for side in region.dims:
        coeffs = np.append(coeffs, 0.0) + side * np.insert(coeffs, 0, 0.0)
    return coeffs


class Density(str, enum.Enum):
    GAUSSIAN = "gaussian"
    TILTED = "tilted"
    TILTED_REFINED1 = "tilted-refined1"
    TILTED_REFINED2 = "tilted-refined2"


class Spectral(str, enum.Enum):
    UNTILTED = "untilted"
    TILTED = "tilted"


@dataclass(frozen=True)
class ECMethodSpec:
    """Which densities, spectral moment and Hermite argument enter the expected EC.

    ``rho0`` defaults to Robinson's tail formula for tilted densities and to
    the Gaussian tail for the Gaussian density.
    """

    density: Density = Density.TILTED
    spectral: Spectral = Spectral.UNTILTED
    hermite_arg: HermiteArg = HermiteArg.TILTED
    rho0: Optional[Rho0Method] = None

    def __post_init__(self):
        object.__setattr__(self, "density", Density(self.density))
        object.__setattr__(self, "spectral", Spectral(self.spectral))
        object.__setattr__(self, "hermite_arg", HermiteArg(self.hermite_arg))
        if self.rho0 is None:
            default = Rho0Method.GAUSSIAN if self.density is Density.GAUSSIAN else Rho0Method.ROBINSON
            object.__setattr__(self, "rho0", default)
        else:
            object.__setattr__(self, "rho0", Rho0Method(self.rho0))
        if self.density is Density.GAUSSIAN and (
            self.spectral is not Spectral.UNTILTED or self.hermite_arg is not HermiteArg.GAUSSIAN
        ):
            raise ValueError("the Gaussian density requires the untilted spectral moment and Gaussian Hermite argument")

    @classmethod
    def gaussian(cls):
        return cls(Density.GAUSSIAN, Spectral.UNTILTED, HermiteArg.GAUSSIAN)

    @property
    def label(self):
        if self.density is Density.GAUSSIAN:
            return "gaussian"
        return f"{self.density.value}/lambda-{self.spectral.value}/arg-{self.hermite_arg.value}"


def expected_ec_terms(region, lam, u, model, spec, mixed_skew=None):
    """Per-``k`` terms ``lambda_eff^{k/2} V_k rho_k(u)``, ``k = 0..N``.

    Parameters
    ----------
    region : Region
    lam : float
        Untilted second spectral moment.
    u : float
    model : CumulantModel
    spec : ECMethodSpec
    mixed_skew : sequence of float, optional
        ``E[Z^2 Z_i]`` for ``i = 1..N``; zero when omitted. Used only by the
        refined densities.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    vols = intrinsic_volumes(region)
    ndim = region.ndim
    sigma = math.sqrt(model.variance)
    terms = np.empty(ndim + 1)
    terms[0] = rho0(model, u, spec.rho0)
    if ndim == 0:
        return terms
    if spec.density is Density.GAUSSIAN:
        for k in range(1, ndim + 1):
            terms[k] = lam ** (k / 2) * vols[k] * rho_gaussian(k, u, sigma)
        return terms

    state = solve_saddlepoint(model, u)
    lam_eff = tilted_lambda(state, lam) if spec.spectral is Spectral.TILTED else lam
    skew = np.zeros(ndim) if mixed_skew is None else np.asarray(mixed_skew, dtype=float)
    for k in range(1, ndim + 1):
        if spec.density is Density.TILTED:
            rho = rho_tilted(k, state, spec.hermite_arg, sigma)
        elif spec.density is Density.TILTED_REFINED2 and k >= 2:
            rho = rho_tilted_refined(k, state, skew[:k], level=2)
        else:
            rho = rho_tilted_refined(k, state, skew[:k], level=1)
        terms[k] = lam_eff ** (k / 2) * vols[k] * rho
    return terms


def expected_ec(region, lam, u, model, spec, mixed_skew=None):
    """Expected Euler characteristic of the excursion set above ``u``."""
    return float(np.sum(expected_ec_terms(region, lam, u, model, spec, mixed_skew)))


def threshold_for_pvalue(region, lam, model, spec, p_target, tol=1e-8, u_max=50.0):
    """Level ``u`` at which the expected EC equals ``p_target``.

    The upper end of the bracket doubles from ``u = 0.5`` until the expected
    EC falls below the target; the previous point is the lower end. Bisection
    then runs until ``|E phi - p_target| <= tol``, checking that the
    expected EC decreases across the bracket.
    """
    if not 0 < p_target < 1:
        raise ValueError("p_target must lie in (0, 1)")

    def f(u):
        return expected_ec(region, lam, u, model, spec)

    lo, f_lo = None, None
    hi = 0.5
    while True:
        f_hi = f(hi)
        if f_hi < p_target:
            break
        lo, f_lo = hi, f_hi
        if hi >= u_max:
            raise ThresholdError(f"expected EC is still {f_hi} >= {p_target} at u={hi}")
        hi = min(2 * hi, u_max)
    if lo is None:
        if spec.rho0 in (Rho0Method.ROBINSON, Rho0Method.DANIELS):
            raise ThresholdError(f"expected EC is already below {p_target} at u={hi}")
        lo, f_lo = 0.0, f(0.0)
        if f_lo < p_target:
            raise ThresholdError(f"expected EC is already below {p_target} at u=0")

    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = f(mid)
        if not f_hi <= f_mid <= f_lo:
            raise ThresholdError(f"expected EC is not monotone on [{lo}, {hi}] (value {f_mid} at u={mid})")
        if abs(f_mid - p_target) <= tol:
            return mid
        if f_mid >= p_target:
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
        if hi - lo <= 1e-15 * max(1.0, hi):
            return mid
    raise ThresholdError("bisection did not converge")


def pvalue_ratio(model, u, variant="r"):
    """Dominant-term ratio of tilted to Gaussian expected EC.

    ``variant="r"`` gives ``exp(u^2/2 - I) theta_hat / (tau u)``;
    ``variant="r_tilted_lambda"`` multiplies by ``tau^2`` (tilted spectral moment).
    """
    if not u > 0:
        raise ValueError("u must be positive")
    if variant not in ("r", "r_tilted_lambda"):
        raise ValueError("variant must be 'r' or 'r_tilted_lambda'")
    state = solve_saddlepoint(model, u)
    sigma = math.sqrt(model.variance)
    # rho_2 tilted / rho_2 Gaussian, general sigma; reduces to the unit-variance form
    log_r = (
        u * u / (2 * sigma * sigma)
        - state.rate
        + math.log(state.theta_hat * sigma**3 / (state.tau * u))
    )
    r = math.exp(log_r)
    return r * state.tau2 if variant == "r_tilted_lambda" else r
