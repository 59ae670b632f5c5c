"""Euler characteristic densities: Gaussian, tilted, and the zeroth-density family."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .saddlepoint import PureGaussian, solve_saddlepoint
from .special import SQRT2PI, hermite, mills_survival, norm_pdf, norm_survival

__all__ = [
    "HermiteArg",
    "QuadratureConfig",
    "QuadratureError",
    "Rho0Method",
    "rho0",
    "rho_gaussian",
    "rho_tilted",
    "rho_tilted_refined",
]


class HermiteArg(str, enum.Enum):
    TILTED = "tilted"  # tau_u * theta_hat
    GAUSSIAN = "gaussian"  # u / sigma


class Rho0Method(str, enum.Enum):
    GAUSSIAN = "gaussian"
    EDGEWORTH = "edgeworth"
    ROBINSON = "robinson"
    DANIELS = "daniels"
    LUGANNANI_RICE = "lugannani-rice"
    LR_LEADING = "lr-leading"
    INTEGRATED_NORMALIZED = "integrated-normalized"


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class QuadratureConfig:
    epsabs: float = 1e-10
    epsrel: float = 1e-10
    limit: int = 200
    lr_higher_terms: bool = False


def rho_gaussian(k, u, sigma=1.0):
    """EC density of a centred Gaussian field with variance ``sigma**2``.

    ``k = 0`` gives the tail probability ``Psi(u / sigma)``.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    x = np.asarray(u, dtype=float) / sigma
    if k == 0:
        return norm_survival(x)
    out = (2 * math.pi) ** (-(k + 1) / 2) * sigma ** (-k) * np.exp(-0.5 * x * x) * hermite(k - 1, x)
    return np.asarray(out)[()]


def rho_tilted(k, state, mode=HermiteArg.TILTED, sigma=1.0):
    """Tilted EC density for ``k >= 1``.

    ``(2 pi)^{-(k+1)/2} tau^{-k} exp(-I) H_{k-1}(arg)`` where ``arg`` is
    ``tau * theta_hat`` or ``u / sigma`` according to ``mode``.
    """
    if k < 1:
        raise ValueError("rho_tilted needs k >= 1; use rho0 for the zeroth density")
    mode = HermiteArg(mode)
    arg = state.zeta if mode is HermiteArg.TILTED else state.u / sigma
    return float(
        (2 * math.pi) ** (-(k + 1) / 2) * state.tau ** (-k) * math.exp(-state.rate) * hermite(k - 1, arg)
    )


def rho_tilted_refined(k, state, mixed_skew, level=1):
    """Tilted density corrected for the mixed skewness ``E[Z^2 Z_i]``.

    Level 1 multiplies by ``1 + E[Z^2 Z_k] sqrt(pi/2) theta^2 / 2``; level 2
    (``k >= 2``) additionally multiplies by
    ``exp(-theta^4 / 8 * sum_{i<k} E[Z^2 Z_i]^2)``.
    """
    skew = np.asarray(mixed_skew, dtype=float)
    if skew.shape != (k,):
        raise ValueError(f"mixed_skew must have length k={k}, got shape {skew.shape}")
    if level not in (1, 2):
        raise ValueError("level must be 1 or 2")
    if level == 2 and k < 2:
        raise ValueError("level-2 refinement requires k >= 2")
    th = state.theta_hat
    factor = 1.0 + skew[k - 1] * math.sqrt(math.pi / 2) * th * th / 2
    if level == 2:
        factor *= math.exp(-(th**4) / 8 * float(np.sum(skew[: k - 1] ** 2)))
    return rho_tilted(k, state, HermiteArg.TILTED) * factor


# -- zeroth density ---------------------------------------------------------


def _lr_correction(model, state):
    """``1/zeta - 1/omega`` with its removable singularity handled."""
    omega, zeta = state.omega, state.zeta
    delta = zeta - omega
    if abs(delta) >= 1e-6 * max(1.0, abs(omega)):
        return 1.0 / zeta - 1.0 / omega
    if abs(zeta) > 1e-4:
        # expansion in delta about omega
        return -delta / omega**2 + delta**2 / omega**3
    # expansion in theta about the mean
    k2, k3, k4 = model.cumulant(2), model.cumulant(3), model.cumulant(4)
    c0 = -k3 / (6 * k2**1.5)
    c1 = -(3 * k2 * k4 - 5 * k3 * k3) / (24 * k2**2.5)
    return c0 + c1 * state.theta_hat


def _lr_higher(state):
    zeta, omega = state.zeta, state.omega
    k3, k4 = state.k3_tilted, state.k4_tilted
    return (k4 / 8 - 5 * k3 * k3 / 24) / zeta - k3 / (2 * zeta**2) + (1 / omega**3 - 1 / zeta**3)


def _require_positive(u, method):
    if not u > 0:
        raise ValueError(f"{method.value} zeroth density is defined for u > 0 only, got u={u}")


def _saddle_integrand(model, theta):
    # density of z = K'(theta) written in theta: f(z) dz = exp(-I(theta)) K'' / (sqrt(2 pi) tau) dtheta
    k2 = model.derivative(theta, 2)
    return np.exp(-model.rate(theta)) * np.sqrt(np.maximum(k2, 0.0)) / SQRT2PI


def _quad(func, a, b, quad):
    val, err, *rest = integrate.quad(func, a, b, epsabs=quad.epsabs, epsrel=quad.epsrel, limit=quad.limit, full_output=1)
    if len(rest) >= 2 and rest[0] != 0 and err > max(quad.epsabs, quad.epsrel * abs(val)) * 100:
        raise QuadratureError(f"quadrature did not converge on [{a}, {b}]: {rest[1]}")
    return val


def _integrated_normalized(model, state, quad):
    lo, hi = model.branch()
    func = lambda t: _saddle_integrand(model, t)  # noqa: E731
    th = state.theta_hat
    # split at theta = 0 and at the saddlepoint so each panel is smooth and well scaled
    if th >= 0:
        upper = _quad(func, th, hi, quad)
        total = _quad(func, lo, 0.0, quad) + _quad(func, 0.0, th, quad) + upper
    else:
        lower = _quad(func, lo, th, quad)
        total = lower + _quad(func, th, 0.0, quad) + _quad(func, 0.0, hi, quad)
        upper = total - lower
    if not total > 0:
        raise QuadratureError("saddlepoint density has non-positive mass")
    return upper / total


def rho0(model, u, method=Rho0Method.ROBINSON, quad=None):
    """Approximate the tail probability ``P{Z >= u}``.

    Parameters
    ----------
    model : CumulantModel
    u : float
    method : Rho0Method
        ``GAUSSIAN`` uses ``Psi(u/sigma)``; ``EDGEWORTH`` adds the first
        skewness term; ``ROBINSON`` and ``DANIELS`` are the first and second
        saddlepoint tail formulas (``u > 0`` only); ``LUGANNANI_RICE`` and
        ``LR_LEADING`` are valid for either sign of ``u``;
        ``INTEGRATED_NORMALIZED`` integrates the normalized saddlepoint density.
    quad : QuadratureConfig, optional
    """
    method = Rho0Method(method)
    quad = quad or QuadratureConfig()
    u = float(u)
    sigma = math.sqrt(model.variance)
    if method is Rho0Method.GAUSSIAN:
        return float(norm_survival(u / sigma))
    if method is Rho0Method.EDGEWORTH:
        x = u / sigma
        return float(norm_survival(x) + model.cumulant(3) / (6 * sigma**3) * (x * x - 1) * norm_pdf(x))

    if method in (Rho0Method.ROBINSON, Rho0Method.DANIELS):
        _require_positive(u, method)
    state = solve_saddlepoint(model, u)
    zeta = state.zeta

    if method is Rho0Method.ROBINSON:
        # exp(zeta^2/2 - I) Psi(zeta), with exp(zeta^2/2) folded into the Mills ratio
        return float(math.exp(-state.rate) * mills_survival(zeta))
    if method is Rho0Method.DANIELS:
        k3 = state.k3_tilted
        scaled_pdf = 1.0 / SQRT2PI  # phi(zeta) * exp(zeta^2 / 2)
        bracket = mills_survival(zeta) * (1 - k3 * zeta**3 / 6) + scaled_pdf * k3 / 6 * (zeta * zeta - 1)
        return float(math.exp(-state.rate) * bracket)
    if method is Rho0Method.LR_LEADING:
        return float(norm_survival(state.omega))
    if method is Rho0Method.LUGANNANI_RICE:
        omega = state.omega
        value = norm_survival(omega) + norm_pdf(omega) * _lr_correction(model, state)
        if quad.lr_higher_terms and not isinstance(model, PureGaussian):
            value += norm_pdf(omega) * _lr_higher(state)
        return float(value)
    if method is Rho0Method.INTEGRATED_NORMALIZED:
        if isinstance(model, PureGaussian):
            return float(norm_survival(u / sigma))
        return float(_integrated_normalized(model, state, quad))
    raise ValueError(f"unknown method {method}")
