"""Marginal cumulant models, their cgf, and the saddlepoint (tilt) solver.

Three model families are supported:

* :class:`PureGaussian` -- ``K(theta) = sigma^2 theta^2 / 2``.
* :class:`Chi2Normalized` -- the standardized chi-square field
  ``Z = (Y - n) / sqrt(n)`` with ``Y ~ chi2_n``.
* :class:`TruncatedSeries` -- a polynomial cgf built from cumulants
  ``kappa_2 .. kappa_J`` (``kappa_1 = 0``).

:func:`solve_saddlepoint` finds the tilt ``theta_hat`` with
``K'(theta_hat) = u`` on the branch of the cgf connected to ``theta = 0``
and packages every derived quantity into a :class:`SaddlepointState`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CgfDomainError",
    "Chi2Normalized",
    "CumulantModel",
    "PureGaussian",
    "SaddlepointError",
    "SaddlepointState",
    "TruncatedSeries",
    "cgf",
    "solve_saddlepoint",
    "tilted_lambda",
]

DEFAULT_TRUNCATION = 20
CHI2_DOMAIN_GUARD = 1e-12


class CgfDomainError(ValueError):
    """Raised when the cgf is evaluated outside its domain."""

    def __init__(self, message, theta=None):
        super().__init__(message)
        self.theta = theta


class SaddlepointError(RuntimeError):
    """Raised when ``K'(theta) = u`` cannot be solved."""

    def __init__(self, message, u=None, theta=None):
        super().__init__(message)
        self.u = u
        self.theta = theta


def _x_minus_log1p(x):
    """``x - log(1 + x)`` without cancellation near 0."""
    x = np.asarray(x, dtype=float)
    out = np.asarray(x - np.log1p(x), dtype=float)
    small = np.abs(x) < 0.1
    if np.any(small):
        xs = x[small]
        # alternating series sum_{j>=2} (-x)^j / j, 18 terms reach double precision for |x| < 0.1
        acc = np.zeros_like(xs)
        for j in range(19, 1, -1):
            acc = acc * -xs + (1.0 / j)
        out[small] = acc * xs * xs
    return out


def _check_order(order):
    if order not in (0, 1, 2, 3, 4):
        raise ValueError(f"cgf derivative order must be in 0..4, got {order}")


class CumulantModel:
    """Base class for zero-mean marginal laws described by their cgf."""

    def derivative(self, theta, order):
        raise NotImplementedError

    def branch(self):
        """Closed interval ``(lo, hi)`` around 0 on which ``K'' > 0``.

        Ends may be infinite; finite ends are valid evaluation points.
        """
        raise NotImplementedError

    def rate(self, theta):
        """Large-deviation rate ``theta K'(theta) - K(theta)`` at the tilt ``theta``."""
        theta = np.asarray(theta, dtype=float)
        return (theta * self.derivative(theta, 1) - self.derivative(theta, 0))[()]

    def mean_range(self):
        """Open interval of levels ``u`` reachable as a tilted mean ``K'(theta)``."""
        return -math.inf, math.inf

    @property
    def variance(self):
        return float(self.derivative(0.0, 2))

    def cumulant(self, j):
        """``K^{(j)}(0)`` for ``j = 1..4``."""
        return float(self.derivative(0.0, j))


@dataclass(frozen=True)
class PureGaussian(CumulantModel):
    sigma2: float = 1.0

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")

    def derivative(self, theta, order):
        _check_order(order)
        theta = np.asarray(theta, dtype=float)
        if order == 0:
            out = 0.5 * self.sigma2 * theta * theta
        elif order == 1:
            out = self.sigma2 * theta
        elif order == 2:
            out = np.full_like(theta, self.sigma2)
        else:
            out = np.zeros_like(theta)
        return out[()]

    def branch(self):
        return -math.inf, math.inf


@dataclass(frozen=True)
class Chi2Normalized(CumulantModel):
    """Standardized chi-square: ``K(theta) = -sqrt(n) theta - (n/2) log(1 - 2 theta / sqrt(n))``."""

    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")

    @property
    def theta_max(self):
        return 0.5 * math.sqrt(self.n) - CHI2_DOMAIN_GUARD

    def derivative(self, theta, order):
        _check_order(order)
        theta = np.asarray(theta, dtype=float)
        if np.any(theta >= self.theta_max):
            bad = float(np.max(theta))
            raise CgfDomainError(
                f"theta={bad} outside chi-square cgf domain theta < sqrt(n)/2 = {0.5 * math.sqrt(self.n)}",
                theta=bad,
            )
        rn = math.sqrt(self.n)
        one_minus = 1.0 - 2.0 * theta / rn
        if order == 0:
            out = -rn * theta - 0.5 * self.n * np.log1p(-2.0 * theta / rn)
        elif order == 1:
            out = 2.0 * theta / one_minus
        else:
            # K^(r) = (n/2) (r-1)! (2/sqrt(n))^r (1 - 2 theta/sqrt(n))^{-r}, r >= 2
            out = 0.5 * self.n * math.factorial(order - 1) * (2.0 / rn) ** order / one_minus**order
        return out[()]

    def branch(self):
        return -math.inf, self.theta_max - CHI2_DOMAIN_GUARD

    def rate(self, theta):
        # (n/2)(b - log(1 + b)) with b = K'(theta)/sqrt(n), free of the cancellation in K
        theta = np.asarray(theta, dtype=float)
        rn = math.sqrt(self.n)
        if np.any(theta >= self.theta_max):
            raise CgfDomainError(f"theta={float(np.max(theta))} outside chi-square cgf domain", theta=float(np.max(theta)))
        b = 2.0 * theta / (rn - 2.0 * theta)
        return (0.5 * self.n * _x_minus_log1p(b))[()]

    def mean_range(self):
        # Y >= 0 bounds Z below by -sqrt(n)
        return -math.sqrt(self.n), math.inf


@dataclass(frozen=True)
class TruncatedSeries(CumulantModel):
    """Polynomial cgf ``sum_{v=2}^{J} kappa_v theta^v / v!``.

    ``cumulants`` holds ``(kappa_2, ..., kappa_J)``.
    """

    cumulants: tuple
    _branch: tuple = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        kap = tuple(float(c) for c in self.cumulants)
        if len(kap) < 1:
            raise ValueError("need at least kappa_2")
        if not kap[0] > 0:
            raise ValueError(f"kappa_2 must be positive, got {kap[0]}")
        object.__setattr__(self, "cumulants", kap)

    @property
    def order(self):
        """Truncation order ``J``."""
        return len(self.cumulants) + 1

    def _coefficients(self, order):
        # ascending power coefficients of K^{(order)}
        coef = np.zeros(self.order + 1)
        for v, kv in enumerate(self.cumulants, start=2):
            coef[v] = kv / math.factorial(v)
        for _ in range(order):
            coef = np.polynomial.polynomial.polyder(coef)
        return coef

    def derivative(self, theta, order):
        _check_order(order)
        theta = np.asarray(theta, dtype=float)
        coef = self._coefficients(order)
        return np.polynomial.polynomial.polyval(theta, coef)[()]

    def _real_roots(self, coef):
        coef = np.trim_zeros(coef, "b")
        if coef.size <= 1:
            return np.empty(0)
        roots = np.polynomial.polynomial.polyroots(coef)
        real = roots[np.abs(roots.imag) <= 1e-9 * (1.0 + np.abs(roots.real))].real
        return np.sort(real)

    def branch(self):
        if self._branch is None:
            roots = self._real_roots(self._coefficients(2))
            neg = roots[roots < 0]
            pos = roots[roots > 0]
            lo = float(neg.max()) if neg.size else -math.inf
            hi = float(pos.min()) if pos.size else math.inf
            object.__setattr__(self, "_branch", (lo, hi))
        return self._branch

    def count_increasing_roots(self, u):
        """Number of real roots of ``K'(theta) = u`` with ``K''(theta) > 0``."""
        coef = self._coefficients(1).copy()
        coef[0] -= u
        roots = self._real_roots(coef)
        return int(np.sum(self.derivative(roots, 2) > 0)) if roots.size else 0


def cgf(model, theta, order=0):
    """Value (``order=0``) or ``order``-th derivative of the model cgf at ``theta``."""
    return model.derivative(theta, order)


@dataclass(frozen=True)
class SaddlepointState:
    """Tilt at level ``u`` and the tilted quantities derived from it."""

    u: float
    theta_hat: float
    tau2: float
    rate: float
    k3_tilted: float
    k4_tilted: float
    iterations: int = 0
    multiple_roots: bool = False

    @property
    def tau(self):
        return math.sqrt(self.tau2)

    @property
    def zeta(self):
        """Tilted Hermite argument ``tau * theta_hat``."""
        return self.tau * self.theta_hat

    @property
    def omega(self):
        """Signed root ``sgn(theta_hat) sqrt(2 I)``."""
        return math.copysign(math.sqrt(2.0 * self.rate), self.theta_hat)


def _make_state(model, u, theta, iterations, multiple_roots=False):
    tau2 = float(model.derivative(theta, 2))
    if not tau2 > 0:
        raise SaddlepointError(f"tilted variance K''={tau2} is not positive at theta={theta}", u=u, theta=theta)
    # u theta - K(theta), via the cancellation-free rate plus the residual term
    rate = float(model.rate(theta)) + theta * (u - float(model.derivative(theta, 1)))
    if rate < 0:
        if rate < -1e-12 * max(1.0, abs(u * theta)):
            raise SaddlepointError(f"negative rate I={rate} at theta={theta}", u=u, theta=theta)
        rate = 0.0
    return SaddlepointState(
        u=float(u),
        theta_hat=float(theta),
        tau2=tau2,
        rate=rate,
        k3_tilted=float(model.derivative(theta, 3)),
        k4_tilted=float(model.derivative(theta, 4)),
        iterations=iterations,
        multiple_roots=multiple_roots,
    )


def _bracket(model, u, theta0, lo, hi):
    """Finite ``[a, b]`` inside the branch with ``K'(a) <= u <= K'(b)``."""

    def g(t):
        return float(model.derivative(t, 1)) - u

    g0 = g(theta0)
    if g0 <= 0:
        a = theta0
        if math.isfinite(hi):
            if g(hi) < 0:
                raise SaddlepointError(
                    f"u={u} exceeds the attainable tilted mean K'({hi})={g(hi) + u}", u=u, theta=hi
                )
            return a, hi
        step = max(1.0, abs(theta0))
        b = theta0 + step
        for _ in range(200):
            if g(b) >= 0:
                return a, b
            a, step = b, 2.0 * step
            b = a + step
        raise SaddlepointError(f"could not bracket K'(theta)={u} above theta={a}", u=u, theta=b)
    b = theta0
    if math.isfinite(lo):
        if g(lo) > 0:
            raise SaddlepointError(
                f"u={u} is below the attainable tilted mean K'({lo})={g(lo) + u}", u=u, theta=lo
            )
        return lo, b
    step = max(1.0, abs(theta0))
    a = theta0 - step
    for _ in range(200):
        if g(a) <= 0:
            return a, b
        b, step = a, 2.0 * step
        a = b - step
    raise SaddlepointError(f"could not bracket K'(theta)={u} below theta={b}", u=u, theta=a)


def solve_saddlepoint(model, u, tol=1e-10, max_iter=50):
    """Solve ``K'(theta) = u`` for the tilt on the branch through ``theta = 0``.

    Newton iterations start from the Gaussian solution ``u / kappa_2``; a step
    that leaves the current bracket or fails to halve the residual is replaced
    by bisection, so the iterate never leaves the cgf domain.

    Raises
    ------
    SaddlepointError
        If ``u`` is outside the attainable range of ``K'`` on the branch, or
        the iteration does not converge within ``max_iter`` steps.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    u = float(u)
    u_lo, u_hi = model.mean_range()
    if not u_lo < u < u_hi:
        raise SaddlepointError(f"u={u} is outside the attainable range ({u_lo}, {u_hi})", u=u)
    lo, hi = model.branch()
    theta = u / model.variance
    if theta >= hi:
        theta = hi if not math.isfinite(lo) else 0.5 * (max(lo, 0.0) + hi)
    elif theta <= lo:
        theta = 0.5 * (lo + min(hi, 0.0))

    def g(t):
        return float(model.derivative(t, 1)) - u

    multiple = isinstance(model, TruncatedSeries) and model.count_increasing_roots(u) > 1
    resid = g(theta)
    if abs(resid) <= tol:
        return _make_state(model, u, theta, 0, multiple)

    a, b = _bracket(model, u, theta, lo, hi)
    if not a <= theta <= b:
        theta = 0.5 * (a + b)
        resid = g(theta)
    for it in range(1, max_iter + 1):
        if resid < 0:
            a = theta
        else:
            b = theta
        slope = float(model.derivative(theta, 2))
        step_ok = slope > 0
        if step_ok:
            candidate = theta - resid / slope
            step_ok = a < candidate < b
        if step_ok:
            new_resid = g(candidate)
            step_ok = abs(new_resid) <= 0.5 * abs(resid)
        if not step_ok:
            candidate = 0.5 * (a + b)
            new_resid = g(candidate)
        theta, resid = candidate, new_resid
        if abs(resid) <= tol:
            return _make_state(model, u, theta, it, multiple)
        if b - a <= 4 * np.finfo(float).eps * max(1.0, abs(theta)):
            break
    raise SaddlepointError(
        f"saddlepoint iteration did not converge for u={u} (last theta={theta}, residual={resid})",
        u=u,
        theta=theta,
    )


def tilted_lambda(state, lam):
    """Tilted second spectral moment ``tau_u^2 * lambda``."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    return state.tau2 * lam
