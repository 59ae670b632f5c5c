"""Independent reference computations shared by the unit and acceptance tests."""

import itertools
import math

import mpmath
import numpy as np
from scipy import fft as sfft

from tiltec.geometry import unit_ball_volume


def hermite_sum(m, x):
    """Explicit-sum probabilists' Hermite polynomial in high precision."""
    with mpmath.workdps(40):
        x = mpmath.mpf(x)
        total = mpmath.mpf(0)
        for j in range(m // 2 + 1):
            total += (-1) ** j * x ** (m - 2 * j) / (2**j * math.factorial(j) * math.factorial(m - 2 * j))
        return math.factorial(m) * total


def box_tube_volume(dims, r):
    """Exact volume of a box grown by a ball of radius r (inclusion by faces)."""
    total = 0.0
    n = len(dims)
    for k in range(n + 1):
        # every k-face contributes (product of its k sides) x (normal-cone ball fraction) -> e_k w_{n-k} r^{n-k}
        faces = sum(math.prod(c) for c in itertools.combinations(dims, k))
        total += faces * unit_ball_volume(n - k) * r ** (n - k)
    return total


def explicit_tube_volume(dims, r):
    # independent hand formulas for boxes of dimension 1 to 3
    if len(dims) == 1:
        return dims[0] + 2 * r
    if len(dims) == 2:
        a, b = dims
        return a * b + 2 * r * (a + b) + math.pi * r * r
    a, b, c = dims
    return a * b * c + 2 * r * (a * b + b * c + a * c) + math.pi * r * r * (a + b + c) + 4 / 3 * math.pi * r**3


def smooth_noise(rng, side, sd):
    """White noise smoothed by a Gaussian kernel of standard deviation ``sd``, unit variance."""
    pad = sfft.next_fast_len(side + int(math.ceil(8 * sd)))
    d = sfft.fftfreq(pad, 1.0 / pad)
    kernel = np.exp(-(d[:, None] ** 2 + d[None, :] ** 2) / (2 * sd * sd))
    z = sfft.irfft2(sfft.rfft2(rng.standard_normal((pad, pad))) * sfft.rfft2(kernel), s=(pad, pad))
    return z[:side, :side] / math.sqrt(np.sum(kernel**2))


def finite_difference_error(model_cgf, theta, order):
    """Central-difference error of ``d/dtheta K^(order)`` relative to a floor-guarded scale."""
    h = np.cbrt(np.finfo(float).eps) * max(1.0, abs(theta))
    fd = (model_cgf(theta + h, order) - model_cgf(theta - h, order)) / (2 * h)
    exact = model_cgf(theta, order + 1)
    scale = max(abs(exact), abs(model_cgf(theta, order)) * 1e-3, 1e-8)
    return abs(fd - exact) / scale
