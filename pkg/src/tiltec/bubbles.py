"""The smoothed, signed Poisson field of a bubbles experiment.

Each of ``n`` images reveals a stimulus through Gaussian apertures
("bubbles") with random centres. Correctly classified images get weight
``1/p_C_hat`` and incorrect ones ``-1/p_I_hat``; the weighted bubble masks
are summed and scaled by ``n^{-1/2}``. Under the null the resulting field
has mean zero, unit variance after normalization, and cumulants that shrink
as the number of bubbles per resolution element grows.
"""

from __future__ import annotations

import configparser
import csv
import functools
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace

import numpy as np
from scipy import fft as sfft
from scipy import signal

from .geometry import ECMethodSpec, Region, expected_ec_terms
from .saddlepoint import TruncatedSeries
from .topology import LatticeField, ec_curve

__all__ = [
    "BubblesConfig",
    "LatticeField",
    "PValue",
    "StudyReport",
    "bubble_cumulant",
    "bubbles_model",
    "bubbles_pvalue",
    "mixed_skewness_profile",
    "monte_carlo_study",
    "replicate_rng",
    "signing_weights",
    "simulate_field",
    "spectral_moment",
]

FWHM_TO_SD = math.sqrt(8 * math.log(2))


@dataclass(frozen=True)
class BubblesConfig:
    """Design of a bubbles experiment.

    Parameters
    ----------
    pixels : int
        Pixel count of the square search region.
    bubbles_per_image : float
        Mean number of bubble centres per image inside the region.
    fwhm : float
        Bubble full width at half maximum, in pixels.
    images : int
        Number of images (trials).
    p_correct : float
        Probability that an image is classified correctly.
    ndim : int
        Dimension used by the analytic cumulants (the simulator is 2D only).
    pad : int, optional
        Side of the simulation grid before trimming; defaults to the next
        FFT-friendly size at or above ``side + ceil(8 sd)``.
    seed : int
    fixed_counts : bool
        Draw a fixed number of bubbles per image instead of a Poisson count.
    truncation : int
        Highest cumulant order kept in the cgf.
    """

    pixels: int
    bubbles_per_image: float
    fwhm: float
    images: int
    p_correct: float
    ndim: int = 2
    pad: int | None = None
    seed: int = 0
    fixed_counts: bool = False
    truncation: int = 20

    def __post_init__(self):
        if int(self.pixels) != self.pixels or self.pixels < 1:
            raise ValueError(f"pixels must be a positive integer, got {self.pixels}")
        if int(self.images) != self.images or self.images < 2:
            raise ValueError(f"images must be an integer >= 2, got {self.images}")
        if not self.bubbles_per_image > 0:
            raise ValueError(f"bubbles_per_image must be positive, got {self.bubbles_per_image}")
        if not self.fwhm > 0:
            raise ValueError(f"fwhm must be positive, got {self.fwhm}")
        if not 0 < self.p_correct < 1:
            raise ValueError(f"p_correct must lie in (0, 1), got {self.p_correct}")
        if self.ndim not in (1, 2, 3):
            raise ValueError(f"ndim must be 1, 2 or 3, got {self.ndim}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ValueError(f"seed must be a non-negative integer, got {self.seed}")
        if self.truncation < 2:
            raise ValueError("truncation must be >= 2")
        object.__setattr__(self, "pixels", int(self.pixels))
        object.__setattr__(self, "images", int(self.images))
        if self.pad is not None and (int(self.pad) != self.pad or self.pad < self.side):
            raise ValueError(f"pad must be an integer >= sqrt(pixels) = {self.side}, got {self.pad}")

    @property
    def side(self):
        return math.sqrt(self.pixels)

    @property
    def bubble_sd(self):
        return self.fwhm / FWHM_TO_SD

    @property
    def p_incorrect(self):
        return 1.0 - self.p_correct

    @property
    def bubbles_per_resel(self):
        """Total bubbles per resolution element, ``n m F^N / P``."""
        return self.images * self.bubbles_per_image * self.fwhm**self.ndim / self.pixels

    @property
    def grid_pad(self):
        if self.pad is not None:
            return int(self.pad)
        return sfft.next_fast_len(int(math.ceil(self.side)) + math.ceil(8 * self.bubble_sd))

    @classmethod
    def from_file(cls, path, **overrides):
        """Read ``key = value`` lines; ``overrides`` that are not None win."""
        with open(path) as fh:
            text = fh.read()
        return cls.from_mapping(parse_config_text(text), **overrides)

    @classmethod
    def from_mapping(cls, mapping, **overrides):
        known = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, value in {**mapping, **{k: v for k, v in overrides.items() if v is not None}}.items():
            name = CONFIG_ALIASES.get(key.replace("-", "_"), key.replace("-", "_"))
            if name not in known:
                raise ValueError(f"unknown config key {key!r}")
            kwargs[name] = _coerce(name, value)
        missing = [n for n in ("pixels", "bubbles_per_image", "fwhm", "images", "p_correct") if n not in kwargs]
        if missing:
            raise ValueError(f"missing config keys: {', '.join(missing)}")
        return cls(**kwargs)


CONFIG_ALIASES = {
    "P": "pixels",
    "m": "bubbles_per_image",
    "F": "fwhm",
    "n": "images",
    "p_c": "p_correct",
    "J": "truncation",
}

_INT_KEYS = {"pixels", "images", "ndim", "pad", "seed", "truncation"}


def _coerce(name, value):
    if not isinstance(value, str):
        return value
    value = value.strip()
    try:
        if name == "fixed_counts":
            if value.lower() in ("1", "true", "yes", "on"):
                return True
            if value.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if name in _INT_KEYS:
            if "^" in value:
                base, exp = value.split("^")
                return int(base) ** int(exp)
            return int(value)
        return float(value)
    except ValueError:
        raise ValueError(f"invalid value {value!r} for {name}") from None


def parse_config_text(text):
    """Parse ``key = value`` lines (``#`` comments allowed) into a dict."""
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"))
    parser.optionxform = str
    parser.read_string("[config]\n" + text)
    return dict(parser["config"])


# -- analytic side ------------------------------------------------------------


def bubble_cumulant(j, ndim, p_correct, bubbles_per_resel):
    """``j``-th cumulant of the normalized bubbles statistic (``kappa_2 = 1``)."""
    if int(j) != j or j < 2:
        raise ValueError(f"j must be an integer >= 2, got {j}")
    if not 0 < p_correct < 1:
        raise ValueError(f"p_correct must lie in (0, 1), got {p_correct}")
    if not bubbles_per_resel > 0:
        raise ValueError("bubbles_per_resel must be positive")
    pc, pi = p_correct, 1.0 - p_correct
    shape = (2 ** (j / 2) / j) ** (ndim / 2)
    sign_part = (pc ** (1 - j) + (-1) ** j * pi ** (1 - j)) / (1 / pc + 1 / pi) ** (j / 2)
    density = ((4 * math.log(2) / math.pi) ** (ndim / 2) / bubbles_per_resel) ** (j / 2 - 1)
    return shape * sign_part * density


def bubbles_model(config):
    cums = tuple(
        bubble_cumulant(j, config.ndim, config.p_correct, config.bubbles_per_resel)
        for j in range(2, config.truncation + 1)
    )
    return TruncatedSeries(cums)


def spectral_moment(config):
    """Second spectral moment ``1 / (2 sd^2)`` of the smoothed field."""
    return 1.0 / (2 * config.bubble_sd**2)


@dataclass(frozen=True)
class PValue:
    total: float
    terms: np.ndarray


def bubbles_pvalue(config, u, spec, mixed_skew=None):
    """Expected EC of the excursion set above ``u`` over the square search region."""
    region = Region((config.side,) * config.ndim)
    terms = expected_ec_terms(region, spectral_moment(config), u, bubbles_model(config), spec, mixed_skew)
    return PValue(float(np.sum(terms)), terms)


# -- simulation -----------------------------------------------------------------


def replicate_rng(seed, replicate):
    """Independent generator for one replicate, keyed on ``(seed, replicate)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(replicate)])))


def signing_weights(n_correct, n):
    """Weights ``(1/p_C_hat, -1/p_I_hat)`` for correct and incorrect images."""
    if not 0 < n_correct < n:
        raise ValueError("weights need at least one correct and one incorrect image")
    return n / n_correct, -n / (n - n_correct)


@dataclass(frozen=True)
class _Grid:
    pad: int
    side: int
    offset: int
    kernel_fft: np.ndarray
    kernel_sq_sum: float


@functools.lru_cache(maxsize=16)
def _grid(config):
    side = math.isqrt(config.pixels)
    if side * side != config.pixels:
        raise ValueError(f"simulation needs a square pixel count, got {config.pixels}")
    if config.ndim != 2:
        raise ValueError("the simulator is two-dimensional only")
    pad = config.grid_pad
    if pad < side + 4 * config.bubble_sd:
        raise ValueError(f"pad {pad} is below sqrt(pixels) + 4 sd = {side + 4 * config.bubble_sd:.1f}")
    d = sfft.fftfreq(pad, 1.0 / pad)
    sd = config.bubble_sd
    kernel = np.exp(-(d[:, None] ** 2 + d[None, :] ** 2) / (2 * sd * sd))
    return _Grid(pad, side, (pad - side) // 2, sfft.rfft2(kernel), float(np.sum(kernel**2)))


def _bubble_counts(rng, config, grid, n_images):
    rate = config.bubbles_per_image / config.pixels
    if not config.fixed_counts:
        return rng.poisson(n_images * rate, (grid.pad, grid.pad))
    per_image = round(config.bubbles_per_image * grid.pad**2 / config.pixels)
    centres = rng.integers(0, grid.pad**2, size=n_images * per_image)
    return np.bincount(centres, minlength=grid.pad**2).reshape(grid.pad, grid.pad)


def simulate_field(config, rng):
    """Draw one normalized bubbles field on the ``sqrt(P) x sqrt(P)`` region.

    Classifications are Bernoulli(``p_correct``); draws with no correct or no
    incorrect image are redrawn and counted in ``degenerate_draws``. Signed
    bubble-centre counts are smoothed by FFT on the padded grid, the border
    is discarded, and the result is divided by its analytic standard
    deviation.
    """
    grid = _grid(config)
    n = config.images
    degenerate = 0
    while True:
        n_correct = int(rng.binomial(n, config.p_correct))
        if 0 < n_correct < n:
            break
        degenerate += 1
    w_correct, w_incorrect = signing_weights(n_correct, n)
    signed = w_correct * _bubble_counts(rng, config, grid, n_correct) + w_incorrect * _bubble_counts(
        rng, config, grid, n - n_correct
    )
    smooth = sfft.irfft2(sfft.rfft2(signed) * grid.kernel_fft, s=(grid.pad, grid.pad))
    mean_sq_weight = (n_correct * w_correct**2 + (n - n_correct) * w_incorrect**2) / n
    sd = math.sqrt(config.bubbles_per_image / config.pixels * grid.kernel_sq_sum * mean_sq_weight)
    o = grid.offset
    values = smooth[o : o + grid.side, o : o + grid.side] / (math.sqrt(n) * sd)
    return LatticeField(values, degenerate)


def mixed_skewness_profile(config):
    """Boundary diagnostic ``sum_p (t_i - p_i) b_p(t)^3`` over region pixels ``p``.

    Returns an array of shape ``(2, side, side)``, one plane per axis. It is
    proportional to the mixed skewness and vanishes away from the boundary.
    """
    side = math.isqrt(config.pixels)
    sd = config.bubble_sd
    reach = int(math.ceil(6 * sd))
    d = np.arange(-reach, reach + 1, dtype=float)
    cube = np.exp(-3 * (d[:, None] ** 2 + d[None, :] ** 2) / (2 * sd * sd))
    inside = np.ones((side, side))
    # t - p ranges over the kernel offsets d
    rows = signal.fftconvolve(inside, d[:, None] * cube, mode="same")
    cols = signal.fftconvolve(inside, d[None, :] * cube, mode="same")
    return np.stack([rows, cols])


# -- Monte Carlo study -----------------------------------------------------------

STUDY_COLUMNS = ("u", "rep_count", "p_emp", "p_emp_se", "mean_obs_ec", "spec_id", "p_analytic", "ratio", "ratio_se")
STUDY_SCHEMA = "# schema: tiltec.bubbles_study/v1 columns=" + ",".join(STUDY_COLUMNS)


@dataclass
class StudyReport:
    """Empirical sup-exceedance rates and EC means against analytic expected ECs."""

    thresholds: np.ndarray
    rep_count: int
    exceed: np.ndarray
    ec_mean: np.ndarray
    ec_se: np.ndarray
    specs: list
    p_analytic: np.ndarray  # shape (n_specs, n_thresholds)
    degenerate_draws: int = 0
    interrupted: bool = False

    @property
    def p_emp(self):
        return self.exceed / self.rep_count

    @property
    def p_emp_se(self):
        p = self.p_emp
        return np.sqrt(p * (1 - p) / self.rep_count)

    def ratio(self, spec_index):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.exceed > 0, self.p_analytic[spec_index] / self.p_emp, np.nan)

    def ratio_se(self, spec_index):
        """``sqrt(p_hat^2 (1 - p_emp) / (reps p_emp^3))``."""
        p = self.p_emp
        with np.errstate(divide="ignore", invalid="ignore"):
            var = self.p_analytic[spec_index] ** 2 * (1 - p) / (self.rep_count * p**3)
            return np.where(self.exceed > 0, np.sqrt(var), np.nan)

    def records(self):
        out = []
        for s, spec in enumerate(self.specs):
            ratio, ratio_se = self.ratio(s), self.ratio_se(s)
            for t, u in enumerate(self.thresholds):
                out.append(
                    {
                        "u": float(u),
                        "rep_count": int(self.rep_count),
                        "p_emp": float(self.p_emp[t]),
                        "p_emp_se": float(self.p_emp_se[t]),
                        "mean_obs_ec": float(self.ec_mean[t]),
                        "spec_id": spec.label,
                        "p_analytic": float(self.p_analytic[s, t]),
                        "ratio": float(ratio[t]),
                        "ratio_se": float(ratio_se[t]),
                    }
                )
        return out

    def to_csv(self):
        buf = io.StringIO()
        buf.write(STUDY_SCHEMA + "\n")
        writer = csv.DictWriter(buf, fieldnames=STUDY_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for rec in self.records():
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in rec.items()})
        return buf.getvalue()


def _run_chunk(config, thresholds, start, stop):
    maxima = np.empty(stop - start)
    ecs = np.empty((stop - start, thresholds.size), dtype=np.int64)
    degenerate = 0
    for i, rep in enumerate(range(start, stop)):
        f = simulate_field(config, replicate_rng(config.seed, rep))
        maxima[i] = f.values.max()
        ecs[i] = ec_curve(f, thresholds)
        degenerate += f.degenerate_draws
    return maxima, ecs, degenerate


def monte_carlo_study(config, thresholds, reps, specs, jobs=1, chunk=500):
    """Compare analytic expected ECs with simulated sup-exceedance rates.

    Replicate ``r`` always uses ``replicate_rng(config.seed, r)``, so the
    result does not depend on ``jobs``. An interrupt stops the run and the
    report covers the replicates completed so far.
    """
    if reps < 100:
        raise ValueError(f"reps must be >= 100, got {reps}")
    if jobs < 1:
        raise ValueError("jobs must be >= 1")
    us = np.sort(np.asarray(thresholds, dtype=float))
    specs = [s if isinstance(s, ECMethodSpec) else ECMethodSpec(**s) for s in specs]
    p_analytic = np.array([[bubbles_pvalue(config, u, s).total for u in us] for s in specs]).reshape(len(specs), us.size)

    bounds = [(a, min(a + chunk, reps)) for a in range(0, reps, chunk)]
    maxima, ecs, degenerate, interrupted = [], [], 0, False
    try:
        if jobs == 1:
            for a, b in bounds:
                mx, ec, deg = _run_chunk(config, us, a, b)
                maxima.append(mx)
                ecs.append(ec)
                degenerate += deg
        else:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                futures = [pool.submit(_run_chunk, config, us, a, b) for a, b in bounds]
                for fut in futures:
                    mx, ec, deg = fut.result()
                    maxima.append(mx)
                    ecs.append(ec)
                    degenerate += deg
    except KeyboardInterrupt:
        interrupted = True
        if not maxima:
            raise
    mx = np.concatenate(maxima)
    ec = np.concatenate(ecs)
    done = mx.size
    exceed = (mx[:, None] >= us[None, :]).sum(axis=0)
    return StudyReport(
        thresholds=us,
        rep_count=done,
        exceed=exceed,
        ec_mean=ec.mean(axis=0),
        ec_se=ec.std(axis=0, ddof=1) / math.sqrt(done),
        specs=specs,
        p_analytic=p_analytic,
        degenerate_draws=degenerate,
        interrupted=interrupted,
    )


def config_as_dict(config):
    return asdict(config)


def with_overrides(config, **kwargs):
    return replace(config, **{k: v for k, v in kwargs.items() if v is not None})
