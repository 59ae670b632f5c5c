import math

import mpmath as mp
import numpy as np
import pytest

from tiltec.bubbles import (
    STUDY_COLUMNS,
    BubblesConfig,
    bubble_cumulant,
    bubbles_model,
    bubbles_pvalue,
    mixed_skewness_profile,
    monte_carlo_study,
    parse_config_text,
    replicate_rng,
    signing_weights,
    simulate_field,
    spectral_moment,
)
from tiltec.geometry import ECMethodSpec, Region, expected_ec
from tiltec.topology import hull_side

TYPICAL = BubblesConfig(pixels=256**2, bubbles_per_image=16.5, fwhm=14.1, images=3000, p_correct=0.75)
SMALL = BubblesConfig(pixels=32**2, bubbles_per_image=20, fwhm=8, images=300, p_correct=0.75, seed=3)
TILTED = ECMethodSpec("tilted", "untilted", "tilted")
TILTED_LAMBDA = ECMethodSpec("tilted", "tilted", "tilted")


def cumulant_oracle(j, ndim, pc, b):
    # term-by-term in high precision, written from the moment structure:
    # shape factor, signed weight moments, bubble density
    mp.mp.dps = 40
    pc, pi = mp.mpf(pc), 1 - mp.mpf(pc)
    shape = mp.power(mp.power(2, mp.mpf(j) / 2) / j, mp.mpf(ndim) / 2)
    weight_moment = pc * mp.power(1 / pc, j) + pi * mp.power(-1 / pi, j)
    weight_var = pc / pc**2 + pi / pi**2
    density = mp.power(mp.power(4 * mp.log(2) / mp.pi, mp.mpf(ndim) / 2) / b, mp.mpf(j) / 2 - 1)
    return float(shape * weight_moment / mp.power(weight_var, mp.mpf(j) / 2) * density)


@pytest.mark.parametrize("ndim", [1, 2, 3])
@pytest.mark.parametrize("pc", [0.1, 0.5, 0.75, 0.9])
@pytest.mark.parametrize("b", [0.5, 63.6, 1e4])
def test_second_cumulant_is_one(ndim, pc, b):
    assert bubble_cumulant(2, ndim, pc, b) == pytest.approx(1.0, rel=1e-14)


def test_third_cumulant_vanishes_at_half():
    assert abs(bubble_cumulant(3, 2, 0.5, 100.0)) < 1e-16


@pytest.mark.parametrize("j", [3, 4, 5, 8, 20])
@pytest.mark.parametrize("pc", [0.2, 0.75])
def test_cumulant_matches_term_oracle(j, pc):
    assert bubble_cumulant(j, 2, pc, 63.6) == pytest.approx(cumulant_oracle(j, 2, pc, 63.6), rel=1e-12)


def test_third_cumulant_negative_for_mostly_correct():
    k3 = bubble_cumulant(3, 2, 0.75, 63.6)
    assert k3 < 0
    # (2^1.5/3) * (16/9 - 16)/(16/3)^1.5 * sqrt(4 ln2 / (pi 63.6))
    assert k3 == pytest.approx(-0.1282426, rel=1e-6)


@pytest.mark.parametrize("ndim", [1, 2, 3])
@pytest.mark.parametrize("pc", np.linspace(0.05, 0.95, 19))
@pytest.mark.parametrize("b", [0.1, 10.0, 1e5])
def test_third_cumulant_sign_rule(ndim, pc, b):
    k3 = bubble_cumulant(3, ndim, pc, b)
    assert np.sign(round(k3, 15)) == np.sign(round(0.5 - pc, 12))


def test_cumulant_errors():
    with pytest.raises(ValueError):
        bubble_cumulant(1, 2, 0.5, 1.0)
    with pytest.raises(ValueError):
        bubble_cumulant(3, 2, 1.0, 1.0)
    with pytest.raises(ValueError):
        bubble_cumulant(3, 2, 0.5, 0.0)


def test_model_has_no_odd_cumulants_at_half():
    model = bubbles_model(BubblesConfig(pixels=64**2, bubbles_per_image=10, fwhm=8, images=200, p_correct=0.5))
    assert len(model.cumulants) == 19
    assert model.variance == pytest.approx(1.0)
    for j, kappa in enumerate(model.cumulants, start=2):
        if j % 2:
            assert abs(kappa) < 1e-15


def test_large_b_tends_to_gaussian():
    ratios = []
    for images in (10**2, 10**4, 10**6):
        cfg = BubblesConfig(pixels=64**2, bubbles_per_image=10, fwhm=8, images=images, p_correct=0.75)
        tilted = bubbles_pvalue(cfg, 3.0, TILTED).total
        gauss = bubbles_pvalue(cfg, 3.0, ECMethodSpec.gaussian()).total
        ratios.append(abs(math.log(tilted / gauss)))
    assert ratios[0] > ratios[1] > ratios[2]
    assert ratios[2] < 1e-2


def test_spectral_moment():
    cfg = BubblesConfig(pixels=64**2, bubbles_per_image=10, fwhm=8 * math.sqrt(8 * math.log(2)), images=10, p_correct=0.5)
    assert spectral_moment(cfg) == pytest.approx(1 / 128)
    assert spectral_moment(TYPICAL) == pytest.approx(8 * math.log(2) / (2 * 14.1**2))


def test_typical_resel_count():
    assert TYPICAL.bubbles_per_resel == pytest.approx(150.16, rel=1e-4)


def test_pvalue_terms_at_typical_config():
    p = bubbles_pvalue(TYPICAL, 3.965, TILTED)
    np.testing.assert_allclose(p.terms, [1.4e-5, 0.00171, 0.0484], rtol=0.03)
    assert p.total == pytest.approx(0.05, rel=0.02)


def test_correction_smaller_at_half():
    def log_gap(pc):
        cfg = BubblesConfig(pixels=256**2, bubbles_per_image=16.5, fwhm=14.1, images=3000, p_correct=pc)
        return abs(math.log(bubbles_pvalue(cfg, 3.5, TILTED).total / bubbles_pvalue(cfg, 3.5, ECMethodSpec.gaussian()).total))

    assert log_gap(0.5) < log_gap(0.75)


def test_config_validation():
    with pytest.raises(ValueError):
        BubblesConfig(pixels=100, bubbles_per_image=1, fwhm=2, images=10, p_correct=1.0)
    with pytest.raises(ValueError):
        BubblesConfig(pixels=100, bubbles_per_image=1, fwhm=2, images=10, p_correct=0.5, pad=5)
    with pytest.raises(ValueError):
        BubblesConfig(pixels=0, bubbles_per_image=1, fwhm=2, images=10, p_correct=0.5)
    with pytest.raises(ValueError):
        simulate_field(BubblesConfig(pixels=99, bubbles_per_image=1, fwhm=2, images=10, p_correct=0.5), replicate_rng(0, 0))
    with pytest.raises(ValueError):
        simulate_field(BubblesConfig(pixels=100, bubbles_per_image=1, fwhm=2, images=10, p_correct=0.5, pad=11), replicate_rng(0, 0))


def test_config_text_parsing(tmp_path):
    text = "# design\nP = 64^2\nm = 20\nF = 24\nn = 300\np_c = 0.75\nfixed_counts = yes\n"
    assert parse_config_text(text)["P"] == "64^2"
    path = tmp_path / "cfg.txt"
    path.write_text(text)
    cfg = BubblesConfig.from_file(path, images=500, seed=None)
    assert cfg.pixels == 4096 and cfg.fwhm == 24.0 and cfg.fixed_counts
    assert cfg.images == 500 and cfg.seed == 0
    with pytest.raises(ValueError, match="unknown"):
        BubblesConfig.from_mapping({"P": 16, "m": 1, "F": 2, "n": 10, "p_c": 0.5, "colour": 1})
    with pytest.raises(ValueError, match="missing"):
        BubblesConfig.from_mapping({"P": 16})
    with pytest.raises(ValueError, match="invalid"):
        BubblesConfig.from_mapping({"P": "many", "m": 1, "F": 2, "n": 10, "p_c": 0.5})


@pytest.mark.parametrize("n_correct, n", [(1, 2), (7, 10), (225, 300)])
def test_signing_weights_sum_to_zero(n_correct, n):
    wc, wi = signing_weights(n_correct, n)
    assert n_correct * wc + (n - n_correct) * wi == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        signing_weights(0, n)


def test_simulation_is_deterministic():
    a = simulate_field(SMALL, replicate_rng(SMALL.seed, 4)).values
    b = simulate_field(SMALL, replicate_rng(SMALL.seed, 4)).values
    c = simulate_field(SMALL, replicate_rng(SMALL.seed, 5)).values
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert a.shape == (32, 32)


def test_simulation_moments_and_correlation():
    reps = 500
    sd = SMALL.bubble_sd
    centre, nbr = [], []
    for r in range(reps):
        v = simulate_field(SMALL, replicate_rng(SMALL.seed, r)).values
        centre.append(v[16, 16])
        nbr.append(v[16, 17])
    centre, nbr = np.array(centre), np.array(nbr)
    assert abs(centre.mean()) < 4 / math.sqrt(reps)
    # variance of the sample variance from the sample fourth moment
    m4 = np.mean((centre - centre.mean()) ** 4)
    var_se = math.sqrt((m4 - centre.var() ** 2) / reps)
    assert abs(centre.var(ddof=1) - 1) < 4 * var_se
    rho = math.exp(-1 / (4 * sd * sd))
    assert abs(np.corrcoef(centre, nbr)[0, 1] - rho) < 4 * (1 - rho * rho) / math.sqrt(reps)


def test_degenerate_draws_are_counted():
    cfg = BubblesConfig(pixels=16**2, bubbles_per_image=5, fwhm=3, images=2, p_correct=0.9)
    total = sum(simulate_field(cfg, replicate_rng(0, r)).degenerate_draws for r in range(200))
    # P(degenerate) = 0.82 per draw, so redraws are common
    assert total > 200


def test_fixed_counts_runs():
    cfg = BubblesConfig(pixels=32**2, bubbles_per_image=20, fwhm=8, images=50, p_correct=0.6, fixed_counts=True)
    v = simulate_field(cfg, replicate_rng(1, 0)).values
    assert v.shape == (32, 32) and np.all(np.isfinite(v))


def test_mixed_skewness_vanishes_in_interior():
    cfg = BubblesConfig(pixels=64**2, bubbles_per_image=10, fwhm=6, images=100, p_correct=0.75)
    prof = mixed_skewness_profile(cfg)
    assert prof.shape == (2, 64, 64)
    scale = np.abs(prof).max()
    assert np.abs(prof[:, 24:40, 24:40]).max() < 1e-10 * scale


def test_study_gaussian_limit():
    cfg = BubblesConfig(pixels=32**2, bubbles_per_image=200, fwhm=12, images=20000, p_correct=0.75, seed=1)
    specs = [ECMethodSpec.gaussian(), TILTED, TILTED_LAMBDA]
    rep = monte_carlo_study(cfg, [3.0], 2000, specs)
    for s in range(3):
        assert abs(rep.ratio(s)[0] - 1) < 3 * rep.ratio_se(s)[0]


def test_study_mid_threshold_mean_ec():
    # the tilted spectral moment cancels the tau^-k factor of the tilted densities
    rep = monte_carlo_study(SMALL, [1.0], 1000, [TILTED_LAMBDA])
    region = Region((hull_side(32),) * 2)
    predicted = expected_ec(region, spectral_moment(SMALL), 1.0, bubbles_model(SMALL), TILTED_LAMBDA)
    assert abs(rep.ec_mean[0] - predicted) < 3 * rep.ec_se[0]


def test_study_csv_and_jobs_independence():
    specs = [ECMethodSpec.gaussian(), TILTED]
    a = monte_carlo_study(SMALL, [2.0, 3.0], 100, specs, chunk=30)
    b = monte_carlo_study(SMALL, [3.0, 2.0], 100, specs, jobs=2, chunk=50)
    np.testing.assert_array_equal(a.exceed, b.exceed)
    np.testing.assert_array_equal(a.ec_mean, b.ec_mean)
    lines = a.to_csv().splitlines()
    assert lines[0].startswith("# schema: tiltec.bubbles_study/v1")
    assert lines[1].split(",") == list(STUDY_COLUMNS)
    assert len(lines) == 2 + 4
    with pytest.raises(ValueError):
        monte_carlo_study(SMALL, [2.0], 99, specs)
