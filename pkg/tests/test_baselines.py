import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from plfilter.baselines import (
    KalmanState,
    ParticleEnsemble,
    effective_sample_size,
    kalman_correct,
    kalman_step,
    pf_propagate,
    pf_step,
    pf_weight,
    riccati_fixed_point,
    systematic_resample,
    weighted_mean,
)
from plfilter.densities import Gaussian, Gumbel, Uniform
from plfilter.errors import DegeneracyError
from plfilter.experiments import LocalizationModel


def test_kalman_correct_conjugate():
    post = kalman_correct(KalmanState(0.0, 1.0), 0.0, 1.0, 1.0)
    assert post.mean == 0.0 and post.variance == pytest.approx(0.5)


def test_huge_observation_noise_keeps_prediction():
    s = kalman_step(KalmanState(2.0, 1.0), 100.0, 0.9, 1.0, 0.5, 0.1, 1e12)
    assert s.mean == pytest.approx(0.9 * 2.0 + 0.5, abs=1e-8)
    assert s.variance == pytest.approx(0.81 + 0.1, rel=1e-9)


def test_riccati_fixed_point_by_iteration():
    f, h, q, r = 0.95, 1.2, 0.3, 0.8
    s = KalmanState(0.0, 10.0)
    for _ in range(100):
        s = kalman_step(s, 0.0, f, h, 0.0, q, r)
    assert s.variance == pytest.approx(riccati_fixed_point(f, h, q, r), abs=1e-10)


@given(st.floats(-1.5, 1.5).filter(lambda f: abs(f) > 0.05), st.floats(0.2, 3),
       st.floats(0.01, 2), st.floats(0.01, 2))
def test_riccati_is_fixed_point(f, h, q, r):
    p = riccati_fixed_point(f, h, q, r)
    s = kalman_step(KalmanState(0.0, p), 0.0, f, h, 0.0, q, r)
    assert s.variance == pytest.approx(p, rel=1e-9)


def test_kalman_localization_reproducible():
    model = LocalizationModel()
    rng = np.random.default_rng(9)
    ys = -7.0 + np.arange(13) + 0.25 * rng.gumbel(size=13)

    def run():
        s, out = KalmanState(-7.0, 1.0), []
        for y in ys:
            s = kalman_step(s, y, 1.0, 1.0, model.drift, model.process_sd**2, model.kf_obs_sd**2)
            out.append((s.mean, s.variance))
        return out

    assert run() == run()


def test_kalman_rejects_bad_variances():
    with pytest.raises(ValueError):
        kalman_step(KalmanState(0.0, 1.0), 0.0, 1.0, 1.0, 0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        KalmanState(0.0, -1.0)


def test_pf_matches_kalman_on_linear_gaussian():
    f, h, q, r, drift = 0.9, 1.0, 0.5, 1.0, 0.2
    prior = KalmanState(1.0, 2.0)
    rng = np.random.default_rng(17)
    ens = ParticleEnsemble.uniform(Gaussian(prior.mean, prior.variance).sample(rng, 5000))
    weighted, _ = pf_step(ens, 1.5, f, h, drift, Gaussian(0.0, q), Gaussian(0.0, r), rng)
    kf = kalman_step(prior, 1.5, f, h, drift, q, r)
    assert abs(weighted_mean(weighted) - kf.mean) <= 3 * np.sqrt(kf.variance / 5000)


def test_zero_information_keeps_uniform():
    rng = np.random.default_rng(5)
    ens = ParticleEnsemble.uniform(Uniform(-8.0, 8.0).sample(rng, 5000))
    ens = pf_weight(ens, 0.0, 1.0, Uniform(-100.0, 100.0))
    ens = systematic_resample(ens, rng)
    res = stats.kstest(ens.positions, stats.uniform(loc=-8, scale=16).cdf)
    # systematic resampling with equal weights returns every particle once
    assert res.statistic < 1.63 / np.sqrt(5000)


def test_pf_localization_converges():
    model = LocalizationModel()
    system = model.system()
    rng = np.random.default_rng(11)
    x = model.start
    ens = ParticleEnsemble.uniform(Uniform(-8.0, 8.0).sample(rng, 5000))
    for t in range(13):
        y = x + 0.25 * rng.gumbel()
        if t > 0:
            ens = pf_propagate(ens, 1.0, model.drift, system.eta, rng)
        weighted = pf_weight(ens, y, 1.0, system.eps)
        ens = systematic_resample(weighted, rng)
        if t < 12:
            x = x + 1.0 + 0.03 * rng.normal()
    assert abs(weighted_mean(weighted) - x) < 0.3


def test_equal_weights():
    ens = ParticleEnsemble.uniform([1.0, 2.0, 6.0])
    assert weighted_mean(ens) == pytest.approx(3.0)
    assert effective_sample_size(ens) == pytest.approx(3.0)


def test_single_unit_weight():
    ens = ParticleEnsemble([1.0, 2.0, 6.0], [0.0, 1.0, 0.0])
    assert weighted_mean(ens) == 2.0
    assert effective_sample_size(ens) == 1.0


def test_random_weights_against_direct_sums():
    rng = np.random.default_rng(0)
    x, w = rng.normal(size=100), rng.uniform(size=100)
    ens = ParticleEnsemble(x, w)
    p = w / np.sum(w)
    assert weighted_mean(ens) == pytest.approx(sum(pi * xi for pi, xi in zip(p, x)), abs=1e-12)
    assert effective_sample_size(ens) == pytest.approx(1.0 / sum(pi * pi for pi in p), rel=1e-12)
    assert ens.weights.sum() == pytest.approx(1.0, abs=1e-12)


def test_resampling_preserves_mean_in_expectation():
    rng = np.random.default_rng(2)
    ens = ParticleEnsemble(rng.normal(size=500), rng.uniform(size=500))
    target = weighted_mean(ens)
    means = np.array([np.mean(systematic_resample(ens, rng).positions) for _ in range(200)])
    assert abs(means.mean() - target) <= 4 * means.std(ddof=1) / np.sqrt(200)


def test_resample_keeps_count():
    rng = np.random.default_rng(3)
    ens = ParticleEnsemble(rng.normal(size=77), rng.uniform(size=77))
    out = systematic_resample(ens, rng)
    assert len(out) == 77
    np.testing.assert_allclose(out.weights, 1 / 77)


def test_all_zero_likelihood_is_degenerate():
    ens = ParticleEnsemble.uniform([0.0, 0.1, 0.2])
    with pytest.raises(DegeneracyError):
        pf_weight(ens, 50.0, 1.0, Uniform(-1.0, 1.0))
    with pytest.raises(DegeneracyError):
        ParticleEnsemble([0.0, 1.0], [0.0, 0.0])


def test_ess_schedule_skips_resampling_when_weights_even():
    rng = np.random.default_rng(4)
    ens = ParticleEnsemble.uniform(rng.normal(size=100))
    weighted, carried = pf_step(ens, 0.0, 1.0, 1.0, 0.0, Gaussian(0, 1), Uniform(-100, 100), rng,
                                resample="ess")
    assert carried is weighted
    with pytest.raises(ValueError):
        pf_step(ens, 0.0, 1.0, 1.0, 0.0, Gaussian(0, 1), Gumbel(0.25), rng, resample="never")


def test_pf_reproducible_with_seed():
    def run(seed):
        rng = np.random.default_rng(seed)
        ens = ParticleEnsemble.uniform(Uniform(-8.0, 8.0).sample(rng, 1000))
        w, _ = pf_step(ens, -6.0, 1.0, 1.0, 1.0, Gaussian(0, 0.03**2), Gumbel(0.25), rng)
        return weighted_mean(w)

    assert run(1) == run(1)
