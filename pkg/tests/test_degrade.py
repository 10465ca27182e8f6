from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from trajrecon.degrade import DegradeConfig, degrade, draw_gaps, interpolate_truth, sample_times
from trajrecon.errors import EmptyTrajectoryError
from trajrecon.simkernel import AIRPORTS, StateSample, Trajectory, generate_mission, samples_to_array, simulate

IDENTITY = DegradeConfig(
    sigma_lat_deg=0, sigma_lon_deg=0, sigma_alt_ft=0, sigma_tas_kt=0, sigma_vs_fpm=0, sigma_track_deg=0,
    interval_mean_s=1.0, interval_jitter_s=0.0, gap_rate_per_min=0.0,
)


@pytest.fixture(scope="module")
def flight():
    return simulate(generate_mission(AIRPORTS["KLAF"], AIRPORTS["KVPZ"], rng_seed=2), flight_id="D")


def stationary(n: int) -> Trajectory:
    return Trajectory("S", [StateSample(float(t), 40.0, -86.0, 5000.0, 100.0, 0.0, 90.0) for t in range(n)])


def test_identity_configuration_reproduces_truth(flight):
    assert degrade(flight, IDENTITY) == flight.samples


def test_forced_gap_is_empty(flight):
    cfg = DegradeConfig(gap_rate_per_min=0.0, forced_gaps=((300.0, 20.0),), seed=5)
    pts = degrade(flight, cfg)
    assert not any(300.0 <= p.time_s < 320.0 for p in pts)
    assert any(p.time_s < 300 for p in pts) and any(p.time_s >= 320 for p in pts)


def test_latitude_noise_matches_sigma():
    truth = stationary(16_000)
    cfg = DegradeConfig(sigma_lat_deg=5e-5, gap_rate_per_min=0.0, seed=9)
    pts = degrade(truth, cfg)
    assert len(pts) >= 10_000
    err = np.array([p.lat_deg - 40.0 for p in pts])
    n = len(err)
    assert abs(err.std(ddof=1) / 5e-5 - 1) < 0.05
    assert abs(err.mean()) < 3 * 5e-5 / np.sqrt(n)


def test_noise_variance_is_calibrated_across_seeds():
    # a 95% chi-square band should miss about one seed in twenty
    truth = stationary(4_000)
    misses, ratios = 0, []
    for seed in range(40):
        pts = degrade(truth, DegradeConfig(sigma_lat_deg=5e-5, gap_rate_per_min=0.0, seed=seed))
        err = np.array([p.lat_deg - 40.0 for p in pts])
        n = len(err)
        lo, hi = stats.chi2.ppf([0.025, 0.975], n - 1) / (n - 1)
        r = err.var(ddof=1) / 5e-5 ** 2
        ratios.append(r)
        misses += not (lo < r < hi)
    # P(Binomial(40, 0.05) > 6) is about 0.03
    assert misses <= 6
    assert np.mean(ratios) == pytest.approx(1.0, abs=0.01)


def test_every_field_gets_its_sigma():
    truth = stationary(12_000)
    cfg = DegradeConfig(gap_rate_per_min=0.0, seed=1)
    A = samples_to_array(degrade(truth, cfg))
    base = np.array([40.0, -86.0, 5000.0, 100.0, 0.0, 90.0])
    for j, sigma in enumerate(cfg.sigmas):
        assert np.std(A[:, j + 1] - base[j]) == pytest.approx(sigma, rel=0.05)


def test_default_sampling_statistics(flight):
    pts = degrade(flight, DegradeConfig(gap_rate_per_min=0.0, seed=3))
    dt = np.diff([p.time_s for p in pts])
    assert dt.min() >= 1.0 - 1e-12
    assert dt.mean() == pytest.approx(1.5, rel=0.05)


def test_gap_statistics():
    rng = np.random.default_rng(0)
    cfg = DegradeConfig()
    gaps = draw_gaps(0.0, 60_000.0, cfg, rng)
    assert len(gaps) == pytest.approx(1000, rel=0.1)
    durations = np.array([b - a for a, b in gaps])
    assert durations.min() >= 5.0 and durations.max() <= 20.0


def test_determinism_and_seed_sensitivity(flight):
    cfg = DegradeConfig(seed=17)
    assert degrade(flight, cfg) == degrade(flight, cfg)
    assert degrade(flight, cfg) != degrade(flight, DegradeConfig(seed=18))


def test_empty_trajectory():
    with pytest.raises(EmptyTrajectoryError):
        degrade(Trajectory("E", []))


def test_config_validation_and_roundtrip():
    with pytest.raises(ValueError):
        DegradeConfig(sigma_alt_ft=-1)
    with pytest.raises(ValueError):
        DegradeConfig(interval_mean_s=0)
    with pytest.raises(ValueError):
        DegradeConfig(forced_gaps=((1.0, -2.0),))
    cfg = DegradeConfig(forced_gaps=((1.0, 2.0),), seed=4)
    assert DegradeConfig.from_dict(cfg.to_dict()) == cfg


def test_interpolation_is_wrap_aware():
    truth = np.array([[0, 40, -86, 100, 100, 0, 350.0], [1, 40, -86, 200, 100, 0, 10.0]])
    out = interpolate_truth(truth, np.array([0.0, 0.5, 1.0]))
    assert out[1, 6] == pytest.approx(0.0, abs=1e-9) or out[1, 6] == pytest.approx(360.0)
    assert out[1, 3] == 150.0
    np.testing.assert_array_equal(out[[0, 2]], truth)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.5, 3.0), st.floats(0.0, 1.0))
def test_stream_invariants(seed, mean, jitter_frac):
    truth = stationary(400)
    cfg = DegradeConfig(interval_mean_s=mean, interval_jitter_s=mean * jitter_frac, seed=seed)
    pts = degrade(truth, cfg)
    t = np.array([p.time_s for p in pts])
    assert np.all(np.diff(t) > 0)
    if len(t):
        assert t[0] >= 0.0 and t[-1] <= 399.0
    assert all(0 <= p.track_deg < 360 for p in pts)


@given(st.floats(0.2, 3.0), st.floats(0.0, 1.0), st.integers(0, 99))
def test_sample_times_within_bounds(mean, jf, seed):
    cfg = DegradeConfig(interval_mean_s=mean, interval_jitter_s=mean * jf)
    t = sample_times(10.0, 500.0, cfg, np.random.default_rng(seed))
    assert t[0] == 10.0 and t[-1] <= 500.0 and np.all(np.diff(t) > 0)
