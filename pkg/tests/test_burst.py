import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq, minimize_scalar

from _oracles import deseasonalize_direct
from burstnet.burst import (Burst, CoBurstType, deseasonalize, deseasonalize_matrix, detect_all, detect_bursts,
                            fit_decay, pair_cobursts)
from burstnet.events import SeriesKind

RT, FO, TW, UN = SeriesKind.RETWEETS, SeriesKind.FOLLOWS, SeriesKind.TWEETS, SeriesKind.UNFOLLOWS


# ---------------------------------------------------------------- decay fit

@pytest.mark.parametrize("c", [0.0, 3.0, 17.0])
def test_constant_series_gives_zero_decay(c):
    assert fit_decay(np.full(240, c)) == 0.0


def _optimal_decay(phi: float) -> float:
    """Decay minimising the expected squared residual for a unit AR(1) same-hour process."""
    k = np.arange(-2, 3)
    cov = phi ** np.abs(k[:, None] - k[None, :])

    def risk(lam):
        w = np.exp(-lam * np.abs(k))
        w[2] = 0.0
        a = -w / w.sum()
        a[2] = 1.0
        return a @ cov @ a

    return minimize_scalar(risk, bounds=(0, 5), method="bounded").x


def test_decay_recovered_from_ar_process():
    # the AR(1) day-to-day coefficient whose best same-hour predictor uses lam = 0.5
    phi = brentq(lambda p: _optimal_decay(p) - 0.5, 0.01, 0.9)
    assert phi == pytest.approx(0.128, abs=0.005)
    rng = np.random.default_rng(0)
    est = []
    for _ in range(100):
        z = np.zeros((30, 24))
        z[0] = rng.normal(size=24)
        for d in range(1, 30):
            z[d] = phi * z[d - 1] + np.sqrt(1 - phi**2) * rng.normal(size=24)
        est.append(fit_decay(10.0 + z.ravel()))
    assert abs(np.mean(est) - 0.5) < 0.15


def test_iid_noise_prefers_equal_weights_and_fit_stable():
    # for i.i.d. noise the expected squared residual is var * (1 + sum of squared weights),
    # smallest with equal weights (lam = 0): 1.25 var, rising to 1.5 var as lam grows
    lams = np.linspace(0, 5, 51)
    obj = np.zeros(lams.size)
    fits = []
    for seed in range(40):
        x = np.random.default_rng(seed).poisson(20, 720).astype(float)
        obj += [np.mean(deseasonalize(x, l).f ** 2) / 20.0 for l in lams]
        fits.append(fit_decay(x))
        assert fit_decay(x) == fit_decay(x.copy())
    obj /= 40
    assert obj[0] == pytest.approx(1.25, rel=0.03)
    w = np.exp(-np.array([5.0, 10.0]))
    a = w / (2 * w.sum())
    assert obj[-1] == pytest.approx(1 + 2 * np.sum(a**2), rel=0.03)
    assert np.argmin(obj) == 0
    assert np.mean(fits) < 0.2


def test_batch_fit_matches_single():
    rng = np.random.default_rng(2)
    X = rng.poisson(5, (6, 200)).astype(float)
    assert np.allclose(fit_decay(X), [fit_decay(r) for r in X])


# ---------------------------------------------------------- deseasonalizing

def test_constant_series_has_zero_residuals():
    d = deseasonalize(np.full(200, 7.0), 0.8)
    assert np.all(d.f[d.defined_mask] == 0) and d.sigma_f == 0


def test_spike_residual_exact():
    x = np.full(200, 10.0)
    x[60] = 50.0
    assert deseasonalize(x, 1.3).f[60] == 40.0


@pytest.mark.parametrize("seed", range(20))
def test_matches_direct_summation(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(20, 150))
    x = rng.poisson(4, n).astype(float)
    lam = float(rng.uniform(0, 5))
    f, mask = deseasonalize_direct(x, lam)
    d = deseasonalize(x, lam)
    assert np.array_equal(d.defined_mask, mask)
    assert np.max(np.abs(d.f - f)) < 1e-9


def test_short_series_masks_hours_without_neighbours():
    d = deseasonalize(np.arange(30.0), 1.0)
    assert d.defined_mask.tolist() == [True] * 6 + [False] * 18 + [True] * 6


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 100), min_size=24, max_size=24), st.integers(49, 300), st.floats(0, 5))
def test_pure_diurnal_signal_removed(profile, n, lam):
    x = np.array([profile[h % 24] for h in range(n)])
    d = deseasonalize(x, lam)
    assert np.max(np.abs(d.f[d.defined_mask])) < 1e-9


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-50, 50), st.floats(0.1, 20), st.floats(0, 5))
def test_shift_invariance_and_scale_equivariance(seed, shift, scale, lam):
    x = np.random.default_rng(seed).poisson(6, 150).astype(float)
    d = deseasonalize(x, lam)
    ds = deseasonalize(x + shift, lam)
    dc = deseasonalize(x * scale, lam)
    assert np.allclose(ds.f, d.f, atol=1e-9)
    assert np.allclose(dc.f, d.f * scale, atol=1e-9)
    assert dc.sigma_f == pytest.approx(d.sigma_f * scale, abs=1e-9)
    b = [(q.hour, q.end_hour) for q in detect_bursts(d, min_count=0)]
    bc = [(q.hour, q.end_hour) for q in detect_bursts(dc, min_count=0)]
    assert b == bc


def test_matrix_version_matches_rows():
    rng = np.random.default_rng(4)
    X = rng.poisson(3, (5, 120)).astype(float)
    lam = rng.uniform(0, 5, 5)
    F, sig = deseasonalize_matrix(X, lam)
    for k in range(5):
        d = deseasonalize(X[k], lam[k])
        assert np.allclose(F[k], d.f) and sig[k] == pytest.approx(d.sigma_f)


# ------------------------------------------------------------------ detection

def test_constant_series_has_no_bursts():
    assert detect_bursts(deseasonalize(np.full(200, 9.0), 0.0)) == []


def test_planted_spikes_flagged():
    rng = np.random.default_rng(5)
    n = 720
    profile = 10 + 8 * np.sin(2 * np.pi * np.arange(24) / 24)
    x = rng.poisson(profile[np.arange(n) % 24]).astype(float)
    base = deseasonalize(x, fit_decay(x)).sigma_f
    planted = [100, 250, 400, 555, 700]
    for h in planted:
        x[h] += round(8 * base)
    d = deseasonalize(x, fit_decay(x))
    flagged = {h for b in detect_bursts(d) for h in range(b.hour, b.end_hour + 1)}
    assert set(planted) <= flagged
    assert len(flagged - set(planted)) < 0.05 * n


def test_threshold_monotone():
    rng = np.random.default_rng(6)
    x = rng.poisson(8, 500).astype(float)
    d = deseasonalize(x, 1.0)
    hours = lambda th: {h for b in detect_bursts(d, th, 0) for h in range(b.hour, b.end_hour + 1)}
    assert hours(3.0) <= hours(2.0) <= hours(1.0)


def test_min_count_floor():
    x = np.zeros(200)
    x[100] = 4.0
    d = deseasonalize(x, 0.0)
    assert detect_bursts(d, min_count=5) == []
    assert [b.hour for b in detect_bursts(d, min_count=4)] == [100]


def test_consecutive_hours_merge():
    x = np.full(200, 1.0)
    x[100], x[101] = 40.0, 60.0
    (b,) = detect_bursts(deseasonalize(x, 0.0))
    d = deseasonalize(x, 0.0)
    assert (b.hour, b.end_hour, b.raw_count) == (100, 101, 100)
    assert b.magnitude_sigma == pytest.approx(max(d.f[100], d.f[101]) / d.sigma_f)


def test_detect_all_is_thread_invariant(small_run):
    a = detect_all(small_run.g, threads=1)
    b = detect_all(small_run.g, threads=4)
    assert a == b


# -------------------------------------------------------------------- pairing

def _b(kind, hour, end=None, user="u"):
    return Burst(user, kind, hour, 3.0, 10, hour if end is None else end)


def test_pair_next_hour():
    (c,) = pair_cobursts([_b(RT, 30), _b(FO, 31)])
    assert c.type is CoBurstType.RETWEET_FOLLOW and c.lag_hours == 1


def test_pair_same_hour_tweet_unfollow():
    (c,) = pair_cobursts([_b(TW, 30), _b(UN, 30)])
    assert c.type is CoBurstType.TWEET_UNFOLLOW and c.lag_hours == 0


@pytest.mark.parametrize("bursts", [
    [_b(RT, 30), _b(FO, 33)],          # too late
    [_b(RT, 30), _b(FO, 29)],          # response before trigger
    [_b(RT, 30), _b(FO, 31, user="v")],  # different users
    [_b(TW, 30), _b(FO, 30)],          # wrong kinds
])
def test_no_pairing(bursts):
    assert pair_cobursts(bursts) == []


def test_nearest_trigger_wins():
    (c,) = pair_cobursts([_b(RT, 29), _b(RT, 30), _b(FO, 30)])
    assert c.trigger.hour == 30 and c.lag_hours == 0


def test_lag_measured_from_end_of_merged_trigger():
    (c,) = pair_cobursts([_b(RT, 30, 32), _b(FO, 33)])
    assert c.lag_hours == 1 and c.response.hour - c.trigger.end_hour == 1
