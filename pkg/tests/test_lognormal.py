import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from vplangevin.errors import FitError, InputError
from vplangevin.ingest import WindowSample
from vplangevin.lognormal import (LogNormalParams, ParamSeries, fit_all, fit_values,
                                  fit_window, lognormal_pdf)
from vplangevin.synthdata import DEFAULT_PHI_CUBIC, DEFAULT_THETA_CUBIC, cubic_values

E = math.e


def window(values, index=0):
    return WindowSample(window_index=index, intraday_slot=index % 39,
                        values=np.asarray(values, dtype=float))


def test_constant_sample_rejected():
    with pytest.raises(FitError, match="degenerate"):
        fit_window(window([E, E, E, E]))


def test_theta_floor_keeps_degenerate_window():
    p = fit_window(window([E, E, E, E]), theta_floor=0.5)
    assert p.phi == pytest.approx(1.0) and p.theta == 0.5


def test_two_point_fit_exact():
    p = fit_window(window([E**2, E**4]))
    assert p.phi == pytest.approx(3.0, abs=1e-12)
    assert p.theta == pytest.approx(1.0, abs=1e-12)  # population std of {2, 4}
    assert p.se_phi == pytest.approx(1 / math.sqrt(2))
    assert p.se_theta == pytest.approx(1 / math.sqrt(4))


def test_nonpositive_values_rejected():
    with pytest.raises(FitError):
        fit_values(np.array([1.0, -2.0, 3.0]))
    with pytest.raises(FitError):
        fit_values(np.array([5.0]))


def test_monte_carlo_recovery():
    # oracle: draws from the generating distribution, seed-fixed
    rng = np.random.default_rng(1234)
    phi0, theta0 = 13.5, 1.8
    values = np.exp(rng.normal(phi0, theta0, size=100_000))
    p = fit_values(values)
    assert abs(p.phi - phi0) < 3 * p.se_phi
    assert abs(p.theta - theta0) < 3 * p.se_theta


def test_fit_all_counts_and_skips():
    w = [window([1.0, 2.0, 3.0], 0), window([2.0, 3.0, 4.0], 1)]
    series, skips = fit_all(w, slots_per_day=39)
    assert len(series) == 2 and skips == []

    w = [window([1.0, 2.0, 3.0], 0), window([5.0, 5.0], 1)]
    series, skips = fit_all(w, slots_per_day=39)
    assert len(series) == 1
    assert len(skips) == 1 and skips[0]["window_index"] == 1


def test_fit_all_empty_is_error():
    with pytest.raises(FitError):
        fit_all([window([2.0, 2.0], 0)], slots_per_day=39)


def test_fit_all_threads_deterministic():
    rng = np.random.default_rng(5)
    w = [window(np.exp(rng.normal(10, 1, size=50)), i) for i in range(40)]
    s1, _ = fit_all(w, slots_per_day=39, threads=1)
    s4, _ = fit_all(w, slots_per_day=39, threads=4)
    assert np.array_equal(s1.phi, s4.phi) and np.array_equal(s1.theta, s4.theta)


def test_synthetic_day_tracks_schedule():
    # Monte-Carlo oracle: one day of 39 windows from a known cubic schedule
    rng = np.random.default_rng(2024)
    slots = np.arange(39)
    t_d = 3 + slots
    phi_sched = cubic_values(DEFAULT_PHI_CUBIC, t_d)
    theta_sched = cubic_values(DEFAULT_THETA_CUBIC, t_d)
    windows = [window(np.exp(rng.normal(phi_sched[k], theta_sched[k], size=800)), k)
               for k in slots]
    series, skips = fit_all(windows, slots_per_day=39)
    assert not skips
    assert np.all(np.abs(series.phi - phi_sched) < 3 * series.se_phi)
    assert np.all(np.abs(series.theta - theta_sched) < 3 * series.se_theta)


@given(st.lists(st.floats(0.01, 1e6), min_size=2, max_size=50))
@settings(max_examples=100, deadline=None)
def test_fit_invariant_under_permutation(values):
    arr = np.asarray(values)
    if np.log(arr).std() == 0:
        return
    p1 = fit_values(arr)
    p2 = fit_values(arr[::-1])
    assert p1.phi == pytest.approx(p2.phi, rel=1e-12)
    assert p1.theta == pytest.approx(p2.theta, rel=1e-12)


def params(phi, theta, n=100):
    return LogNormalParams(phi=phi, theta=theta, n=n,
                           se_phi=theta / math.sqrt(n), se_theta=theta / math.sqrt(2 * n))


def test_pdf_at_exp_phi():
    for phi in (0.0, 2.0, 13.5):
        expected = 1.0 / (math.exp(phi) * math.sqrt(2 * math.pi))
        assert lognormal_pdf(math.exp(phi), params(phi, 1.0)) == pytest.approx(expected, rel=1e-12)


def test_pdf_integrates_to_one():
    # quadrature oracle over (0, 1e12) for the documented parameter point
    p = params(13.5, 1.8)
    mode = math.exp(p.phi - p.theta**2)
    total = 0.0
    for lo, hi in [(0.0, mode), (mode, 1e9), (1e9, 1e12)]:
        val, _ = quad(lambda s: lognormal_pdf(s, p), lo, hi, limit=300)
        total += val
    assert total == pytest.approx(1.0, abs=1e-6)


def test_pdf_mode_location():
    p = params(2.0, 0.7)
    mode = math.exp(p.phi - p.theta**2)
    s = np.linspace(0.2 * mode, 5 * mode, 4001)
    dens = lognormal_pdf(s, p)
    peak = s[np.argmax(dens)]
    assert peak == pytest.approx(mode, rel=2e-3)
    # unimodal: density increases up to the mode, decreases after
    up = dens[s <= mode]
    down = dens[s >= mode]
    assert np.all(np.diff(up) >= -1e-15)
    assert np.all(np.diff(down) <= 1e-15)


def test_pdf_rejects_bad_inputs():
    with pytest.raises(InputError):
        lognormal_pdf(-1.0, params(0.0, 1.0))
    with pytest.raises(InputError):
        lognormal_pdf(1.0, phi=0.0, theta=0.0)


@given(st.floats(0.01, 1e8), st.floats(-5, 20), st.floats(0.05, 4))
@settings(max_examples=200, deadline=None)
def test_pdf_nonnegative(s, phi, theta):
    assert lognormal_pdf(s, phi=phi, theta=theta) >= 0.0


def test_param_series_csv_roundtrip(tmp_path):
    series = ParamSeries(window_index=np.array([0, 2, 5], dtype=np.int64),
                         phi=np.array([13.1, 13.2, 13.3]),
                         theta=np.array([1.7, 1.8, 1.9]),
                         n=np.array([100, 120, 90], dtype=np.int64),
                         se_phi=np.array([0.17, 0.16, 0.2]),
                         se_theta=np.array([0.12, 0.11, 0.14]),
                         slots_per_day=39, t_d_offset=3)
    path = tmp_path / "params.csv"
    series.to_csv(path)
    loaded = ParamSeries.from_csv(path)
    assert np.array_equal(loaded.window_index, series.window_index)
    assert np.array_equal(loaded.phi, series.phi)
    assert np.array_equal(loaded.theta, series.theta)
    assert loaded.slots_per_day == 39 and loaded.t_d_offset == 3
    header = path.read_text().splitlines()[1]
    assert header == "window_index,phi,theta,n,se_phi,se_theta"


def test_param_series_csv_bad_row(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("window_index,phi,theta,n,se_phi,se_theta\n1,2,3\n")
    with pytest.raises(InputError):
        ParamSeries.from_csv(path)


def test_param_series_csv_empty(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("window_index,phi,theta,n,se_phi,se_theta\n")
    with pytest.raises(InputError):
        ParamSeries.from_csv(path)
