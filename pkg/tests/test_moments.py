import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tests_util import series_on_grid
from vplangevin.errors import InputError, MomentOverflowError
from vplangevin.moments import (MomentSeries, empirical_moments, f_n,
                                integrate_moment_sde, ito_coefficients,
                                moment_distributions, moments_of_path, recompose)
from vplangevin.sde import SimConfig, simulate
from vplangevin.surfaces import (REFERENCE_SURFACES, CoeffSurfaces, LinearForm,
                                 QuadForm)


def test_f_n_unit_values():
    for n in range(1, 6):
        assert f_n(0.0, 0.0, n) == 1.0
    assert f_n(1.0, 1.0, 2) == pytest.approx(math.exp(4.0), rel=1e-14)


def test_f_n_monte_carlo_mean():
    # Monte-Carlo oracle for the first moment. The sample mean of a heavy
    # tailed log-normal converges slowly, so the comparison uses the
    # analytic standard error of the mean with a fixed seed.
    rng = np.random.default_rng(321)
    phi, theta = 13.5, 1.8
    n = 1_000_000
    s = np.exp(rng.normal(phi, theta, size=n))
    mean_true = f_n(phi, theta, 1)
    se = mean_true * math.sqrt((math.exp(theta**2) - 1) / n)
    assert abs(s.mean() - mean_true) < 3 * se


def test_f_n_overflow_error():
    with pytest.raises(MomentOverflowError, match="n=4"):
        f_n(200.0, 1.0, 4)
    with pytest.raises(InputError):
        f_n(0.0, 0.0, 0)


def test_empirical_moments_identity():
    rng = np.random.default_rng(2)
    phi = rng.normal(13.5, 0.3, 200)
    theta = np.abs(rng.normal(1.8, 0.1, 200))
    series = series_on_grid(phi, theta, 39)
    for n in (1, 2, 3):
        ms = empirical_moments(series, n)
        assert ms.source == "empirical"
        assert np.allclose(np.log(ms.values), n * phi + 0.5 * n * n * theta**2,
                           rtol=1e-12)


def test_empirical_moments_trivial_values():
    series = series_on_grid([0.0], [0.0], 39)
    assert empirical_moments(series, 3).values[0] == 1.0
    series2 = series_on_grid([1.0], [1.0], 39)
    assert empirical_moments(series2, 2).values[0] == pytest.approx(math.exp(4.0))


@given(st.floats(-3, 3), st.floats(0, 2), st.integers(1, 5))
@settings(max_examples=200, deadline=None)
def test_moment_ordering_property(phi, theta, n):
    assert f_n(phi, theta, n + 1) >= f_n(phi, theta, n) * math.exp(phi) * (1 - 1e-12)


def zero_g_surfaces():
    zeros = (0.0,) * 5
    return CoeffSurfaces(d1_phi=LinearForm(0.0, -1.0, 0.0),
                         d1_theta=LinearForm(0.0, 0.0, -1.0),
                         g_pp=QuadForm(0.0, *zeros), g_tt=QuadForm(0.0, *zeros),
                         g_pt=QuadForm(0.0, *zeros))


def test_ito_a1_deterministic_case():
    # g = 0, drift (-phi, -theta) at state (1,1), n=1:
    # A_1 = F_1 * (1 * (-1) + 1 * theta * (-1)) = -2 e^{1.5}
    co = ito_coefficients(zero_g_surfaces(), 1)
    expected = -2.0 * math.exp(1.5)
    assert co.a_n(1.0, 1.0) == pytest.approx(expected, rel=1e-12)
    assert co.b_n(1.0, 1.0) == 0.0
    assert co.c_n(1.0, 1.0) == 0.0


def test_ito_a1_theta_zero_term_dropout():
    # theta = 0 with diagonal g: A_1 = F h1 + 0.5 F (g11^2 + g12^2)
    zeros = (0.0,) * 5
    surf = CoeffSurfaces(d1_phi=LinearForm(0.2, -0.5, 0.0),
                         d1_theta=LinearForm(0.1, 0.0, -0.4),
                         g_pp=QuadForm(0.3, *zeros), g_tt=QuadForm(0.0, *zeros),
                         g_pt=QuadForm(0.0, *zeros))
    co = ito_coefficients(surf, 1)
    phi = 0.7
    fn = math.exp(phi)
    h1 = 0.2 - 0.5 * phi
    expected = fn * h1 + 0.5 * fn * 0.3**2
    assert co.a_n(phi, 0.0) == pytest.approx(expected, rel=1e-12)


def test_ito_coefficients_vs_mpmath_oracle():
    # high-precision oracle: build A_n, B_n, C_n from mpmath derivatives of
    # F_n and compare at random states
    import mpmath as mp

    mp.mp.dps = 50
    surf = REFERENCE_SURFACES
    rng = np.random.default_rng(8)
    for n in (1, 2, 3, 4):
        co = ito_coefficients(surf, n)
        for _ in range(25):
            phi = float(rng.uniform(-0.5, 0.5))
            theta = float(rng.uniform(-0.15, 0.15))

            def F(p, t):
                return mp.e ** (n * p + mp.mpf(n) ** 2 * t**2 / 2)

            dfp = mp.diff(lambda p: F(p, theta), phi)
            dft = mp.diff(lambda t: F(phi, t), theta)
            d2fpp = mp.diff(lambda p: F(p, theta), phi, 2)
            d2ftt = mp.diff(lambda t: F(phi, t), theta, 2)
            d2fpt = mp.diff(lambda p: mp.diff(lambda t: F(p, t), theta), phi)
            g = surf.g_matrix(phi, theta) * surf.noise_scale()
            drift = surf.drift(phi, theta)
            a_ref = (dfp * drift[0] + dft * drift[1]
                     + d2fpt * (g[0, 0] * g[1, 0] + g[0, 1] * g[1, 1])
                     + mp.mpf("0.5") * d2fpp * (g[0, 0] ** 2 + g[0, 1] ** 2)
                     + mp.mpf("0.5") * d2ftt * (g[1, 0] ** 2 + g[1, 1] ** 2))
            b_ref = dfp * g[0, 0] + dft * g[1, 0]
            c_ref = dfp * g[0, 1] + dft * g[1, 1]
            assert co.a_n(phi, theta) == pytest.approx(float(a_ref), rel=1e-10)
            assert co.b_n(phi, theta) == pytest.approx(float(b_ref), rel=1e-10)
            assert co.c_n(phi, theta) == pytest.approx(float(c_ref), rel=1e-10)


def test_moment_sde_consistency_reference():
    # Ito self-consistency: F_n along the path is the exact solution the
    # moment equation approximates under shared noise
    cfg = SimConfig(n_steps=1000, dt=1e-3, subsample=1, seed=99)
    ms, path = integrate_moment_sde(REFERENCE_SURFACES, cfg, 1)
    direct = moments_of_path(path, 1)
    gap = np.max(np.abs(ms.values - direct.values) / direct.values)
    assert gap < 0.01
    assert ms.source == "model_ito"


def test_moment_distributions_identical_and_disjoint():
    wi = np.arange(500, dtype=np.int64)
    rng = np.random.default_rng(0)
    vals = np.exp(rng.normal(0, 1, 500))
    a = MomentSeries(order=1, window_index=wi, values=vals, source="empirical")
    b = MomentSeries(order=1, window_index=wi, values=vals.copy(), source="model_direct")
    cmp_same = moment_distributions(a, b)
    assert cmp_same.ks_distance == 0.0
    assert cmp_same.overlap == pytest.approx(1.0, abs=0.05)

    c = MomentSeries(order=1, window_index=wi, values=vals + 100 + vals.max(),
                     source="model_direct")
    cmp_disjoint = moment_distributions(a, c)
    assert cmp_disjoint.ks_distance == 1.0
    assert cmp_disjoint.overlap == pytest.approx(0.0, abs=1e-9)


def test_recompose_zero_fluctuations_identity():
    from conftest import make_fluctuations
    from vplangevin.decompose import GLOBAL_MEAN, daily_pattern

    rng = np.random.default_rng(5)
    spd = 39
    phi = np.tile(rng.normal(13.5, 0.2, spd), 4)
    theta = np.tile(np.abs(rng.normal(1.8, 0.05, spd)), 4)
    series = series_on_grid(phi, theta, spd)
    patterns = daily_pattern(series, GLOBAL_MEAN)
    zero_fl = make_fluctuations(np.zeros(len(series)), np.zeros(len(series)),
                                slots_per_day=spd,
                                window_index=series.window_index)
    rebuilt = recompose(patterns, zero_fl)
    for n in (1, 2):
        direct = empirical_moments(series, n)
        via_pattern = empirical_moments(rebuilt, n)
        assert np.allclose(via_pattern.values, direct.values, rtol=1e-12)


def test_closed_loop_moment_distribution():
    # end-to-end synthetic oracle: fit surfaces to a simulated fluctuation
    # series, re-simulate, and compare first-moment distributions
    from vplangevin.kmest import estimate_km
    from vplangevin.surfaces import fit_surfaces

    fl = simulate(REFERENCE_SURFACES, SimConfig(n_steps=300_000, dt=0.1, seed=17)
                  ).to_fluctuations()
    _, _, km0 = estimate_km(fl, bins_per_axis=12, taus=(1, 2), min_count=50)
    fitted = fit_surfaces(km0)
    resim = simulate(fitted, SimConfig(n_steps=300_000, dt=0.1, seed=18))

    spd = 39

    def on_grid(phi_f, theta_f):
        reps = len(phi_f) // spd + 1
        return series_on_grid(np.tile(np.full(spd, 13.52), reps)[: len(phi_f)] + phi_f,
                              np.tile(np.full(spd, 1.79), reps)[: len(theta_f)] + theta_f,
                              spd)

    emp_series = on_grid(fl.phi_f, fl.theta_f)
    model_series = on_grid(resim.phi, resim.theta)
    emp = empirical_moments(emp_series, 1)
    model = empirical_moments(model_series, 1)
    res = moment_distributions(emp, model)
    assert res.ks_distance < 0.1
