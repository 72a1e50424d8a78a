"""Analytic engine: measures, quadrature, Laplace transforms, curves."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

import mmwshare as mw
from mmwshare import ConfigError, DataError, NumericalError
from mmwshare.analytic import (
    adaptive_gk21,
    association_pdf,
    nlos_measure,
    truncation_radius,
)

KM2 = 1e6
P = mw.PRESETS["paper-sec5"]


# ---------------------------------------------------------------------------
# Closed-form measures


def test_los_measure_matches_quadrature():
    # Oracle: direct numerical integration of 2*pi*lam*t*exp(-beta*t)
    for lam, beta, r in [(30.0 / KM2, 0.007, 150.0), (5.0 / KM2, 0.002, 800.0)]:
        want, _ = integrate.quad(lambda t: 2 * np.pi * lam * t * np.exp(-beta * t), 0, r)
        assert mw.los_measure(lam, beta, r) == pytest.approx(want, rel=1e-10)


def test_nlos_measure_matches_quadrature():
    for lam, beta, r in [(30.0 / KM2, 0.007, 150.0), (5.0 / KM2, 0.002, 800.0)]:
        want, _ = integrate.quad(
            lambda t: 2 * np.pi * lam * t * (1 - np.exp(-beta * t)), 0, r
        )
        assert nlos_measure(lam, beta, r) == pytest.approx(want, rel=1e-10)


@given(
    lam=st.floats(1e-7, 1e-3),
    beta=st.floats(1e-4, 0.05),
    r=st.floats(0.1, 5e4),
)
def test_measures_complement_to_disk_mean(lam, beta, r):
    total = mw.los_measure(lam, beta, r) + nlos_measure(lam, beta, r)
    assert total == pytest.approx(math.pi * lam * r * r, rel=1e-12)


def test_measures_vectorize_and_validate():
    vals = mw.los_measure(1e-5, 0.007, np.array([0.0, 10.0, 100.0]))
    assert vals.shape == (3,)
    assert vals[0] == 0.0
    assert np.all(np.diff(vals) > 0)
    with pytest.raises(ConfigError):
        mw.los_measure(1e-5, 0.007, -1.0)


def test_exclusion_radius_solves_path_loss_equality():
    for r in (5.0, 100.0, 950.0):
        d = mw.exclusion_radius(P, r, serving_los=True)
        assert P.c_nlos * d**-P.alpha_nlos == pytest.approx(
            P.c_los * r**-P.alpha_los, rel=1e-12
        )
        d = mw.exclusion_radius(P, r, serving_los=False)
        assert P.c_los * d**-P.alpha_los == pytest.approx(
            P.c_nlos * r**-P.alpha_nlos, rel=1e-12
        )
    # spot value for the reference preset: (0.1 * 100^2)^(1/4)
    assert mw.exclusion_radius(P, 100.0, True) == pytest.approx(1000.0**0.25, rel=1e-12)


def test_interference_kernel_matches_quadrature():
    # Oracle: integrate exp(-s*x(t)*g*h)*exp(-h) dh over the fade density,
    # mixed over the two-point beam gain law
    s, t = 3.0e8, 140.0
    for los in (True, False):
        c = P.c_los if los else P.c_nlos
        al = P.alpha_los if los else P.alpha_nlos
        x = s * c * t**-al

        def integrand(h, g):
            return math.exp(-x * g * h) * math.exp(-h)

        want = 0.0
        for g, pr in mw.channel.gain_pmf(P):
            part, _ = integrate.quad(integrand, 0, np.inf, args=(g,))
            want += pr * part
        assert mw.interference_kernel(P, s, t, los) == pytest.approx(want, rel=1e-9)


def test_interference_kernel_limits():
    assert mw.interference_kernel(P, 0.0, 50.0, True) == pytest.approx(1.0)
    # s -> inf drives the kernel to 0; far interferers barely attenuate
    assert mw.interference_kernel(P, 1e30, 50.0, True) < 1e-6
    assert mw.interference_kernel(P, 1.0, 1e9, True) == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# Adaptive quadrature


def test_adaptive_gk21_known_integrals():
    def f(x):
        return np.stack([np.sin(x), np.exp(x), 1.0 / (1.0 + x * x)], axis=-1)

    got = adaptive_gk21(f, 0.0, 3.0, epsabs=1e-13, epsrel=1e-12)
    want = np.array([1.0 - math.cos(3.0), math.exp(3.0) - 1.0, math.atan(3.0)])
    assert np.allclose(got, want, rtol=1e-12, atol=1e-13)


def test_adaptive_gk21_resolves_narrow_peak():
    # width 0.02 peak: visible to the first panel but needs bisection
    x0 = 0.37171234
    w = 0.02

    def f(x):
        return (np.exp(-((x - x0) / w) ** 2))[:, None]

    got = adaptive_gk21(f, 0.0, 1.0, epsabs=1e-14, epsrel=1e-10)
    want = w * math.sqrt(math.pi)  # both tails are > 18 widths away
    assert got[0] == pytest.approx(want, rel=1e-9)


def test_adaptive_gk21_panel_budget_error():
    def f(x):
        return np.abs(x - 1.0 / 3.0)[:, None] ** -0.9

    with pytest.raises(NumericalError):
        adaptive_gk21(f, 0.0, 1.0, epsabs=1e-14, epsrel=1e-12, max_panels=4)


# ---------------------------------------------------------------------------
# Association distribution


def test_association_pdf_total_probability_single_operator():
    # the user always associates with someone: LOS + NLOS masses sum to 1
    scen = mw.BlockModel(mw.Window.square(1.0), {mw.OperatorSet.of(1): 30.0 / KM2})
    r_max = truncation_radius(30.0 / KM2, P, tail_mass=1e-10)
    total = 0.0
    for los in (True, False):
        mass, _ = integrate.quad(
            lambda r: association_pdf(scen, P, mw.OperatorSet.of(1), los, r),
            1e-6, r_max, limit=200,
        )
        total += mass
    assert total == pytest.approx(1.0, abs=1e-7)


def test_association_pdf_total_probability_two_operators():
    spec = mw.fid_scenario(30.0 / KM2, 0.4)
    r_max = truncation_radius(spec.lambda_op1, P, tail_mass=1e-10)
    total = 0.0
    for subset in (mw.OperatorSet.of(1), mw.OperatorSet.of(1, 2)):
        for los in (True, False):
            mass, _ = integrate.quad(
                lambda r: association_pdf(spec, P, subset, los, r),
                1e-6, r_max, limit=200,
            )
            total += mass
    assert total == pytest.approx(1.0, abs=1e-7)


def test_association_pdf_validation():
    spec = mw.fid_scenario(30.0 / KM2, 0.4)
    with pytest.raises(ConfigError):
        association_pdf(spec, P, mw.OperatorSet.of(2), True, 100.0)  # home is 1
    with pytest.raises(ConfigError):
        association_pdf(spec, P, mw.OperatorSet.of(1), True, 0.0)


def test_truncation_radius_bounds_association_tail():
    lam = 30.0 / KM2
    r_max = truncation_radius(lam, P, tail_mass=1e-8)
    scen = mw.BlockModel(mw.Window.square(1.0), {mw.OperatorSet.of(1): lam})
    tail = 0.0
    for los in (True, False):
        mass, _ = integrate.quad(
            lambda r: association_pdf(scen, P, mw.OperatorSet.of(1), los, r),
            r_max, 10.0 * r_max, limit=200,
        )
        tail += mass
    assert tail < 1e-8
    with pytest.raises(ConfigError):
        truncation_radius(0.0, P)
    with pytest.raises(ConfigError):
        truncation_radius(lam, P, tail_mass=2.0)


# ---------------------------------------------------------------------------
# Laplace transforms


def test_laplace_is_one_at_s_zero():
    spec = mw.fid_scenario(30.0 / KM2, 0.4)
    assert mw.laplace_two_op(spec, P, True, 100.0, 0.0, co_located=False) == 1.0
    assert mw.laplace_general(spec, P, mw.OperatorSet.of(1), True, 100.0, 0.0) == 1.0


def test_laplace_decreases_in_s():
    spec = mw.fid_scenario(30.0 / KM2, 0.4)
    vals = [mw.laplace_two_op(spec, P, True, 100.0, s, co_located=False)
            for s in (0.0, 1e7, 1e8, 1e9)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert all(0.0 < v <= 1.0 for v in vals[1:])


def test_two_op_fast_path_equals_general_decomposition():
    spec = mw.TwoOpSpec(45.0 / KM2, 0.8, 0.3)
    for serving_los, r, s in [(True, 90.0, 2.0e8), (False, 160.0, 5.0e12)]:
        shared = mw.laplace_two_op(spec, P, serving_los, r, s, co_located=True)
        general = mw.laplace_general(spec, P, mw.OperatorSet.of(1, 2), serving_los, r, s)
        assert shared == pytest.approx(general, rel=1e-10)
        solo = mw.laplace_two_op(spec, P, serving_los, r, s, co_located=False)
        general1 = mw.laplace_general(spec, P, mw.OperatorSet.of(1), serving_los, r, s)
        assert solo == pytest.approx(general1, rel=1e-10)


def test_laplace_factors_multiply_to_transform():
    spec = mw.TwoOpSpec(45.0 / KM2, 0.8, 0.3)
    f = mw.analytic.laplace_two_op_factors(spec, P, True, 110.0, 3.0e8)
    val = mw.laplace_two_op(spec, P, True, 110.0, 3.0e8, co_located=False)
    assert len(f) == 4
    assert float(np.prod(f)) == pytest.approx(val, rel=1e-12)


def test_laplace_general_validation():
    spec = mw.fid_scenario(30.0 / KM2, 0.4)
    with pytest.raises(ConfigError):
        mw.laplace_general(spec, P, mw.OperatorSet.of(2), True, 100.0, 1e8)
    with pytest.raises(ConfigError):
        mw.laplace_general(spec, P, mw.OperatorSet.of(1), True, -5.0, 1e8)
    with pytest.raises(ConfigError):
        mw.laplace_general(spec, P, mw.OperatorSet.of(1), True, 100.0, -1.0)


def test_laplace_conditioned_on_los_serving_beats_nlos():
    # serving NLOS at the same distance implies a denser visible LOS field
    spec = mw.fid_scenario(30.0 / KM2, 0.4)
    s = 1.0e8
    l_los = mw.laplace_two_op(spec, P, True, 120.0, s, co_located=False)
    assert 0.0 < l_los < 1.0


# ---------------------------------------------------------------------------
# Coverage curves


def test_sinr_coverage_no_interference_matches_quadrature():
    # Oracle: P(SNR > T) = sum_tau int f_tau(r) exp(-T sigma^2 r^alpha/(c G)) dr
    scen = mw.BlockModel(mw.Window.square(1.0), {mw.OperatorSet.of(1): 30.0 / KM2})
    t_lin = 10.0  # 10 dB
    r_max = truncation_radius(30.0 / KM2, P, tail_mass=1e-10)
    want = 0.0
    for los in (True, False):
        c = P.c_los if los else P.c_nlos
        al = P.alpha_los if los else P.alpha_nlos

        def f(r):
            snr_term = math.exp(-t_lin * P.sigma2 * r**al / (c * P.gain_main))
            return association_pdf(scen, P, mw.OperatorSet.of(1), los, r) * snr_term

        mass, _ = integrate.quad(f, 1e-6, r_max, limit=200)
        want += mass
    curve = mw.sinr_coverage(scen, P, [10.0], include_interference=False)
    assert curve.probabilities[0] == pytest.approx(want, abs=1e-6)


def test_sinr_coverage_curve_shape():
    spec = mw.fid_scenario(30.0 / KM2, 0.4)
    curve = mw.sinr_coverage(spec, P, [-10.0, 0.0, 10.0, 20.0])
    assert curve.kind == "analytic" and curve.unit == "db"
    assert np.all(np.diff(curve.probabilities) <= 0)
    assert 0.0 < curve.probabilities[-1] < curve.probabilities[0] < 1.0


def test_operator_two_coverage_by_symmetry():
    # swapping labels in an asymmetric coupling: op 2's curve equals the
    # curve of the mirrored spec for op 1
    spec = mw.TwoOpSpec(45.0 / KM2, 0.8, 0.3)
    mirrored = mw.TwoOpSpec(45.0 / KM2, 0.7, 0.2)  # a' = 1-b, b' = 1-a
    thr = [0.0]
    c2 = mw.sinr_coverage(spec, P, thr, home_operator=2)
    c1 = mw.sinr_coverage(mirrored, P, thr, home_operator=1)
    assert c2.probabilities[0] == pytest.approx(c1.probabilities[0], rel=1e-9)


def test_analytic_engine_rejects_non_rayleigh():
    spec = mw.fid_scenario(30.0 / KM2, 0.4)
    import dataclasses
    p_nak = dataclasses.replace(P, fading=mw.NAKAGAMI_LOGNORMAL_DEFAULT)
    with pytest.raises(ConfigError):
        mw.sinr_coverage(spec, p_nak, [0.0])


def test_rate_coverage_maps_rate_grid():
    spec = mw.fid_scenario(30.0 / KM2, 0.4)
    curve = mw.rate_coverage(spec, P, [50e6, 100e6])
    assert curve.unit == "bps"
    assert np.all(np.diff(curve.probabilities) <= 0)
    # a rate target of 0 bps is met by everyone
    zero = mw.rate_coverage(spec, P, [0.0])
    assert zero.probabilities[0] == pytest.approx(1.0, abs=1e-9)


def test_coverage_curve_validation():
    with pytest.raises(DataError):
        mw.CoverageCurve(np.array([1.0, 1.0]), np.array([0.5, 0.4]), "analytic", "db")
    with pytest.raises(DataError):
        mw.CoverageCurve(np.array([1.0]), np.array([0.5, 0.4]), "analytic", "db")
    with pytest.raises(NumericalError):
        mw.CoverageCurve(np.array([0.0, 1.0]), np.array([0.4, 0.6]), "analytic", "db")
    with pytest.raises(DataError):
        mw.CoverageCurve(np.array([0.0]), np.array([0.5]), "empirical", "parsec")
    with pytest.raises(DataError):
        # ci on an analytic curve makes no sense
        mw.CoverageCurve(np.array([0.0]), np.array([0.5]), "analytic", "db",
                         ci_halfwidth=np.array([0.01]))


def test_coverage_curve_csv_round_trip(tmp_path):
    analytic = mw.CoverageCurve(np.array([-5.0, 0.0, 5.0]),
                                np.array([0.9, 0.7, 0.5]), "analytic", "db")
    path = tmp_path / "a.csv"
    analytic.to_csv(path)
    back = mw.CoverageCurve.from_csv(path)
    assert back.kind == "analytic" and back.unit == "db"
    assert np.array_equal(back.thresholds, analytic.thresholds)
    assert np.array_equal(back.probabilities, analytic.probabilities)

    empirical = mw.CoverageCurve(np.array([25e6, 50e6]), np.array([0.8, 0.6]),
                                 "empirical", "bps", ci_halfwidth=np.array([0.01, 0.02]))
    path2 = tmp_path / "e.csv"
    empirical.to_csv(path2)
    back2 = mw.CoverageCurve.from_csv(path2)
    assert back2.kind == "empirical" and back2.unit == "bps"
    assert np.array_equal(back2.ci_halfwidth, empirical.ci_halfwidth)

    bad = tmp_path / "bad.csv"
    bad.write_text("foo,bar\n1,2\n")
    with pytest.raises(DataError):
        mw.CoverageCurve.from_csv(bad)


def test_median_rate_halves_the_rate_ccdf():
    spec = mw.fid_scenario(30.0 / KM2, 0.4)
    med = mw.median_rate(spec, P, rtol=1e-4)
    at_median = mw.rate_coverage(spec, P, [med])
    assert at_median.probabilities[0] == pytest.approx(0.5, abs=5e-4)
