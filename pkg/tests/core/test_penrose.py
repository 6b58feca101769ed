import numpy as np
import pytest

from landau_lab.core.equilibria import Equilibrium, gaussian_equilibrium, zero_equilibrium
from landau_lab.core.penrose import (
    DispersionQuery,
    _laplace_horizon,
    alpha_threshold,
    dispersion,
    dispersion_values,
    laplace_moment,
    penrose_infimum,
    scan_modes,
)
from landau_lab.core.utils.config import DEFAULT_TOL
from landau_lab.test_utils.scenario_utils import gaussian_1d  # noqa: F401


@pytest.mark.parametrize("k", [1, 2, 3])
@pytest.mark.parametrize("method", ["closed", "quadrature"])
def test_dispersion_at_origin(gaussian_1d: Equilibrium, k, method):
    value = dispersion(gaussian_1d, DispersionQuery(k=(k,), lam=0.0), method=method)
    assert abs(value - (1.0 + 1.0 / k**2)) <= 1e-9


def test_quadrature_matches_closed_form(gaussian_1d: Equilibrium):
    lam = np.array([0.0, 0.5j, 1j, 2.3j, 5j, 0.5 + 1j, -0.2 + 3j])
    for k in [(1,), (2,)]:
        closed = laplace_moment(gaussian_1d, k, lam, method="closed")
        quad = laplace_moment(gaussian_1d, k, lam, method="quadrature")
        np.testing.assert_allclose(quad, closed, rtol=0, atol=1e-9)


def test_dispersion_is_conjugate_symmetric(gaussian_1d: Equilibrium):
    tau = np.linspace(0, 10, 21)
    plus = dispersion_values(gaussian_1d, (1,), 1j * tau)
    minus = dispersion_values(gaussian_1d, (1,), -1j * tau)
    np.testing.assert_allclose(plus, np.conj(minus), atol=1e-14)


def test_laplace_moment_rejects_divergent_region(gaussian_1d: Equilibrium):
    with pytest.raises(ValueError, match=r"diverges"):
        laplace_moment(gaussian_1d, (1,), np.array([-1.0 + 0j]))


def test_dispersion_query_validation():
    assert DispersionQuery(k=2, lam=1j).k == (2,)
    with pytest.raises(ValueError, match=r"zero mode"):
        DispersionQuery(k=(0,), lam=0.0)
    with pytest.raises(ValueError, match=r"alpha must be non-negative"):
        DispersionQuery(k=(1,), lam=0.0, alpha=-0.1)


def test_gaussian_boundary_scan(gaussian_1d: Equilibrium):
    report = penrose_infimum(gaussian_1d)
    # Re D dips below 1 near Im lambda ~ 2.3 for k = 1
    assert 0.65 < report.inf_modulus < 0.85
    assert report.argmin_k == (1,)
    assert 1.8 < report.argmin_tau < 2.9
    assert report.kappa_half_ok
    assert not report.interior_flag
    assert report.alpha0 > 0.005
    assert 0.0 < report.certified_lower_bound <= report.inf_modulus
    assert report.samples.modulus.shape == (8, report.samples.tau.size)
    assert report.summary().startswith(f"inf={report.inf_modulus:.12g} at k=(1)")


def test_epsilon_shift_is_bounded(gaussian_1d: Equilibrium):
    base = penrose_infimum(gaussian_1d, k_max=3, M=10.0, step=0.05)
    shifted = penrose_infimum(gaussian_1d, alpha=0.1, k_max=3, M=10.0, step=0.05)
    bound = 0.1 * gaussian_1d.c_mu / gaussian_1d.theta0**2
    assert abs(shifted.inf_modulus - base.inf_modulus) <= bound
    assert shifted.frequency_tail > base.frequency_tail


def test_kappa0_margin_is_reported(gaussian_1d: Equilibrium):
    report = penrose_infimum(gaussian_1d, k_max=2, M=5.0, step=0.1, kappa0=10.0)
    assert report.kappa0 == 10.0
    assert not report.kappa_half_ok


def test_zero_equilibrium_scan():
    report = penrose_infimum(zero_equilibrium(1), k_max=2, M=5.0, step=0.5)
    assert report.inf_modulus == 1.0
    assert report.tail_bound == 0.0
    assert report.alpha0 == float("inf")


def test_scan_is_independent_of_worker_count(gaussian_1d: Equilibrium):
    serial = penrose_infimum(gaussian_1d, k_max=4, M=5.0, step=0.1, max_workers=1)
    threaded = penrose_infimum(gaussian_1d, k_max=4, M=5.0, step=0.1, max_workers=4)
    np.testing.assert_array_equal(serial.samples.modulus, threaded.samples.modulus)


@pytest.mark.parametrize(
    ("kappa0", "c_mu", "theta0", "expected"),
    [(1.0, 2.0, 0.5, 0.0625), (2.0, 1.0, 1.0, 1.0)],
)
def test_alpha_threshold(kappa0, c_mu, theta0, expected):
    assert alpha_threshold(kappa0, c_mu, theta0) == pytest.approx(expected)


def test_alpha_threshold_rejects_non_positive():
    with pytest.raises(ValueError, match=r"positive inputs"):
        alpha_threshold(0.0, 1.0, 1.0)


def test_scan_modes():
    assert scan_modes(1, 3) == [(1,), (2,), (3,)]
    assert scan_modes(2, 1) == [(0, 1), (1, 0), (1, -1), (1, 1)]
    assert scan_modes(2, 1, radial=True) == [(0, 1), (1, -1)]
    with pytest.raises(ValueError, match=r"k_max must be at least 1"):
        scan_modes(1, 0)


def test_two_dimensional_scan_uses_one_mode_per_shell():
    eq = gaussian_equilibrium(2)
    report = penrose_infimum(eq, k_max=2, M=5.0, step=0.1)
    norms = {sum(c * c for c in k) for k in report.samples.modes}
    assert len(norms) == len(report.samples.modes)
    assert 0.65 < report.inf_modulus < 0.85


def test_dispersion_far_up_the_imaginary_axis(gaussian_1d: Equilibrium):
    value = dispersion(gaussian_1d, DispersionQuery(k=(1,), lam=50j))
    assert abs(value - 1.0) <= 0.05


def test_dispersion_stays_within_the_analytic_bound(gaussian_1d: Equilibrium):
    rng = np.random.default_rng(7)
    lam = rng.uniform(0.0, 3.0, 200) + 1j * rng.uniform(-30.0, 30.0, 200)
    for k in range(1, 5):
        for alpha in (0.0, 0.1):
            values = dispersion_values(gaussian_1d, (k,), lam, alpha=alpha)
            bound = (1.0 + alpha) * gaussian_1d.c_mu / (gaussian_1d.theta0**2 * k**2)
            assert np.all(np.abs(values - 1.0) <= bound)


@pytest.mark.parametrize("k", [1, 3])
def test_doubling_the_truncation_keeps_the_moment(gaussian_1d: Equilibrium, k):
    lam = np.array([0.0, 1j, 2.3j, 0.5 + 4j, 10j])
    horizon = _laplace_horizon(gaussian_1d, float(k), 0.0, DEFAULT_TOL)
    short = laplace_moment(gaussian_1d, (k,), lam, method="quadrature", horizon=horizon)
    long = laplace_moment(gaussian_1d, (k,), lam, method="quadrature", horizon=2.0 * horizon)
    assert np.abs(short - long).max() <= DEFAULT_TOL


def test_opposite_modes_give_equal_values():
    eq = gaussian_equilibrium(2)
    lam = np.array([0.0, 0.7j, 2.0 + 3j])
    for k in scan_modes(2, 2):
        opposite = tuple(-c for c in k)
        np.testing.assert_array_equal(
            dispersion_values(eq, k, lam), dispersion_values(eq, opposite, lam)
        )
