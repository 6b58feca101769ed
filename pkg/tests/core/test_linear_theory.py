import math

import numpy as np
import pytest

from landau_lab.core.equilibria import Equilibrium, zero_equilibrium
from landau_lab.core.errors import NeutralityBreach
from landau_lab.core.generators import GevreyParams
from landau_lab.core.kinetic_sim import field_from_density
from landau_lab.core.linear_theory import (
    DensitySeries,
    KernelSeries,
    SourceSeries,
    TabulatedTransform,
    build_source,
    forward_laplace_check,
    gaussian_mode_transform,
    kernel_inverse_laplace,
    kernel_series,
    reconstruct_rho,
    solve_volterra,
    source_from_modes,
    verify_linear_gevrey,
    volterra_residual,
)
from landau_lab.core.utils.config import DEFAULT_TOL
from landau_lab.test_utils.scenario_utils import gaussian_1d  # noqa: F401


def _times(dt: float, t_max: float) -> np.ndarray:
    return dt * np.arange(int(round(t_max / dt)) + 1)


def _relative_gap(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.abs(a - b).max() / np.abs(a).max())


def test_epsilon_zero_identity(gaussian_1d: Equilibrium):
    src = source_from_modes(_times(0.01, 20.0), [(1,), (2,)], species="plus")
    rho = solve_volterra(src, gaussian_1d, epsilon=0.0)
    np.testing.assert_array_equal(rho.rho_plus, src.s_plus)
    assert not np.array_equal(rho.rho_minus, src.s_minus)


def test_volterra_residual_vanishes(gaussian_1d: Equilibrium):
    src = source_from_modes(_times(0.02, 10.0), [(1,), (2,)])
    rho = solve_volterra(src, gaussian_1d, epsilon=0.01)
    residual = volterra_residual(rho, src, gaussian_1d, epsilon=0.01)
    assert residual.max() <= 1e-12 * np.abs(src.s).max()


def test_zero_equilibrium_streams_freely():
    src = source_from_modes(_times(0.1, 5.0), [(1,)], species=["plus", "minus"])
    rho = solve_volterra(src, zero_equilibrium(1), epsilon=0.5)
    np.testing.assert_array_equal(rho.rho_plus, src.s_plus)
    np.testing.assert_array_equal(rho.rho_minus, src.s_minus)


def test_volterra_and_resolvent_agree(gaussian_1d: Equilibrium):
    times = _times(0.01, 20.0)
    modes = [(1,), (2,)]
    src = source_from_modes(times, modes)
    marched = solve_volterra(src, gaussian_1d, epsilon=0.01)
    ker = kernel_series(gaussian_1d, 0.01, modes, theta1=0.25, times=times)
    reconstructed = reconstruct_rho(src, ker, epsilon=0.01)
    assert _relative_gap(marched.rho, reconstructed.rho) <= 1e-3
    assert _relative_gap(marched.rho_plus, reconstructed.rho_plus) <= 1e-3


def test_two_paths_converge_at_second_order(gaussian_1d: Equilibrium):
    gaps = []
    for dt in (0.02, 0.01):
        times = _times(dt, 10.0)
        src = source_from_modes(times, [(1,)])
        marched = solve_volterra(src, gaussian_1d, epsilon=0.01)
        ker = kernel_inverse_laplace(gaussian_1d, 0.01, (1,), 0.25, times)
        gaps.append(_relative_gap(marched.rho, reconstruct_rho(src, ker, 0.01).rho))
    assert 3.0 < gaps[0] / gaps[1] < 5.0


def test_kernel_decay_and_forward_transform(gaussian_1d: Equilibrium):
    times = _times(0.01, 20.0)
    ker = kernel_inverse_laplace(gaussian_1d, 0.01, (1,), theta1=0.25, times=times)
    assert ker.k_hat.shape == (times.size, 1)
    assert ker.fit_theta[0] >= 0.25
    assert math.isfinite(ker.fit_c[0])
    check = forward_laplace_check(ker, gaussian_1d, (1,))
    assert check.lambdas.size == 5
    assert check.max_rel_error <= 1e-5
    assert ker.truncation_estimate[0] <= DEFAULT_TOL


def test_kernel_series_stacks_modes(gaussian_1d: Equilibrium):
    times = _times(0.05, 5.0)
    ker = kernel_series(gaussian_1d, 0.0, [(1,), (2,)], theta1=0.25, times=times, max_workers=2)
    assert ker.k_set == [(1,), (2,)]
    single = kernel_inverse_laplace(gaussian_1d, 0.0, (2,), 0.25, times)
    np.testing.assert_array_equal(ker.column((2,)), single.column((2,)))
    with pytest.raises(ValueError, match=r"not in the kernel series"):
        ker.column((3,))


def test_kernel_rejects_invalid_contour(gaussian_1d: Equilibrium):
    times = _times(0.1, 1.0)
    with pytest.raises(ValueError, match=r"theta1 must satisfy"):
        kernel_inverse_laplace(gaussian_1d, 0.01, (1,), theta1=0.6, times=times)
    with pytest.raises(ValueError, match=r"epsilon must be non-negative"):
        kernel_inverse_laplace(gaussian_1d, -0.1, (1,), theta1=0.25, times=times)


def test_kernel_of_zero_equilibrium_vanishes():
    ker = kernel_inverse_laplace(zero_equilibrium(1), 0.01, (1,), 0.25, _times(0.1, 1.0))
    assert isinstance(ker, KernelSeries)
    assert np.all(ker.k_hat == 0.0)


def test_reconstruct_requires_shared_grid(gaussian_1d: Equilibrium):
    src = source_from_modes(_times(0.1, 2.0), [(1,)])
    ker = kernel_inverse_laplace(gaussian_1d, 0.0, (1,), 0.25, _times(0.05, 2.0))
    with pytest.raises(ValueError, match=r"same time grid"):
        reconstruct_rho(src, ker, 0.0)


def test_linear_gevrey_estimate(gaussian_1d: Equilibrium):
    times = _times(0.02, 10.0)
    src = source_from_modes(times, [(1,), (2,)])
    rho = solve_volterra(src, gaussian_1d, epsilon=0.01)
    params = GevreyParams()
    fit = verify_linear_gevrey(rho, src, params, theta1=0.25, eq=gaussian_1d, epsilon=0.01)
    assert math.isfinite(fit.c_fit)
    assert fit.c_fit > 0.0
    assert fit.ok
    assert abs(fit.c_fit - fit.c_fit_coarse) <= 0.05 * fit.c_fit
    assert fit.f_rho.shape == times.shape
    bound = fit.f_source + fit.c_fit * fit.memory_integral
    assert np.all(fit.f_rho <= bound + 1e-12 * fit.f_rho.max())
    with pytest.raises(ValueError, match=r"z must lie in"):
        verify_linear_gevrey(rho, src, params, theta1=0.25, eq=gaussian_1d, epsilon=0.01, z=0.2)


def test_linear_gevrey_flags_unresolved_step(gaussian_1d: Equilibrium):
    # a unit step leaves the kernel t exp(-t^2/2) unresolved, so halving the grid moves C
    src = source_from_modes(_times(1.0, 20.0), [(1,)])
    rho = solve_volterra(src, gaussian_1d, epsilon=0.01)
    fit = verify_linear_gevrey(rho, src, GevreyParams(), 0.25, eq=gaussian_1d, epsilon=0.01)
    assert not fit.ok
    assert fit.c_fit != fit.c_fit_coarse


def test_linear_gevrey_needs_three_nodes(gaussian_1d: Equilibrium):
    src = source_from_modes(_times(0.1, 0.1), [(1,)])
    rho = solve_volterra(src, gaussian_1d, epsilon=0.01)
    with pytest.raises(ValueError, match=r"at least 3 time nodes"):
        verify_linear_gevrey(rho, src, GevreyParams(), 0.25, eq=gaussian_1d, epsilon=0.01)


def test_density_series_field():
    times = np.array([0.0, 0.1])
    rho = DensitySeries(
        times,
        [(1,), (2,)],
        rho_plus=np.array([[2.0, 4.0], [1.0, 1.0]], dtype=complex),
        rho_minus=np.zeros((2, 2), dtype=complex),
    )
    e = rho.e_field
    assert e.shape == (2, 2, 1)
    # i k . E_hat = rho_hat
    np.testing.assert_allclose(1j * e[..., 0] * np.array([1.0, 2.0]), rho.rho)


def test_field_from_density_neutrality():
    k = np.array([[0.0], [1.0]])
    with pytest.raises(NeutralityBreach, match=r"total charge"):
        field_from_density(np.array([1e-6, 1.0]), k)
    e = field_from_density(np.array([0.0, 2.0 + 0j]), k)
    np.testing.assert_allclose(e[:, 0], [0.0, -2.0j])


def test_build_source_samples_along_rays():
    times = np.array([0.0, 0.5, 1.0])
    src = build_source(gaussian_mode_transform(2.0), None, times, [(1,), (3,)])
    np.testing.assert_allclose(src.s_plus[:, 1], np.exp(-0.5 * 4.0 * (3 * times) ** 2))
    assert np.all(src.s_minus == 0)
    with pytest.raises(ValueError, match=r"at least one mode"):
        build_source(None, None, times, [])


def test_tabulated_transform():
    grid = np.linspace(-5.0, 5.0, 11)
    table = TabulatedTransform(grid, {(1,): 2.0 * grid + 1j})
    np.testing.assert_allclose(table((1,), np.array([0.25, -1.5])), [0.5 + 1j, -3.0 + 1j])
    np.testing.assert_array_equal(table((2,), np.array([0.0])), [0.0])
    with pytest.raises(ValueError, match=r"outside the tabulated grid"):
        table((1,), np.array([6.0]))
    fallback = TabulatedTransform(grid, {}, fallback=gaussian_mode_transform())
    np.testing.assert_allclose(fallback((1,), np.array([6.0])), [math.exp(-18.0)])


def test_source_species_validation():
    with pytest.raises(ValueError, match=r"Unknown species"):
        source_from_modes(_times(0.1, 1.0), [(1,)], species="ions")


def test_volterra_is_linear_in_the_source(gaussian_1d: Equilibrium):
    src = source_from_modes(_times(0.05, 10.0), [(1,), (2,)], species=["plus", "minus"])
    c = 0.7 - 1.3j
    scaled = SourceSeries(src.times, src.k_set, c * src.s_plus, c * src.s_minus)
    base = solve_volterra(src, gaussian_1d, epsilon=0.01)
    rho = solve_volterra(scaled, gaussian_1d, epsilon=0.01)
    atol = 1e-14 * abs(c) * np.abs(base.rho).max()
    np.testing.assert_allclose(rho.rho_plus, c * base.rho_plus, rtol=1e-13, atol=atol)
    np.testing.assert_allclose(rho.rho_minus, c * base.rho_minus, rtol=1e-13, atol=atol)


def test_kernel_bound_is_uniform_in_k(gaussian_1d: Equilibrium):
    times = _times(0.05, 20.0)
    modes = [(k,) for k in range(1, 5)]
    ker = kernel_series(gaussian_1d, 0.01, modes, theta1=0.25, times=times)
    norms = np.arange(1, 5, dtype=float)
    weighted = np.abs(ker.k_hat) * np.exp(0.25 * np.outer(times, norms))
    assert np.all(np.isfinite(weighted))
    sup = weighted.max(axis=0)
    assert np.all(sup <= 10.0)
    # the weighted kernel has decayed again by the end of the window
    assert np.all(weighted[-1] <= 0.5 * sup)
