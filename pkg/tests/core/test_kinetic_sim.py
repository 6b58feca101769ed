import math
from dataclasses import replace

import numpy as np
import pytest
from pydantic import ValidationError

from landau_lab.core.equilibria import Equilibrium
from landau_lab.core.errors import (
    FrameAliasingError,
    NeutralityBreach,
    StabilityLimitError,
    VelocityBoxOverflow,
)
from landau_lab.core.generators import GevreyParams
from landau_lab.core.kinetic_sim import (
    PhaseSpaceGrid,
    SeedMode,
    SimConfig,
    VlasovPoissonSolver,
    field_from_density,
    gliding_frame,
    init_state,
    step,
)
from landau_lab.test_utils.scenario_utils import (
    gaussian_1d,  # noqa: F401
    requires_full_resolution,
    small_sim_config,
)


def _seed(species="plus", k=(1,), **kwargs):
    return [{"species": species, "k": list(k), **kwargs}]


def _rho_at(snapshot, k=(1,)) -> complex:
    j = snapshot.modes.index(k)
    return complex(snapshot.rho_plus[j]), complex(snapshot.rho_minus[j])


def _final_rho(cfg: SimConfig, eq: Equilibrium) -> np.ndarray:
    solver = VlasovPoissonSolver(cfg, eq)
    result = solver.run(solver.init_state(), snap_every=10**6)
    return result.snapshots[-1].rho


def test_field_from_density_solves_poisson():
    k = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, -2.0]])
    rho = np.array([0.0, 1.0 + 1j, -0.5])
    e = field_from_density(rho, k)
    assert e.shape == (3, 2)
    np.testing.assert_array_equal(e[0], [0.0, 0.0])
    np.testing.assert_allclose(1j * (k * e).sum(axis=-1), rho, atol=1e-15)
    with pytest.raises(NeutralityBreach, match=r"total charge must vanish"):
        field_from_density(np.array([1e-9, 1.0]), k[:2])


def test_phase_space_grid_conventions():
    grid = PhaseSpaceGrid(small_sim_config())
    assert grid.k_retained == 4
    assert grid.dv == pytest.approx(0.125)
    assert grid.eta_max == pytest.approx(math.pi / 0.125)
    assert grid.v_axis[0] == -8.0
    assert grid.modes(1) == [(-1,), (0,), (1,)]
    assert grid.modes(1, include_zero=False) == [(-1,), (1,)]
    assert grid.index_of((-1,)) == (11,)
    # the discrete v-transform of a centered Gaussian is the analytic one
    f = np.exp(-0.5 * grid.v_axis**2) / math.sqrt(2.0 * math.pi)
    np.testing.assert_allclose(
        grid.v_to_eta(f).real, np.exp(-0.5 * grid.eta_axis**2), atol=1e-13
    )
    np.testing.assert_allclose(grid.eta_to_v(grid.v_to_eta(f)).real, f, atol=1e-15)


def test_free_streaming_matches_closed_form(gaussian_1d: Equilibrium):
    amp = 1e-3
    cfg = small_sim_config(field_off=True, amp=amp, seed=_seed())
    solver = VlasovPoissonSolver(cfg, gaussian_1d)
    result = solver.run(solver.init_state(), snap_every=1)
    for snap in result.snapshots:
        rho_plus, rho_minus = _rho_at(snap)
        expected = math.pi * amp * math.exp(-0.5 * snap.t**2)
        assert abs(rho_plus - expected) <= 1e-8 * math.pi * amp
        assert rho_minus == 0


def test_short_run_conserves_mass_and_charge(gaussian_1d: Equilibrium):
    cfg = small_sim_config(seed=_seed() + _seed("minus", (2,), amplitude=5e-4))
    solver = VlasovPoissonSolver(cfg, gaussian_1d)
    result = solver.run(solver.init_state(), snap_every=5)
    assert [round(s.t, 12) for s in result.snapshots] == [0.0, 0.5, 1.0, 1.5, 2.0]
    assert result.max_mass_drift_rate <= 1e-10
    assert result.max_neutrality <= 1e-12
    assert result.max_reality_error <= 1e-12
    assert result.max_boundary_mass <= cfg.boundary_tol
    series = solver.density_series(result.snapshots)
    assert series.rho.shape == (5, 8)
    np.testing.assert_array_equal(series.rho[-1], result.snapshots[-1].rho)


@requires_full_resolution
def test_production_run_conserves_mass_and_charge(gaussian_1d: Equilibrium):
    cfg = SimConfig(seed=_seed())
    solver = VlasovPoissonSolver(cfg, gaussian_1d)
    result = solver.run(solver.init_state(), snap_every=100)
    assert result.snapshots[-1].t == pytest.approx(40.0)
    assert result.max_mass_drift_rate <= 1e-10
    assert result.max_neutrality <= 1e-12


def test_gliding_frame_matches_density(gaussian_1d: Equilibrium):
    cfg = small_sim_config(seed=_seed(amplitude=1e-2) + _seed("minus", amplitude=5e-3))
    solver = VlasovPoissonSolver(cfg, gaussian_1d)
    state = solver.init_state()
    for _ in range(15):
        state = solver.step(state)
    assert solver.frame_identity_residual(state) <= 1e-8
    spectrum = solver.gliding_frame(state, k_max=2)
    assert spectrum.g_plus.shape == (5, cfg.n_v)
    assert spectrum.dg_plus.shape == (5, 1, cfg.n_v)
    # g_hat at eta = k t on the grid equals the direct sum
    k = (1,)
    g_plus, _ = solver.gliding_value(state, k, [0.0])
    row = [tuple(m) for m in spectrum.k_vectors].index(k)
    assert abs(spectrum.g_plus[row, 0] - g_plus) <= 1e-12 * abs(g_plus)


def test_frame_identity_scale(gaussian_1d: Equilibrium):
    solver = VlasovPoissonSolver(small_sim_config(seed=_seed()), gaussian_1d)
    state = solver.init_state()
    worst, rho_max = solver.frame_identity_error(state)
    assert rho_max == pytest.approx(math.pi * 1e-3)
    assert worst <= 1e-12 * rho_max
    assert solver.frame_identity_residual(state) == pytest.approx(worst / rho_max)
    assert solver.frame_identity_residual(state, scale=2.0 * rho_max) == pytest.approx(
        0.5 * worst / rho_max
    )


def test_strang_splitting_is_second_order(gaussian_1d: Equilibrium):
    base = {"amp": 0.05, "t_max": 2.0, "seed": _seed("minus")}
    reference = _final_rho(small_sim_config(dt=0.0125, **base), gaussian_1d)
    errors = [
        float(np.abs(_final_rho(small_sim_config(dt=dt, **base), gaussian_1d) - reference).max())
        for dt in (0.1, 0.05)
    ]
    assert 3.5 < errors[0] / errors[1] < 5.0


def test_nonlinear_correction_is_quadratic(gaussian_1d: Equilibrium):
    gaps = []
    for amp in (0.02, 0.01):
        full = _final_rho(small_sim_config(amp=amp, seed=_seed("minus")), gaussian_1d)
        linear = _final_rho(
            small_sim_config(amp=amp, seed=_seed("minus"), nonlinear=False), gaussian_1d
        )
        gaps.append(float(np.abs(full - linear).max()))
    assert 3.5 < gaps[0] / gaps[1] < 4.5


def test_gliding_rhs_matches_time_derivative(gaussian_1d: Equilibrium):
    h = 0.01
    cfg = small_sim_config(dt=h, amp=1e-2, seed=_seed() + _seed("minus", amplitude=2e-2))
    solver = VlasovPoissonSolver(cfg, gaussian_1d)
    state = solver.init_state()
    for _ in range(99):
        state = solver.step(state)
    before = solver.gliding_frame(state, k_max=2)
    middle = solver.step(state)
    after = solver.gliding_frame(solver.step(middle), k_max=2)
    rhs = solver.gliding_rhs(middle, k_max=2)
    np.testing.assert_array_equal(rhs.k_vectors, before.k_vectors)
    for fd, exact in (
        ((after.g_plus - before.g_plus) / (2 * h), rhs.rhs_plus),
        ((after.g_minus - before.g_minus) / (2 * h), rhs.rhs_minus),
    ):
        assert np.abs(fd - exact).max() <= 1e-3 * np.abs(exact).max()


def test_init_state_terms_and_errors(gaussian_1d: Equilibrium):
    cfg = small_sim_config(amp=2e-3)
    solver = VlasovPoissonSolver(cfg, gaussian_1d)
    state = solver.init_state([SeedMode(k=[2]), SeedMode(species="minus", k=[1], amplitude=1e-3)])
    snap = solver.snapshot(state)
    assert _rho_at(snap, (2,)) == pytest.approx((math.pi * 2e-3, 0.0))
    assert _rho_at(snap, (-1,)) == pytest.approx((0.0, math.pi * 1e-3))
    assert state.initial_generator is None

    with pytest.raises(ValueError, match=r"outside the retained modes"):
        solver.init_state([SeedMode(k=[5])])
    with pytest.raises(NeutralityBreach, match=r"net charge"):
        solver.init_state([SeedMode(k=[0])])

    with_g = init_state(cfg, [SeedMode(k=[1])], eq=gaussian_1d, params=GevreyParams())
    assert with_g.initial_generator > 0.0


def test_module_level_helpers_build_a_solver(gaussian_1d: Equilibrium):
    cfg = small_sim_config(seed=_seed())
    state = init_state(cfg)
    advanced = step(state, cfg, gaussian_1d)
    assert advanced.t == pytest.approx(cfg.dt)
    spectrum = gliding_frame(advanced, cfg)
    assert spectrum.t == advanced.t
    assert spectrum.g_plus.shape == (2 * 4 + 1, cfg.n_v)


@pytest.mark.parametrize(
    ("overrides", "message"),
    [
        ({"n_v": 127}, r"n_v must be even"),
        ({"dim": 3}, r"dim must be one of"),
        ({"dim": 2, "n_x": 64, "n_v": 32}, r"d=2 runs are limited"),
        ({"seed": [{"k": [1, 1]}]}, r"must have 1 components"),
        ({"seed": [{"k": [1], "color": "red"}]}, r"Extra inputs are not permitted"),
        ({"v_max": -1.0}, r"greater than 0"),
    ],
)
def test_sim_config_validation(overrides, message):
    with pytest.raises(ValidationError, match=message):
        small_sim_config(**overrides)


def test_stability_limits(gaussian_1d: Equilibrium):
    with pytest.raises(StabilityLimitError, match=r"Transport number"):
        VlasovPoissonSolver(small_sim_config(dt=50.0), gaussian_1d)
    solver = VlasovPoissonSolver(small_sim_config(accel_cfl_max=1e-6, seed=_seed()), gaussian_1d)
    with pytest.raises(StabilityLimitError, match=r"Acceleration number"):
        solver.step(solver.init_state())


def test_velocity_box_overflow(gaussian_1d: Equilibrium):
    cfg = small_sim_config(seed=_seed(profile="gaussian", drift=6.0))
    solver = VlasovPoissonSolver(cfg, gaussian_1d)
    with pytest.raises(VelocityBoxOverflow, match=r"enlarge the velocity box"):
        solver.run(solver.init_state())


def test_gliding_frame_aliasing(gaussian_1d: Equilibrium):
    cfg = small_sim_config(seed=_seed())
    solver = VlasovPoissonSolver(cfg, gaussian_1d)
    late = replace(solver.init_state(), t=30.0)
    with pytest.raises(FrameAliasingError, match=r"beyond the velocity grid"):
        solver.gliding_frame(late)
    assert solver.resolved_k_max(0.0) == 4
    assert solver.resolved_k_max(10.0) == 2
    assert solver.resolved_k_max(30.0) == 0
    spectrum = solver.gliding_frame(late, k_max=solver.resolved_k_max(30.0))
    assert spectrum.k_vectors.tolist() == [[0]]


def test_equilibrium_dimension_must_match(gaussian_1d: Equilibrium):
    with pytest.raises(ValueError, match=r"does not match"):
        VlasovPoissonSolver(SimConfig(dim=2, n_x=8, n_v=16), gaussian_1d)
