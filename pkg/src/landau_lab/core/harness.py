import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from functools import cached_property
from pathlib import Path
from typing import (
    Any,
    Dict,
    List,
    Literal,
    Mapping,
    NamedTuple,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import numpy as np
import toml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from landau_lab.core.checkpoint import save_checkpoint
from landau_lab.core.equilibria import Equilibrium, get_equilibrium
from landau_lab.core.errors import (
    ConfigValidationError,
    CrossCheckFailure,
    LandauLabError,
    PenroseViolation,
)
from landau_lab.core.generators import (
    DecayFit,
    GeneratorSnapshot,
    GevreyParams,
    check_embedding,
    check_L41_inequality,
    f_functional_series,
    fit_decay,
    g_functional,
    lambda_schedule,
)
from landau_lab.core.kinetic_sim import SeedMode, SimConfig, SimulationRun, VlasovPoissonSolver
from landau_lab.core.linear_theory import (
    DensitySeries,
    KernelSeries,
    SourceSeries,
    forward_laplace_check,
    kernel_series,
    reconstruct_rho,
    solve_volterra,
    source_from_modes,
    verify_linear_gevrey,
)
from landau_lab.core.penrose import PenroseReport, penrose_infimum, scan_modes
from landau_lab.core.utils.config import DEFAULT_SCENARIO, DEFAULT_TOL
from landau_lab.core.utils.csv_utils import write_csv
from landau_lab.core.utils.validation_utils import Mode, format_mode
from landau_lab.core.version import VERSION

_logger = logging.getLogger(__name__)

Scenario = Literal["penrose", "linear", "nonlinear", "kernel", "full-report"]

EPSILON_IDENTITY_CHECK = "rho_plus equals S_plus (epsilon=0 identity)"
# tolerances of the run-time cross-checks
FORWARD_LAPLACE_TOL = 1e-5
FRAME_IDENTITY_TOL = 1e-8
MASS_DRIFT_TOL = 1e-10
DIAGNOSTIC_FRAME_MODES = 4
DECAY_STABILITY_TOL = 0.1
DECAY_R2_MIN = 0.95
LINEAR_REGIME_WINDOW = (2.0, 20.0)


class PenroseBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    alpha: float = Field(default=0.0, ge=0.0, description="Perturbation parameter of D.")
    k_max: int = Field(default=8, ge=1)
    im_max: float = Field(default=60.0, gt=0.0, description="Largest |Im lambda| scanned.")
    step: float = Field(default=0.05, gt=0.0)
    tol: float = Field(default=DEFAULT_TOL, gt=0.0)
    kappa0: Optional[float] = Field(default=None, gt=0.0)


class LinearBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    epsilon: float = Field(default=0.01, ge=0.0)
    theta1: Optional[float] = Field(
        default=None, description="Contour offset of the kernel inversion, theta0/2 when unset."
    )
    dt: float = Field(default=0.01, gt=0.0)
    t_max: float = Field(default=20.0, gt=0.0)
    k_max: int = Field(default=2, ge=1)
    method: Literal["volterra", "resolvent", "both"] = "both"
    seed_width: float = Field(default=1.0, gt=0.0)
    species: Literal["plus", "minus", "both"] = "plus"
    agreement_tol: float = Field(default=1e-3, gt=0.0)


class RunConfig(BaseModel):
    """
    A complete run: the scenario to execute and every module parameter block.
    The nested `nonlinear` and `gevrey` blocks inherit the top level `dim` unless they set it.
    """

    model_config = ConfigDict(extra="forbid")

    scenario: Scenario = DEFAULT_SCENARIO
    equilibrium: Literal["gaussian", "zero"] = "gaussian"
    dim: int = Field(default=1, description="Spatial and velocity dimension d.")
    theta0: float = Field(default=0.5, gt=0.0, description="Analyticity width of the (H1) fit.")
    h1_grid_radius: float = Field(default=12.0, gt=0.0)
    h1_grid_step: float = Field(default=0.01, gt=0.0)
    output_dir: str = "landau_lab_output"
    snapshot_every: int = Field(default=20, ge=1, description="Solver steps per snapshot.")
    checkpoint: bool = Field(default=False, description="Write the final state to state.bin.")
    penrose: PenroseBlock = Field(default_factory=PenroseBlock)
    linear: LinearBlock = Field(default_factory=LinearBlock)
    nonlinear: SimConfig = Field(default_factory=SimConfig)
    gevrey: GevreyParams = Field(default_factory=GevreyParams)

    @model_validator(mode="before")
    @classmethod
    def _inherit_dim(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        data = dict(data)
        dim = data.get("dim", 1)
        for key in ("nonlinear", "gevrey"):
            block = data.get(key, {})
            if isinstance(block, dict) and "dim" not in block:
                data[key] = {**block, "dim": dim}
        return data

    @model_validator(mode="after")
    def _check_cross_field(self) -> "RunConfig":
        theta1 = self.theta1
        errors = []
        if not 0.0 < theta1 < self.theta0:
            errors.append(f"theta1 must satisfy 0 < theta1 < theta0={self.theta0}, got {theta1}")
        errors.extend(self.gevrey.violations(theta1))
        if self.gevrey.dim != self.dim:
            errors.append(f"gevrey.dim={self.gevrey.dim} must equal dim={self.dim}")
        if self.nonlinear.dim != self.dim:
            errors.append(f"nonlinear.dim={self.nonlinear.dim} must equal dim={self.dim}")
        if errors:
            raise ValueError("\n".join(errors))
        return self

    @property
    def theta1(self) -> float:
        return 0.5 * self.theta0 if self.linear.theta1 is None else self.linear.theta1

    def config_hash(self) -> str:
        payload = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _format_validation_error(exc: ValidationError) -> List[str]:
    errors = []
    for err in exc.errors():
        location = ".".join(str(part) for part in err["loc"])
        message = str(err["msg"])
        if message.startswith("Value error, "):
            message = message[len("Value error, ") :]
        if err["type"] == "extra_forbidden":
            errors.append(f"unknown key {location!r}")
        elif location:
            errors.extend(f"{location}: {line}" for line in message.splitlines())
        else:
            errors.extend(message.splitlines())
    return errors


def apply_overrides(data: Dict[str, Any], overrides: Mapping[str, Any]) -> Dict[str, Any]:
    """Set dotted keys such as "linear.dt" on a nested config dict; None values are skipped."""
    out = {k: (dict(v) if isinstance(v, dict) else v) for k, v in data.items()}
    for key, value in overrides.items():
        if value is None:
            continue
        *parents, leaf = key.split(".")
        target = out
        for part in parents:
            child = target.get(part)
            child = dict(child) if isinstance(child, dict) else {}
            target[part] = child
            target = child
        target[leaf] = value
    return out


def parse_config(data: Mapping[str, Any]) -> RunConfig:
    try:
        return RunConfig.model_validate(dict(data))
    except ValidationError as e:
        raise ConfigValidationError(_format_validation_error(e)) from None


def load_config(
    path: Optional[Union[str, Path]] = None, overrides: Optional[Mapping[str, Any]] = None
) -> RunConfig:
    """
    Read a TOML run configuration and validate it.

    Args:
        path: The TOML file, or None for the documented defaults.
        overrides: Dotted keys applied on top of the file (command line flags).

    Returns:
        RunConfig: the validated configuration.

    Raises:
        ConfigValidationError: listing every unknown key and violated constraint.
    """
    data: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigValidationError([f"config file {str(path)!r} does not exist"])
        try:
            data = toml.load(path)
        except toml.TomlDecodeError as e:
            raise ConfigValidationError([f"{path}: {e}"]) from None
    return parse_config(apply_overrides(data, overrides or {}))


def _json_value(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


@dataclass
class RunManifest:
    """
    Record of one scenario run. `files` lists every emitted file relative to the output
    directory (the manifest itself excluded); timestamps only appear here, never in CSVs.
    """

    scenario: str
    config_hash: str
    software_version: str
    started_at: str
    finished_at: Optional[str] = None
    output_dir: Optional[str] = None
    files: List[str] = field(default_factory=list)
    metrics: Dict[str, Any] = field(default_factory=dict)
    checks: Dict[str, bool] = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {k: v for k, v in self.__dict__.items() if v is not None}
        payload["metrics"] = {k: _json_value(v) for k, v in self.metrics.items()}
        return json.dumps(payload, indent=2, sort_keys=True)

    def summary(self) -> str:
        parts = [self.scenario]
        for key in ("penrose_inf", "nonlinear_decay_rate", "linear_decay_rate", "max_c0_est"):
            if key in self.metrics:
                parts.append(f"{key}={self.metrics[key]}")
        failed = [name for name, ok in self.checks.items() if not ok]
        parts.append(f"checks {len(self.checks) - len(failed)}/{len(self.checks)} passed")
        parts.append(f"{len(self.files)} files in {self.output_dir}")
        return ", ".join(parts)


class _ScenarioRun:
    """Shared state of one `run_scenario` call: caches, emitted files, metrics and checks."""

    def __init__(self, cfg: RunConfig, out_dir: Path):
        self.cfg = cfg
        self.out_dir = out_dir
        self.files: List[str] = []
        self.metrics: Dict[str, Any] = {}
        self.checks: Dict[str, bool] = {}

    @cached_property
    def equilibrium(self) -> Equilibrium:
        cfg = self.cfg
        return get_equilibrium(
            cfg.equilibrium, cfg.dim, cfg.theta0, cfg.h1_grid_radius, cfg.h1_grid_step
        )

    @cached_property
    def linear_times(self) -> np.ndarray:
        lin = self.cfg.linear
        n = int(round(lin.t_max / lin.dt))
        return lin.dt * np.arange(n + 1)

    @cached_property
    def linear_modes(self) -> List[Tuple[int, ...]]:
        return scan_modes(self.cfg.dim, self.cfg.linear.k_max)

    @cached_property
    def source(self) -> SourceSeries:
        lin = self.cfg.linear
        species = ["plus", "minus"] if lin.species == "both" else lin.species
        return source_from_modes(self.linear_times, self.linear_modes, lin.seed_width, species)

    @cached_property
    def kernel(self) -> KernelSeries:
        return kernel_series(
            self.equilibrium,
            self.cfg.linear.epsilon,
            self.linear_modes,
            self.cfg.theta1,
            self.linear_times,
        )

    def write(self, name: str, header: Sequence[str], rows) -> None:
        write_csv(self.out_dir / name, header, rows)
        if name not in self.files:
            self.files.append(name)

    def check(self, name: str, ok: bool, error: Optional[str] = None) -> None:
        """Record a check; with `error` set, a failed check is a cross-check failure."""
        self.checks[name] = bool(ok)
        if not ok and error is not None:
            raise CrossCheckFailure(f"{name}: {error}")


def _run_penrose(run: _ScenarioRun) -> PenroseReport:
    cfg, p = run.cfg, run.cfg.penrose
    eq = run.equilibrium
    report = penrose_infimum(
        eq, alpha=p.alpha, k_max=p.k_max, M=p.im_max, step=p.step, tol=p.tol, kappa0=p.kappa0
    )
    samples = report.samples
    rows = (
        (format_mode(k), tau, value)
        for j, k in enumerate(samples.modes)
        for tau, value in zip(samples.tau, samples.modulus[j])
    )
    run.write("penrose_samples.csv", ("k", "im_lambda", "abs_D"), rows)
    run.metrics["penrose_inf"] = report.inf_modulus
    run.metrics["penrose_argmin_k"] = format_mode(report.argmin_k)
    run.metrics["penrose_argmin_im_lambda"] = report.argmin_tau
    run.metrics["penrose_certified_lower_bound"] = report.certified_lower_bound
    run.metrics["penrose_alpha0"] = report.alpha0
    run.check("interior samples stay above the boundary minimum", not report.interior_flag)
    if not report.kappa_half_ok:
        raise PenroseViolation(
            f"Penrose margin fails: {report.summary()} is below kappa0/2={0.5 * report.kappa0:.6g}."
        )
    run.check("kappa0/2 margin", True)
    run.check("certified lower bound positive", report.certified_lower_bound > 0)

    epsilon = cfg.linear.epsilon
    if p.alpha == 0.0 and epsilon > 0.0 and math.isfinite(eq.c_mu) and eq.c_mu > 0:
        perturbed = penrose_infimum(
            eq, alpha=epsilon, k_max=p.k_max, M=p.im_max, step=p.step, tol=p.tol
        )
        shift = abs(perturbed.inf_modulus - report.inf_modulus)
        bound = epsilon * eq.c_mu / eq.theta0**2
        run.metrics["penrose_epsilon_shift"] = shift
        run.check(
            "epsilon shift of the infimum within epsilon C_mu/theta0^2",
            shift <= bound,
            f"shift {shift:.6g} exceeds {bound:.6g}",
        )
    _logger.info(f"Penrose scan: {report.summary()}")
    return report


def _run_kernel(run: _ScenarioRun) -> KernelSeries:
    ker = run.kernel
    rows = (
        (t, format_mode(k), value.real, value.imag, abs(value))
        for i, t in enumerate(ker.times)
        for k, value in zip(ker.k_set, ker.k_hat[i])
    )
    run.write("kernel.csv", ("t", "k", "re_K", "im_K", "abs_K"), rows)
    first = ker.k_set[0]
    forward = forward_laplace_check(ker, run.equilibrium, first)
    run.metrics["kernel_forward_error"] = forward.max_rel_error
    run.metrics["kernel_fit_theta"] = float(ker.fit_theta[0])
    run.metrics["kernel_fit_c"] = float(ker.fit_c[0])
    run.metrics["kernel_resolvent_bound"] = float(np.max(ker.resolvent_bound))
    run.metrics["kernel_truncation_estimate"] = float(np.max(ker.truncation_estimate))
    run.check(
        "forward Laplace transform reproduces K_tilde",
        forward.max_rel_error <= FORWARD_LAPLACE_TOL,
        f"relative error {forward.max_rel_error:.3e}",
    )
    fit_theta = float(ker.fit_theta[0])
    run.check("kernel decays at least at rate theta1", fit_theta >= run.cfg.theta1)
    return ker


def _relative_gap(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(float(np.abs(a).max(initial=0.0)), 1e-300)
    return float(np.abs(a - b).max(initial=0.0)) / scale


def _run_linear(run: _ScenarioRun) -> DensitySeries:
    cfg, lin = run.cfg, run.cfg.linear
    eq, src = run.equilibrium, run.source
    rho_volterra = rho_resolvent = None
    if lin.method in ("volterra", "both"):
        rho_volterra = solve_volterra(src, eq, lin.epsilon)
    if lin.method in ("resolvent", "both"):
        rho_resolvent = reconstruct_rho(src, _run_kernel(run), lin.epsilon)
    rho = rho_volterra if rho_volterra is not None else rho_resolvent

    header = ["t", "k", "re_rho", "im_rho", "abs_rho", "abs_S"]
    discrepancy = None
    if rho_volterra is not None and rho_resolvent is not None:
        header.append("discrepancy")
        discrepancy = np.abs(rho_volterra.rho - rho_resolvent.rho)
        gap = _relative_gap(rho_volterra.rho, rho_resolvent.rho)
        run.metrics["linear_agreement"] = gap
        run.check(
            "Volterra and resolvent paths agree",
            gap <= lin.agreement_tol,
            f"relative gap {gap:.3e} exceeds {lin.agreement_tol}",
        )
    rows = []
    for i, t in enumerate(src.times):
        for j, k in enumerate(src.k_set):
            value = rho.rho[i, j]
            row = [t, format_mode(k), value.real, value.imag, abs(value), abs(src.s[i, j])]
            if discrepancy is not None:
                row.append(discrepancy[i, j])
            rows.append(row)
    run.write("linear.csv", header, rows)

    if lin.epsilon == 0.0:
        gap = float(np.abs(rho.rho_plus - src.s_plus).max())
        run.check(EPSILON_IDENTITY_CHECK, gap == 0.0, f"max deviation {gap:.3e}")

    fit = verify_linear_gevrey(rho, src, cfg.gevrey, cfg.theta1, eq=eq, epsilon=lin.epsilon)
    run.metrics["linear_gevrey_c"] = fit.c_fit
    run.check("linear Gevrey estimate finite and grid stable", fit.ok)
    try:
        decay = fit_decay(src.times, np.abs(rho.rho[:, 0]), 2.0, lin.t_max)
        run.metrics["linear_decay_rate"] = decay.lambda_fit
        run.metrics["linear_decay_r2"] = decay.r2
    except ValueError as e:
        _logger.warning(f"No decay fit for the linear density: {e}")
    return rho


def _default_seed(dim: int) -> List[SeedMode]:
    return [SeedMode(species="plus", k=[1] + [0] * (dim - 1))]


def _run_nonlinear(run: _ScenarioRun) -> Tuple[VlasovPoissonSolver, SimulationRun]:
    cfg = run.cfg
    sim = cfg.nonlinear
    solver = VlasovPoissonSolver(sim, run.equilibrium)
    seeds = sim.seed or _default_seed(cfg.dim)
    state = solver.init_state(seeds, params=cfg.gevrey)
    # worst absolute frame error and max|rho_hat| over the whole run
    frame_error = [0.0, 0.0]

    def _frame_check(snapshot) -> None:
        worst, rho_max = solver.frame_identity_error(snapshot.state, DIAGNOSTIC_FRAME_MODES)
        frame_error[0] = max(frame_error[0], worst)
        frame_error[1] = max(frame_error[1], rho_max)

    result = solver.run(state, snap_every=cfg.snapshot_every, on_snapshot=_frame_check)
    snapshots = result.snapshots
    frame_residual = frame_error[0] / max(frame_error[1], 1e-300)
    rows = (
        (s.t, format_mode(k), abs(s.rho[j]), float(np.sqrt((np.abs(s.e_hat[j]) ** 2).sum())))
        for s in snapshots
        for j, k in enumerate(s.modes)
    )
    run.write("snapshots.csv", ("t", "k", "abs_rho_k", "abs_E_k"), rows)
    run.metrics["nonlinear_mass_drift_rate"] = result.max_mass_drift_rate
    run.metrics["nonlinear_max_neutrality"] = result.max_neutrality
    run.metrics["nonlinear_frame_identity"] = frame_residual
    if state.initial_generator is not None:
        run.metrics["initial_generator"] = state.initial_generator
    run.check(
        "per-species mass conserved",
        result.max_mass_drift_rate <= MASS_DRIFT_TOL,
        f"drift rate {result.max_mass_drift_rate:.3e}",
    )
    run.check(
        "gliding frame reproduces the density",
        frame_residual <= FRAME_IDENTITY_TOL,
        f"relative residual {frame_residual:.3e}",
    )

    # fit the mode carrying the most initial density
    first = int(np.argmax(np.abs(snapshots[0].rho)))
    times = np.array([s.t for s in snapshots])
    try:
        decay = fit_decay(times, [abs(s.rho[first]) for s in snapshots], 2.0, sim.t_max)
        run.metrics["nonlinear_decay_rate"] = decay.lambda_fit
        run.metrics["nonlinear_decay_r2"] = decay.r2
    except ValueError as e:
        _logger.warning(f"No decay fit for the simulated density: {e}")

    if cfg.checkpoint:
        save_checkpoint(run.out_dir / "state.bin", snapshots[-1].state, sim)
        run.files.append("state.bin")
    return solver, result


class LinearRegimeReport(NamedTuple):
    mode: Mode
    gap: float
    tolerance: float
    decay: Optional[DecayFit]
    decay_half: Optional[DecayFit]
    decay_volterra: Optional[DecayFit]

    @property
    def matches(self) -> bool:
        return self.gap <= self.tolerance

    @property
    def rate_shift(self) -> float:
        """Relative change of the fitted rate when the step is halved."""
        if self.decay is None or self.decay_half is None:
            return float("nan")
        reference = max(abs(self.decay_half.lambda_fit), 1e-300)
        return abs(self.decay.lambda_fit - self.decay_half.lambda_fit) / reference


def _volterra_along(solver: VlasovPoissonSolver, state, mode: Mode, n_steps: int) -> np.ndarray:
    """Volterra densities (plus, minus) of `mode` on the solver's step grid, sourced by `state`."""
    times = solver.cfg.dt * np.arange(n_steps + 1)
    k_vec = np.asarray(mode, dtype=float)
    values = np.array([solver.gliding_value(state, mode, k_vec * t) for t in times])
    src = SourceSeries(times, [mode], values[:, :1], values[:, 1:])
    rho = solve_volterra(src, solver.eq, solver.cfg.epsilon)
    return np.stack([rho.rho_plus[:, 0], rho.rho_minus[:, 0]], axis=1)


def linear_regime_check(
    solver: VlasovPoissonSolver,
    result: SimulationRun,
    snap_every: int,
    amp: float,
    window: Tuple[float, float] = LINEAR_REGIME_WINDOW,
) -> LinearRegimeReport:
    """
    Compare the simulated density of the dominant seeded mode with the Volterra solution
    driven by the same initial data, then rerun the simulation with half the step.

    Args:
        solver: The solver that produced `result`.
        result: A run started at t = 0 with snapshots every `snap_every` steps.
        snap_every: Snapshot stride of `result`.
        amp: Largest seed amplitude; nonlinear terms may move the density by 10 amp relative.
        window: Time window of the decay fits.

    Returns:
        LinearRegimeReport: the largest gap relative to max|rho_hat|, its tolerance, and the
        decay fits of both simulations and of the Volterra density (None when the window
        holds too few samples).
    """
    sim = solver.cfg
    n_steps = int(round(sim.t_max / sim.dt))
    snapshots = result.snapshots
    first = snapshots[0]
    j = int(np.argmax(np.abs(first.rho)))
    mode = tuple(first.modes[j])

    half = VlasovPoissonSolver(sim.model_copy(update={"dt": 0.5 * sim.dt}), solver.eq)
    half_run = half.run(first.state.copy(), t_max=n_steps * sim.dt, snap_every=2 * snap_every)
    # rows are snapshot times, columns the species
    sim_rho = np.array([(s.rho_plus[j], s.rho_minus[j]) for s in snapshots])
    sim_rho_half = np.array([(s.rho_plus[j], s.rho_minus[j]) for s in half_run.snapshots])
    steps = np.array([int(round(s.t / sim.dt)) for s in snapshots])
    volterra_full = _volterra_along(solver, first.state, mode, n_steps)
    volterra = volterra_full[steps]
    volterra_half = _volterra_along(half, first.state, mode, 2 * n_steps)[2 * steps]

    scale = max(float(np.abs(volterra_half).max()), 1e-300)
    gap = float(np.abs(sim_rho - volterra).max()) / scale
    # twice the second-order error estimate 4/3 |x(dt) - x(dt/2)| of each solution
    change = np.abs(sim_rho - sim_rho_half).max() + np.abs(volterra - volterra_half).max()
    tolerance = 10.0 * amp + 2.0 * (4.0 / 3.0) * float(change) / scale

    times = np.array([s.t for s in snapshots])
    t_lo, t_hi = window
    try:
        decay = fit_decay(times, np.abs(sim_rho[:, 0] - sim_rho[:, 1]), t_lo, t_hi)
        decay_half = fit_decay(times, np.abs(sim_rho_half[:, 0] - sim_rho_half[:, 1]), t_lo, t_hi)
        v_times = sim.dt * np.arange(n_steps + 1)
        v_rho = np.abs(volterra_full[:, 0] - volterra_full[:, 1])
        decay_volterra = fit_decay(v_times, v_rho, t_lo, t_hi)
    except ValueError as e:
        _logger.warning(f"No decay fit in the linear regime: {e}")
        decay = decay_half = decay_volterra = None
    report = LinearRegimeReport(mode, gap, tolerance, decay, decay_half, decay_volterra)
    _logger.info(
        f"Linear regime at k={format_mode(mode)}: gap {gap:.3e} (tolerance {tolerance:.3e}), "
        f"rate shift under step halving {report.rate_shift:.3e}"
    )
    return report


def _run_linear_regime(
    run: _ScenarioRun, solver: VlasovPoissonSolver, result: SimulationRun
) -> LinearRegimeReport:
    cfg, sim = run.cfg, run.cfg.nonlinear
    seeds = sim.seed or _default_seed(cfg.dim)
    amp = max(sim.amp if s.amplitude is None else abs(s.amplitude) for s in seeds)
    window = (LINEAR_REGIME_WINDOW[0], min(LINEAR_REGIME_WINDOW[1], sim.t_max))
    report = linear_regime_check(solver, result, cfg.snapshot_every, amp, window)
    run.metrics["linear_regime_gap"] = report.gap
    run.check(
        "simulated density matches the Volterra solution",
        report.matches,
        f"relative gap {report.gap:.3e} exceeds {report.tolerance:.3e}",
    )
    if report.decay is not None:
        run.metrics["linear_regime_decay_rate"] = report.decay.lambda_fit
        run.metrics["linear_regime_decay_r2"] = report.decay.r2
        run.metrics["linear_regime_rate_shift"] = report.rate_shift
        run.check(
            "linear-regime decay rate stable under step halving",
            report.rate_shift <= DECAY_STABILITY_TOL,
            f"rate moved by {report.rate_shift:.3e}",
        )
        run.check(
            "linear-regime density decays",
            report.decay.lambda_fit > 0 and report.decay.r2 >= DECAY_R2_MIN,
        )
    return report


def _run_diagnostics(run: _ScenarioRun, solver: VlasovPoissonSolver, result: SimulationRun):
    """Generator functionals F and G along the simulated flow."""
    p = run.cfg.gevrey
    snapshots = result.snapshots
    density = solver.density_series(snapshots)
    times = density.times
    radii = lambda_schedule(times, p)
    f_eval = f_functional_series(density, p.z_eval, p)
    f_eval_dz = f_functional_series(density, p.z_eval + p.dz, p)
    f_schedule = f_functional_series(density, radii, p)
    run.check(
        "F nondecreasing in z", bool(np.all(f_eval_dz >= f_eval)), "F decreases in z"
    )

    rows = []
    generator_snapshots = []
    c0_values = []
    for i, snap in enumerate(snapshots):
        spectrum = solver.gliding_frame(snap.state, k_max=solver.resolved_k_max(snap.t))
        g_eval = g_functional(spectrum, p.z_eval, p).value
        g_dz = g_functional(spectrum, p.z_eval + p.dz, p).value
        lam = float(radii[i])
        g_schedule = g_functional(spectrum, lam, p).value
        for z, f_val, g_val in ((p.z_eval, f_eval[i], g_eval), (lam, f_schedule[i], g_schedule)):
            c0 = check_embedding(float(f_val), g_val, p.dim).c0_est
            c0_values.append(c0)
            g_pow = g_val ** (1.0 / (p.dim + 1))
            rows.append((snap.t, z, f_val, g_val, g_pow, c0, lam))
        generator_snapshots.append(
            GeneratorSnapshot(snap.t, p.z_eval, p.dz, float(f_eval[i]), g_eval, g_dz)
        )
    run.write(
        "diagnostics.csv", ("t", "z", "F", "G", "G_pow", "c0_est", "lambda_used"), rows
    )
    max_c0 = max(c0_values)
    run.metrics["max_c0_est"] = max_c0
    run.check("F <= C0 G^(1/(d+1)) with finite C0", math.isfinite(max_c0), "c0_est is not finite")
    if len(generator_snapshots) >= 2:
        growth = check_L41_inequality(generator_snapshots, p)
        run.metrics["generator_inequality_c"] = growth.c_min
        run.check("generator growth inequality with finite C", growth.ok)


def _dispatch(run: _ScenarioRun) -> None:
    scenario = run.cfg.scenario
    if scenario in ("penrose", "full-report"):
        _run_penrose(run)
    if scenario in ("linear", "full-report"):
        _run_linear(run)
    if scenario == "kernel" or (scenario == "full-report" and "kernel.csv" not in run.files):
        _run_kernel(run)
    if scenario in ("nonlinear", "full-report"):
        solver, result = _run_nonlinear(run)
        _run_diagnostics(run, solver, result)
        if scenario == "full-report":
            _run_linear_regime(run, solver, result)


def run_scenario(cfg: RunConfig, out_dir: Optional[Union[str, Path]] = None) -> RunManifest:
    """
    Execute `cfg.scenario`, write its CSV files and finally `manifest.json`.

    `full-report` runs the Penrose scan, both linear paths with the kernel checks, and the
    nonlinear run with its generator diagnostics, then compares the run with the Volterra
    density and a half-step rerun. It stops at the first failed invariant.
    Errors keep their type; the scenario name is prefixed to the message.
    """
    out = Path(cfg.output_dir if out_dir is None else out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(
        scenario=cfg.scenario,
        config_hash=cfg.config_hash(),
        software_version=VERSION,
        started_at=datetime.now(timezone.utc).isoformat(),
        output_dir=str(out),
    )
    run = _ScenarioRun(cfg, out)
    _logger.info(f"Running scenario {cfg.scenario} into {out}")
    try:
        _dispatch(run)
    except (LandauLabError, ValueError) as e:
        if e.args and isinstance(e.args[0], str):
            e.args = (f"{cfg.scenario}: {e.args[0]}",) + e.args[1:]
        raise
    manifest.files = sorted(run.files)
    manifest.metrics = run.metrics
    manifest.checks = run.checks
    manifest.finished_at = datetime.now(timezone.utc).isoformat()
    (out / "manifest.json").write_text(manifest.to_json() + "\n", encoding="utf-8")
    return manifest


def compare_outputs(dir_a: Union[str, Path], dir_b: Union[str, Path]) -> List[str]:
    """Names of CSV files that differ byte-wise (or exist on one side only)."""
    a, b = Path(dir_a), Path(dir_b)
    names = sorted({p.name for p in a.glob("*.csv")} | {p.name for p in b.glob("*.csv")})
    differing = []
    for name in names:
        pa, pb = a / name, b / name
        if not (pa.is_file() and pb.is_file()) or pa.read_bytes() != pb.read_bytes():
            differing.append(name)
    return differing
