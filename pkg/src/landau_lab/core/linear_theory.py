import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Union

import numpy as np
from scipy.integrate import simpson

from landau_lab.core.equilibria import Equilibrium
from landau_lab.core.errors import NonFiniteValuesError, PenroseViolation
from landau_lab.core.generators import GevreyParams, f_functional_series
from landau_lab.core.kinetic_sim import field_from_density
from landau_lab.core.penrose import laplace_moment
from landau_lab.core.utils.config import (
    DEFAULT_TOL,
    KERNEL_DENOMINATOR_FLOOR,
    KERNEL_FIT_WINDOW,
    KERNEL_FORWARD_RE,
    KERNEL_MAX_IM,
)
from landau_lab.core.utils.fitting_utils import fit_line, strict_local_maxima
from landau_lab.core.utils.parallel_utils import parallel_map
from landau_lab.core.utils.quadrature_utils import (
    exponential_memory_integral,
    trapezoid_convolution,
)
from landau_lab.core.utils.validation_utils import (
    Mode,
    mode_norm,
    validate_mode,
    validate_uniform_grid,
)

_logger = logging.getLogger(__name__)

# (k, eta points of shape (n, d)) -> complex values of shape (n,)
InitialTransform = Callable[[Mode, np.ndarray], np.ndarray]


class TabulatedTransform:
    """
    f_hat0(k, eta) given on a one-dimensional eta grid per mode, linearly interpolated.

    Args:
        eta_grid: Increasing eta nodes.
        values: Mode -> complex samples on `eta_grid`. Missing modes are zero.
        fallback: Analytic transform used outside the grid. Without it, evaluating outside
            the grid raises.
    """

    def __init__(
        self,
        eta_grid: np.ndarray,
        values: Dict[Mode, np.ndarray],
        fallback: Optional[InitialTransform] = None,
    ):
        self.eta_grid = np.asarray(eta_grid, dtype=float)
        if self.eta_grid.ndim != 1 or np.any(np.diff(self.eta_grid) <= 0):
            raise ValueError("Tabulated eta grid must be one dimensional and increasing.")
        self.values = {validate_mode(k, 1): np.asarray(v, dtype=complex) for k, v in values.items()}
        self.fallback = fallback

    def __call__(self, k: Mode, eta: np.ndarray) -> np.ndarray:
        eta = np.asarray(eta, dtype=float).reshape(-1)
        inside = (eta >= self.eta_grid[0]) & (eta <= self.eta_grid[-1])
        out = np.zeros(eta.shape, dtype=complex)
        if not np.all(inside):
            if self.fallback is None:
                bad = eta[~inside][0]
                raise ValueError(
                    f"eta={bad} for mode {k} is outside the tabulated grid "
                    f"[{self.eta_grid[0]}, {self.eta_grid[-1]}] and no fallback is set."
                )
            out[~inside] = self.fallback(k, eta[~inside, None])
        samples = self.values.get(tuple(k))
        if samples is not None:
            out[inside] = np.interp(eta[inside], self.eta_grid, samples.real) + 1j * np.interp(
                eta[inside], self.eta_grid, samples.imag
            )
        return out


def gaussian_mode_transform(width: float = 1.0, modes: Optional[Sequence[Mode]] = None):
    """f_hat0(k, eta) = exp(-|eta|^2 width^2 / 2) on the given modes (and their negatives)."""
    allowed = None if modes is None else {tuple(m) for m in modes} | {
        tuple(-c for c in m) for m in modes
    }

    def _transform(k: Mode, eta: np.ndarray) -> np.ndarray:
        eta = np.asarray(eta, dtype=float)
        if allowed is not None and tuple(k) not in allowed:
            return np.zeros(eta.shape[0], dtype=complex)
        return np.exp(-0.5 * width**2 * (eta**2).sum(axis=-1)).astype(complex)

    return _transform


@dataclass
class SourceSeries:
    """S_hat_pm(t, k) = f_hat0_pm(k, k t), rows are times and columns follow `k_set`."""

    times: np.ndarray
    k_set: List[Mode]
    s_plus: np.ndarray
    s_minus: np.ndarray

    def __post_init__(self):
        expected = (len(self.times), len(self.k_set))
        if self.s_plus.shape != expected or self.s_minus.shape != expected:
            raise ValueError(
                f"Source arrays must have shape {expected}, got {self.s_plus.shape} "
                f"and {self.s_minus.shape}."
            )

    @property
    def s(self) -> np.ndarray:
        return self.s_plus - self.s_minus

    @property
    def dim(self) -> int:
        return len(self.k_set[0])

    def as_density(self) -> "DensitySeries":
        """The source viewed as a density series (used to evaluate F[S])."""
        return DensitySeries(self.times, self.k_set, self.s_plus, self.s_minus)


@dataclass
class DensitySeries:
    """
    Species densities rho_hat_pm(t, k) on a time grid; rows are times, columns follow `k_set`.
    """

    times: np.ndarray
    k_set: List[Mode]
    rho_plus: np.ndarray
    rho_minus: np.ndarray
    _e_field: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def rho(self) -> np.ndarray:
        return self.rho_plus - self.rho_minus

    @property
    def dim(self) -> int:
        return len(self.k_set[0])

    @property
    def k_vectors(self) -> np.ndarray:
        return np.asarray(self.k_set, dtype=float)

    @property
    def e_field(self) -> np.ndarray:
        """E_hat(t, k) = -i k rho_hat / |k|^2, shape (n_t, n_k, d)."""
        if self._e_field is None:
            self._e_field = field_from_density(self.rho, self.k_vectors)
        return self._e_field


@dataclass
class KernelSeries:
    """
    Resolvent kernel K_hat(t, k) on a time grid, one column per mode, with the decay fit
    |K_hat| ~ fit_c exp(-fit_theta |k| t) per mode.
    """

    times: np.ndarray
    k_set: List[Mode]
    k_hat: np.ndarray
    theta1: float
    epsilon: float
    fit_c: np.ndarray
    fit_theta: np.ndarray
    resolvent_bound: np.ndarray
    truncation_estimate: np.ndarray

    @classmethod
    def stack(cls, series: Sequence["KernelSeries"]) -> "KernelSeries":
        if not series:
            raise ValueError("Cannot stack an empty list of kernel series.")
        first = series[0]
        for s in series[1:]:
            if s.times.shape != first.times.shape or not np.allclose(s.times, first.times):
                raise ValueError("Kernel series must share one time grid.")
        return cls(
            times=first.times,
            k_set=[k for s in series for k in s.k_set],
            k_hat=np.concatenate([s.k_hat for s in series], axis=1),
            theta1=first.theta1,
            epsilon=first.epsilon,
            fit_c=np.concatenate([s.fit_c for s in series]),
            fit_theta=np.concatenate([s.fit_theta for s in series]),
            resolvent_bound=np.concatenate([s.resolvent_bound for s in series]),
            truncation_estimate=np.concatenate([s.truncation_estimate for s in series]),
        )

    def column(self, k: Mode) -> np.ndarray:
        try:
            return self.k_hat[:, self.k_set.index(tuple(k))]
        except ValueError:
            raise ValueError(f"Mode {k} is not in the kernel series.") from None


class FitReport(NamedTuple):
    c_fit: float
    ok: bool
    c_fit_coarse: float
    f_rho: np.ndarray
    f_source: np.ndarray
    memory_integral: np.ndarray


class ForwardCheck(NamedTuple):
    lambdas: np.ndarray
    computed: np.ndarray
    expected: np.ndarray
    max_rel_error: float


def build_source(
    f0_plus_hat: Optional[InitialTransform],
    f0_minus_hat: Optional[InitialTransform],
    times: np.ndarray,
    k_set: Sequence[Sequence[int]],
) -> SourceSeries:
    """
    Evaluate S_hat_pm(t, k) = f_hat0_pm(k, k t) on the grid.

    Args:
        f0_plus_hat: Ion initial transform, None for zero.
        f0_minus_hat: Electron initial transform, None for zero.
        times: Time nodes.
        k_set: Nonzero modes.

    Returns:
        SourceSeries: the sampled source.
    """
    times = np.asarray(times, dtype=float)
    if not k_set:
        raise ValueError("k_set must contain at least one mode.")
    dim = len(k_set[0]) if np.ndim(k_set[0]) else 1
    modes = [validate_mode(k, dim) for k in k_set]
    n_t, n_k = times.size, len(modes)
    s_plus = np.zeros((n_t, n_k), dtype=complex)
    s_minus = np.zeros((n_t, n_k), dtype=complex)
    for j, k in enumerate(modes):
        eta = np.outer(times, np.asarray(k, dtype=float))
        if f0_plus_hat is not None:
            s_plus[:, j] = f0_plus_hat(k, eta)
        if f0_minus_hat is not None:
            s_minus[:, j] = f0_minus_hat(k, eta)
    return SourceSeries(times=times, k_set=modes, s_plus=s_plus, s_minus=s_minus)


def _volterra_mode(
    s_plus: np.ndarray, s_minus: np.ndarray, kappa: np.ndarray, epsilon: float, dt: float
):
    n_t = s_plus.shape[0]
    rho = np.zeros(n_t, dtype=complex)
    rho_plus = np.zeros(n_t, dtype=complex)
    rho_minus = np.zeros(n_t, dtype=complex)
    for n in range(n_t):
        if n == 0:
            conv = 0.0
        else:
            # kappa(0) = 0 drops the implicit endpoint term
            conv = dt * (0.5 * rho[0] * kappa[n] + np.dot(rho[1:n], kappa[n - 1 : 0 : -1]))
        rho_plus[n] = s_plus[n] - epsilon * conv
        rho_minus[n] = s_minus[n] + conv
        rho[n] = rho_plus[n] - rho_minus[n]
    return rho_plus, rho_minus


def solve_volterra(
    src: SourceSeries, eq: Equilibrium, epsilon: float, max_workers: Optional[int] = None
) -> DensitySeries:
    """
    March the closed density equations
        rho_plus + epsilon (rho * kappa) = S_plus,  rho_minus - (rho * kappa) = S_minus,
    with rho = rho_plus - rho_minus and kappa(t) = t mu_hat(k t), by trapezoidal convolution.
    The scheme is explicit because kappa(0) = 0.
    """
    if epsilon < 0:
        raise ValueError(f"epsilon must be non-negative, got {epsilon}.")
    dt = validate_uniform_grid(src.times)

    def _solve(j: int):
        kappa = eq.laplace_kernel(src.k_set[j], src.times)
        return _volterra_mode(src.s_plus[:, j], src.s_minus[:, j], kappa, epsilon, dt)

    columns = parallel_map(_solve, range(len(src.k_set)), max_workers)
    rho_plus = np.stack([c[0] for c in columns], axis=1)
    rho_minus = np.stack([c[1] for c in columns], axis=1)
    if not (np.all(np.isfinite(rho_plus)) and np.all(np.isfinite(rho_minus))):
        raise NonFiniteValuesError("Volterra marching produced non-finite densities.")
    return DensitySeries(src.times.copy(), list(src.k_set), rho_plus, rho_minus)


def volterra_residual(
    rho: DensitySeries, src: SourceSeries, eq: Equilibrium, epsilon: float
) -> np.ndarray:
    """Per-node max residual of the discrete closed density equations over both species."""
    dt = validate_uniform_grid(src.times)
    out = np.zeros(src.times.size)
    for j, k in enumerate(src.k_set):
        kappa = eq.laplace_kernel(k, src.times)
        conv = trapezoid_convolution(kappa, rho.rho[:, j], dt)
        res_plus = np.abs(rho.rho_plus[:, j] + epsilon * conv - src.s_plus[:, j])
        res_minus = np.abs(rho.rho_minus[:, j] - conv - src.s_minus[:, j])
        out = np.maximum(out, np.maximum(res_plus, res_minus))
    return out


def _decay_fit(times: np.ndarray, values: np.ndarray, k_norm: float):
    lo, hi = KERNEL_FIT_WINDOW
    window = (times >= lo) & (times <= hi)
    t = times[window]
    y = np.abs(values[window])
    if not np.any(y > 0):
        return 0.0, float("inf")
    peaks = strict_local_maxima(y)
    idx = peaks if peaks.size >= 4 else np.nonzero(y > 0)[0]
    if idx.size < 2:
        return float("nan"), float("nan")
    fit = fit_line(k_norm * t[idx], np.log(y[idx]))
    return math.exp(fit.intercept), -fit.slope


def kernel_inverse_laplace(
    eq: Equilibrium,
    epsilon: float,
    k: Sequence[int],
    theta1: float,
    times: np.ndarray,
    tol: float = DEFAULT_TOL,
    denominator_floor: float = KERNEL_DENOMINATOR_FLOOR,
    max_im: float = KERNEL_MAX_IM,
) -> KernelSeries:
    """
    Invert K_tilde = L / (1 + (1 + epsilon) L), L = L[t mu_hat(k t)], along Re lambda = -theta1 |k|.

    The asymptote q(lambda) = (lambda + 3a) / (lambda + a)^3, whose inverse transform is
    (t + a t^2) e^{-a t}, is subtracted in closed form so the remaining integrand decays like
    |lambda|^-4. K_hat is real, so only Im lambda >= 0 is integrated.

    Args:
        eq: A certified equilibrium.
        epsilon: Mass ratio, non-negative.
        k: Nonzero mode.
        theta1: Contour offset, 0 < theta1 < theta0.
        times: Time nodes (non-negative).
        tol: Target absolute error of the contour truncation.
        denominator_floor: Smallest admissible |1 + (1 + epsilon) L| on the contour.
        max_im: Largest admissible truncation of Im lambda.

    Returns:
        KernelSeries: a single-mode series.
    """
    if epsilon < 0:
        raise ValueError(f"epsilon must be non-negative, got {epsilon}.")
    if not 0 < theta1 < eq.theta0:
        raise ValueError(f"theta1 must satisfy 0 < theta1 < theta0={eq.theta0}, got {theta1}.")
    k = validate_mode(k, eq.dim)
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0 or times.min() < 0:
        raise ValueError("Kernel times must be a non-empty array of non-negative values.")
    k_norm = mode_norm(k)
    n_t = times.size

    if eq.c_mu == 0.0:
        return KernelSeries(
            times=times,
            k_set=[k],
            k_hat=np.zeros((n_t, 1)),
            theta1=theta1,
            epsilon=epsilon,
            fit_c=np.zeros(1),
            fit_theta=np.full(1, np.inf),
            resolvent_bound=np.zeros(1),
            truncation_estimate=np.zeros(1),
        )

    shift = -theta1 * k_norm
    a = 2.0 * theta1 * k_norm + 1.0

    def _remainder(lam: np.ndarray):
        moment = laplace_moment(eq, k, lam, tol=tol)
        denominator = 1.0 + (1.0 + epsilon) * moment
        resolvent = moment / denominator
        return resolvent - (lam + 3.0 * a) / (lam + a) ** 3, resolvent, denominator

    far = np.array([shift + 100j * (1.0 + k_norm)])
    beta = float(np.abs(_remainder(far)[0][0]) * np.abs(far[0]) ** 4)
    y_max = max(200.0, (beta / (3.0 * math.pi * tol)) ** (1.0 / 3.0))
    if y_max > max_im:
        raise ValueError(
            f"Contour truncation at Im lambda={y_max:.4g} exceeds the limit {max_im:.4g} "
            f"needed to reach tol={tol}."
        )
    # t + 2 pi / h must stay beyond the grid where K_hat has decayed below tol
    t_end = float(times.max())
    period = max(2.0 * t_end, t_end + math.log(1.0 / tol) / (theta1 * k_norm))
    h = min(0.1, 2.0 * math.pi / period)
    y = np.arange(0.0, y_max + 0.5 * h, h)
    lam = shift + 1j * y
    remainder, resolvent, denominator = _remainder(lam)
    floor_seen = float(np.abs(denominator).min())
    if floor_seen < denominator_floor:
        raise PenroseViolation(
            f"|1 + (1+eps) L| = {floor_seen:.3g} on the contour for k={k} is below the floor "
            f"{denominator_floor}."
        )
    resolvent_bound = float(np.max(np.abs(resolvent) * (1.0 + k_norm**2 + y**2)))
    weights = np.full(y.size, h)
    weights[0] = 0.5 * h
    weighted = weights * remainder

    k_hat = (times + a * times**2) * np.exp(-a * times)
    chunk = max(1, int(4_000_000 // max(y.size, 1)))
    for start in range(0, n_t, chunk):
        t = times[start : start + chunk]
        contour = (np.exp(1j * np.outer(t, y)) @ weighted).real
        k_hat[start : start + chunk] += np.exp(shift * t) * contour / math.pi
    if not np.all(np.isfinite(k_hat)):
        raise NonFiniteValuesError(f"Kernel inversion produced non-finite values for k={k}.")
    fit_c, fit_theta = _decay_fit(times, k_hat, k_norm)
    truncation = beta / (3.0 * math.pi * y_max**3)
    _logger.debug(
        f"Kernel k={k}: {y.size} contour nodes up to {y_max:.4g}, fit_theta={fit_theta:.4g}"
    )
    return KernelSeries(
        times=times,
        k_set=[k],
        k_hat=k_hat[:, None],
        theta1=theta1,
        epsilon=epsilon,
        fit_c=np.array([fit_c]),
        fit_theta=np.array([fit_theta]),
        resolvent_bound=np.array([resolvent_bound]),
        truncation_estimate=np.array([truncation]),
    )


def kernel_series(
    eq: Equilibrium,
    epsilon: float,
    k_set: Sequence[Sequence[int]],
    theta1: float,
    times: np.ndarray,
    tol: float = DEFAULT_TOL,
    max_workers: Optional[int] = None,
) -> KernelSeries:
    """Kernel inversion for every mode of `k_set`, in mode order."""
    series = parallel_map(
        lambda k: kernel_inverse_laplace(eq, epsilon, k, theta1, times, tol=tol),
        list(k_set),
        max_workers,
    )
    return KernelSeries.stack(series)


def forward_laplace_check(
    ker: KernelSeries,
    eq: Equilibrium,
    k: Sequence[int],
    im_parts: Sequence[float] = (0.0, 0.5, 1.0, 2.0, 3.0),
    re_part: float = KERNEL_FORWARD_RE,
) -> ForwardCheck:
    """
    Forward transform of the computed K_hat at Re lambda = `re_part` by Simpson's rule,
    compared with K_tilde evaluated directly.
    """
    k = validate_mode(k, eq.dim)
    column = ker.column(k)
    lambdas = re_part + 1j * np.asarray(im_parts, dtype=float)
    integrand = np.exp(-np.outer(lambdas, ker.times)) * column[None, :]
    computed = simpson(integrand, x=ker.times, axis=-1)
    moment = laplace_moment(eq, k, lambdas)
    expected = moment / (1.0 + (1.0 + ker.epsilon) * moment)
    scale = np.maximum(np.abs(expected), 1e-300)
    max_rel = float(np.max(np.abs(computed - expected) / scale))
    return ForwardCheck(lambdas, computed, expected, max_rel)


def reconstruct_rho(src: SourceSeries, ker: KernelSeries, epsilon: float) -> DensitySeries:
    """
    rho = S - (1 + epsilon) K * S with the species split
        rho_plus = S_plus - epsilon K * S,  rho_minus = S_minus + K * S,
    using trapezoidal convolution on the shared grid.
    """
    same_grid = src.times.shape == ker.times.shape and np.allclose(
        src.times, ker.times, rtol=0, atol=1e-12
    )
    if not same_grid:
        raise ValueError("Source and kernel must share the same time grid.")
    dt = validate_uniform_grid(src.times)
    rho_plus = np.empty_like(src.s_plus)
    rho_minus = np.empty_like(src.s_minus)
    s = src.s
    for j, k in enumerate(src.k_set):
        conv = trapezoid_convolution(ker.column(k).astype(complex), s[:, j], dt)
        rho_plus[:, j] = src.s_plus[:, j] - epsilon * conv
        rho_minus[:, j] = src.s_minus[:, j] + conv
    return DensitySeries(src.times.copy(), list(src.k_set), rho_plus, rho_minus)


def _gevrey_constant(f_rho: np.ndarray, f_source: np.ndarray, memory: np.ndarray) -> float:
    scale = max(float(np.max(f_rho, initial=0.0)), float(np.max(f_source, initial=0.0)), 1e-300)
    excess = f_rho - f_source
    excess = np.where(excess <= 1e-12 * scale, 0.0, excess)
    if np.any((excess > 0) & (memory <= 0)):
        return float("inf")
    ratios = np.divide(excess, memory, out=np.zeros_like(excess), where=memory > 0)
    return float(np.max(ratios, initial=0.0))


def verify_linear_gevrey(
    rho: DensitySeries,
    src: SourceSeries,
    params: GevreyParams,
    theta1: float,
    *,
    eq: Equilibrium,
    epsilon: float,
    z: Optional[float] = None,
    stability_tol: float = 0.05,
) -> FitReport:
    """
    Smallest C with F[rho](t) <= F[S](t) + C int_0^t e^{-theta1 (t-s)/4} F[S](s) ds at every
    node, for the generator radius z (default `params.z_eval`).

    `ok` requires C to be finite and to move by less than `stability_tol` (relative) when the
    density is re-solved by Volterra marching on the grid with twice the step.
    """
    z = params.z_eval if z is None else z
    if not 0.0 <= z <= 0.5 * theta1:
        raise ValueError(f"z must lie in [0, theta1/2] = [0, {0.5 * theta1}], got {z}.")
    if src.times.size < 3:
        raise ValueError(f"Need at least 3 time nodes, got {src.times.size}.")
    dt = validate_uniform_grid(src.times)
    f_rho = f_functional_series(rho, z, params)
    f_source = f_functional_series(src.as_density(), z, params)
    rate = 0.25 * theta1
    memory = exponential_memory_integral(f_source, dt, rate)
    c_fit = _gevrey_constant(f_rho, f_source, memory)

    # S(t, k) = f0(k, k t) is exact on any grid, so subsampling gives the coarse source
    src_coarse = SourceSeries(src.times[::2], list(src.k_set), src.s_plus[::2], src.s_minus[::2])
    rho_coarse = solve_volterra(src_coarse, eq, epsilon)
    f_rho_coarse = f_functional_series(rho_coarse, z, params)
    memory_coarse = exponential_memory_integral(f_source[::2], 2.0 * dt, rate)
    c_coarse = _gevrey_constant(f_rho_coarse, f_source[::2], memory_coarse)
    stable = abs(c_fit - c_coarse) <= stability_tol * max(c_fit, c_coarse) or c_fit == c_coarse
    ok = math.isfinite(c_fit) and stable
    _logger.info(f"Linear Gevrey estimate at z={z}: c_fit={c_fit:.6g} (coarse {c_coarse:.6g})")
    return FitReport(c_fit, ok, c_coarse, f_rho, f_source, memory)


def source_from_modes(
    times: np.ndarray,
    k_set: Sequence[Mode],
    width: float = 1.0,
    species: Union[str, Sequence[str]] = "plus",
) -> SourceSeries:
    """Gaussian-in-eta initial modes on `k_set` for the selected species."""
    species = [species] if isinstance(species, str) else list(species)
    unknown = set(species) - {"plus", "minus"}
    if unknown:
        raise ValueError(f"Unknown species {sorted(unknown)}, expecting 'plus' or 'minus'.")
    transform = gaussian_mode_transform(width, k_set)
    return build_source(
        transform if "plus" in species else None,
        transform if "minus" in species else None,
        times,
        k_set,
    )
