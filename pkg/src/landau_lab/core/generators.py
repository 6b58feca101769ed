import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, List, Literal, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from landau_lab.core.errors import EmbeddingViolation, WeightOverflowError
from landau_lab.core.utils.config import LOG_FLOAT_MAX, SUPPORTED_DIMENSIONS, TWO_PI
from landau_lab.core.utils.fitting_utils import fit_line, strict_local_maxima
from landau_lab.core.utils.validation_utils import Mode

if TYPE_CHECKING:
    from landau_lab.core.linear_theory import DensitySeries

_logger = logging.getLogger(__name__)

OverflowPolicy = Literal["raise", "report"]


class GevreyParams(BaseModel):
    """
    Parameters of the Gevrey weights and the radius schedule.

    Single-field ranges are enforced on construction; constraints that couple fields or
    involve the contour offset theta1 are listed by `violations` so a run configuration can
    report all of them at once.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    dim: int = Field(default=1, description="Spatial dimension d.")
    gamma: float = Field(default=1.0, gt=0.0, le=1.0, description="Gevrey index.")
    sigma: float = Field(default=4.0, gt=0.0, description="Polynomial weight exponent.")
    alpha: float = Field(default=0.2, gt=0.0, description="Low-frequency exponent on |k|.")
    lambda0: float = Field(default=0.05, gt=0.0, le=1.0, description="Final radius.")
    delta: float = Field(default=0.5, gt=0.0, lt=1.0, description="Radius schedule exponent.")
    lambda1: float = Field(default=0.2, gt=0.0, description="Radius of the initial data.")
    z_eval: float = Field(default=0.05, ge=0.0, description="Radius used for diagnostics.")
    dz: float = Field(default=1e-3, gt=0.0, description="Step of the z finite difference.")

    @field_validator("dim")
    @classmethod
    def _check_dim(cls, value: int) -> int:
        if value not in SUPPORTED_DIMENSIONS:
            raise ValueError(f"dim must be one of {SUPPORTED_DIMENSIONS}, got {value}")
        return value

    def violations(self, theta1: Optional[float] = None) -> List[str]:
        d = self.dim
        errors = []
        sigma_bound = max(d + 1, 3)
        if not self.sigma > sigma_bound:
            errors.append(f"sigma must exceed max{{d+1,3}}={sigma_bound}")
        if not self.alpha < 1.0 / (d + 1):
            errors.append(f"alpha must be below 1/(d+1)={1.0 / (d + 1):.6g}")
        if not self.delta < self.sigma - 3.0:
            errors.append(f"delta must be below sigma-3={self.sigma - 3.0:.6g}")
        lambda0_cap = 0.25 * self.lambda1 if theta1 is None else 0.25 * min(self.lambda1, theta1)
        if self.lambda0 > lambda0_cap:
            errors.append(f"lambda0 must not exceed min(lambda1/4, theta1/4)={lambda0_cap:.6g}")
        if theta1 is not None and self.z_eval > 0.5 * theta1:
            errors.append(f"z_eval must lie in [0, theta1/2]=[0, {0.5 * theta1:.6g}]")
        if self.gamma < 1.0 and not 3.0 * self.gamma > 1.0 + 2.0 * self.delta:
            _logger.warning(
                f"Gevrey index gamma={self.gamma} with delta={self.delta} does not satisfy "
                "3 gamma > 1 + 2 delta; the nonlinear decay estimate needs it."
            )
        return errors


@dataclass
class GlidingSpectrum:
    """
    Gliding-frame unknowns g_hat_pm(t, k, eta) and their eta-gradients at one time.

    Arrays follow numpy FFT order along each eta axis.

    Attributes:
        t: Time of the snapshot.
        k_vectors: Integer modes, shape (n_modes, d).
        eta_axes: One frequency axis per velocity dimension.
        g_plus, g_minus: shape (n_modes,) + (n_v,) * d.
        dg_plus, dg_minus: shape (n_modes, d) + (n_v,) * d.
    """

    t: float
    k_vectors: np.ndarray
    eta_axes: Tuple[np.ndarray, ...]
    g_plus: np.ndarray
    g_minus: np.ndarray
    dg_plus: np.ndarray
    dg_minus: np.ndarray

    @property
    def dim(self) -> int:
        return self.k_vectors.shape[1]

    @property
    def d_eta(self) -> float:
        steps = [abs(axis[1] - axis[0]) if axis.size > 1 else 1.0 for axis in self.eta_axes]
        return float(np.prod(steps))

    def eta_points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.eta_axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def scaled(self, c: complex) -> "GlidingSpectrum":
        return GlidingSpectrum(
            self.t,
            self.k_vectors,
            self.eta_axes,
            c * self.g_plus,
            c * self.g_minus,
            c * self.dg_plus,
            c * self.dg_minus,
        )


class FValue(NamedTuple):
    value: float
    argmax_k: Optional[Mode]
    edge_ratio: float


class GReport(NamedTuple):
    value: float
    quad_error: float
    tail_ratio: float
    k_tail_estimate: float
    log_max: float
    overflow_log_values: Tuple[float, ...] = ()


class Ratio(NamedTuple):
    c0_est: float


class DecayFit(NamedTuple):
    lambda_fit: float
    c_fit: float
    r2: float
    n_points: int
    used_peaks: bool


class GeneratorSnapshot(NamedTuple):
    """F and G at one time, with G also at z + dz for the z-derivative."""

    t: float
    z: float
    dz: float
    F: float
    G: float
    G_dz: float


class L41Report(NamedTuple):
    c_min: float
    c_per_interval: np.ndarray
    ok: bool


def _sq_norm(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x**2 if x.ndim == 0 else (x**2).sum(axis=-1)


def bracket(k, eta) -> Union[float, np.ndarray]:
    """
    <k, eta> = sqrt(1 + |k|^2 + |eta|^2). The last axis of array input is the component axis;
    scalars are one-dimensional vectors.
    """
    value = np.sqrt(1.0 + _sq_norm(k) + _sq_norm(eta))
    return float(value) if np.ndim(value) == 0 else value


def log_weight(k, eta, z: float, p: GevreyParams) -> Union[float, np.ndarray]:
    """log A_{k,eta} = z <k,eta>^gamma + sigma log <k,eta>."""
    b = np.asarray(bracket(k, eta))
    value = z * b**p.gamma + p.sigma * np.log(b)
    return float(value) if value.ndim == 0 else value


def weight(k, eta, z: float, p: GevreyParams) -> Union[float, np.ndarray]:
    with np.errstate(over="ignore"):
        value = np.exp(np.asarray(log_weight(k, eta, z, p)))
    return float(value) if value.ndim == 0 else value


def _density_log_terms(rho: "DensitySeries", z, p: GevreyParams, k_max: Optional[int]):
    times = np.asarray(rho.times, dtype=float)
    kv = rho.k_vectors
    keep = np.any(kv != 0, axis=1)
    if k_max is not None:
        keep &= np.max(np.abs(kv), axis=1) <= k_max
    kv = kv[keep]
    magnitude = np.abs(rho.rho[:, keep])
    z = np.broadcast_to(np.asarray(z, dtype=float), times.shape)
    b = np.sqrt(1.0 + (kv**2).sum(axis=1)[None, :] * (1.0 + times[:, None] ** 2))
    k_norm = np.sqrt((kv**2).sum(axis=1))
    with np.errstate(divide="ignore"):
        log_terms = (
            z[:, None] * b**p.gamma
            + p.sigma * np.log(b)
            - p.alpha * np.log(k_norm)[None, :]
            + np.log(magnitude)
        )
    if np.any(log_terms > LOG_FLOAT_MAX):
        i_t, i_k = np.argwhere(log_terms > LOG_FLOAT_MAX)[0]
        k = tuple(int(c) for c in kv[i_k])
        raise WeightOverflowError(
            f"Weighted density overflows at k={k}, t={times[i_t]:.6g} "
            f"(log value {log_terms[i_t, i_k]:.6g}).",
            k=k,
            location=float(times[i_t]),
        )
    return log_terms, kv


def f_functional_series(
    rho: "DensitySeries", z, p: GevreyParams, k_max: Optional[int] = None
) -> np.ndarray:
    """
    F[rho](t, z) = sup_{k != 0} e^{z <k,kt>^gamma} |rho_hat(t,k)| <k,kt>^sigma |k|^-alpha at
    every time of the series. `z` may be a scalar or one radius per time.
    """
    if np.any(np.asarray(z) < 0):
        raise ValueError(f"z must be non-negative, got {z}.")
    log_terms, _ = _density_log_terms(rho, z, p, k_max)
    if log_terms.shape[1] == 0:
        return np.zeros(log_terms.shape[0])
    return np.exp(log_terms.max(axis=1))


def f_functional(
    rho: "DensitySeries", t: float, z: float, p: GevreyParams, k_max: Optional[int] = None
) -> FValue:
    """
    F[rho](t, z) at one time of the series, with the maximizing mode and the ratio of the
    largest weighted term on the outermost mode shell to F (a truncation report).
    """
    times = np.asarray(rho.times, dtype=float)
    matches = np.nonzero(np.isclose(times, t, rtol=0.0, atol=1e-9 * max(1.0, abs(t))))[0]
    if matches.size == 0:
        raise ValueError(f"t={t} is not a node of the density series.")
    i_t = int(matches[0])
    if z < 0:
        raise ValueError(f"z must be non-negative, got {z}.")
    log_terms, kv = _density_log_terms(rho, z, p, k_max)
    row = log_terms[i_t]
    if row.size == 0 or not np.any(np.isfinite(row)):
        return FValue(0.0, None, 0.0)
    i_k = int(np.argmax(row))
    value = math.exp(row[i_k])
    shell = np.max(np.abs(kv), axis=1)
    edge = row[shell == shell.max()]
    edge_ratio = float(np.exp(edge.max() - row[i_k])) if np.any(np.isfinite(edge)) else 0.0
    return FValue(value, tuple(int(c) for c in kv[i_k]), edge_ratio)


def g_functional(
    spectrum: GlidingSpectrum,
    z: float,
    p: GevreyParams,
    quad_tol: float = 1e-3,
    on_overflow: OverflowPolicy = "raise",
) -> GReport:
    """
    G[g](z) = sum_{|j|<=1} sum_k int e^{(d+1) z <k,eta>^gamma} <k,eta>^{(d+1) sigma}
              (|d^j g_plus|^{d+1} + |d^j g_minus|^{d+1}) d eta

    on the spectrum's eta grid, summed in log space. The quadrature error is estimated by
    comparison with the sum over every other eta node.

    Args:
        spectrum: Gliding-frame values and gradients.
        z: Radius, non-negative.
        p: Weight parameters.
        quad_tol: Largest admissible relative quadrature error estimate.
        on_overflow: "raise" fails on entries beyond the double range, "report" drops them
            and lists their log values.

    Returns:
        GReport: value with quadrature, eta-tail and k-tail estimates.
    """
    if z < 0:
        raise ValueError(f"z must be non-negative, got {z}.")
    d = spectrum.dim
    eta = spectrum.eta_points()
    kv = spectrum.k_vectors.astype(float).reshape((-1,) + (1,) * d + (d,))
    b = np.sqrt(1.0 + (kv**2).sum(axis=-1) + (eta**2).sum(axis=-1)[None])
    log_w = (d + 1) * (z * b**p.gamma + p.sigma * np.log(b))
    components = [spectrum.g_plus, spectrum.g_minus]
    components += [spectrum.dg_plus[:, i] for i in range(d)]
    components += [spectrum.dg_minus[:, i] for i in range(d)]
    with np.errstate(divide="ignore"):
        log_terms = np.stack([log_w + (d + 1) * np.log(np.abs(c)) for c in components])
    finite = np.isfinite(log_terms)
    if not np.any(finite):
        return GReport(0.0, 0.0, 0.0, 0.0, float("-inf"))
    log_max = float(log_terms[finite].max())
    limit = LOG_FLOAT_MAX - math.log(log_terms.size)
    overflow: Tuple[float, ...] = ()
    if log_max > limit:
        if on_overflow == "raise":
            masked = np.where(finite, log_terms, -np.inf)
            idx = np.unravel_index(int(np.argmax(masked)), log_terms.shape)
            k = tuple(int(c) for c in spectrum.k_vectors[idx[1]])
            location = tuple(float(axis[i]) for axis, i in zip(spectrum.eta_axes, idx[2:]))
            raise WeightOverflowError(
                f"Weighted gliding spectrum overflows at k={k}, eta={location}, "
                f"t={spectrum.t:.6g} (log value {log_max:.6g}).",
                k=k,
                location=location,
            )
        over = log_terms > limit
        overflow = tuple(float(v) for v in np.sort(log_terms[over])[::-1])
        log_terms = np.where(over, -np.inf, log_terms)
        _logger.warning(f"{len(overflow)} generator entries overflow and are reported apart")

    integrand = np.exp(log_terms).sum(axis=0)
    d_eta = spectrum.d_eta
    value = d_eta * float(integrand.sum())
    coarse_slice = (slice(None),) + (slice(None, None, 2),) * d
    coarse = d_eta * 2**d * float(integrand[coarse_slice].sum())
    quad_error = abs(value - coarse)
    if value > 0 and quad_error > quad_tol * value:
        raise ValueError(
            f"eta grid too coarse for G at t={spectrum.t:.6g}: relative quadrature estimate "
            f"{quad_error / value:.3g} exceeds {quad_tol}."
        )
    outer = np.zeros(eta.shape[:-1], dtype=bool)
    for i, axis in enumerate(spectrum.eta_axes):
        outer |= np.abs(eta[..., i]) >= 0.9 * np.abs(axis).max()
    tail_ratio = float(integrand[:, outer].sum() / integrand.sum()) if value > 0 else 0.0

    shells = np.max(np.abs(spectrum.k_vectors), axis=1)
    per_mode = integrand.reshape(integrand.shape[0], -1).sum(axis=1)
    k_tail = 0.0
    top = int(shells.max())
    if top >= 2:
        last = per_mode[shells == top].sum()
        previous = per_mode[shells == top - 1].sum()
        if last > 0 and previous > 0:
            ratio = last / previous
            if ratio < 1.0:
                k_tail = d_eta * last * ratio / (1.0 - ratio)
            else:
                k_tail = float("inf")
                _logger.warning(
                    f"k-sum of G does not decay at the truncation shell (t={spectrum.t:.6g})"
                )
    return GReport(value, quad_error, tail_ratio, k_tail, log_max, overflow)


def sup_weighted_difference(spectrum: GlidingSpectrum, z: float, p: GevreyParams) -> float:
    """sup_{k, eta} A_{k,eta} |g_plus - g_minus|, bounded by a multiple of G^{1/(d+1)}."""
    d = spectrum.dim
    eta = spectrum.eta_points()
    kv = spectrum.k_vectors.astype(float).reshape((-1,) + (1,) * d + (d,))
    log_a = log_weight(kv, eta[None], z, p)
    with np.errstate(divide="ignore"):
        log_terms = log_a + np.log(np.abs(spectrum.g_plus - spectrum.g_minus))
    best = float(np.max(log_terms))
    if best > LOG_FLOAT_MAX:
        raise WeightOverflowError(f"Weighted difference overflows (log value {best:.6g}).")
    return math.exp(best) if math.isfinite(best) else 0.0


def lambda_schedule(t, p: GevreyParams):
    """lambda(t) = lambda0 + lambda0 (1 + t)^-delta."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError(f"t must be non-negative, got {t}.")
    value = p.lambda0 + p.lambda0 * (1.0 + t_arr) ** (-p.delta)
    return float(value) if value.ndim == 0 else value


def check_embedding(F_val: float, G_val: float, d: int) -> Ratio:
    """c0_est = F / G^{1/(d+1)}, 0 when both vanish."""
    if F_val < 0 or G_val < 0:
        raise ValueError(f"F and G must be non-negative, got F={F_val}, G={G_val}.")
    if G_val == 0.0:
        if F_val > 0.0:
            raise EmbeddingViolation(f"G vanishes while F={F_val:.6g} is positive.")
        return Ratio(0.0)
    return Ratio(F_val / G_val ** (1.0 / (d + 1)))


def fit_decay(times, values, t_lo: float, t_hi: float) -> DecayFit:
    """
    Fit log e(t) = log c - lambda <t>, <t> = sqrt(1 + t^2), on [t_lo, t_hi].

    Oscillating series are fitted through their strict local maxima when there are at least
    four of them; otherwise every positive sample is used.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    window = (times >= t_lo) & (times <= t_hi)
    t = times[window]
    y = values[window]
    peaks = strict_local_maxima(y)
    peaks = peaks[y[peaks] > 0]
    used_peaks = peaks.size >= 4
    idx = peaks if used_peaks else np.nonzero(y > 0)[0]
    if idx.size < 4:
        raise ValueError(
            f"Need at least 4 positive samples in [{t_lo}, {t_hi}] to fit a decay, got {idx.size}."
        )
    fit = fit_line(np.sqrt(1.0 + t[idx] ** 2), np.log(y[idx]))
    return DecayFit(
        lambda_fit=-fit.slope,
        c_fit=math.exp(fit.intercept),
        r2=fit.r2,
        n_points=int(idx.size),
        used_peaks=bool(used_peaks),
    )


def check_L41_inequality(snapshots: Sequence[GeneratorSnapshot], p: GevreyParams) -> L41Report:
    """
    Minimal C with d_t G <= C F G^{d/(d+1)} + C (1+t) F d_z G between consecutive snapshots.

    d_t G is a forward difference in time, d_z G a forward difference in z; F, G and d_z G are
    averaged over each interval. Intervals where G does not grow need C = 0.
    """
    if len(snapshots) < 2:
        raise ValueError("Need at least two snapshots to difference G in time.")
    d = p.dim
    ordered = sorted(snapshots, key=lambda s: s.t)
    constants = []
    for a, b in zip(ordered[:-1], ordered[1:]):
        if a.z != b.z or a.dz != b.dz:
            raise ValueError("Consecutive snapshots must share z and dz.")
        dt = b.t - a.t
        if dt <= 0:
            raise ValueError(f"Snapshots at t={a.t} and t={b.t} are not strictly ordered.")
        dz_a = (a.G_dz - a.G) / a.dz
        dz_b = (b.G_dz - b.G) / b.dz
        scale = max(a.G, b.G, 1e-300)
        if min(a.G_dz - a.G, b.G_dz - b.G) < -1e-12 * scale:
            raise ValueError(
                f"G decreases in z near t={a.t:.6g}; the z spacing {a.dz} is too coarse to "
                "difference it."
            )
        dt_g = (b.G - a.G) / dt
        f_mid = 0.5 * (a.F + b.F)
        g_mid = 0.5 * (a.G + b.G)
        dz_mid = max(0.5 * (dz_a + dz_b), 0.0)
        rhs = f_mid * g_mid ** (d / (d + 1.0)) + (1.0 + 0.5 * (a.t + b.t)) * f_mid * dz_mid
        if dt_g <= 0:
            constants.append(0.0)
        elif rhs > 0:
            constants.append(dt_g / rhs)
        else:
            constants.append(float("inf"))
    c = np.array(constants)
    c_min = float(c.max())
    return L41Report(c_min=c_min, c_per_interval=c, ok=math.isfinite(c_min))


def comparison_constant(sigma: float, theta1: float) -> float:
    """
    C with e^{z<k,kt>^gamma} <k,kt>^sigma e^{-theta1|k|(t-s)}
        <= C e^{-theta1|k|(t-s)/4} e^{z<k,ks>^gamma} <k,ks>^sigma
    for 0 <= s <= t, |k| >= 1, z <= theta1/2, gamma <= 1.

    For s <= t/2 the polynomial factor is absorbed by sup_t [(sigma/2) ln(1+t^2) - theta1 t/8];
    for s > t/2 the bracket ratio is at most 2.
    """
    if sigma <= 0 or theta1 <= 0:
        raise ValueError(f"sigma and theta1 must be positive, got {sigma}, {theta1}.")
    t = np.linspace(0.0, 64.0 * sigma / theta1 + 10.0, 200_001)
    early = float(np.max(0.5 * sigma * np.log1p(t**2) - theta1 * t / 8.0))
    return math.exp(max(early, sigma * math.log(2.0)))


def comparison_log_ratio(
    k, s: float, t: float, z: float, p: GevreyParams, theta1: float
) -> float:
    """
    log of the left side over e^{-theta1|k|(t-s)/4} e^{z<k,ks>^gamma} <k,ks>^sigma in the
    comparison inequality; never above log comparison_constant.
    """
    k = np.asarray(k, dtype=float)
    k_norm = float(np.sqrt(_sq_norm(k)))
    lhs = log_weight(k, k * t, z, p) - theta1 * k_norm * (t - s)
    rhs = log_weight(k, k * s, z, p) - 0.25 * theta1 * k_norm * (t - s)
    return float(lhs - rhs)


def field_sup_bound(e_hat: np.ndarray, dim: int) -> Union[float, np.ndarray]:
    """(2 pi)^-d sum_k |E_hat(k)|, a bound on sup_x |E|. `e_hat` has shape (..., n_k, d)."""
    total = np.sqrt((np.abs(e_hat) ** 2).sum(axis=-1)).sum(axis=-1) / TWO_PI**dim
    return float(total) if np.ndim(total) == 0 else total


def field_envelope(
    F_val: float, t: float, z: float, p: GevreyParams, k_vectors: np.ndarray
) -> float:
    """
    Bound on (2 pi)^-d sum_k |E_hat(t,k)| implied by F[rho](t, z) = F_val over the given modes:
    |E_hat| <= F e^{-z<k,kt>^gamma} <k,kt>^-sigma |k|^(alpha-1).
    """
    kv = np.asarray(k_vectors, dtype=float)
    kv = kv[np.any(kv != 0, axis=1)]
    k_norm = np.sqrt((kv**2).sum(axis=1))
    b = np.sqrt(1.0 + k_norm**2 * (1.0 + t**2))
    terms = np.exp(-z * b**p.gamma - p.sigma * np.log(b) + (p.alpha - 1.0) * np.log(k_norm))
    return float(F_val * terms.sum() / TWO_PI**p.dim)
