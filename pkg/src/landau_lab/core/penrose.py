import logging
import math
from dataclasses import dataclass, field
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np

from landau_lab.core.equilibria import Equilibrium
from landau_lab.core.errors import NonFiniteValuesError
from landau_lab.core.utils.config import (
    DEFAULT_TOL,
    PENROSE_INTERIOR_RE,
    PENROSE_INTERIOR_STEP,
)
from landau_lab.core.utils.parallel_utils import parallel_map
from landau_lab.core.utils.quadrature_utils import gauss_legendre_panels
from landau_lab.core.utils.validation_utils import Mode, mode_norm, validate_mode

_logger = logging.getLogger(__name__)

QuadratureMethod = Literal["auto", "closed", "quadrature"]

_LAMBDA_CHUNK = 256
_ENVELOPE_SAMPLES = 4097


@dataclass(frozen=True)
class DispersionQuery:
    """A point (k, lambda) at which to evaluate D(lambda, k; alpha)."""

    k: Mode
    lam: complex
    alpha: float = 0.0

    def __post_init__(self):
        if np.ndim(self.k) == 0:
            object.__setattr__(self, "k", (int(self.k),))
        mode = validate_mode(self.k, len(self.k))
        object.__setattr__(self, "k", mode)
        if self.alpha < 0:
            raise ValueError(f"alpha must be non-negative, got {self.alpha}.")


@dataclass
class PenroseSamples:
    modes: List[Mode]
    tau: np.ndarray
    # |D(i tau, k)|, shape (len(modes), len(tau))
    modulus: np.ndarray


@dataclass
class PenroseReport:
    """
    Outcome of a boundary scan of |D| over Re lambda = 0.

    `tail_bound` bounds |D - 1| outside the scanned region, so
    `certified_lower_bound` is a lower bound for |D| on the whole closed half plane
    (up to the grid resolution of the scan).
    """

    inf_modulus: float
    argmin_k: Mode
    argmin_lambda: complex
    boundary_radius: float
    tail_bound: float
    mode_tail: float
    frequency_tail: float
    kappa0: float
    kappa_half_ok: bool
    alpha0: float
    certified_lower_bound: float
    interior_min: float
    interior_flag: bool
    samples: Optional[PenroseSamples] = field(default=None, repr=False)

    @property
    def argmin_tau(self) -> float:
        return float(self.argmin_lambda.imag)

    def summary(self) -> str:
        k = ",".join(str(c) for c in self.argmin_k)
        return f"inf={self.inf_modulus:.12g} at k=({k}) imlambda={self.argmin_tau:.6g}"


def _laplace_horizon(eq: Equilibrium, k_norm: float, shift: float, tol: float) -> float:
    """
    Truncation T such that int_T^inf t e^{shift t} |mu_hat(k t)| dt < tol.

    The (H1) bound C e^{-theta0 |k| t} gives a first horizon; a tighter equilibrium envelope,
    when provided, is integrated numerically to shorten it.
    """
    rate = eq.theta0 * k_norm - shift
    t_h1 = None
    if rate > 0:
        c = max(eq.c_mu, 1e-300)
        t = 1.0 / rate
        for _ in range(100):
            bound = c * (t / rate + 1.0 / rate**2) / (0.5 * tol)
            t_next = max(1.0 / k_norm, math.log(max(bound, 1.0)) / rate)
            converged = abs(t_next - t) <= 1e-9 * t_next
            t = t_next
            if converged:
                break
        t_h1 = t
    if eq.envelope is None:
        if t_h1 is None:
            raise ValueError(
                f"Cannot bound the Laplace integrand at Re lambda = {-shift} for |k|={k_norm}: "
                "no decay left inside the analyticity strip."
            )
        return t_h1
    t_cap = t_h1 if t_h1 is not None else 200.0 / k_norm
    t = np.linspace(0.0, t_cap, _ENVELOPE_SAMPLES)
    integrand = t * np.exp(shift * t) * eq.envelope(k_norm * t)
    pieces = 0.5 * (integrand[1:] + integrand[:-1]) * np.diff(t)
    tail = np.concatenate([np.cumsum(pieces[::-1])[::-1], [0.0]])
    below = np.nonzero(tail < 0.5 * tol)[0]
    horizon = t_cap if below.size == 0 else float(t[below[0]])
    return max(horizon, 1.0 / k_norm)


def laplace_moment(
    eq: Equilibrium,
    k: Sequence[int],
    lam,
    tol: float = DEFAULT_TOL,
    method: QuadratureMethod = "auto",
    horizon: Optional[float] = None,
) -> np.ndarray:
    """
    L[t mu_hat(k t)](lambda) = int_0^inf e^{-lambda t} t mu_hat(k t) dt for an array of lambdas.

    Args:
        eq: A certified equilibrium.
        k: Nonzero mode.
        lam: Complex scalar or array.
        tol: Absolute accuracy target of the quadrature.
        method: "closed" uses the equilibrium's closed form, "quadrature" composite
            Gauss-Legendre panels on [0, T], "auto" the closed form when available.
        horizon: Override of the truncation T (quadrature only).

    Returns:
        np.ndarray: complex values with the shape of `lam`.
    """
    k = validate_mode(k, eq.dim)
    if not eq.certified:
        raise ValueError(f"Equilibrium {eq.name} has not been certified for (H1).")
    lam = np.asarray(lam, dtype=complex)
    k_norm = mode_norm(k)
    if eq.c_mu == 0.0:
        return np.zeros(lam.shape, dtype=complex)
    min_re = float(lam.real.min()) if lam.size else 0.0
    if min_re < -eq.theta0 * k_norm * (1.0 + 1e-12):
        raise ValueError(
            f"Re lambda = {min_re} is below -theta0|k| = {-eq.theta0 * k_norm}; "
            "the Laplace integral diverges there."
        )
    if method == "closed" or (method == "auto" and eq.laplace_moment is not None):
        if eq.laplace_moment is None:
            raise ValueError(f"Equilibrium {eq.name} has no closed-form Laplace moment.")
        return eq.laplace_moment(k_norm**2, lam)
    if method not in ("auto", "quadrature"):
        raise ValueError(f"Unknown quadrature method {method!r}.")

    shift = max(0.0, -min_re)
    t_end = horizon if horizon is not None else _laplace_horizon(eq, k_norm, shift, tol)
    max_im = float(np.abs(lam.imag).max()) if lam.size else 0.0
    width = min(1.0 / k_norm, 2.0 / max(max_im, 1.0))
    nodes, weights = gauss_legendre_panels(t_end, width)
    weighted_kernel = eq.laplace_kernel(k, nodes) * weights
    flat = lam.ravel()
    out = np.empty(flat.shape, dtype=complex)
    for start in range(0, flat.size, _LAMBDA_CHUNK):
        chunk = flat[start : start + _LAMBDA_CHUNK]
        out[start : start + _LAMBDA_CHUNK] = np.exp(-np.outer(chunk, nodes)) @ weighted_kernel
    return out.reshape(lam.shape)


def dispersion_values(
    eq: Equilibrium,
    k: Sequence[int],
    lam,
    alpha: float = 0.0,
    tol: float = DEFAULT_TOL,
    method: QuadratureMethod = "auto",
) -> np.ndarray:
    """Vectorized D(lambda, k; alpha) = 1 + (1 + alpha) L[t mu_hat(k t)](lambda)."""
    if alpha < 0:
        raise ValueError(f"alpha must be non-negative, got {alpha}.")
    return 1.0 + (1.0 + alpha) * laplace_moment(eq, k, lam, tol=tol, method=method)


def dispersion(
    eq: Equilibrium,
    q: DispersionQuery,
    tol: float = DEFAULT_TOL,
    method: QuadratureMethod = "auto",
) -> complex:
    """
    Evaluate the dispersion function D(lambda, k; alpha) at one point.

    Args:
        eq: A certified equilibrium.
        q: The query point.
        tol: Absolute accuracy target.
        method: See `laplace_moment`.

    Returns:
        complex: D(lambda, k; alpha).
    """
    if len(q.k) != eq.dim:
        raise ValueError(f"Mode {q.k} does not match the equilibrium dimension {eq.dim}.")
    return complex(dispersion_values(eq, q.k, np.array([q.lam]), q.alpha, tol, method)[0])


def scan_modes(dim: int, k_max: int, radial: bool = False) -> List[Mode]:
    """
    Canonical modes 0 < |k|_inf <= k_max for a scan over an even equilibrium.
    mu_hat is even, so k and -k give equal values and one of each pair is kept; for a
    radial profile only one mode per |k|^2 is kept.
    """
    if k_max < 1:
        raise ValueError(f"k_max must be at least 1, got {k_max}.")
    axis = range(-k_max, k_max + 1)
    grids = np.meshgrid(*([np.array(axis)] * dim), indexing="ij")
    candidates = [tuple(int(c) for c in p) for p in np.stack([g.ravel() for g in grids], -1)]
    modes = []
    for k in candidates:
        first = next((c for c in k if c != 0), 0)
        if first > 0:
            modes.append(k)
    modes.sort(key=lambda m: (sum(c * c for c in m), m))
    if radial:
        seen = set()
        unique = []
        for m in modes:
            norm2 = sum(c * c for c in m)
            if norm2 not in seen:
                seen.add(norm2)
                unique.append(m)
        modes = unique
    return modes


def alpha_threshold(kappa0: float, c_mu: float, theta0: float) -> float:
    """
    Largest alpha for which theta0^2 > 2 alpha C_mu / kappa0, i.e. kappa0 theta0^2 / (2 C_mu).
    """
    if kappa0 <= 0 or c_mu <= 0 or theta0 <= 0:
        raise ValueError(
            f"alpha_threshold needs positive inputs, got kappa0={kappa0}, c_mu={c_mu}, "
            f"theta0={theta0}."
        )
    return kappa0 * theta0**2 / (2.0 * c_mu)


def _tail_bounds(eq: Equilibrium, alpha: float, k_max: int, M: float) -> Tuple[float, float]:
    c, theta0 = eq.c_mu, eq.theta0
    if c == 0.0:
        return 0.0, 0.0
    # |D - 1| <= (1+alpha) C / (theta0 |k|)^2 beyond the scanned box
    mode_tail = (1.0 + alpha) * c / (theta0**2 * (k_max + 1) ** 2)
    # two integrations by parts with kappa(0) = 0, kappa'(0) = 1
    freq_tail = (1.0 + alpha) * (1.0 + 2.0 * c / theta0 + eq.dim * c / theta0**2) / M**2
    return mode_tail, freq_tail


def penrose_infimum(
    eq: Equilibrium,
    alpha: float = 0.0,
    k_max: int = 8,
    M: float = 60.0,
    step: float = 0.05,
    tol: float = DEFAULT_TOL,
    kappa0: Optional[float] = None,
    method: QuadratureMethod = "auto",
    max_workers: Optional[int] = None,
) -> PenroseReport:
    """
    Scan |D(i tau, k; alpha)| for 0 <= tau <= M and all canonical 0 < |k|_inf <= k_max.

    Conjugate symmetry covers tau < 0. An interior sanity scan at a few Re lambda > 0 lines
    flags any sample below the boundary minimum.

    Args:
        eq: A certified equilibrium.
        alpha: Perturbation parameter (the mass ratio epsilon).
        k_max: Largest mode component scanned.
        M: Largest |Im lambda| scanned.
        step: Spacing of the Im lambda grid.
        tol: Quadrature accuracy.
        kappa0: Stability margin to test against; defaults to the computed infimum.
        method: See `laplace_moment`.
        max_workers: Thread cap, LANDAU_LAB_THREADS when None.

    Returns:
        PenroseReport: the scan outcome with its samples.
    """
    if alpha < 0:
        raise ValueError(f"alpha must be non-negative, got {alpha}.")
    if M <= 0 or step <= 0 or step > M:
        raise ValueError(f"Need 0 < step <= M, got M={M}, step={step}.")
    modes = scan_modes(eq.dim, k_max, radial=eq.radial)
    tau = np.arange(0.0, M + 0.5 * step, step)

    def _boundary(k: Mode) -> np.ndarray:
        return np.abs(dispersion_values(eq, k, 1j * tau, alpha, tol, method))

    modulus = np.stack(parallel_map(_boundary, modes, max_workers))
    if not np.all(np.isfinite(modulus)):
        raise NonFiniteValuesError("Penrose boundary scan produced non-finite values.")
    i_k, i_tau = np.unravel_index(int(np.argmin(modulus)), modulus.shape)
    inf_modulus = float(modulus[i_k, i_tau])

    interior_tau = np.arange(0.0, M, PENROSE_INTERIOR_STEP)

    def _interior(k: Mode) -> float:
        lam = (np.array(PENROSE_INTERIOR_RE)[:, None] + 1j * interior_tau[None, :]).ravel()
        return float(np.abs(dispersion_values(eq, k, lam, alpha, tol, method)).min())

    interior_min = min(parallel_map(_interior, modes, max_workers))
    if not math.isfinite(interior_min):
        raise NonFiniteValuesError("Penrose interior scan produced non-finite values.")
    interior_flag = interior_min < inf_modulus - 1e-12
    if interior_flag:
        _logger.warning(
            f"Interior sample |D|={interior_min:.6g} is below the boundary minimum "
            f"{inf_modulus:.6g}; the scan resolution may be too coarse."
        )

    mode_tail, freq_tail = _tail_bounds(eq, alpha, k_max, M)
    tail_bound = max(mode_tail, freq_tail)
    kappa0 = inf_modulus if kappa0 is None else float(kappa0)
    if eq.c_mu > 0 and kappa0 > 0 and math.isfinite(eq.theta0):
        alpha0 = alpha_threshold(kappa0, eq.c_mu, eq.theta0)
    else:
        alpha0 = float("inf")
    report = PenroseReport(
        inf_modulus=inf_modulus,
        argmin_k=modes[i_k],
        argmin_lambda=complex(0.0, float(tau[i_tau])),
        boundary_radius=float(M),
        tail_bound=tail_bound,
        mode_tail=mode_tail,
        frequency_tail=freq_tail,
        kappa0=kappa0,
        kappa_half_ok=inf_modulus >= 0.5 * kappa0,
        alpha0=alpha0,
        certified_lower_bound=min(inf_modulus, 1.0 - tail_bound),
        interior_min=interior_min,
        interior_flag=interior_flag,
        samples=PenroseSamples(modes=modes, tau=tau, modulus=modulus),
    )
    _logger.info(f"Penrose scan over {len(modes)} modes: {report.summary()}")
    return report
