from typing import Tuple

import numpy as np

from landau_lab.core.utils.config import GAUSS_LEGENDRE_ORDER


def gauss_legendre_panels(
    horizon: float, panel_width: float, order: int = GAUSS_LEGENDRE_ORDER
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Composite Gauss-Legendre nodes and weights on [0, horizon].

    Args:
        horizon: Right end of the integration interval.
        panel_width: Upper bound on the width of a panel.
        order: Nodes per panel.

    Returns:
        (nodes, weights), both of shape (n_panels * order,).
    """
    if horizon <= 0 or panel_width <= 0:
        raise ValueError(f"Invalid panel layout: horizon={horizon}, width={panel_width}.")
    n_panels = int(np.ceil(horizon / panel_width))
    edges = np.linspace(0.0, horizon, n_panels + 1)
    x, w = np.polynomial.legendre.leggauss(order)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def trapezoid_convolution(kernel: np.ndarray, signal: np.ndarray, dt: float) -> np.ndarray:
    """
    Trapezoidal approximation of (kernel * signal)(t_n) = int_0^{t_n} kernel(t_n - s) signal(s) ds
    on a uniform grid, for every node n.
    """
    n = signal.shape[0]
    if kernel.shape[0] != n:
        raise ValueError("Kernel and signal must be sampled on the same grid.")
    full = np.convolve(kernel, signal)[:n]
    out = dt * full
    out -= 0.5 * dt * (kernel[0] * signal + kernel * signal[0])
    out[0] = 0.0
    return out


def exponential_memory_integral(values: np.ndarray, dt: float, rate: float) -> np.ndarray:
    """
    Trapezoidal I_n = int_0^{t_n} exp(-rate (t_n - s)) values(s) ds for all n, by recursion.
    """
    decay = np.exp(-rate * dt)
    out = np.zeros_like(values, dtype=float)
    for n in range(1, values.shape[0]):
        out[n] = decay * out[n - 1] + 0.5 * dt * (decay * values[n - 1] + values[n])
    return out
