from typing import Sequence, Tuple

import numpy as np

from landau_lab.core.utils.config import MODE_SEPARATOR, SUPPORTED_DIMENSIONS

Mode = Tuple[int, ...]


def validate_dimension(dim: int) -> int:
    if dim not in SUPPORTED_DIMENSIONS:
        raise ValueError(f"Unsupported dimension: {dim}, expecting one of {SUPPORTED_DIMENSIONS}.")
    return dim


def validate_mode(k: Sequence[int], dim: int, allow_zero: bool = False) -> Mode:
    """
    Validate a Fourier mode and return it as a tuple of ints.

    Args:
        k: The mode, one integer per spatial dimension.
        dim: The spatial dimension.
        allow_zero: Whether the zero mode is acceptable.

    Returns:
        Mode: The mode as a tuple.
    """
    if np.ndim(k) == 0:
        k = (k,)
    mode = tuple(int(c) for c in k)
    if any(int(c) != c for c in k):
        raise ValueError(f"Invalid mode {tuple(k)}: components must be integers.")
    if len(mode) != dim:
        raise ValueError(f"Invalid mode {mode}: expecting {dim} components.")
    if not allow_zero and not any(mode):
        raise ValueError("The zero mode is not allowed here.")
    return mode


def validate_uniform_grid(times: np.ndarray, rtol: float = 1e-9) -> float:
    """
    Validate that `times` is a uniform grid starting at 0 and return its step.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 2:
        raise ValueError("Time grid must be one dimensional with at least two nodes.")
    if times[0] != 0.0:
        raise ValueError(f"Time grid must start at 0, got {times[0]}.")
    steps = np.diff(times)
    dt = float(steps.mean())
    if dt <= 0 or np.max(np.abs(steps - dt)) > rtol * max(1.0, dt) * times.size:
        raise ValueError("Time grid must be uniform and increasing.")
    return dt


def mode_norm(k: Sequence[int]) -> float:
    return float(np.sqrt(np.sum(np.asarray(k, dtype=float) ** 2)))


def format_mode(k: Sequence[int]) -> str:
    return MODE_SEPARATOR.join(str(int(c)) for c in k)
