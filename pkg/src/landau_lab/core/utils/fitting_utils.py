from typing import NamedTuple

import numpy as np


class LineFit(NamedTuple):
    slope: float
    intercept: float
    r2: float


def strict_local_maxima(values: np.ndarray) -> np.ndarray:
    """Indices of interior samples strictly larger than both neighbours."""
    values = np.asarray(values, dtype=float)
    if values.size < 3:
        return np.array([], dtype=int)
    inner = (values[1:-1] > values[:-2]) & (values[1:-1] > values[2:])
    return np.nonzero(inner)[0] + 1


def fit_line(x: np.ndarray, y: np.ndarray) -> LineFit:
    """Least-squares line y = slope * x + intercept with its coefficient of determination."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise ValueError(f"Need at least 2 points to fit a line, got {x.size}.")
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    ss_res = float(np.sum(residual**2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return LineFit(slope=float(slope), intercept=float(intercept), r2=r2)
