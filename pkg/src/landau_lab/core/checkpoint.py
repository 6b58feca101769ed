import logging
import struct
from pathlib import Path
from typing import NamedTuple, Tuple, Union

import numpy as np

from landau_lab.core.kinetic_sim import SimConfig, SpectralState
from landau_lab.core.utils.config import (
    CHECKPOINT_HEADER_FORMAT,
    CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
)

_logger = logging.getLogger(__name__)

_HEADER_SIZE = struct.calcsize(CHECKPOINT_HEADER_FORMAT)
_DTYPE = np.dtype("<c8")


class CheckpointHeader(NamedTuple):
    dim: int
    n_x: int
    n_v: int
    v_max: float
    t: float
    epsilon: float

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.n_x,) * self.dim + (self.n_v,) * self.dim


def save_checkpoint(path: Union[str, Path], state: SpectralState, cfg: SimConfig) -> Path:
    """
    Write `state` as a little-endian binary checkpoint: a 48 byte header
    (magic, version, d, n_x, n_v, reserved, v_max, t, epsilon) followed by f_hat_plus and
    f_hat_minus as complex64 in C order, each of shape (n_x,)*d + (n_v,)*d.
    """
    path = Path(path)
    shape = (cfg.n_x,) * cfg.dim + (cfg.n_v,) * cfg.dim
    for name, values in (("f_hat_plus", state.f_hat_plus), ("f_hat_minus", state.f_hat_minus)):
        if values.shape != shape:
            raise ValueError(f"{name} has shape {values.shape}, expected {shape}.")
    header = struct.pack(
        CHECKPOINT_HEADER_FORMAT,
        CHECKPOINT_MAGIC,
        CHECKPOINT_VERSION,
        cfg.dim,
        cfg.n_x,
        cfg.n_v,
        0,
        float(cfg.v_max),
        float(state.t),
        float(cfg.epsilon),
    )
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(state.f_hat_plus, dtype=_DTYPE).tobytes())
        f.write(np.ascontiguousarray(state.f_hat_minus, dtype=_DTYPE).tobytes())
    _logger.debug(f"Wrote checkpoint at t={state.t:.6g} to {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> Tuple[SpectralState, CheckpointHeader]:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER_SIZE:
        raise ValueError(f"{path} is too short to be a checkpoint.")
    magic, version, dim, n_x, n_v, _, v_max, t, epsilon = struct.unpack(
        CHECKPOINT_HEADER_FORMAT, raw[:_HEADER_SIZE]
    )
    if magic != CHECKPOINT_MAGIC:
        raise ValueError(f"{path} is not a checkpoint (magic {magic!r}).")
    if version != CHECKPOINT_VERSION:
        raise ValueError(
            f"Unsupported checkpoint version {version}, expecting {CHECKPOINT_VERSION}."
        )
    header = CheckpointHeader(dim, n_x, n_v, v_max, t, epsilon)
    count = int(np.prod(header.shape))
    expected = _HEADER_SIZE + 2 * count * _DTYPE.itemsize
    if len(raw) != expected:
        raise ValueError(f"{path} holds {len(raw)} bytes, expected {expected}.")
    data = np.frombuffer(raw, dtype=_DTYPE, offset=_HEADER_SIZE)
    f_plus = data[:count].reshape(header.shape).astype(complex)
    f_minus = data[count:].reshape(header.shape).astype(complex)
    return SpectralState(t=t, f_hat_plus=f_plus, f_hat_minus=f_minus), header
