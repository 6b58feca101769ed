import struct

import numpy as np
import pytest

from landau_lab.core.checkpoint import CheckpointHeader, load_checkpoint, save_checkpoint
from landau_lab.core.kinetic_sim import SpectralState
from landau_lab.test_utils.scenario_utils import small_sim_config


def _state(cfg, t=1.25) -> SpectralState:
    rng = np.random.default_rng(3)
    shape = (cfg.n_x,) * cfg.dim + (cfg.n_v,) * cfg.dim
    return SpectralState(
        t=t,
        f_hat_plus=rng.normal(size=shape) + 1j * rng.normal(size=shape),
        f_hat_minus=rng.normal(size=shape) - 1j * rng.normal(size=shape),
    )


def test_checkpoint_layout(tmp_path):
    cfg = small_sim_config(n_x=6, n_v=8, epsilon=0.02)
    state = _state(cfg)
    path = save_checkpoint(tmp_path / "state.bin", state, cfg)
    raw = path.read_bytes()
    assert len(raw) == 48 + 2 * 6 * 8 * 8
    assert raw[:4] == b"LLAB"
    assert struct.unpack("<5I", raw[4:24]) == (1, 1, 6, 8, 0)
    assert struct.unpack("<3d", raw[24:48]) == (8.0, 1.25, 0.02)
    first = np.frombuffer(raw, dtype="<c8", count=1, offset=48)[0]
    assert first == np.complex64(state.f_hat_plus[0, 0])


def test_checkpoint_load(tmp_path):
    cfg = small_sim_config(dim=2, n_x=4, n_v=8)
    state = _state(cfg, t=0.5)
    loaded, header = load_checkpoint(save_checkpoint(tmp_path / "state.bin", state, cfg))
    assert header == CheckpointHeader(2, 4, 8, 8.0, 0.5, 0.01)
    assert header.shape == (4, 4, 8, 8)
    assert loaded.t == 0.5
    np.testing.assert_array_equal(loaded.f_hat_plus, state.f_hat_plus.astype(np.complex64))
    np.testing.assert_array_equal(loaded.f_hat_minus, state.f_hat_minus.astype(np.complex64))


def test_checkpoint_rejects_bad_files(tmp_path):
    cfg = small_sim_config(n_x=4, n_v=8)
    path = save_checkpoint(tmp_path / "state.bin", _state(cfg), cfg)
    raw = path.read_bytes()

    short = tmp_path / "short.bin"
    short.write_bytes(raw[:20])
    with pytest.raises(ValueError, match=r"too short"):
        load_checkpoint(short)

    wrong_magic = tmp_path / "magic.bin"
    wrong_magic.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ValueError, match=r"is not a checkpoint"):
        load_checkpoint(wrong_magic)

    wrong_version = tmp_path / "version.bin"
    wrong_version.write_bytes(raw[:4] + struct.pack("<I", 7) + raw[8:])
    with pytest.raises(ValueError, match=r"Unsupported checkpoint version 7"):
        load_checkpoint(wrong_version)

    truncated = tmp_path / "truncated.bin"
    truncated.write_bytes(raw[:-8])
    with pytest.raises(ValueError, match=r"expected"):
        load_checkpoint(truncated)


def test_checkpoint_rejects_mismatched_state(tmp_path):
    cfg = small_sim_config(n_x=4, n_v=8)
    state = _state(small_sim_config(n_x=6, n_v=8))
    with pytest.raises(ValueError, match=r"f_hat_plus has shape"):
        save_checkpoint(tmp_path / "state.bin", state, cfg)
