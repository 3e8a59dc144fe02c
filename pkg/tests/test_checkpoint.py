import numpy as np
import pytest

from msrnet.checkpoint import CheckpointFormatError, load_checkpoint, save_checkpoint
from msrnet.model import MsrNet, MsrNetConfig
from msrnet.nn import PatchDataset, TrainConfig, train_loop


def small():
    return MsrNet(MsrNetConfig(n=2, v=[10, 300], K=2, width=4), seed=4)


def test_round_trip(tmp_path):
    net = small()
    path = save_checkpoint(tmp_path / "a.msrn", net)
    assert path.read_bytes()[:4] == b"MSRN"
    back, state = load_checkpoint(path)
    assert state is None
    assert back.config == net.config
    for p in net.parameters():
        np.testing.assert_array_equal(back.params[p.name].value, p.value)


def test_round_trip_with_optimizer_state(tmp_path, rng):
    net = small()
    hq = rng.random((4, 3, 6, 6)).astype(np.float32)
    train_loop(net, PatchDataset(hq ** 2, hq), TrainConfig(max_iters=3, batch=2,
                                                           lr_drop_iters=[]), log_every=0)
    back, state = load_checkpoint(save_checkpoint(tmp_path / "b.msrn", net, iteration=3))
    assert state.iteration == 3
    for p in net.parameters():
        q = back.params[p.name]
        assert q.step_count == 3
        np.testing.assert_array_equal(q.adam_m, p.adam_m)
        np.testing.assert_array_equal(q.adam_v, p.adam_v)


def test_bad_magic(tmp_path):
    path = save_checkpoint(tmp_path / "c.msrn", small())
    data = bytearray(path.read_bytes())
    data[:4] = b"XXXX"
    path.write_bytes(bytes(data))
    with pytest.raises(CheckpointFormatError, match="magic"):
        load_checkpoint(path)


def test_bad_version_truncation_trailing(tmp_path):
    path = save_checkpoint(tmp_path / "d.msrn", small())
    good = path.read_bytes()
    path.write_bytes(good[:4] + (7).to_bytes(4, "little") + good[8:])
    with pytest.raises(CheckpointFormatError, match="version"):
        load_checkpoint(path)
    path.write_bytes(good[:-10])
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(path)
    path.write_bytes(good + b"\0")
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(path)


def test_config_mismatch(tmp_path):
    path = save_checkpoint(tmp_path / "e.msrn", small())
    with pytest.raises(CheckpointFormatError, match="mismatch"):
        load_checkpoint(path, expect_config=MsrNetConfig(n=2, v=[10, 300], K=3, width=4))
