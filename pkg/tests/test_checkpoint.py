import numpy as np
import pytest

from trrgen.checkpoint import save_checkpoint, load_checkpoint, CheckpointError, MAGIC
from trrgen.corpus import ReviewRecord, build_vocabulary
from trrgen.model import ModelConfig, init_parameters


@pytest.fixture
def setup():
    records = [ReviewRecord("a", "TOOLS", 4, "great app works well", "thanks a lot"),
               ReviewRecord("b", "GAME", 2, "crashes on load", "we will fix it")]
    vocab = build_vocabulary(records, min_freq=1)
    config = ModelConfig(vocab_size=len(vocab), d_model=8, n_heads=2, n_layers=1,
                         d_ff=16, max_src_len=16, max_tgt_len=16, dropout=0.0, seed=5)
    params = init_parameters(config, seed=5)
    return params, config, vocab


def test_round_trip_bitwise(tmp_path, setup):
    params, config, vocab = setup
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, params, config, vocab, run_config={"lr": 0.001},
                    metadata={"best_epoch": 3})
    loaded, config2, vocab2, run_cfg, meta = load_checkpoint(path)
    assert config2 == config
    assert vocab2.id_to_token == vocab.id_to_token
    assert run_cfg == {"lr": 0.001} and meta == {"best_epoch": 3}
    for (na, ta), (nb, tb) in zip(params.named(), loaded.named()):
        assert na == nb
        assert np.array_equal(ta.values, tb.values)


def test_save_load_save_byte_identical(tmp_path, setup):
    params, config, vocab = setup
    p1 = tmp_path / "a.ckpt"
    p2 = tmp_path / "b.ckpt"
    save_checkpoint(p1, params, config, vocab, run_config={"seed": 1})
    loaded, config2, vocab2, run_cfg, meta = load_checkpoint(p1)
    save_checkpoint(p2, loaded, config2, vocab2, run_config=run_cfg, metadata=meta)
    assert p1.read_bytes() == p2.read_bytes()


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"NOTMAGIC" + b"\x00" * 32)
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(path)


def test_bad_version_rejected(tmp_path, setup):
    params, config, vocab = setup
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, params, config, vocab)
    raw = bytearray(path.read_bytes())
    raw[len(MAGIC)] = 99
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(path)
