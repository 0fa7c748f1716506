"""Checkpoint binary format and strict JSON config parsing."""

import json
import struct

import numpy as np
import pytest

from srkit.checkpoint import MAGIC, load_checkpoint, save_checkpoint
from srkit.config import load_config, parse_config
from srkit.errors import CheckpointError, ConfigError
from srkit.host import HostConfig, host_init
from srkit.rng import make_rng


def sample_tensors(rng):
    return {
        "alpha": rng.uniform(-1, 1, (3,)).astype(np.float32),
        "beta.w": rng.uniform(-1, 1, (2, 4)).astype(np.float32),
        "gamma": rng.uniform(-1, 1, (2, 3, 2, 2)).astype(np.float32),
    }


class TestCheckpoint:
    def test_roundtrip_bit_exact(self, tmp_path, rng):
        path = str(tmp_path / "a.srck")
        tensors = sample_tensors(rng)
        meta = {"config": {"x": 1}, "note": "hello"}
        save_checkpoint(path, meta, tensors)
        meta2, tensors2 = load_checkpoint(path)
        assert meta2 == meta
        for name, t in tensors.items():
            assert t.dtype == tensors2[name].dtype
            assert np.array_equal(t, tensors2[name])

    def test_save_load_save_byte_identical(self, tmp_path, rng):
        p1, p2 = str(tmp_path / "a.srck"), str(tmp_path / "b.srck")
        tensors = sample_tensors(rng)
        save_checkpoint(p1, {"k": [1, 2, {"z": True}]}, tensors)
        meta, loaded = load_checkpoint(p1)
        save_checkpoint(p2, meta, loaded)
        assert open(p1, "rb").read() == open(p2, "rb").read()

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.srck"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(str(path))

    def test_bad_version_rejected(self, tmp_path):
        path = tmp_path / "v9.srck"
        path.write_bytes(MAGIC + struct.pack("<I", 9) + struct.pack("<I", 2) + b"{}")
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(str(path))

    def test_truncation_rejected(self, tmp_path, rng):
        path = str(tmp_path / "t.srck")
        save_checkpoint(path, {}, sample_tensors(rng))
        data = open(path, "rb").read()
        open(path, "wb").write(data[:-3])
        with pytest.raises(CheckpointError, match="truncated"):
            load_checkpoint(path)

    def test_little_endian_layout(self, tmp_path):
        path = str(tmp_path / "le.srck")
        save_checkpoint(path, {}, {"t": np.array([1.0], dtype=np.float32)})
        raw = open(path, "rb").read()
        assert raw[:4] == b"SRCK"
        assert struct.unpack("<I", raw[4:8])[0] == 1


class TestConfig:
    def test_empty_config_gets_defaults(self):
        run = parse_config({})
        assert run.host.stage_channels == (16, 32, 64, 64)
        assert run.host.sr_insert == 3
        assert run.host.sr.u == 8 and run.host.sr.p == 4
        assert run.train.lr0 == 0.1 and run.train.momentum == 0.9
        assert run.train.weight_decay == 5e-4
        assert run.data.per_class == 200 and run.data.noise_sigma == 0.25

    def test_unknown_keys_named(self):
        with pytest.raises(ConfigError, match="bogus"):
            parse_config({"bogus": 1})
        with pytest.raises(ConfigError, match="host.lr"):
            parse_config({"host": {"lr": 0.1}})
        with pytest.raises(ConfigError, match="host.sr.neurons"):
            parse_config({"host": {"sr": {"neurons": 8}}})
        with pytest.raises(ConfigError, match="train.lr"):
            parse_config({"train": {"lr": 0.1}})
        with pytest.raises(ConfigError, match="data.sigma"):
            parse_config({"data": {"sigma": 0.1}})

    def test_invalid_values_rejected(self):
        with pytest.raises(ConfigError, match="lr0"):
            parse_config({"train": {"lr0": 0}})
        with pytest.raises(ConfigError, match="momentum"):
            parse_config({"train": {"momentum": 1.0}})
        with pytest.raises(ConfigError, match="dropout_p"):
            parse_config({"host": {"dropout_p": 1.0}})
        with pytest.raises(ConfigError, match="stage_channels"):
            parse_config({"host": {"stage_channels": [1, 2, 3]}})
        with pytest.raises(ConfigError, match="sr.u"):
            parse_config({"host": {"sr": {"u": 7}}})

    def test_sr_disabled(self):
        run = parse_config({"host": {"sr_insert": None}})
        assert run.host.sr is None
        assert run.host.resolved_sr() is None

    def test_standalone_sr_for_accounting(self):
        run = parse_config(
            {"host": {"sr_insert": None,
                      "sr": {"c": 1024, "h": 14, "w": 14, "u": 16, "p": 10}}}
        )
        assert run.host.sr.c == 1024
        assert run.host.resolved_sr() is None  # not inserted into the host

    def test_derived_sr_shape(self):
        run = parse_config({"host": {"sr_insert": 4, "sr": {"p": 6}}})
        assert (run.host.sr.c, run.host.sr.h, run.host.sr.w) == (64, 4, 4)
        assert run.host.sr.p == 6

    def test_mismatched_sr_shape_rejected(self):
        with pytest.raises(ConfigError, match="does not match stage"):
            parse_config({"host": {"sr_insert": 3, "sr": {"c": 32, "h": 8, "w": 8}}})

    def test_to_dict_roundtrip(self):
        doc = {
            "host": {"sr_insert": 4, "dropout_kind": "element", "dropout_p": 0.2},
            "train": {"epochs": 7, "decay_epochs": [2, 5], "seed": 3},
            "data": {"per_class": 50, "seed": 1},
        }
        run = parse_config(doc)
        again = parse_config(run.to_dict())
        assert run.to_dict() == again.to_dict()
        assert again.train.decay_epochs == (2, 5)

    def test_load_config_malformed_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError, match="malformed JSON"):
            load_config(str(path))


def test_host_params_checkpoint_roundtrip(tmp_path):
    cfg = HostConfig(sr_insert=3)
    params = host_init(cfg, make_rng(77))
    params.sr.memory[:] = make_rng(78).uniform(-1, 1, params.sr.memory.shape).astype(np.float32)
    path = str(tmp_path / "host.srck")
    save_checkpoint(path, {"kind": "host"}, dict(params.items()))
    _, tensors = load_checkpoint(path)
    from srkit.host import params_from_tensors

    rebuilt = params_from_tensors(cfg, tensors)
    for (_, a), (_, b) in zip(params.items(), rebuilt.items()):
        assert np.array_equal(a, b)
