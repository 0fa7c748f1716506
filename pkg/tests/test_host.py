"""Host CNN: init, forward/backward, SR integration, parameter accounting."""

import numpy as np
import pytest

from srkit import ops
from srkit.errors import ConfigError, UsageError
from srkit.host import (
    HostConfig,
    host_backward,
    host_forward,
    host_init,
    host_param_count,
    params_from_tensors,
)
from srkit.rng import make_rng
from srkit.sr_block import SRConfig, sr_param_count

from oracles import fd_gradient, max_rel_err

MICRO = HostConfig(
    stage_channels=(2, 2, 2, 2),
    in_channels=3,
    in_h=4,
    in_w=4,
    classes=2,
    sr_insert=3,
    sr=SRConfig(c=2, h=1, w=1, u=2, p=2, allow_off_grid=True),
    dropout_kind="channel",
    dropout_p=0.25,
)


def test_stage_shapes_trace():
    cfg = HostConfig()
    assert cfg.stage_output_shape(1) == (16, 32, 32)
    assert cfg.stage_output_shape(2) == (32, 16, 16)
    assert cfg.stage_output_shape(3) == (64, 8, 8)
    assert cfg.stage_output_shape(4) == (64, 4, 4)


def test_resolved_sr_defaults():
    cfg = HostConfig(sr_insert=3)
    sr = cfg.resolved_sr()
    assert (sr.c, sr.h, sr.w, sr.u, sr.p) == (64, 8, 8, 8, 4)
    assert HostConfig().resolved_sr() is None


def test_sr_shape_mismatch_rejected():
    bad = HostConfig(sr_insert=3, sr=SRConfig(c=32, h=8, w=8))
    with pytest.raises(ConfigError, match="does not match stage"):
        bad.validate()


def test_init_deterministic_and_sr_presence():
    cfg = HostConfig(sr_insert=3)
    a, b = host_init(cfg, make_rng(5)), host_init(cfg, make_rng(5))
    for (_, ta), (_, tb) in zip(a.items(), b.items()):
        assert np.array_equal(ta, tb)
    assert a.sr is not None
    assert host_init(HostConfig(), make_rng(5)).sr is None


def test_forward_shapes_and_finiteness():
    cfg = HostConfig(sr_insert=3)
    params = host_init(cfg, make_rng(0))
    x = make_rng(1).uniform(-1, 1, (5, 3, 32, 32)).astype(np.float32)
    logits, cache = host_forward(params, x, "eval")
    assert logits.shape == (5, 10)
    assert np.all(np.isfinite(logits))
    assert cache.sr_cache.alpha.shape == (5, 4)


def test_zero_memory_sr_matches_plain_host():
    sr_cfg = HostConfig(sr_insert=3)
    with_sr = host_init(sr_cfg, make_rng(7))
    plain = host_init(HostConfig(), make_rng(8))
    for i in range(4):
        plain.stage_w[i][:] = with_sr.stage_w[i]
    plain.cls_w[:] = with_sr.cls_w
    x = make_rng(9).uniform(-1, 1, (4, 3, 32, 32)).astype(np.float32)
    a, _ = host_forward(with_sr, x, "eval")
    b, _ = host_forward(plain, x, "eval")
    assert np.array_equal(a, b)


def test_eval_dropout_is_identity():
    cfg = HostConfig(dropout_kind="channel", dropout_p=0.5)
    params = host_init(cfg, make_rng(2))
    x = make_rng(3).uniform(-1, 1, (3, 3, 32, 32)).astype(np.float32)
    a, _ = host_forward(params, x, "eval")
    b, _ = host_forward(params, x, "eval")
    assert np.array_equal(a, b)


def test_train_dropout_reproducible_gradients():
    params = host_init(MICRO, make_rng(4))
    x = make_rng(5).uniform(-1, 1, (3, 3, 4, 4)).astype(np.float32)
    labels = np.array([0, 1, 0])

    def run():
        logits, cache = host_forward(params, x, "train", make_rng(777))
        return host_backward(params, cache, labels)

    g1, g2 = run(), run()
    for (_, a), (_, b) in zip(g1.items(), g2.items()):
        assert np.array_equal(a, b)


def test_confident_logits_give_near_zero_gradients():
    params = host_init(MICRO, make_rng(6))
    x = make_rng(7).uniform(-1, 1, (2, 3, 4, 4)).astype(np.float32)
    logits, _ = host_forward(params, x, "eval")
    labels = logits.argmax(axis=1)
    params.cls_w *= 200.0  # saturate the cross entropy in the right direction
    _, cache = host_forward(params, x, "train", make_rng(0))
    grads = host_backward(params, cache, labels)
    total = np.sqrt(sum(float((g ** 2).sum()) for _, g in grads.items()))
    assert total <= 1e-5


def test_backward_rejects_eval_cache():
    params = host_init(MICRO, make_rng(8))
    x = make_rng(9).uniform(-1, 1, (2, 3, 4, 4)).astype(np.float32)
    _, cache = host_forward(params, x, "eval")
    with pytest.raises(UsageError):
        host_backward(params, cache, np.array([0, 1]))


def test_micro_host_full_fd():
    rng = make_rng(10)
    params = host_init(MICRO, rng, dtype=np.float64)
    params.sr.memory[:] = 0.5 * rng.uniform(-1, 1, params.sr.memory.shape)
    x = rng.uniform(-1, 1, (2, 3, 4, 4))
    labels = rng.integers(0, 2, 2)

    def loss():
        logits, _ = host_forward(params, x, "train", make_rng(55))
        return ops.cross_entropy_fwd(logits, labels)[0]

    _, cache = host_forward(params, x, "train", make_rng(55))
    grads = host_backward(params, cache, labels)
    grad_map = dict(grads.items())
    for name, tensor in params.items():
        fd = fd_gradient(loss, tensor, step=1e-4)
        assert max_rel_err(grad_map[name], fd) < 1e-3, name


def test_param_count_delta_is_sr_count():
    cfg = HostConfig(sr_insert=3, sr=SRConfig(c=64, h=8, w=8, u=8, p=4))
    with_sr = host_param_count(cfg, with_sr=True)
    without = host_param_count(cfg, with_sr=False)
    assert with_sr - without == sr_param_count(cfg.sr)
    params = host_init(cfg, make_rng(0))
    assert params.n_scalars() == with_sr


def test_params_from_tensors_roundtrip_and_errors():
    cfg = HostConfig(sr_insert=3)
    params = host_init(cfg, make_rng(11))
    rebuilt = params_from_tensors(cfg, dict(params.items()))
    for (_, a), (_, b) in zip(params.items(), rebuilt.items()):
        assert np.array_equal(a, b)
    tensors = dict(params.items())
    del tensors["cls.w"]
    with pytest.raises(ConfigError, match="cls.w"):
        params_from_tensors(cfg, tensors)


def test_invalid_configs_rejected():
    with pytest.raises(ConfigError, match="dropout_kind"):
        HostConfig(dropout_kind="spatial").validate()
    with pytest.raises(ConfigError, match="dropout_p"):
        HostConfig(dropout_kind="channel", dropout_p=1.0).validate()
    with pytest.raises(ConfigError, match="sr_insert"):
        HostConfig(sr_insert=5).validate()
    with pytest.raises(ConfigError, match="mode"):
        params = host_init(MICRO, make_rng(0))
        host_forward(params, np.zeros((1, 3, 4, 4), dtype=np.float32), "predict")
