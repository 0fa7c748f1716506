"""Finite-difference validation of every analytic backward rule.

Each check builds a scalar loss (a fixed random weighting of the op's
output), computes analytic gradients through the op's backward, and
compares them against central differences of the forward. Checks run in
float64 on upcast copies so the verdict reflects the formulas, not
float32 roundoff; the ops themselves preserve dtype.

Primitive checks use the documented step 1e-3. The composite checks (SR
block end to end, micro host) use 1e-4, which keeps finite differences
well clear of ReLU kinks.

Ops are always called through the module (``ops.foo``) so a test can
monkeypatch a deliberately broken rule and watch the harness flag it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .errors import ConfigError
from .host import HostConfig, host_backward, host_forward, host_init
from .rng import make_rng
from .sr_block import SRConfig, sr_backward, sr_forward, sr_init

TOLERANCE = 1e-3
STEP_PRIMITIVE = 1e-3
STEP_COMPOSITE = 1e-4


@dataclass
class CheckResult:
    name: str
    max_rel_err: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < TOLERANCE


def rel_err(analytic: np.ndarray, fd: np.ndarray) -> float:
    """max|a - fd| over a floored max-magnitude denominator."""
    analytic = np.asarray(analytic, dtype=np.float64)
    fd = np.asarray(fd, dtype=np.float64)
    denom = max(np.abs(analytic).max(initial=0.0), np.abs(fd).max(initial=0.0), 1e-6)
    return float(np.abs(analytic - fd).max(initial=0.0) / denom)


def fd_grad(loss_fn, x: np.ndarray, step: float) -> np.ndarray:
    """Central finite differences of ``loss_fn`` w.r.t. every entry of x."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + step
        up = loss_fn()
        flat[i] = keep - step
        down = loss_fn()
        flat[i] = keep
        gf[i] = (up - down) / (2.0 * step)
    return g


def _u(rng, *shape):
    return rng.uniform(-1.0, 1.0, shape)


def _check_conv1x1(rng, n, c, h, w) -> float:
    x, weight = _u(rng, n, c, h, w), _u(rng, c)
    g_out = _u(rng, n, 1, h, w)
    grad_x, grad_w = ops.conv1x1_bwd(x, weight, g_out)
    loss = lambda: float(np.sum(ops.conv1x1_fwd(x, weight) * g_out))
    return max(
        rel_err(grad_x, fd_grad(loss, x, STEP_PRIMITIVE)),
        rel_err(grad_w, fd_grad(loss, weight, STEP_PRIMITIVE)),
    )


def _check_linear(rng, n, i, o) -> float:
    x, weight, g_out = _u(rng, n, i), _u(rng, o, i), _u(rng, n, o)
    grad_x, grad_w = ops.linear_bwd(x, weight, g_out)
    loss = lambda: float(np.sum(ops.linear_fwd(x, weight) * g_out))
    return max(
        rel_err(grad_x, fd_grad(loss, x, STEP_PRIMITIVE)),
        rel_err(grad_w, fd_grad(loss, weight, STEP_PRIMITIVE)),
    )


def _check_softmax(rng, n, p) -> float:
    logits, g_out = _u(rng, n, p), _u(rng, n, p)
    probs = ops.softmax_fwd(logits)
    grad_logits = ops.softmax_bwd(probs, g_out)
    loss = lambda: float(np.sum(ops.softmax_fwd(logits) * g_out))
    return rel_err(grad_logits, fd_grad(loss, logits, STEP_PRIMITIVE))


def _check_conv3x3(rng, n, c, o, h, w, stride) -> float:
    x, weight = _u(rng, n, c, h, w), _u(rng, o, c, 3, 3)
    out = ops.conv3x3_fwd(x, weight, stride)
    g_out = rng.uniform(-1.0, 1.0, out.shape)
    grad_x, grad_w = ops.conv3x3_bwd(x, weight, g_out, stride)
    loss = lambda: float(np.sum(ops.conv3x3_fwd(x, weight, stride) * g_out))
    return max(
        rel_err(grad_x, fd_grad(loss, x, STEP_PRIMITIVE)),
        rel_err(grad_w, fd_grad(loss, weight, STEP_PRIMITIVE)),
    )


def _check_relu(rng, n, c, h, w) -> float:
    # keep inputs away from the kink so central differences are valid
    x = _u(rng, n, c, h, w)
    x = np.where(np.abs(x) < 0.05, 0.25, x)
    g_out = _u(rng, n, c, h, w)
    grad_x = ops.relu_bwd(x, g_out)
    loss = lambda: float(np.sum(ops.relu_fwd(x) * g_out))
    return rel_err(grad_x, fd_grad(loss, x, STEP_PRIMITIVE))


def _check_avgpool(rng, n, c, h, w) -> float:
    x, g_out = _u(rng, n, c, h, w), _u(rng, n, c)
    grad_x = ops.global_avgpool_bwd(x.shape, g_out)
    loss = lambda: float(np.sum(ops.global_avgpool_fwd(x) * g_out))
    return rel_err(grad_x, fd_grad(loss, x, STEP_PRIMITIVE))


def _check_cross_entropy(rng, n, k) -> float:
    logits = _u(rng, n, k)
    labels = rng.integers(0, k, n)
    _, probs = ops.cross_entropy_fwd(logits, labels)
    grad_logits = ops.cross_entropy_bwd(probs, labels)
    loss = lambda: ops.cross_entropy_fwd(logits, labels)[0]
    return rel_err(grad_logits, fd_grad(loss, logits, STEP_PRIMITIVE))


def _check_dropout(rng, n, c, h, w, channelwise) -> float:
    x = _u(rng, n, c, h, w)
    shape_rng = make_rng(1234)
    mask = ops.dropout_mask(
        (n, c, h, w), 0.4, shape_rng, channelwise=channelwise, dtype=np.float64
    )
    g_out = _u(rng, n, c, h, w)
    grad_x = ops.dropout_bwd(mask, g_out)
    loss = lambda: float(np.sum(ops.dropout_apply(x, mask) * g_out))
    return rel_err(grad_x, fd_grad(loss, x, STEP_PRIMITIVE))


def _check_sr_block(rng, n, c, h, w, u, p) -> float:
    cfg = SRConfig(c=c, h=h, w=w, u=u, p=p, allow_off_grid=True)
    params = sr_init(cfg, rng, dtype=np.float64)
    params.memory[:] = _u(rng, p, c, h, w)
    x = _u(rng, n, c, h, w)
    g_out = _u(rng, n, c, h, w)

    def loss():
        out, _ = sr_forward(params, x)
        return float(np.sum(out * g_out))

    out, cache = sr_forward(params, x)
    grads, grad_x = sr_backward(params, cache, g_out)
    worst = rel_err(grad_x, fd_grad(loss, x, STEP_COMPOSITE))
    for name, tensor in params.items():
        analytic = dict(grads.items())[name]
        worst = max(worst, rel_err(analytic, fd_grad(loss, tensor, STEP_COMPOSITE)))
    return worst


def _check_micro_host(rng, size: str) -> float:
    if size == "micro":
        host_cfg = HostConfig(
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
        n = 2
    else:
        host_cfg = HostConfig(
            stage_channels=(4, 4, 4, 4),
            in_channels=3,
            in_h=8,
            in_w=8,
            classes=3,
            sr_insert=3,
            sr=SRConfig(c=4, h=2, w=2, u=4, p=3, allow_off_grid=True),
            dropout_kind="channel",
            dropout_p=0.25,
        )
        n = 3
    params = host_init(host_cfg, rng, dtype=np.float64)
    if params.sr is not None:
        params.sr.memory[:] = 0.5 * _u(rng, *params.sr.memory.shape)
    x = _u(rng, n, host_cfg.in_channels, host_cfg.in_h, host_cfg.in_w)
    labels = rng.integers(0, host_cfg.classes, n)
    mask_seed = 99  # dropout masks must be identical across FD evaluations

    def loss():
        logits, _ = host_forward(params, x, "train", make_rng(mask_seed))
        return ops.cross_entropy_fwd(logits, labels)[0]

    logits, cache = host_forward(params, x, "train", make_rng(mask_seed))
    grads = host_backward(params, cache, labels)
    grad_map = dict(grads.items())
    worst = 0.0
    for name, tensor in params.items():
        worst = max(
            worst, rel_err(grad_map[name], fd_grad(loss, tensor, STEP_COMPOSITE))
        )
    return worst


def run_suite(size: str = "micro", seed: int = 0) -> list[CheckResult]:
    """Run every check; sizes scale the shapes, not the set of checks."""
    if size not in ("micro", "small"):
        raise ConfigError(f"size must be 'micro' or 'small', got {size!r}")
    rng = make_rng(seed)
    big = size == "small"
    n, c, h, w = (3, 4, 5, 5) if big else (2, 3, 4, 4)
    results = [
        CheckResult("conv1x1", _check_conv1x1(rng, n, c, h, w)),
        CheckResult("linear", _check_linear(rng, n, 5 if big else 4, 3)),
        CheckResult("softmax", _check_softmax(rng, n, 5 if big else 4)),
        CheckResult("conv3x3_s1", _check_conv3x3(rng, n, c, 3, h, w, 1)),
        CheckResult("conv3x3_s2", _check_conv3x3(rng, n, c, 3, h, w, 2)),
        CheckResult("relu", _check_relu(rng, n, c, h, w)),
        CheckResult("global_avgpool", _check_avgpool(rng, n, c, h, w)),
        CheckResult("cross_entropy", _check_cross_entropy(rng, n, 5 if big else 3)),
        CheckResult("dropout_element", _check_dropout(rng, n, c, h, w, False)),
        CheckResult("dropout_channel", _check_dropout(rng, n, c, h, w, True)),
        CheckResult(
            "sr_block",
            _check_sr_block(rng, n, c, h, w, u=4 if big else 3, p=4 if big else 3),
        ),
        CheckResult("micro_host", _check_micro_host(rng, size)),
    ]
    return results
