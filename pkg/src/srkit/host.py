"""Small staged CNN host with an optional Squeeze-and-Remember insertion.

Four plain conv3x3+ReLU stages (strides 1, 2, 2, 2; no batch norm, no
residuals, bias-free), optional dropout on the stage-3/stage-4 outputs,
the SR block directly after its stage's dropout, then global average
pooling and a linear classifier. Deliberately simple so every gradient is
hand-verifiable and training is bit-deterministic; the SR block is the
object under study, the host is a fixture.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import ops
from .errors import ConfigError, DimensionError, UsageError
from .sr_block import (
    SRConfig,
    SRParams,
    sr_backward,
    sr_forward,
    sr_init,
    sr_param_count,
)

STAGE_STRIDES = (1, 2, 2, 2)
DROPOUT_STAGES = (3, 4)  # 1-based stages whose outputs get dropout
DROPOUT_KINDS = ("none", "element", "channel")


@dataclass(frozen=True)
class HostConfig:
    stage_channels: tuple[int, int, int, int] = (16, 32, 64, 64)
    in_channels: int = 3
    in_h: int = 32
    in_w: int = 32
    classes: int = 10
    sr_insert: Optional[int] = None
    sr: Optional[SRConfig] = None
    dropout_kind: str = "none"
    dropout_p: float = 0.0

    def validate(self) -> "HostConfig":
        if len(self.stage_channels) != 4 or any(c < 1 for c in self.stage_channels):
            raise ConfigError(
                f"host.stage_channels must be 4 positive counts, got {self.stage_channels}"
            )
        for name in ("in_channels", "in_h", "in_w", "classes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"host.{name} must be >= 1")
        if self.dropout_kind not in DROPOUT_KINDS:
            raise ConfigError(f"host.dropout_kind must be one of {DROPOUT_KINDS}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError(f"host.dropout_p must be in [0, 1), got {self.dropout_p}")
        if self.sr_insert is not None:
            if self.sr_insert not in (1, 2, 3, 4):
                raise ConfigError(
                    f"host.sr_insert must be a stage in 1..4, got {self.sr_insert}"
                )
            sr = self.resolved_sr()
            c, h, w = self.stage_output_shape(self.sr_insert)
            if (sr.c, sr.h, sr.w) != (c, h, w):
                raise ConfigError(
                    f"host.sr shape ({sr.c},{sr.h},{sr.w}) does not match stage "
                    f"{self.sr_insert} output ({c},{h},{w})"
                )
            sr.validate()
        return self

    def stage_output_shape(self, stage: int) -> tuple[int, int, int]:
        """(c, h, w) of a 1-based stage's output, tracing the stride schedule."""
        h, w = self.in_h, self.in_w
        for s in STAGE_STRIDES[:stage]:
            h = (h + 2 - 3) // s + 1
            w = (w + 2 - 3) // s + 1
        return self.stage_channels[stage - 1], h, w

    def resolved_sr(self) -> Optional[SRConfig]:
        """Concrete SRConfig at the insertion point, or None when disabled.

        A configured ``sr`` must match the producing stage's output shape;
        when only ``sr_insert`` is given, shape fields are derived and the
        default hyperparameters (u=8, p=4) apply.
        """
        if self.sr_insert is None:
            return None
        c, h, w = self.stage_output_shape(self.sr_insert)
        if self.sr is None:
            return SRConfig(c=c, h=h, w=w)
        return self.sr


@dataclass
class HostParams:
    """Conv stage weights, classifier matrix, and the optional SR block."""

    cfg: HostConfig
    stage_w: list[np.ndarray]
    cls_w: np.ndarray
    sr: Optional[SRParams] = None

    def items(self):
        """Named tensors in the fixed update/serialization order."""
        for i, w in enumerate(self.stage_w):
            yield f"stage{i + 1}.w", w
        yield "cls.w", self.cls_w
        if self.sr is not None:
            for name, t in self.sr.items():
                yield f"sr.{name}", t

    def n_scalars(self) -> int:
        return sum(t.size for _, t in self.items())

    def copy(self) -> "HostParams":
        return HostParams(
            cfg=self.cfg,
            stage_w=[w.copy() for w in self.stage_w],
            cls_w=self.cls_w.copy(),
            sr=self.sr.copy() if self.sr is not None else None,
        )

    def astype(self, dtype) -> "HostParams":
        return HostParams(
            cfg=self.cfg,
            stage_w=[w.astype(dtype) for w in self.stage_w],
            cls_w=self.cls_w.astype(dtype),
            sr=self.sr.astype(dtype) if self.sr is not None else None,
        )


@dataclass
class HostCache:
    """Intermediates from host_forward needed by host_backward."""

    mode: str
    stage_in: list[np.ndarray]
    stage_pre: list[np.ndarray]
    dropout_masks: dict[int, np.ndarray]
    sr_cache: object
    sr_in: Optional[np.ndarray]
    sr_out: Optional[np.ndarray]
    pooled: Optional[np.ndarray] = None
    logits: Optional[np.ndarray] = None


def kaiming_uniform(
    rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, dtype=np.float32
) -> np.ndarray:
    """Kaiming-uniform draw, framework-default variant: U(+-sqrt(1/fan_in))."""
    bound = float(np.sqrt(1.0 / fan_in))
    return rng.uniform(-bound, bound, shape).astype(dtype)


def host_init(
    cfg: HostConfig, rng: np.random.Generator, dtype=np.float32
) -> HostParams:
    """Initialize the host; draw order: stage 1..4 convs, classifier, SR."""
    cfg.validate()
    stage_w = []
    c_in = cfg.in_channels
    for c_out in cfg.stage_channels:
        stage_w.append(kaiming_uniform(rng, (c_out, c_in, 3, 3), c_in * 9, dtype))
        c_in = c_out
    cls_w = kaiming_uniform(rng, (cfg.classes, c_in), c_in, dtype)
    sr = None
    sr_cfg = cfg.resolved_sr()
    if sr_cfg is not None:
        sr = sr_init(sr_cfg, rng, dtype)
    return HostParams(cfg, stage_w, cls_w, sr)


def host_forward(
    params: HostParams,
    x: np.ndarray,
    mode: str = "eval",
    rng: Optional[np.random.Generator] = None,
) -> tuple[np.ndarray, HostCache]:
    """Run the host; returns (logits, cache).

    Train mode applies dropout to the stage-3/4 outputs (drawing masks
    from ``rng``) and fills a cache usable by host_backward; eval mode is
    mask-free and fully deterministic.
    """
    if mode not in ("train", "eval"):
        raise ConfigError(f"mode must be 'train' or 'eval', got {mode!r}")
    cfg = params.cfg
    if x.ndim != 4 or x.shape[1] != cfg.in_channels:
        raise DimensionError(
            f"x: channel axis is {x.shape[1] if x.ndim == 4 else '?'}, "
            f"expected {cfg.in_channels}"
        )
    use_dropout = (
        mode == "train" and cfg.dropout_kind != "none" and cfg.dropout_p > 0.0
    )
    if use_dropout and rng is None:
        raise UsageError("train-mode dropout needs an rng")

    stage_in, stage_pre, masks = [], [], {}
    sr_cache = sr_in = sr_out = None
    act = x
    for stage in range(1, 5):
        stage_in.append(act)
        pre = ops.conv3x3_fwd(act, params.stage_w[stage - 1], STAGE_STRIDES[stage - 1])
        stage_pre.append(pre)
        act = ops.relu_fwd(pre)
        if use_dropout and stage in DROPOUT_STAGES:
            mask = ops.dropout_mask(
                act.shape,
                cfg.dropout_p,
                rng,
                channelwise=(cfg.dropout_kind == "channel"),
                dtype=act.dtype,
            )
            masks[stage] = mask
            act = ops.dropout_apply(act, mask)
        if cfg.sr_insert == stage:
            sr_in = act
            act, sr_cache = sr_forward(params.sr, act)
            sr_out = act
    pooled = ops.global_avgpool_fwd(act)
    logits = ops.linear_fwd(pooled, params.cls_w)
    cache = HostCache(mode, stage_in, stage_pre, masks, sr_cache, sr_in, sr_out,
                      pooled, logits)
    return logits, cache


def host_backward(
    params: HostParams, cache: HostCache, labels: np.ndarray
) -> HostParams:
    """Cross-entropy gradients for every parameter tensor.

    Returns a HostParams-shaped container of gradients. The cache must
    come from a matching train-mode forward.
    """
    if cache.mode != "train":
        raise UsageError("host_backward needs a train-mode cache")
    cfg = params.cfg
    probs = ops.softmax_fwd(cache.logits)
    grad_logits = ops.cross_entropy_bwd(probs, labels)
    grad_pooled, grad_cls = ops.linear_bwd(cache.pooled, params.cls_w, grad_logits)

    last = cache.stage_pre[3].shape  # stage-4 output shape
    grad_act = ops.global_avgpool_bwd(last, grad_pooled)
    grad_stage_w = [None] * 4
    grad_sr = None
    for stage in range(4, 0, -1):
        if cfg.sr_insert == stage:
            grad_sr, grad_act = sr_backward(params.sr, cache.sr_cache, grad_act)
        if stage in cache.dropout_masks:
            grad_act = ops.dropout_bwd(cache.dropout_masks[stage], grad_act)
        grad_pre = ops.relu_bwd(cache.stage_pre[stage - 1], grad_act)
        grad_act, grad_stage_w[stage - 1] = ops.conv3x3_bwd(
            cache.stage_in[stage - 1],
            params.stage_w[stage - 1],
            grad_pre,
            STAGE_STRIDES[stage - 1],
        )
    return HostParams(cfg, grad_stage_w, grad_cls, grad_sr)


def params_from_tensors(cfg: HostConfig, tensors: dict[str, np.ndarray]) -> HostParams:
    """Rebuild HostParams from checkpoint tensors named as items() yields."""
    cfg.validate()
    try:
        stage_w = [tensors[f"stage{i}.w"].copy() for i in range(1, 5)]
        cls_w = tensors["cls.w"].copy()
        sr = None
        sr_cfg = cfg.resolved_sr()
        if sr_cfg is not None:
            sr = SRParams(
                cfg=sr_cfg,
                squeeze_w=tensors["sr.squeeze_w"].copy(),
                fc1_w=tensors["sr.fc1_w"].copy(),
                fc2_w=tensors["sr.fc2_w"].copy(),
                memory=tensors["sr.memory"].copy(),
            )
    except KeyError as e:
        raise ConfigError(f"checkpoint is missing tensor {e.args[0]!r}") from e
    params = HostParams(cfg, stage_w, cls_w, sr)
    for name, t in params.items():
        expected = _expected_shape(cfg, name)
        if t.shape != expected:
            raise ConfigError(
                f"checkpoint tensor {name!r} has shape {t.shape}, expected {expected}"
            )
    return params


def _expected_shape(cfg: HostConfig, name: str) -> tuple[int, ...]:
    chans = (cfg.in_channels,) + tuple(cfg.stage_channels)
    if name.startswith("stage"):
        i = int(name[5])
        return (chans[i], chans[i - 1], 3, 3)
    if name == "cls.w":
        return (cfg.classes, cfg.stage_channels[-1])
    sr = cfg.resolved_sr()
    return {
        "sr.squeeze_w": (sr.c,),
        "sr.fc1_w": (sr.u, sr.h * sr.w),
        "sr.fc2_w": (sr.p, sr.u),
        "sr.memory": (sr.p, sr.c, sr.h, sr.w),
    }[name]


def host_param_count(cfg: HostConfig, with_sr: bool = True) -> int:
    """Total scalar parameters; SR included when configured and requested."""
    total = 0
    c_in = cfg.in_channels
    for c_out in cfg.stage_channels:
        total += c_out * c_in * 9
        c_in = c_out
    total += cfg.classes * c_in
    sr_cfg = cfg.resolved_sr()
    if with_sr and sr_cfg is not None:
        total += sr_param_count(sr_cfg)
    return total
