"""Interpretability readouts for a trained SR-augmented host.

Three views of what the block learned, mirrored to CSV (and PGM for the
spatial maps) so external tools can replot them:

  * per-class statistics of the softmax weights over memory blocks,
  * per-channel feature-map shift introduced by the block (mean absolute
    difference between its input and output, plus a relative percentage),
  * channel-mean heat maps of each memory block,

plus an ablation comparison (accuracy with the trained memory vs with the
memory zeroed). Everything here is read-only over the parameters.

The relative shift is defined as 100 * mean|out - in| / mean|in| per
channel (insertion points sit after a ReLU, so mean|in| equals the plain
channel mean that is also emitted; the raw numerator and denominator are
both in the CSV, so any alternative normalization can be recomputed).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .checkpoint import atomic_write_bytes
from .data import Dataset
from .errors import ConfigError
from .host import HostParams, host_forward
from .sr_block import SRParams, sr_ablate
from .train import evaluate

SAMPLE_CAP_PER_CLASS = 50


@dataclass
class ActivationRecord:
    """Softmax weight vector of one sample at the SR block."""

    sample_id: int
    class_label: int
    alpha: np.ndarray


@dataclass
class ActivationStats:
    class_label: object  # int class, or "all" for the pooled group
    mean: np.ndarray
    std: np.ndarray
    n_samples: int


@dataclass
class DeltaStats:
    """Per-channel feature-map shift for one class."""

    class_label: int
    pre_mean: np.ndarray
    post_mean: np.ndarray
    abs_delta: np.ndarray
    shift_pct: np.ndarray


def _require_sr(params: HostParams) -> SRParams:
    if params.sr is None or params.cfg.sr_insert is None:
        raise ConfigError("host has no SR block to analyze")
    return params.sr


def _select_ids(
    data: Dataset, class_filter: Optional[Sequence[int]], cap: Optional[int]
) -> list[int]:
    """Sample ids in ascending order, at most ``cap`` per class."""
    wanted = None if class_filter is None else set(class_filter)
    taken: dict[int, int] = {}
    ids = []
    for i in range(len(data)):
        k = int(data.y[i])
        if wanted is not None and k not in wanted:
            continue
        if cap is not None and taken.get(k, 0) >= cap:
            continue
        taken[k] = taken.get(k, 0) + 1
        ids.append(i)
    return ids


def collect_activations(
    params: HostParams,
    data: Dataset,
    class_filter: Optional[Sequence[int]] = None,
    cap: Optional[int] = SAMPLE_CAP_PER_CLASS,
    batch: int = 256,
) -> list[ActivationRecord]:
    """One record per matching sample, eval mode (dropout off)."""
    _require_sr(params)
    ids = _select_ids(data, class_filter, cap)
    records = []
    for start in range(0, len(ids), batch):
        chunk = ids[start : start + batch]
        _, cache = host_forward(params, data.x[chunk], "eval")
        alpha = cache.sr_cache.alpha
        for row, i in enumerate(chunk):
            records.append(
                ActivationRecord(i, int(data.y[i]), alpha[row].copy())
            )
    return records


def activation_stats(
    records: Iterable[ActivationRecord], group: str = "per_class"
) -> list[ActivationStats]:
    """Mean and unbiased std of alpha, per class or pooled.

    Groups come back sorted by class label; a single-record group has
    zero std by convention.
    """
    if group not in ("per_class", "all"):
        raise ConfigError(f"group must be 'per_class' or 'all', got {group!r}")
    records = list(records)
    if not records:
        return []
    buckets: dict[object, list[np.ndarray]] = {}
    if group == "all":
        buckets["all"] = [r.alpha for r in records]
    else:
        for r in records:
            buckets.setdefault(r.class_label, []).append(r.alpha)
    out = []
    for label in sorted(buckets, key=str) if group == "all" else sorted(buckets):
        stack = np.stack(buckets[label]).astype(np.float64)
        mean = stack.mean(axis=0)
        std = (
            np.zeros_like(mean)
            if stack.shape[0] < 2
            else stack.std(axis=0, ddof=1)
        )
        out.append(ActivationStats(label, mean, std, stack.shape[0]))
    return out


def memory_channel_means(sr: SRParams) -> np.ndarray:
    """(p, h, w) maps: channel mean of each memory block."""
    return sr.memory.mean(axis=1)


def feature_delta(
    params: HostParams,
    data: Dataset,
    class_filter: Optional[Sequence[int]] = None,
    cap: Optional[int] = SAMPLE_CAP_PER_CLASS,
    batch: int = 256,
) -> list[DeltaStats]:
    """Per-class, per-channel shift between the SR input and output maps.

    shift_pct = 100 * mean|out - in| / mean|in|; channels whose mean|in|
    is below 1e-12 get NaN as a not-a-value marker.
    """
    _require_sr(params)
    ids = _select_ids(data, class_filter, cap)
    per_class: dict[int, list[tuple[np.ndarray, np.ndarray, np.ndarray, int]]] = {}
    for start in range(0, len(ids), batch):
        chunk = ids[start : start + batch]
        _, cache = host_forward(params, data.x[chunk], "eval")
        pre, post = cache.sr_in, cache.sr_out
        delta = np.abs(post - pre)
        labels = data.y[chunk]
        for k in np.unique(labels):
            sel = labels == k
            per_class.setdefault(int(k), []).append(
                (
                    pre[sel].sum(axis=(0, 2, 3), dtype=np.float64),
                    post[sel].sum(axis=(0, 2, 3), dtype=np.float64),
                    delta[sel].sum(axis=(0, 2, 3), dtype=np.float64),
                    int(sel.sum()),
                )
            )
    out = []
    for k in sorted(per_class):
        pre_sum = sum(t[0] for t in per_class[k])
        post_sum = sum(t[1] for t in per_class[k])
        delta_sum = sum(t[2] for t in per_class[k])
        count = sum(t[3] for t in per_class[k])
        sr_cfg = params.sr.cfg
        denom = count * sr_cfg.h * sr_cfg.w
        pre_mean = pre_sum / denom
        post_mean = post_sum / denom
        abs_delta = delta_sum / denom
        abs_in = np.abs(pre_mean)  # insertion point is post-ReLU, so pre >= 0
        shift = np.where(
            abs_in < 1e-12, np.nan, 100.0 * abs_delta / np.maximum(abs_in, 1e-300)
        )
        out.append(DeltaStats(k, pre_mean, post_mean, abs_delta, shift))
    return out


def ablation_report(
    params: HostParams, test_set: Dataset
) -> tuple[float, float, float]:
    """(accuracy, accuracy with memory zeroed, signed difference)."""
    _require_sr(params)
    ablated = params.copy()
    ablated.sr = sr_ablate(params.sr)
    acc_full = evaluate(params, test_set)
    acc_ablated = evaluate(ablated, test_set)
    return acc_full, acc_ablated, acc_full - acc_ablated


# ---------------------------------------------------------------------------
# File outputs
# ---------------------------------------------------------------------------

def write_activations_csv(path: str, stats: list[ActivationStats]) -> None:
    """Header class,block_0..block_{p-1}; per class a mean row then a std row."""
    if not stats:
        raise ConfigError("no activation stats to write")
    p = stats[0].mean.shape[0]
    rows = [["class"] + [f"block_{i}" for i in range(p)]]
    for s in stats:
        rows.append([s.class_label] + [repr(float(v)) for v in s.mean])
        rows.append([s.class_label] + [repr(float(v)) for v in s.std])
    _write_csv(path, rows)


def write_delta_csv(path: str, deltas: list[DeltaStats]) -> None:
    rows = [["class", "channel", "pre_mean", "post_mean", "abs_delta", "shift_pct"]]
    for d in deltas:
        for ch in range(d.pre_mean.shape[0]):
            rows.append(
                [
                    d.class_label,
                    ch,
                    repr(float(d.pre_mean[ch])),
                    repr(float(d.post_mean[ch])),
                    repr(float(d.abs_delta[ch])),
                    repr(float(d.shift_pct[ch])),
                ]
            )
    _write_csv(path, rows)


def write_ablation_csv(path: str, acc_full: float, acc_ablated: float, delta: float) -> None:
    _write_csv(
        path,
        [
            ["acc_full", "acc_ablated", "delta"],
            [repr(acc_full), repr(acc_ablated), repr(delta)],
        ],
    )


def _write_csv(path: str, rows: list[list]) -> None:
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    atomic_write_bytes(path, buf.getvalue().encode("utf-8"))


def write_pgm(path: str, image: np.ndarray) -> None:
    """8-bit binary PGM with per-file min/max normalization.

    min maps to 0 and max to 255; a constant map (zero range) writes all
    zeros. Raw floats live in the CSVs, so quantization loses nothing.
    """
    if image.ndim != 2:
        raise ConfigError("PGM export expects a 2-d map")
    lo = float(image.min())
    hi = float(image.max())
    if hi > lo:
        scaled = np.floor((image.astype(np.float64) - lo) / (hi - lo) * 255.0 + 0.5)
    else:
        scaled = np.zeros_like(image, dtype=np.float64)
    pixels = np.clip(scaled, 0, 255).astype(np.uint8)
    header = f"P5\n{image.shape[1]} {image.shape[0]}\n255\n".encode("ascii")
    atomic_write_bytes(path, header + pixels.tobytes())
