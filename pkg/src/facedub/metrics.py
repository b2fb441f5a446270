"""Frame and directory-level quality metrics.

PSNR and SSIM are computed natively on [0, 1] images; metrics that need
third-party pretrained networks (LPIPS, lip-sync error) plug in through
:class:`MetricPlugin` providers and are absent by default.
"""

from __future__ import annotations

import json
import math
import os
from typing import Protocol, Sequence, runtime_checkable

import cv2
import numpy as np

from .errors import ContractError, MetricsError

__all__ = [
    "psnr",
    "ssim",
    "MetricPlugin",
    "evaluate_dirs",
    "write_report",
    "read_report",
]

REPORT_FORMAT = "facedub-report-v1"

_SSIM_SIGMA = 1.5
_SSIM_RADIUS = 5  # 11-tap window
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03


def _as_chw(image, what: str) -> np.ndarray:
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ContractError(f"{what} must be (H, W) or (C, H, W), got shape {arr.shape}")
    return arr


def _check_pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = _as_chw(a, "first image")
    b = _as_chw(b, "second image")
    if a.shape != b.shape:
        raise ContractError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB for [0, 1] images.

    Identical inputs have zero error; the returned sentinel is ``inf``.
    """
    a, b = _check_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _gaussian_kernel(radius: int = _SSIM_RADIUS, sigma: float = _SSIM_SIGMA) -> np.ndarray:
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _filter_valid(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Separable 'valid'-mode correlation with a symmetric 1-D kernel."""
    taps = kernel.shape[0]
    out = np.zeros((img.shape[0] - taps + 1, img.shape[1]), dtype=np.float64)
    for i, k in enumerate(kernel):
        out += k * img[i:i + out.shape[0], :]
    out2 = np.zeros((out.shape[0], img.shape[1] - taps + 1), dtype=np.float64)
    for i, k in enumerate(kernel):
        out2 += k * out[:, i:i + out2.shape[1]]
    return out2


def ssim(a, b) -> float:
    """Mean structural similarity with the standard 11x11 Gaussian window.

    Channels are scored independently and averaged; the dynamic range is 1.
    """
    a, b = _check_pair(a, b)
    win = 2 * _SSIM_RADIUS + 1
    if a.shape[1] < win or a.shape[2] < win:
        raise ContractError(f"images must be at least {win}x{win} for SSIM, got {a.shape[1:]}")
    kernel = _gaussian_kernel()
    c1 = _SSIM_K1 ** 2
    c2 = _SSIM_K2 ** 2
    values = []
    for x, y in zip(a, b):
        mu_x = _filter_valid(x, kernel)
        mu_y = _filter_valid(y, kernel)
        xx = _filter_valid(x * x, kernel) - mu_x * mu_x
        yy = _filter_valid(y * y, kernel) - mu_y * mu_y
        xy = _filter_valid(x * y, kernel) - mu_x * mu_y
        s = ((2 * mu_x * mu_y + c1) * (2 * xy + c2)) / ((mu_x ** 2 + mu_y ** 2 + c1) * (xx + yy + c2))
        values.append(float(s.mean()))
    return float(np.mean(values))


@runtime_checkable
class MetricPlugin(Protocol):
    """Provider interface for model-backed metrics.

    ``name`` labels the report column; ``score_video`` receives matched
    lists of (3, H, W) float [0, 1] RGB frames and returns one value.
    """

    name: str

    def score_video(self, pred_frames: Sequence[np.ndarray],
                    gt_frames: Sequence[np.ndarray]) -> float: ...


_IMAGE_EXTS = {".png", ".jpg", ".jpeg", ".bmp"}


def _list_frames(directory: str) -> list[str]:
    names = sorted(n for n in os.listdir(directory)
                   if os.path.splitext(n)[1].lower() in _IMAGE_EXTS)
    return [os.path.join(directory, n) for n in names]


def _list_videos(directory: str) -> dict[str, list[str]]:
    if not os.path.isdir(directory):
        raise MetricsError(f"not a directory: {directory}")
    subdirs = sorted(n for n in os.listdir(directory)
                     if os.path.isdir(os.path.join(directory, n)))
    if subdirs:
        return {n: _list_frames(os.path.join(directory, n)) for n in subdirs}
    return {".": _list_frames(directory)}


def _load_frame(path: str) -> np.ndarray:
    bgr = cv2.imread(path, cv2.IMREAD_COLOR)
    if bgr is None:
        raise MetricsError(f"unreadable image: {path}")
    rgb = cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB)
    return rgb.astype(np.float32).transpose(2, 0, 1) / 255.0


def evaluate_dirs(pred_dir: str, gt_dir: str,
                  plugins: Sequence[MetricPlugin] = ()) -> dict:
    """Score every video in ``pred_dir`` against its twin in ``gt_dir``.

    Both directories hold either per-video subdirectories of frames or a
    flat set of frames (treated as a single video).  Frame counts must
    match video by video.
    """
    pred = _list_videos(pred_dir)
    gt = _list_videos(gt_dir)
    problems = []
    if set(pred) != set(gt):
        only_pred = sorted(set(pred) - set(gt))
        only_gt = sorted(set(gt) - set(pred))
        raise MetricsError(
            f"video sets differ (only in pred: {only_pred}, only in gt: {only_gt})")
    for name in sorted(pred):
        if len(pred[name]) != len(gt[name]):
            problems.append(f"{name}: {len(pred[name])} pred vs {len(gt[name])} gt frames")
    if problems:
        raise MetricsError("frame-count mismatch: " + "; ".join(problems))

    metric_names = ["ssim", "psnr"] + [p.name for p in plugins]
    videos = {}
    for name in sorted(pred):
        pred_frames = [_load_frame(p) for p in pred[name]]
        gt_frames = [_load_frame(p) for p in gt[name]]
        if not pred_frames:
            raise MetricsError(f"video {name!r} has no frames")
        entry = {
            "frames": len(pred_frames),
            "ssim": float(np.mean([ssim(p, g) for p, g in zip(pred_frames, gt_frames)])),
            "psnr": float(np.mean([psnr(p, g) for p, g in zip(pred_frames, gt_frames)])),
        }
        for plugin in plugins:
            entry[plugin.name] = float(plugin.score_video(pred_frames, gt_frames))
        videos[name] = entry

    aggregate = {m: float(np.mean([videos[v][m] for v in videos])) for m in metric_names}
    return {
        "format": REPORT_FORMAT,
        "metrics": metric_names,
        "videos": videos,
        "aggregate": aggregate,
    }


def _encode_value(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _decode_value(v):
    if v == "inf":
        return math.inf
    if v == "-inf":
        return -math.inf
    return v


def write_report(report: dict, path: str):
    """Serialize a report; infinities are stored as the strings "inf"/"-inf"."""
    def enc(obj):
        if isinstance(obj, dict):
            return {k: enc(v) for k, v in obj.items()}
        return _encode_value(obj)

    with open(path, "w", encoding="utf-8") as fh:
        json.dump(enc(report), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def read_report(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if raw.get("format") != REPORT_FORMAT:
        raise MetricsError(f"unsupported report format: {raw.get('format')!r}")

    def dec(obj):
        if isinstance(obj, dict):
            return {k: dec(v) for k, v in obj.items()}
        return _decode_value(obj)

    return dec(raw)
