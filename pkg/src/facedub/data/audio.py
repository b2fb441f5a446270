"""Per-frame acoustic feature streams and windowing.

A feature stream is one 29-dim float32 vector per 25 fps video frame.
Three backends produce streams: a precomputed feature file, a deterministic
synthetic generator (tests, demos), and an external pretrained speech model
supplied by the user as an asset file.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from ..errors import ConfigurationError, ContractError, IngestionError
from .preprocess import nearest_frame_indices

__all__ = [
    "AUDIO_FEATURE_DIM",
    "save_audio_features",
    "load_audio_features",
    "audio_window",
    "resample_feature_stream",
    "synthetic_audio_features",
    "DeepSpeechBackend",
    "resolve_audio_features",
]

AUDIO_FEATURE_DIM = 29

_MAGIC = b"FDAF"
_VERSION = 1


def _check_stream(features) -> np.ndarray:
    arr = np.asarray(features, dtype=np.float32)
    if arr.ndim != 2:
        raise ContractError(f"feature stream must be rank 2, got shape {arr.shape}")
    return arr


def save_audio_features(path: str, features: np.ndarray):
    """Write a stream as: magic, version, frame count, dim, float32 LE data."""
    arr = _check_stream(features)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<III", _VERSION, arr.shape[0], arr.shape[1]))
        fh.write(arr.astype("<f4").tobytes())


def load_audio_features(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise IngestionError(f"not an audio feature file: {path}")
        version, frames, dim = struct.unpack("<III", fh.read(12))
        if version != _VERSION:
            raise IngestionError(f"unsupported audio feature version {version} in {path}")
        data = np.frombuffer(fh.read(frames * dim * 4), dtype="<f4")
    if data.size != frames * dim:
        raise IngestionError(f"truncated audio feature file: {path}")
    return data.reshape(frames, dim).astype(np.float32)


def audio_window(features: np.ndarray, frame_idx: int, length: int = 5) -> np.ndarray:
    """Window of ``length`` feature rows centered at ``frame_idx``.

    Offsets run -(length//2)..+(length - length//2 - 1); rows past either
    edge replicate the nearest valid row.
    """
    arr = _check_stream(features)
    if length < 1:
        raise ContractError("window length must be >= 1")
    n = arr.shape[0]
    if n == 0:
        raise ContractError("empty feature stream")
    lo = frame_idx - length // 2
    idx = np.clip(np.arange(lo, lo + length), 0, n - 1)
    return arr[idx]


def resample_feature_stream(features: np.ndarray, src_rate: float,
                            target_fps: float = 25.0) -> np.ndarray:
    """Nearest-timestamp resampling of a native-rate stream to video frames."""
    arr = _check_stream(features)
    idx = nearest_frame_indices(arr.shape[0], src_rate, target_fps)
    return arr[idx]


def synthetic_audio_features(n_frames: int, seed: int,
                             openness: np.ndarray | None = None) -> np.ndarray:
    """Deterministic feature stream for tests and demos.

    Column 0 carries the mouth-openness signal in [-1, 1], columns 1-2 its
    first difference and a quadrature copy, and the rest is low-amplitude
    counter-based noise.  Bit-identical across runs for a given seed.
    """
    if n_frames < 1:
        raise ContractError("n_frames must be >= 1")
    if openness is None:
        openness = synthetic_openness(n_frames, seed)
    openness = np.asarray(openness, dtype=np.float64)
    if openness.shape != (n_frames,):
        raise ContractError(f"openness must have shape ({n_frames},)")

    rng = np.random.Generator(np.random.Philox(key=seed))
    feats = np.zeros((n_frames, AUDIO_FEATURE_DIM), dtype=np.float64)
    feats[:, 0] = 2.0 * openness - 1.0
    feats[1:, 1] = np.diff(openness) * 5.0
    feats[:, 2] = 2.0 * np.roll(openness, 1) - 1.0
    feats[:, 3:] = 0.1 * rng.standard_normal((n_frames, AUDIO_FEATURE_DIM - 3))
    return feats.astype(np.float32)


def synthetic_openness(n_frames: int, seed: int) -> np.ndarray:
    """Smooth [0, 1] mouth-openness curve at 25 fps, seeded per clip."""
    rng = np.random.Generator(np.random.Philox(key=seed + (1 << 32)))
    freq = 1.5 + 2.0 * rng.random()
    phase = 2.0 * np.pi * rng.random()
    t = np.arange(n_frames, dtype=np.float64) / 25.0
    return 0.5 + 0.5 * np.sin(2.0 * np.pi * freq * t + phase)


class DeepSpeechBackend:
    """Plug-in for a pretrained speech model producing 29-dim features.

    The model asset is supplied by the user; construction fails with a
    configuration error naming the missing asset.
    """

    def __init__(self, model_path: str):
        if not model_path or not os.path.exists(model_path):
            raise ConfigurationError(
                f"speech feature model asset not found: {model_path!r} "
                "(supply a pretrained model file, or use precomputed features)")
        self.model_path = model_path

    def features_from_wav(self, wav_path: str) -> np.ndarray:
        if not os.path.exists(wav_path):
            raise IngestionError(f"audio file not found: {wav_path}")
        raise ConfigurationError(
            "waveform feature extraction requires the external speech model "
            f"runtime for asset {self.model_path!r}; precompute features "
            "with that tool and pass the feature file instead")


def resolve_audio_features(spec: str, speech_model: str | None = None) -> np.ndarray:
    """Turn a CLI audio argument into a feature stream.

    ``spec`` is a feature file path, a .wav path (needs ``speech_model``),
    or ``synthetic:frames=N,seed=S``.
    """
    if spec.startswith("synthetic:"):
        kv = {}
        for part in spec[len("synthetic:"):].split(","):
            if not part:
                continue
            key, _, value = part.partition("=")
            kv[key.strip()] = value.strip()
        try:
            frames = int(kv["frames"])
            seed = int(kv.get("seed", "0"))
        except (KeyError, ValueError):
            raise ConfigurationError(
                f"bad synthetic audio spec {spec!r}; expected synthetic:frames=N[,seed=S]")
        return synthetic_audio_features(frames, seed)
    if spec.lower().endswith(".wav"):
        backend = DeepSpeechBackend(speech_model or "")
        return backend.features_from_wav(spec)
    if not os.path.exists(spec):
        raise ConfigurationError(f"audio feature file not found: {spec}")
    return load_audio_features(spec)
