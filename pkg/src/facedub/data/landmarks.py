"""Per-frame 68-point landmark arrays.

Stored either as one .npy file of shape (N, 68, 2) float32 or as CSV with
one row of 136 floats (x0 y0 x1 y1 ...) per frame.  A row of NaNs marks a
frame with no detectable face.
"""

from __future__ import annotations

import numpy as np

from ..errors import IngestionError

__all__ = ["load_landmarks", "save_landmarks", "frame_has_face"]


def _validate(arr: np.ndarray, path: str) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float32)
    if arr.ndim == 2 and arr.shape[1] == 136:
        arr = arr.reshape(arr.shape[0], 68, 2)
    if arr.ndim != 3 or arr.shape[1:] != (68, 2):
        raise IngestionError(f"landmarks in {path} must be (N, 68, 2), got {arr.shape}")
    return arr


def load_landmarks(path: str) -> np.ndarray:
    if path.endswith(".npy"):
        try:
            arr = np.load(path)
        except Exception as exc:
            raise IngestionError(f"cannot read landmark file {path}: {exc}") from exc
        return _validate(arr, path)
    if path.endswith(".csv"):
        try:
            arr = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
        except Exception as exc:
            raise IngestionError(f"cannot read landmark CSV {path}: {exc}") from exc
        return _validate(arr, path)
    raise IngestionError(f"unsupported landmark file type: {path} (expected .npy or .csv)")


def save_landmarks(path: str, landmarks: np.ndarray):
    arr = _validate(landmarks, path)
    if path.endswith(".npy"):
        np.save(path, arr.astype(np.float32))
    elif path.endswith(".csv"):
        np.savetxt(path, arr.reshape(arr.shape[0], 136), delimiter=",", fmt="%.4f")
    else:
        raise IngestionError(f"unsupported landmark file type: {path} (expected .npy or .csv)")


def frame_has_face(landmarks_row: np.ndarray) -> bool:
    return bool(np.isfinite(landmarks_row).all())
