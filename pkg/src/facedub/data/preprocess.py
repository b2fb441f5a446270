"""Frame-rate resampling, landmark-driven face cropping and mouth masking.

The face crop is the bounding box of the 68 landmarks expanded by fixed
margins (20% of the box height upward for the forehead, 5% downward past
the chin, 10% of the box width on each side), padded symmetrically to the
target aspect ratio and resized to 416x320.  The mouth rectangle is fixed
in crop coordinates: a horizontally centered block whose top edge sits at
row 160/416 of the crop height and which extends to the bottom edge
(256x256 at full resolution, scaled proportionally otherwise).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import cv2
import numpy as np

from ..errors import ContractError, IngestionError

__all__ = [
    "TARGET_FACE_SIZE",
    "nearest_frame_indices",
    "resample_frames",
    "load_video",
    "load_frames_dir",
    "save_frames_dir",
    "CropTransform",
    "compute_crop_rect",
    "crop_face",
    "mouth_rect",
    "mask_mouth",
    "face_to_frame",
    "frame_to_face",
]

TARGET_FACE_SIZE = (416, 320)  # (height, width)

_MARGIN_TOP = 0.20
_MARGIN_BOTTOM = 0.05
_MARGIN_SIDE = 0.10

_MOUTH_TOP_FRAC = 160 / 416
_MOUTH_SIDE_FRAC = 32 / 320


def nearest_frame_indices(n_frames: int, src_fps: float, target_fps: float = 25.0) -> np.ndarray:
    """Nearest-timestamp index mapping from ``src_fps`` to ``target_fps``.

    Output length preserves duration within one frame; ties round up.
    """
    if n_frames < 1:
        raise IngestionError("empty frame sequence")
    if src_fps <= 0 or target_fps <= 0:
        raise IngestionError(f"invalid frame rate: {src_fps} -> {target_fps}")
    n_out = int(np.floor(n_frames * target_fps / src_fps + 0.5))
    n_out = max(n_out, 1)
    idx = np.floor(np.arange(n_out) * (src_fps / target_fps) + 0.5).astype(np.int64)
    return np.minimum(idx, n_frames - 1)


def resample_frames(frames, src_fps: float, target_fps: float = 25.0) -> list:
    idx = nearest_frame_indices(len(frames), src_fps, target_fps)
    return [frames[i] for i in idx]


def load_video(path: str) -> tuple[list[np.ndarray], float]:
    """Decode a video file into RGB uint8 frames; returns (frames, fps)."""
    cap = cv2.VideoCapture(path)
    if not cap.isOpened():
        raise IngestionError(f"cannot decode video: {path}")
    fps = cap.get(cv2.CAP_PROP_FPS) or 0.0
    frames = []
    while True:
        ok, bgr = cap.read()
        if not ok:
            break
        frames.append(cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB))
    cap.release()
    if not frames:
        raise IngestionError(f"video has no decodable frames: {path}")
    return frames, float(fps)


def load_frames_dir(path: str) -> list[np.ndarray]:
    names = sorted(n for n in os.listdir(path)
                   if os.path.splitext(n)[1].lower() in (".png", ".jpg", ".jpeg", ".bmp"))
    if not names:
        raise IngestionError(f"no image frames in directory: {path}")
    frames = []
    for name in names:
        bgr = cv2.imread(os.path.join(path, name), cv2.IMREAD_COLOR)
        if bgr is None:
            raise IngestionError(f"unreadable frame: {os.path.join(path, name)}")
        frames.append(cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB))
    return frames


def save_frames_dir(path: str, frames) -> list[str]:
    os.makedirs(path, exist_ok=True)
    written = []
    for i, frame in enumerate(frames):
        out = os.path.join(path, f"{i:06d}.png")
        if not cv2.imwrite(out, cv2.cvtColor(frame, cv2.COLOR_RGB2BGR)):
            raise IngestionError(f"cannot write frame: {out}")
        written.append(out)
    return written


@dataclass(frozen=True)
class CropTransform:
    """Invertible mapping between full-frame pixels and the face crop.

    ``x0/y0/x1/y1`` bound the source rectangle (exclusive upper edges);
    the crop is that rectangle resized to ``target_h x target_w``.
    """

    x0: int
    y0: int
    x1: int
    y1: int
    target_h: int
    target_w: int

    @property
    def rect(self) -> tuple[int, int, int, int]:
        return (self.x0, self.y0, self.x1, self.y1)

    @property
    def scale_x(self) -> float:
        return (self.x1 - self.x0) / self.target_w

    @property
    def scale_y(self) -> float:
        return (self.y1 - self.y0) / self.target_h

    def to_crop(self, x, y):
        """Full-frame pixel coordinates -> crop pixel coordinates."""
        cx = (np.asarray(x, dtype=np.float64) - self.x0 + 0.5) / self.scale_x - 0.5
        cy = (np.asarray(y, dtype=np.float64) - self.y0 + 0.5) / self.scale_y - 0.5
        return cx, cy

    def to_full(self, x, y):
        """Crop pixel coordinates -> full-frame pixel coordinates."""
        fx = (np.asarray(x, dtype=np.float64) + 0.5) * self.scale_x + self.x0 - 0.5
        fy = (np.asarray(y, dtype=np.float64) + 0.5) * self.scale_y + self.y0 - 0.5
        return fx, fy

    def crop(self, frame: np.ndarray) -> np.ndarray:
        """Extract the face as a float32 (3, target_h, target_w) [0, 1] image."""
        if frame.ndim != 3 or frame.shape[2] != 3:
            raise ContractError(f"frame must be (H, W, 3), got {frame.shape}")
        region = frame[self.y0:self.y1, self.x0:self.x1]
        if region.shape[0] != self.y1 - self.y0 or region.shape[1] != self.x1 - self.x0:
            raise ContractError("crop rectangle exceeds frame bounds")
        if (region.shape[0], region.shape[1]) != (self.target_h, self.target_w):
            region = cv2.resize(region, (self.target_w, self.target_h),
                                interpolation=cv2.INTER_LINEAR)
        return frame_to_face(region)


def frame_to_face(region: np.ndarray) -> np.ndarray:
    """uint8 HWC RGB -> float32 (3, H, W) in [0, 1]."""
    return region.astype(np.float32).transpose(2, 0, 1) / 255.0


def face_to_frame(face: np.ndarray) -> np.ndarray:
    """float (3, H, W) in [0, 1] -> uint8 HWC RGB with round-half-up."""
    arr = np.asarray(face, dtype=np.float32)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ContractError(f"face must be (3, H, W), got {arr.shape}")
    return np.clip(np.floor(arr * 255.0 + 0.5), 0, 255).astype(np.uint8).transpose(1, 2, 0)


def compute_crop_rect(landmarks: np.ndarray, frame_h: int, frame_w: int,
                      target: tuple[int, int] = TARGET_FACE_SIZE) -> tuple[int, int, int, int]:
    """Face rectangle from 68 landmarks: margins, aspect padding, fitting."""
    pts = np.asarray(landmarks, dtype=np.float64)
    if pts.shape != (68, 2):
        raise ContractError(f"landmarks must be (68, 2), got {pts.shape}")
    if not np.isfinite(pts).all():
        raise IngestionError("landmarks contain non-finite values")
    x_min, y_min = pts.min(axis=0)
    x_max, y_max = pts.max(axis=0)
    box_w = x_max - x_min
    box_h = y_max - y_min
    if box_w < 2.0 or box_h < 2.0:
        raise IngestionError("degenerate landmarks: face box has (near) zero area")

    x0 = x_min - _MARGIN_SIDE * box_w
    x1 = x_max + _MARGIN_SIDE * box_w
    y0 = y_min - _MARGIN_TOP * box_h
    y1 = y_max + _MARGIN_BOTTOM * box_h

    target_h, target_w = target
    aspect = target_w / target_h
    w, h = x1 - x0, y1 - y0
    if w / h < aspect:  # too narrow: pad width
        pad = (h * aspect - w) / 2
        x0, x1 = x0 - pad, x1 + pad
    else:  # too wide: pad height
        pad = (w / aspect - h) / 2
        y0, y1 = y0 - pad, y1 + pad

    ix0, iy0 = int(np.floor(x0 + 0.5)), int(np.floor(y0 + 0.5))
    ix1 = ix0 + max(2, int(np.floor(x1 - x0 + 0.5)))
    iy1 = iy0 + max(2, int(np.floor(y1 - y0 + 0.5)))

    # shift inside the frame; error out only if the face box cannot fit
    if ix1 - ix0 > frame_w or iy1 - iy0 > frame_h:
        raise IngestionError(
            f"face crop {ix1 - ix0}x{iy1 - iy0} larger than frame {frame_w}x{frame_h}")
    if ix0 < 0:
        ix1 -= ix0
        ix0 = 0
    if iy0 < 0:
        iy1 -= iy0
        iy0 = 0
    if ix1 > frame_w:
        ix0 -= ix1 - frame_w
        ix1 = frame_w
    if iy1 > frame_h:
        iy0 -= iy1 - frame_h
        iy1 = frame_h
    return ix0, iy0, ix1, iy1


def crop_face(frame: np.ndarray, landmarks: np.ndarray,
              target: tuple[int, int] = TARGET_FACE_SIZE) -> tuple[np.ndarray, CropTransform]:
    """Crop and resize the face region; returns (face, transform)."""
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise ContractError(f"frame must be (H, W, 3), got {frame.shape}")
    x0, y0, x1, y1 = compute_crop_rect(landmarks, frame.shape[0], frame.shape[1], target)
    transform = CropTransform(x0, y0, x1, y1, target[0], target[1])
    return transform.crop(frame), transform


def mouth_rect(face_h: int, face_w: int) -> tuple[int, int, int, int]:
    """(y0, y1, x0, x1) of the fixed mouth block in crop coordinates."""
    y0 = int(np.floor(face_h * _MOUTH_TOP_FRAC + 0.5))
    x0 = int(np.floor(face_w * _MOUTH_SIDE_FRAC + 0.5))
    return y0, face_h, x0, face_w - x0


def mask_mouth(face: np.ndarray) -> np.ndarray:
    """Zero-fill the mouth rectangle; all other pixels are untouched."""
    if face.ndim != 3 or face.shape[0] != 3:
        raise ContractError(f"face must be (3, H, W), got {face.shape}")
    y0, y1, x0, x1 = mouth_rect(face.shape[1], face.shape[2])
    out = face.copy()
    out[:, y0:y1, x0:x1] = 0.0
    return out
