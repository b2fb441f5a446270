"""Tiny synthetic talking-face generator for tests and demos.

Each clip is a drifting cartoon face whose mouth opening tracks the
clip's acoustic openness curve, so audio and lip motion are genuinely
correlated.  Landmarks follow the standard 68-point layout closely enough
for cropping: jaw arc, brows, nose, eyes and lips.  Everything is a pure
function of the seed.
"""

from __future__ import annotations

import os

import cv2
import numpy as np

from ..errors import ContractError
from .audio import save_audio_features, synthetic_audio_features, synthetic_openness
from .clips import ClipRecord
from .landmarks import save_landmarks
from .preprocess import save_frames_dir

__all__ = [
    "synthetic_clip",
    "synthetic_dataset",
    "write_synthetic_raw",
]


def _face_geometry(rng: np.random.Generator) -> dict:
    return {
        "ax": float(26 + 4 * rng.random()),   # face half-width
        "ay": float(36 + 4 * rng.random()),   # face half-height
        "skin": tuple(int(v) for v in (185 + rng.integers(0, 40),
                                       140 + rng.integers(0, 40),
                                       120 + rng.integers(0, 40))),
        "drift_phase": (2 * np.pi * rng.random(), 2 * np.pi * rng.random()),
    }


def _landmarks(cx: float, cy: float, ax: float, ay: float, openness: float) -> np.ndarray:
    pts = np.zeros((68, 2), dtype=np.float64)
    # jaw: left ear over the chin to the right ear
    phi = np.pi - np.arange(17) * (np.pi / 16)
    pts[0:17, 0] = cx + ax * np.cos(phi)
    pts[0:17, 1] = cy + ay * np.sin(phi)
    # brows
    brow_y = cy - 0.55 * ay
    pts[17:22, 0] = cx - ax * np.linspace(0.65, 0.15, 5)
    pts[17:22, 1] = brow_y
    pts[22:27, 0] = cx + ax * np.linspace(0.15, 0.65, 5)
    pts[22:27, 1] = brow_y
    # nose bridge and base
    pts[27:31, 0] = cx
    pts[27:31, 1] = cy + ay * np.linspace(-0.35, 0.05, 4)
    pts[31:36, 0] = cx + ax * np.linspace(-0.15, 0.15, 5)
    pts[31:36, 1] = cy + 0.12 * ay
    # eyes (hexagons)
    ang = np.arange(6) * (np.pi / 3)
    for base, ex in ((36, -0.35), (42, 0.35)):
        pts[base:base + 6, 0] = cx + ex * ax + 0.12 * ax * np.cos(ang)
        pts[base:base + 6, 1] = cy - 0.30 * ay + 0.06 * ay * np.sin(ang)
    # lips: 12 outer, 8 inner, around the mouth center
    mx, my = cx, cy + 0.45 * ay
    lip_h = 3.0 + 7.0 * openness
    out_ang = np.arange(12) * (2 * np.pi / 12)
    pts[48:60, 0] = mx + 12.0 * np.cos(out_ang)
    pts[48:60, 1] = my + lip_h * np.sin(out_ang)
    in_ang = np.arange(8) * (2 * np.pi / 8)
    pts[60:68, 0] = mx + 9.0 * np.cos(in_ang)
    pts[60:68, 1] = my + max(lip_h - 2.0, 1.0) * np.sin(in_ang)
    return pts


def _draw_frame(h: int, w: int, cx: float, cy: float, geo: dict, openness: float) -> np.ndarray:
    frame = np.zeros((h, w, 3), dtype=np.uint8)
    frame[:] = (38, 42, 60)
    frame[:, :, 2] += (np.linspace(0, 30, h, dtype=np.float64)[:, None]).astype(np.uint8)

    ax, ay = geo["ax"], geo["ay"]
    center = (int(round(cx)), int(round(cy)))
    cv2.ellipse(frame, center, (int(ax), int(ay)), 0, 0, 360, geo["skin"], -1)
    # hairline shading
    cv2.ellipse(frame, (center[0], int(round(cy - 0.75 * ay))),
                (int(0.8 * ax), int(0.3 * ay)), 0, 0, 360, (70, 50, 40), -1)
    # eyes
    for ex in (-0.35, 0.35):
        eye = (int(round(cx + ex * ax)), int(round(cy - 0.30 * ay)))
        cv2.ellipse(frame, eye, (int(0.14 * ax), int(0.07 * ay)), 0, 0, 360, (250, 250, 250), -1)
        cv2.circle(frame, eye, max(1, int(0.05 * ax)), (25, 30, 35), -1)
    # brows
    for sgn in (-1, 1):
        p0 = (int(round(cx + sgn * 0.65 * ax)), int(round(cy - 0.55 * ay)))
        p1 = (int(round(cx + sgn * 0.15 * ax)), int(round(cy - 0.55 * ay)))
        cv2.line(frame, p0, p1, (60, 40, 30), 2)
    # nose
    cv2.line(frame, (int(round(cx)), int(round(cy - 0.35 * ay))),
             (int(round(cx)), int(round(cy + 0.08 * ay))), (140, 100, 90), 2)
    # mouth: lips plus an opening that tracks the audio
    mouth = (int(round(cx)), int(round(cy + 0.45 * ay)))
    lip_h = 3.0 + 7.0 * openness
    cv2.ellipse(frame, mouth, (12, max(2, int(round(lip_h)))), 0, 0, 360, (130, 45, 55), -1)
    opening = 1.0 + 7.0 * openness
    cv2.ellipse(frame, mouth, (9, max(1, int(round(opening)))), 0, 0, 360, (25, 8, 12), -1)
    if openness > 0.55:  # teeth only on a wide-open mouth
        cv2.rectangle(frame, (mouth[0] - 6, mouth[1] - int(opening)),
                      (mouth[0] + 6, mouth[1] - max(1, int(opening) - 2)), (235, 235, 230), -1)
    return frame


def synthetic_clip(n_frames: int, seed: int, frame_h: int = 128, frame_w: int = 96,
                   identity: str | None = None) -> ClipRecord:
    """Render one deterministic clip with aligned landmarks and features."""
    if n_frames < 1:
        raise ContractError("n_frames must be >= 1")
    rng = np.random.Generator(np.random.Philox(key=seed + (2 << 40)))
    geo = _face_geometry(rng)
    openness = synthetic_openness(n_frames, seed)
    features = synthetic_audio_features(n_frames, seed, openness)

    t = np.arange(n_frames, dtype=np.float64) / 25.0
    ph_x, ph_y = geo["drift_phase"]
    cxs = frame_w / 2 + 3.0 * np.sin(2 * np.pi * 0.30 * t + ph_x)
    cys = frame_h / 2 + 4.0 * np.sin(2 * np.pi * 0.20 * t + ph_y)

    frames = np.stack([
        _draw_frame(frame_h, frame_w, cxs[i], cys[i], geo, float(openness[i]))
        for i in range(n_frames)
    ])
    landmarks = np.stack([
        _landmarks(cxs[i], cys[i], geo["ax"], geo["ay"], float(openness[i]))
        for i in range(n_frames)
    ]).astype(np.float32)
    return ClipRecord(
        frames=frames,
        landmarks=landmarks,
        audio_features=features,
        identity=identity or f"synthetic-{seed}",
    )


def synthetic_dataset(n_clips: int, frames_per_clip: int, seed: int,
                      frame_h: int = 128, frame_w: int = 96) -> list[ClipRecord]:
    return [
        synthetic_clip(frames_per_clip, seed * 1000 + i, frame_h, frame_w,
                       identity=f"synthetic-{seed}-{i}")
        for i in range(n_clips)
    ]


def write_synthetic_raw(directory: str, n_frames: int, seed: int,
                        frame_h: int = 128, frame_w: int = 96) -> dict:
    """Write a clip in raw ingestion form: frames dir + landmarks + features.

    Returns the paths, ready to feed the preprocess pipeline.
    """
    clip = synthetic_clip(n_frames, seed, frame_h, frame_w)
    os.makedirs(directory, exist_ok=True)
    frames_dir = os.path.join(directory, "frames")
    save_frames_dir(frames_dir, clip.frames)
    landmark_path = os.path.join(directory, "landmarks.npy")
    save_landmarks(landmark_path, clip.landmarks)
    feature_path = os.path.join(directory, "features.bin")
    save_audio_features(feature_path, clip.audio_features)
    return {
        "frames": frames_dir,
        "landmarks": landmark_path,
        "features": feature_path,
        "fps": 25.0,
        "identity": clip.identity,
    }
