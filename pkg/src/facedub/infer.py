"""End-to-end dubbing: synthesize mouth frames for a driving audio and
composite them back into the source frames."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field

import cv2
import numpy as np
import torch

from .data.audio import audio_window
from .data.landmarks import frame_has_face
from .data.preprocess import CropTransform, crop_face, face_to_frame, mask_mouth
from .errors import ConfigurationError, ContractError, IngestionError
from .train import load_generator

__all__ = ["paste_back", "dub_video", "DubResult", "DEFAULT_FEATHER"]

log = logging.getLogger(__name__)

DUB_MANIFEST_FORMAT = "facedub-dub-v1"
DEFAULT_FEATHER = 5


def paste_back(frame: np.ndarray, face: np.ndarray, transform: CropTransform,
               feather: int = DEFAULT_FEATHER) -> np.ndarray:
    """Composite a generated face into its source frame.

    The face is resized back into the transform's rectangle.  With
    ``feather > 0`` an edge band of that many pixels blends linearly from
    source to generated content; pixels outside the rectangle are never
    touched.
    """
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise ContractError(f"frame must be (H, W, 3), got {frame.shape}")
    face = np.asarray(face, dtype=np.float32)
    if face.ndim != 3 or face.shape[0] != 3:
        raise ContractError(f"face must be (3, H, W), got {face.shape}")
    if face.shape[1] != transform.target_h or face.shape[2] != transform.target_w:
        raise ContractError(
            f"face size {face.shape[1:]} does not match transform target "
            f"{(transform.target_h, transform.target_w)}")
    x0, y0, x1, y1 = transform.rect
    if x0 < 0 or y0 < 0 or x1 > frame.shape[1] or y1 > frame.shape[0]:
        raise ContractError("transform rectangle exceeds frame bounds")
    rect_h, rect_w = y1 - y0, x1 - x0
    if feather < 0:
        raise ContractError("feather must be >= 0")

    patch = face_to_frame(face)
    if (rect_h, rect_w) != patch.shape[:2]:
        patch = cv2.resize(patch, (rect_w, rect_h), interpolation=cv2.INTER_LINEAR)

    out = frame.copy()
    if feather == 0:
        out[y0:y1, x0:x1] = patch
        return out

    rows = np.arange(rect_h, dtype=np.float64)
    cols = np.arange(rect_w, dtype=np.float64)
    edge = np.minimum.outer(np.minimum(rows, rect_h - 1 - rows),
                            np.minimum(cols, rect_w - 1 - cols))
    alpha = np.minimum(1.0, (edge + 0.5) / feather)[..., None]
    src = out[y0:y1, x0:x1].astype(np.float64)
    blended = alpha * patch.astype(np.float64) + (1.0 - alpha) * src
    out[y0:y1, x0:x1] = np.floor(blended + 0.5).astype(np.uint8)
    return out


@dataclass
class DubResult:
    manifest: dict
    frames: list = field(default_factory=list)  # populated when keep_frames

    @property
    def frame_count(self) -> int:
        return self.manifest["frame_count"]


def _even_reference_indices(valid: np.ndarray, count: int = 5) -> np.ndarray:
    if valid.size < count:
        raise ConfigurationError(
            f"source video has only {valid.size} frames with a usable face; "
            f"{count} reference frames are required")
    picks = np.floor(np.linspace(0, valid.size - 1, count) + 0.5).astype(np.int64)
    return valid[picks]


def dub_video(source_frames, landmarks: np.ndarray, audio_features: np.ndarray,
              checkpoint, out: str | None = None,
              feather: int = DEFAULT_FEATHER, seed: int = 0,
              keep_frames: bool = False) -> DubResult:
    """Generate one dubbed frame per audio feature row.

    Source frames loop when the audio outlasts the video.  Reference faces
    are five frames spread evenly across the source video (deterministic).
    Frames whose landmarks mark no face are copied through unchanged with a
    warning.  ``out`` may be a directory (PNG frames + manifest) or a video
    file path; frames are also returned when ``keep_frames`` is set or
    ``out`` is None.
    """
    frames = list(source_frames)
    if not frames:
        raise IngestionError("source video has no frames")
    landmarks = np.asarray(landmarks, dtype=np.float32)
    if landmarks.shape != (len(frames), 68, 2):
        raise ContractError(
            f"landmarks must be ({len(frames)}, 68, 2), got {landmarks.shape}")
    audio_features = np.asarray(audio_features, dtype=np.float32)
    if audio_features.ndim != 2:
        raise ContractError("audio features must be rank 2 (frames x dim)")

    generator, ckpt = load_generator(checkpoint)
    cfg = ckpt.network_config
    target = (cfg.image_height, cfg.image_width)
    if audio_features.shape[1] != cfg.audio_dim:
        raise ContractError(
            f"audio features have dim {audio_features.shape[1]}, "
            f"checkpoint expects {cfg.audio_dim}")

    valid = np.array([i for i in range(len(frames)) if frame_has_face(landmarks[i])],
                     dtype=np.int64)
    ref_indices = _even_reference_indices(valid)
    refs = np.concatenate(
        [crop_face(frames[int(i)], landmarks[int(i)], target)[0] for i in ref_indices],
        axis=0)
    refs_t = torch.from_numpy(refs)

    n_out = audio_features.shape[0]
    out_frames = []
    records = []
    keep = keep_frames or out is None
    writer = _open_output(out, frames[0].shape)
    try:
        with torch.no_grad():
            for t in range(n_out):
                src_idx = t % len(frames)
                frame = frames[src_idx]
                record = {"index": t, "source_index": src_idx,
                          "rect": None, "fallback": False}
                if not frame_has_face(landmarks[src_idx]):
                    log.warning("frame %d: no face landmarks, copying source", t)
                    record["fallback"] = True
                    dubbed = frame.copy()
                else:
                    face, transform = crop_face(frame, landmarks[src_idx], target)
                    masked = torch.from_numpy(mask_mouth(face))
                    window = torch.from_numpy(
                        audio_window(audio_features, t, cfg.audio_window))
                    generated = generator(masked, refs_t, window).numpy()
                    dubbed = paste_back(frame, generated, transform, feather)
                    record["rect"] = list(transform.rect)
                records.append(record)
                if keep:
                    out_frames.append(dubbed)
                writer.write(dubbed)
    finally:
        writer.close()

    manifest = {
        "format": DUB_MANIFEST_FORMAT,
        "frame_count": n_out,
        "source_frames": len(frames),
        "reference_indices": [int(i) for i in ref_indices],
        "feather": feather,
        "seed": seed,
        "frames": records,
    }
    if out is not None:
        manifest_path = (os.path.join(out, "dub_manifest.json") if writer.is_dir
                         else os.path.splitext(out)[0] + ".dub_manifest.json")
        with open(manifest_path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return DubResult(manifest=manifest, frames=out_frames)


class _NullWriter:
    is_dir = False

    def write(self, frame):
        pass

    def close(self):
        pass


class _DirWriter:
    is_dir = True

    def __init__(self, path):
        os.makedirs(path, exist_ok=True)
        self.path = path
        self.index = 0

    def write(self, frame):
        out = os.path.join(self.path, f"{self.index:06d}.png")
        if not cv2.imwrite(out, cv2.cvtColor(frame, cv2.COLOR_RGB2BGR)):
            raise IngestionError(f"cannot write frame: {out}")
        self.index += 1

    def close(self):
        pass


class _VideoWriter:
    is_dir = False

    _FOURCC = {".mp4": "mp4v", ".avi": "MJPG", ".mkv": "FFV1"}

    def __init__(self, path, shape):
        ext = os.path.splitext(path)[1].lower()
        fourcc = self._FOURCC.get(ext)
        if fourcc is None:
            raise ConfigurationError(
                f"unsupported video container {ext!r} (use .mp4, .avi, .mkv "
                "or an output directory for lossless PNG frames)")
        self.writer = cv2.VideoWriter(path, cv2.VideoWriter_fourcc(*fourcc), 25,
                                      (shape[1], shape[0]))
        if not self.writer.isOpened():
            raise ConfigurationError(f"cannot open video writer for {path}")

    def write(self, frame):
        self.writer.write(cv2.cvtColor(frame, cv2.COLOR_RGB2BGR))

    def close(self):
        self.writer.release()


def _open_output(out: str | None, frame_shape):
    if out is None:
        return _NullWriter()
    ext = os.path.splitext(out)[1].lower()
    if ext in (".mp4", ".avi", ".mkv"):
        return _VideoWriter(out, frame_shape)
    return _DirWriter(out)
