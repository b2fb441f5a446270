"""Preprocessed clips, training-sample assembly and dataset sampling."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import cv2
import numpy as np

from ..errors import ContractError, IngestionError, SamplingError
from .audio import audio_window, load_audio_features, save_audio_features
from .preprocess import (TARGET_FACE_SIZE, crop_face, mask_mouth, mouth_rect,
                         save_frames_dir)

__all__ = [
    "ClipRecord",
    "save_clip",
    "load_clip",
    "TrainingSample",
    "SequenceSample",
    "select_reference_indices",
    "reference_stack",
    "select_references",
    "build_training_sample",
    "build_sequence_sample",
    "ClipDataset",
]

CLIP_FORMAT = "facedub-clip-v1"
MANIFEST_NAME = "manifest.json"

REFERENCE_COUNT = 5
DEFAULT_EXCLUSION_RADIUS = 5


@dataclass
class ClipRecord:
    """One 25 fps clip: frames, per-frame landmarks and acoustic features."""

    frames: np.ndarray  # (N, H, W, 3) uint8 RGB
    landmarks: np.ndarray  # (N, 68, 2) float32
    audio_features: np.ndarray  # (N, 29) float32
    identity: str = "unknown"
    fps: int = 25

    def __post_init__(self):
        n = len(self.frames)
        if not (len(self.landmarks) == len(self.audio_features) == n):
            raise ContractError(
                f"frame/landmark/feature counts differ: {n}/"
                f"{len(self.landmarks)}/{len(self.audio_features)}")
        if n == 0:
            raise ContractError("clip has no frames")
        if self.fps != 25:
            raise ContractError(f"clips must be 25 fps, got {self.fps}")

    def __len__(self) -> int:
        return len(self.frames)


def _checksum(clip: ClipRecord) -> str:
    h = hashlib.sha256()
    for frame in clip.frames:
        h.update(np.ascontiguousarray(frame).tobytes())
    h.update(np.ascontiguousarray(clip.landmarks.astype(np.float32)).tobytes())
    h.update(np.ascontiguousarray(clip.audio_features.astype(np.float32)).tobytes())
    return h.hexdigest()


def save_clip(directory: str, clip: ClipRecord) -> str:
    """Write frames/ (lossless PNG), landmarks.npy, features.bin, manifest."""
    os.makedirs(directory, exist_ok=True)
    save_frames_dir(os.path.join(directory, "frames"), clip.frames)
    np.save(os.path.join(directory, "landmarks.npy"), clip.landmarks.astype(np.float32))
    save_audio_features(os.path.join(directory, "features.bin"), clip.audio_features)
    manifest = {
        "format": CLIP_FORMAT,
        "identity": clip.identity,
        "frame_count": len(clip),
        "fps": clip.fps,
        "checksum": _checksum(clip),
    }
    path = os.path.join(directory, MANIFEST_NAME)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def load_clip(directory: str, verify: bool = True) -> ClipRecord:
    manifest_path = os.path.join(directory, MANIFEST_NAME)
    if not os.path.exists(manifest_path):
        raise IngestionError(f"no clip manifest in {directory}")
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format") != CLIP_FORMAT:
        raise IngestionError(f"unsupported clip format: {manifest.get('format')!r}")

    frames_dir = os.path.join(directory, "frames")
    names = sorted(n for n in os.listdir(frames_dir) if n.endswith(".png"))
    frames = []
    for name in names:
        bgr = cv2.imread(os.path.join(frames_dir, name), cv2.IMREAD_COLOR)
        if bgr is None:
            raise IngestionError(f"unreadable frame {name} in {frames_dir}")
        frames.append(cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB))
    clip = ClipRecord(
        frames=np.stack(frames),
        landmarks=np.load(os.path.join(directory, "landmarks.npy")),
        audio_features=load_audio_features(os.path.join(directory, "features.bin")),
        identity=manifest.get("identity", "unknown"),
        fps=int(manifest.get("fps", 25)),
    )
    if len(clip) != manifest.get("frame_count"):
        raise IngestionError(
            f"{directory}: manifest frame_count {manifest.get('frame_count')} "
            f"!= {len(clip)} frames on disk")
    if verify and _checksum(clip) != manifest.get("checksum"):
        raise IngestionError(f"{directory}: checksum mismatch, clip is corrupt")
    return clip


# ---------------------------------------------------------------------------
# sample assembly


@dataclass
class TrainingSample:
    """One generator training item, built from a single clip."""

    source: np.ndarray       # (3, H, W) mouth-masked
    real: np.ndarray         # (3, H, W) ground truth
    references: np.ndarray   # (15, H, W)
    audio: np.ndarray        # (T, 29)
    mouth_box: tuple[int, int, int, int]  # (y0, y1, x0, x1)
    source_index: int
    reference_indices: np.ndarray

    def __post_init__(self):
        y0, y1, x0, x1 = self.mouth_box
        if float(np.abs(self.source[:, y0:y1, x0:x1]).sum()) != 0.0:
            raise ContractError("source mouth region is not fully masked")
        if self.references.shape[0] != 3 * REFERENCE_COUNT:
            raise ContractError(
                f"reference stack must have {3 * REFERENCE_COUNT} channels")
        if self.source_index in set(int(i) for i in self.reference_indices):
            raise ContractError("a reference frame equals the source frame")


@dataclass
class SequenceSample:
    """Five consecutive training frames sharing one reference stack."""

    sources: np.ndarray      # (L, 3, H, W) mouth-masked
    reals: np.ndarray        # (L, 3, H, W)
    references: np.ndarray   # (15, H, W)
    audio: np.ndarray        # (L, T, 29)
    mouth_box: tuple[int, int, int, int]
    start_index: int
    reference_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))


def select_reference_indices(n_frames: int, src_idx: int, rng: np.random.Generator,
                             count: int = REFERENCE_COUNT,
                             radius: int = DEFAULT_EXCLUSION_RADIUS) -> np.ndarray:
    """Uniformly pick ``count`` distinct frames with |idx - src_idx| > radius."""
    eligible = np.array([i for i in range(n_frames) if abs(i - src_idx) > radius],
                        dtype=np.int64)
    if eligible.size < count:
        raise SamplingError(
            f"clip too short for reference sampling: {eligible.size} eligible "
            f"frames (need {count}) with src={src_idx}, radius={radius}, "
            f"length={n_frames}")
    return np.sort(rng.choice(eligible, size=count, replace=False))


def reference_stack(clip: ClipRecord, indices,
                    target: tuple[int, int] = TARGET_FACE_SIZE) -> np.ndarray:
    """Crop the selected frames and concatenate along channels -> (15, H, W)."""
    faces = [crop_face(clip.frames[int(i)], clip.landmarks[int(i)], target)[0]
             for i in indices]
    return np.concatenate(faces, axis=0)


def select_references(clip: ClipRecord, src_idx: int, rng: np.random.Generator,
                      radius: int = DEFAULT_EXCLUSION_RADIUS,
                      target: tuple[int, int] = TARGET_FACE_SIZE) -> np.ndarray:
    indices = select_reference_indices(len(clip), src_idx, rng, radius=radius)
    return reference_stack(clip, indices, target)


def build_training_sample(clip: ClipRecord, src_idx: int, rng: np.random.Generator,
                          radius: int = DEFAULT_EXCLUSION_RADIUS,
                          window: int = 5,
                          target: tuple[int, int] = TARGET_FACE_SIZE) -> TrainingSample:
    """Assemble masked source, ground truth, references and the audio window."""
    if not 0 <= src_idx < len(clip):
        raise SamplingError(f"source index {src_idx} out of range for clip of {len(clip)}")
    ref_idx = select_reference_indices(len(clip), src_idx, rng, radius=radius)
    real, _ = crop_face(clip.frames[src_idx], clip.landmarks[src_idx], target)
    return TrainingSample(
        source=mask_mouth(real),
        real=real,
        references=reference_stack(clip, ref_idx, target),
        audio=audio_window(clip.audio_features, src_idx, window),
        mouth_box=mouth_rect(target[0], target[1]),
        source_index=src_idx,
        reference_indices=ref_idx,
    )


def build_sequence_sample(clip: ClipRecord, start_idx: int, rng: np.random.Generator,
                          length: int = 5,
                          radius: int = DEFAULT_EXCLUSION_RADIUS,
                          window: int = 5,
                          target: tuple[int, int] = TARGET_FACE_SIZE) -> SequenceSample:
    """Like :func:`build_training_sample` for ``length`` consecutive frames.

    References are selected once, excluding frames within ``radius`` of the
    window's center frame.
    """
    if start_idx < 0 or start_idx + length > len(clip):
        raise SamplingError(
            f"sequence [{start_idx}, {start_idx + length}) out of range for clip of {len(clip)}")
    center = start_idx + length // 2
    ref_idx = select_reference_indices(len(clip), center, rng, radius=radius)
    refs = reference_stack(clip, ref_idx, target)
    sources, reals, audios = [], [], []
    for i in range(start_idx, start_idx + length):
        real, _ = crop_face(clip.frames[i], clip.landmarks[i], target)
        sources.append(mask_mouth(real))
        reals.append(real)
        audios.append(audio_window(clip.audio_features, i, window))
    return SequenceSample(
        sources=np.stack(sources),
        reals=np.stack(reals),
        references=refs,
        audio=np.stack(audios),
        mouth_box=mouth_rect(target[0], target[1]),
        start_index=start_idx,
        reference_indices=ref_idx,
    )


class ClipDataset:
    """Deterministic sampler over preprocessed clips.

    Face crops (and resized mouth crops for sync training) are cached per
    clip; all sampling is a pure function of the supplied generator, so a
    fixed seed reproduces the sample sequence.
    """

    def __init__(self, clips, face_size: tuple[int, int] = TARGET_FACE_SIZE,
                 mouth_size: int = 256, window: int = 5,
                 exclusion_radius: int = DEFAULT_EXCLUSION_RADIUS):
        if isinstance(clips, (str, os.PathLike)):
            raise ContractError("pass ClipRecord objects or a list of clip directories")
        loaded = []
        for clip in clips:
            if isinstance(clip, (str, os.PathLike)):
                clip = load_clip(str(clip))
            loaded.append(clip)
        if not loaded:
            raise ContractError("dataset needs at least one clip")
        self.clips = loaded
        self.face_size = face_size
        self.mouth_size = mouth_size
        self.window = window
        self.exclusion_radius = exclusion_radius
        self._faces = []
        self._mouths = []
        for clip in self.clips:
            faces = np.stack([crop_face(clip.frames[i], clip.landmarks[i], face_size)[0]
                              for i in range(len(clip))])
            self._faces.append(faces)
            y0, y1, x0, x1 = mouth_rect(face_size[0], face_size[1])
            mouths = np.stack([
                cv2.resize(f[:, y0:y1, x0:x1].transpose(1, 2, 0),
                           (mouth_size, mouth_size),
                           interpolation=cv2.INTER_LINEAR).transpose(2, 0, 1)
                for f in faces
            ])
            self._mouths.append(mouths)

    @property
    def mouth_box(self) -> tuple[int, int, int, int]:
        return mouth_rect(self.face_size[0], self.face_size[1])

    def face(self, clip_idx: int, frame_idx: int) -> np.ndarray:
        return self._faces[clip_idx][frame_idx]

    def sample_sequence(self, rng: np.random.Generator, length: int = 5) -> SequenceSample:
        clip_idx = int(rng.integers(len(self.clips)))
        clip = self.clips[clip_idx]
        if len(clip) < length:
            raise SamplingError(f"clip of {len(clip)} frames cannot host a {length}-frame window")
        start = int(rng.integers(len(clip) - length + 1))
        center = start + length // 2
        ref_idx = select_reference_indices(len(clip), center, rng,
                                           radius=self.exclusion_radius)
        faces = self._faces[clip_idx]
        reals = faces[start:start + length]
        sources = np.stack([mask_mouth(f) for f in reals])
        audio = np.stack([audio_window(clip.audio_features, i, self.window)
                          for i in range(start, start + length)])
        return SequenceSample(
            sources=sources,
            reals=reals.copy(),
            references=np.concatenate([faces[int(i)] for i in ref_idx], axis=0),
            audio=audio,
            mouth_box=self.mouth_box,
            start_index=start,
            reference_indices=ref_idx,
        )

    def sequence_batch(self, rng: np.random.Generator, batch: int, length: int = 5):
        samples = [self.sample_sequence(rng, length) for _ in range(batch)]
        return (
            np.stack([s.sources for s in samples]),
            np.stack([s.reals for s in samples]),
            np.stack([s.references for s in samples]),
            np.stack([s.audio for s in samples]),
        )

    def sample_sync_pair(self, rng: np.random.Generator, shift_min: int = 5,
                         length: int = 5) -> tuple[np.ndarray, np.ndarray, float]:
        """(audio window, 5-frame mouth stack, label); label 0 pairs are
        time-shifted by at least ``shift_min`` frames within the same clip."""
        clip_idx = int(rng.integers(len(self.clips)))
        clip = self.clips[clip_idx]
        half = length // 2
        if len(clip) < length + shift_min:
            raise SamplingError(
                f"clip of {len(clip)} frames too short for sync sampling "
                f"(window {length}, shift {shift_min})")
        center = int(rng.integers(half, len(clip) - (length - half - 1)))
        matched = bool(rng.random() < 0.5)
        if matched:
            visual_center = center
        else:
            candidates = [c for c in range(half, len(clip) - (length - half - 1))
                          if abs(c - center) >= shift_min]
            visual_center = int(candidates[int(rng.integers(len(candidates)))])
        lo = visual_center - half
        idx = np.clip(np.arange(lo, lo + length), 0, len(clip) - 1)
        mouths = np.concatenate([self._mouths[clip_idx][i] for i in idx], axis=0)
        audio = audio_window(clip.audio_features, center, self.window)
        return audio, mouths, (1.0 if matched else 0.0)

    def sync_batch(self, rng: np.random.Generator, batch: int, shift_min: int = 5):
        audios, mouths, labels = [], [], []
        for _ in range(batch):
            a, m, l = self.sample_sync_pair(rng, shift_min)
            audios.append(a)
            mouths.append(m)
            labels.append(l)
        return np.stack(audios), np.stack(mouths), np.asarray(labels, dtype=np.float32)
