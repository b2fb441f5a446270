"""Data ingestion, preprocessing and sampling."""

from .audio import (AUDIO_FEATURE_DIM, DeepSpeechBackend, audio_window,
                    load_audio_features, resample_feature_stream,
                    resolve_audio_features, save_audio_features,
                    synthetic_audio_features, synthetic_openness)
from .clips import (ClipDataset, ClipRecord, SequenceSample, TrainingSample,
                    build_sequence_sample, build_training_sample, load_clip,
                    reference_stack, save_clip, select_reference_indices,
                    select_references)
from .landmarks import frame_has_face, load_landmarks, save_landmarks
from .preprocess import (TARGET_FACE_SIZE, CropTransform, compute_crop_rect,
                         crop_face, face_to_frame, frame_to_face,
                         load_frames_dir, load_video, mask_mouth, mouth_rect,
                         nearest_frame_indices, resample_frames,
                         save_frames_dir)
from .synthetic import synthetic_clip, synthetic_dataset, write_synthetic_raw

__all__ = [
    "AUDIO_FEATURE_DIM",
    "DeepSpeechBackend",
    "audio_window",
    "load_audio_features",
    "resample_feature_stream",
    "resolve_audio_features",
    "save_audio_features",
    "synthetic_audio_features",
    "synthetic_openness",
    "ClipDataset",
    "ClipRecord",
    "SequenceSample",
    "TrainingSample",
    "build_sequence_sample",
    "build_training_sample",
    "load_clip",
    "reference_stack",
    "save_clip",
    "select_reference_indices",
    "select_references",
    "frame_has_face",
    "load_landmarks",
    "save_landmarks",
    "TARGET_FACE_SIZE",
    "CropTransform",
    "compute_crop_rect",
    "crop_face",
    "face_to_frame",
    "frame_to_face",
    "load_frames_dir",
    "load_video",
    "mask_mouth",
    "mouth_rect",
    "nearest_frame_indices",
    "resample_frames",
    "save_frames_dir",
    "synthetic_clip",
    "synthetic_dataset",
    "write_synthetic_raw",
]
