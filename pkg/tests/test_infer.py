"""Paste-back compositing and the end-to-end dubbing loop."""

import json

import numpy as np
import pytest

from facedub import ContractError, NetworkConfig, dub_video, paste_back
from facedub.data import CropTransform, synthetic_clip
from facedub.data.audio import synthetic_audio_features


@pytest.fixture(scope="module")
def clip():
    return synthetic_clip(30, seed=91)


@pytest.fixture(scope="module")
def toy_ckpt(tmp_path_factory, clip):
    # a short training run wakes up the audio branch (the zero-initialized
    # affine head makes a fresh generator audio-independent by design)
    from facedub import TrainConfig, train_dinet
    from facedub.data import ClipDataset

    cfg = NetworkConfig.toy(parameter_seed=4)
    dataset = ClipDataset([clip], face_size=(64, 48), mouth_size=64)
    path = tmp_path_factory.mktemp("ckpt") / "gen.ckpt"
    train_dinet(dataset, None,
                TrainConfig(learning_rate=1e-3, beta1=0.5, dinet_batch_size=1,
                            iterations=30, seed=6, network_preset="toy",
                            lambda_sync=0.0),
                network_config=cfg, out_path=str(path))
    return str(path)


class TestPasteBack:
    def test_unit_scale_round_trip_exact(self):
        rng = np.random.default_rng(0)
        frame = rng.integers(0, 256, (100, 80, 3), np.uint8)
        tr = CropTransform(10, 20, 10 + 48, 20 + 64, 64, 48)
        face = tr.crop(frame)
        assert np.array_equal(paste_back(frame, face, tr, feather=0), frame)
        # feathered paste of the identity crop also reproduces the frame
        assert np.array_equal(paste_back(frame, face, tr, feather=5), frame)

    def test_scaled_round_trip_outside_exact(self):
        rng = np.random.default_rng(1)
        frame = rng.integers(0, 256, (120, 100, 3), np.uint8)
        tr = CropTransform(15, 10, 95, 106, 64, 48)  # 96x80 rect, resized crop
        face = tr.crop(frame)
        out = paste_back(frame, face, tr, feather=0)
        mask = np.ones(frame.shape[:2], bool)
        mask[10:106, 15:95] = False
        assert np.array_equal(out[mask], frame[mask])

    def test_feather_band_blends_linearly(self):
        frame = np.full((60, 60, 3), 100, np.uint8)
        tr = CropTransform(10, 10, 42, 42, 32, 32)
        face = np.full((3, 32, 32), 200 / 255.0, np.float32)
        out = paste_back(frame, face, tr, feather=5)
        # band center (distance 2 from the rect edge): exact average
        assert tuple(out[12, 30]) == (150, 150, 150)
        # outermost band pixel: alpha 0.1
        assert tuple(out[10, 30]) == (110, 110, 110)
        # deep interior: pure generated content
        assert tuple(out[26, 26]) == (200, 200, 200)
        # outside the rect: untouched
        assert tuple(out[5, 5]) == (100, 100, 100)

    def test_large_frame_stays_large(self, toy_ckpt):
        frame = np.zeros((540, 720, 3), np.uint8)
        tr = CropTransform(300, 200, 300 + 96, 200 + 128, 64, 48)
        face = np.full((3, 64, 48), 0.5, np.float32)
        out = paste_back(frame, face, tr)
        assert out.shape == (540, 720, 3)

    def test_rejects_mismatched_transform(self):
        frame = np.zeros((50, 50, 3), np.uint8)
        face = np.zeros((3, 64, 48), np.float32)
        with pytest.raises(ContractError):
            paste_back(frame, face, CropTransform(0, 0, 30, 40, 32, 24))
        with pytest.raises(ContractError):
            paste_back(frame, face, CropTransform(0, 0, 60, 60, 64, 48))


class TestDubVideo:
    def test_duration_matches_audio(self, clip, toy_ckpt, tmp_path):
        features = synthetic_audio_features(73, seed=5)  # longer than the video
        result = dub_video(list(clip.frames), clip.landmarks, features, toy_ckpt,
                           out=str(tmp_path / "out"), feather=0, keep_frames=True)
        assert result.frame_count == 73
        assert len(result.frames) == 73
        pngs = sorted(p.name for p in (tmp_path / "out").glob("*.png"))
        assert len(pngs) == 73

    def test_video_loops_when_audio_longer(self, clip, toy_ckpt):
        features = synthetic_audio_features(40, seed=6)
        result = dub_video(list(clip.frames), clip.landmarks, features, toy_ckpt,
                           feather=0, keep_frames=True)
        for rec in result.manifest["frames"]:
            assert rec["source_index"] == rec["index"] % 30

    def test_locality_outside_crops(self, clip, toy_ckpt):
        features = synthetic_audio_features(12, seed=7)
        result = dub_video(list(clip.frames), clip.landmarks, features, toy_ckpt,
                           feather=0, keep_frames=True)
        for rec, frame in zip(result.manifest["frames"], result.frames):
            src = clip.frames[rec["source_index"]]
            x0, y0, x1, y1 = rec["rect"]
            mask = np.ones(src.shape[:2], bool)
            mask[y0:y1, x0:x1] = False
            assert np.array_equal(frame[mask], src[mask])

    def test_mouth_region_changes_with_audio(self, clip, toy_ckpt):
        a = dub_video(list(clip.frames), clip.landmarks,
                      synthetic_audio_features(6, seed=8), toy_ckpt,
                      feather=0, keep_frames=True)
        b = dub_video(list(clip.frames), clip.landmarks,
                      synthetic_audio_features(6, seed=1009), toy_ckpt,
                      feather=0, keep_frames=True)
        diffs = []
        for fa, fb, rec in zip(a.frames, b.frames, a.manifest["frames"]):
            x0, y0, x1, y1 = rec["rect"]
            diffs.append(np.abs(fa[y0:y1, x0:x1].astype(int)
                                - fb[y0:y1, x0:x1].astype(int)).mean())
        assert np.mean(diffs) > 0

    def test_deterministic_across_runs(self, clip, toy_ckpt, tmp_path):
        features = synthetic_audio_features(9, seed=10)
        a = dub_video(list(clip.frames), clip.landmarks, features, toy_ckpt,
                      out=str(tmp_path / "a"), feather=3, seed=1, keep_frames=True)
        b = dub_video(list(clip.frames), clip.landmarks, features, toy_ckpt,
                      out=str(tmp_path / "b"), feather=3, seed=1, keep_frames=True)
        for fa, fb in zip(a.frames, b.frames):
            assert np.array_equal(fa, fb)
        for pa, pb in zip(sorted((tmp_path / "a").glob("*.png")),
                          sorted((tmp_path / "b").glob("*.png"))):
            assert pa.read_bytes() == pb.read_bytes()

    def test_no_face_frames_fall_back_to_source(self, clip, toy_ckpt, caplog):
        landmarks = clip.landmarks.copy()
        landmarks[4] = np.nan
        features = synthetic_audio_features(8, seed=11)
        result = dub_video(list(clip.frames), landmarks, features, toy_ckpt,
                           feather=0, keep_frames=True)
        rec = result.manifest["frames"][4]
        assert rec["fallback"] is True and rec["rect"] is None
        assert np.array_equal(result.frames[4], clip.frames[4])

    def test_manifest_written_next_to_frames(self, clip, toy_ckpt, tmp_path):
        features = synthetic_audio_features(5, seed=12)
        dub_video(list(clip.frames), clip.landmarks, features, toy_ckpt,
                  out=str(tmp_path / "frames"))
        manifest = json.loads((tmp_path / "frames" / "dub_manifest.json").read_text())
        assert manifest["format"] == "facedub-dub-v1"
        assert manifest["frame_count"] == 5
        assert len(manifest["reference_indices"]) == 5

    def test_video_container_output(self, clip, toy_ckpt, tmp_path):
        import cv2

        features = synthetic_audio_features(6, seed=13)
        out_path = tmp_path / "dubbed.avi"
        dub_video(list(clip.frames), clip.landmarks, features, toy_ckpt,
                  out=str(out_path))
        cap = cv2.VideoCapture(str(out_path))
        count = 0
        while cap.read()[0]:
            count += 1
        cap.release()
        assert count == 6

    def test_rejects_feature_dim_mismatch(self, clip, toy_ckpt):
        with pytest.raises(ContractError):
            dub_video(list(clip.frames), clip.landmarks,
                      np.zeros((10, 13), np.float32), toy_ckpt)
