"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with:  pytest tests/test_acceptance.py -v -s

The toy presets used for the training criteria (64x48 faces, 32 feature
channels, lr 1e-3, Adam beta1 0.5, batch 1, 500 iterations, reference
exclusion radius 0 for the 8-frame overfit clip) are fixed here.
"""

import json
import math
import time

import numpy as np
import pytest
import torch

from facedub import (ChannelAffineParams, IdentityExtractor, LossWeights,
                     NetworkConfig, RandomConvExtractor, TrainConfig,
                     adaat_deform, build_generator, dub_video,
                     identity_params, lsgan_d_loss, lsgan_g_loss,
                     make_affine_grid, perception_loss, psnr, ssim,
                     sync_loss, total_g_loss, train_dinet, train_syncnet)
from facedub.data import ClipDataset, mouth_rect, synthetic_clip, synthetic_dataset
from facedub.data.audio import audio_window, synthetic_audio_features
from facedub.data.preprocess import mask_mouth
from facedub.infer import _even_reference_indices
from facedub.train import load_sync_scorer, sync_separation

SYNC_SEED = 11
DINET_SEED = 13
NET_CFG = NetworkConfig.toy(parameter_seed=1)


def report(number: int, name: str, ok: bool, detail: str = ""):
    status = "PASS" if ok else "FAIL"
    print(f"ACCEPTANCE {number:2d} [{status}] {name}" + (f" ({detail})" if detail else ""))
    assert ok, f"criterion {number}: {name} {detail}"


def sync_train_config():
    return TrainConfig(learning_rate=1e-3, syncnet_batch_size=16, iterations=500,
                       seed=SYNC_SEED, network_preset="toy")


def dinet_train_config():
    return TrainConfig(learning_rate=1e-3, beta1=0.5, dinet_batch_size=1,
                       iterations=500, seed=DINET_SEED, network_preset="toy",
                       exclusion_radius=0)


@pytest.fixture(scope="module")
def sync_artifacts(tmp_path_factory):
    base = tmp_path_factory.mktemp("sync")
    dataset = ClipDataset(synthetic_dataset(4, 100, seed=77),
                          face_size=(64, 48), mouth_size=64)
    runs = []
    for tag in ("a", "b"):
        started = time.perf_counter()
        model, history = train_syncnet(
            dataset, sync_train_config(), network_config=NET_CFG,
            out_path=str(base / f"sync_{tag}.ckpt"),
            log_path=str(base / f"sync_{tag}.jsonl"))
        runs.append({
            "model": model,
            "history": history,
            "ckpt": str(base / f"sync_{tag}.ckpt"),
            "log": str(base / f"sync_{tag}.jsonl"),
            "seconds": time.perf_counter() - started,
        })
    return {"dataset": dataset, "runs": runs}


@pytest.fixture(scope="module")
def dinet_artifacts(tmp_path_factory, sync_artifacts):
    base = tmp_path_factory.mktemp("dinet")
    clip = synthetic_clip(8, seed=55)
    dataset = ClipDataset([clip], face_size=(64, 48), mouth_size=64,
                          exclusion_radius=0)
    sync_ckpt = sync_artifacts["runs"][0]["ckpt"]
    runs = []
    for tag in ("a", "b"):
        started = time.perf_counter()
        generator, _, history = train_dinet(
            dataset, sync_ckpt, dinet_train_config(), network_config=NET_CFG,
            out_path=str(base / f"dinet_{tag}.ckpt"),
            log_path=str(base / f"dinet_{tag}.jsonl"))
        runs.append({
            "generator": generator,
            "history": history,
            "ckpt": str(base / f"dinet_{tag}.ckpt"),
            "log": str(base / f"dinet_{tag}.jsonl"),
            "seconds": time.perf_counter() - started,
        })
    return {"clip": clip, "dataset": dataset, "runs": runs}


@pytest.fixture(scope="module")
def dub_artifacts(tmp_path_factory, dinet_artifacts):
    base = tmp_path_factory.mktemp("dub")
    clip = synthetic_clip(30, seed=91)
    features = synthetic_audio_features(74, seed=8)  # audio outlasts the video
    runs = []
    for tag in ("a", "b"):
        out = base / f"frames_{tag}"
        result = dub_video(list(clip.frames), clip.landmarks, features,
                           dinet_artifacts["runs"][0]["ckpt"], out=str(out),
                           feather=0, seed=17, keep_frames=True)
        runs.append({"result": result, "dir": out})
    return {"clip": clip, "features": features, "runs": runs}


class TestCriterion1:
    def test_adaat_identity(self):
        rng = np.random.default_rng(100)
        started = time.perf_counter()
        worst = 0.0
        for _ in range(100):
            c = int(rng.integers(1, 9))
            h = int(rng.integers(1, 17))
            w = int(rng.integers(1, 17))
            fmap = torch.from_numpy(rng.random((c, h, w), dtype=np.float32))
            out = adaat_deform(fmap, identity_params(c))
            worst = max(worst, float((out - fmap).abs().max()))
        elapsed = time.perf_counter() - started
        report(1, "identity deformation returns the input",
               worst < 1e-6 and elapsed < 5.0,
               f"max abs err {worst:.2e}, {elapsed:.2f}s")


class TestCriterion2:
    def test_adaat_gradients_match_finite_differences(self):
        rng = np.random.default_rng(200)
        step = 1e-5
        started = time.perf_counter()
        worst = 0.0
        for _ in range(20):
            c = int(rng.integers(1, 5))
            h = int(rng.integers(2, 9))
            w = int(rng.integers(2, 9))
            fmap = torch.from_numpy(rng.random((c, h, w))).requires_grad_(True)
            theta = torch.from_numpy(rng.uniform(-0.9, 0.9, c)).requires_grad_(True)
            scale = torch.from_numpy(rng.uniform(0.6, 1.5, c)).requires_grad_(True)
            tx = torch.from_numpy(rng.uniform(-0.4, 0.4, c)).requires_grad_(True)
            ty = torch.from_numpy(rng.uniform(-0.4, 0.4, c)).requires_grad_(True)
            weights = torch.from_numpy(rng.random((c, h, w)))

            with torch.no_grad():
                grid = make_affine_grid(
                    ChannelAffineParams(theta=theta, scale=scale, tx=tx, ty=ty), h, w)
            px = ((grid[..., 0] + 1.0) * 0.5) * (w - 1)
            py = ((grid[..., 1] + 1.0) * 0.5) * (h - 1)
            margin = 1e-3
            mask = (((px - px.round()).abs() > margin)
                    & ((py - py.round()).abs() > margin)).to(torch.float64)

            leaves = [theta, scale, tx, ty, fmap]

            def loss_of(th, sc, x, y, fm):
                p = ChannelAffineParams(theta=th, scale=sc, tx=x, ty=y)
                return (adaat_deform(fm, p) * weights * mask).sum()

            loss = loss_of(*leaves)
            grads = torch.autograd.grad(loss, leaves)
            for var, grad in zip(leaves, grads):
                flat = var.detach().reshape(-1)
                gflat = grad.reshape(-1)
                for k in range(flat.numel()):
                    orig = flat[k].item()
                    flat[k] = orig + step
                    hi = loss_of(*[v.detach() for v in leaves]).item()
                    flat[k] = orig - step
                    lo = loss_of(*[v.detach() for v in leaves]).item()
                    flat[k] = orig
                    fd = (hi - lo) / (2 * step)
                    an = gflat[k].item()
                    denom = max(abs(an), abs(fd))
                    if denom > 1e-7:
                        worst = max(worst, abs(an - fd) / denom)
        elapsed = time.perf_counter() - started
        report(2, "analytic gradients match central finite differences",
               worst < 1e-4 and elapsed < 60.0,
               f"worst rel err {worst:.2e}, {elapsed:.1f}s")


class TestCriterion3:
    def test_warp_oracles_exact(self):
        # one-pixel translation: output column j reads input column j+1
        fmap = torch.arange(16, dtype=torch.float32).reshape(1, 4, 4)
        p = ChannelAffineParams(theta=torch.zeros(1, dtype=torch.float64),
                                scale=torch.ones(1, dtype=torch.float64),
                                tx=torch.tensor([2.0 / 3], dtype=torch.float64),
                                ty=torch.zeros(1, dtype=torch.float64))
        shift = adaat_deform(fmap, p)
        shift_ok = torch.equal(shift, torch.cat([fmap[:, :, 1:], fmap[:, :, -1:]], dim=2))

        # quarter turn on an odd lattice: exact index permutation
        fmap = torch.rand(1, 5, 5)
        p = ChannelAffineParams(theta=torch.tensor([math.pi / 2], dtype=torch.float64),
                                scale=torch.ones(1, dtype=torch.float64),
                                tx=torch.zeros(1, dtype=torch.float64),
                                ty=torch.zeros(1, dtype=torch.float64))
        rot = adaat_deform(fmap, p)
        oracle = torch.empty_like(fmap)
        for i in range(5):
            for j in range(5):
                oracle[0, i, j] = fmap[0, j, 4 - i]
        rot_ok = torch.equal(rot, oracle)
        report(3, "translation and rotation warp oracles exact",
               shift_ok and rot_ok)


class TestCriterion4:
    def test_full_resolution_shape_contract(self):
        cfg = NetworkConfig.full(parameter_seed=0)
        gen = build_generator(cfg).eval()
        with torch.no_grad():
            fs = gen.encode_source(torch.rand(3, 416, 320))
            fr = gen.encode_reference(torch.rand(15, 416, 320))
            fa = gen.encode_audio(torch.rand(5, 29))
            fl = gen.encode_alignment(fs, fr)
            params = gen.predict_affine(fa, fl)
            fd = adaat_deform(fr, params)
            out = gen.inpaint_decode(fs, fd)
        ok = (fs.shape == (256, 104, 80) and fr.shape == (256, 104, 80)
              and fd.shape == (256, 104, 80) and fa.shape == (128,)
              and fl.shape == (128,) and out.shape == (3, 416, 320)
              and params.channels == 256
              and all(t.shape == (256,) for t in
                      (params.theta, params.scale, params.tx, params.ty)))
        report(4, "full-resolution stage shapes", ok,
               f"F maps {tuple(fs.shape)}, output {tuple(out.shape)}")


class TestCriterion5:
    def test_loss_arithmetic(self):
        tol = 1e-10
        f64 = torch.float64
        checks = []

        img = torch.rand(3, 8, 8, dtype=f64)
        ex = IdentityExtractor()
        checks.append(abs(float(perception_loss(img, img.clone(), ex))) <= tol)
        a, b = torch.zeros(1, 2, 2, dtype=f64), torch.ones(1, 2, 2, dtype=f64)
        checks.append(abs(float(perception_loss(a, b, ex)) - 1.0) <= tol)
        checks.append(abs(float(perception_loss(a, b, ex))
                          - float(perception_loss(b, a, ex))) <= tol)

        rng = np.random.default_rng(500)
        ra = torch.from_numpy(rng.standard_normal((1, 5, 4)))
        rb = torch.from_numpy(rng.standard_normal((1, 5, 4)))
        d_oracle = (0.5 * sum((float(v) - 1) ** 2 for v in ra.reshape(-1)) / ra.numel()
                    + 0.5 * sum(float(v) ** 2 for v in rb.reshape(-1)) / rb.numel())
        checks.append(abs(float(lsgan_d_loss(ra, rb)) - d_oracle) <= tol)
        checks.append(abs(float(lsgan_d_loss(torch.ones(1, 3, 3, dtype=f64),
                                             torch.zeros(1, 3, 3, dtype=f64)))) <= tol)
        half = torch.full((1, 3, 3), 0.5, dtype=f64)
        checks.append(abs(float(lsgan_d_loss(half, half)) - 0.25) <= tol)

        g_oracle = sum((float(v) - 1) ** 2 for v in rb.reshape(-1)) / rb.numel()
        checks.append(abs(float(lsgan_g_loss(rb)) - g_oracle) <= tol)
        checks.append(abs(float(lsgan_g_loss(torch.ones(1, 3, 3, dtype=f64)))) <= tol)
        checks.append(abs(float(lsgan_g_loss(torch.zeros(1, 3, 3, dtype=f64))) - 1.0) <= tol)

        for score, expected in ((1.0, 0.0), (0.0, 1.0), (0.6, 0.16)):
            value = float(sync_loss(torch.tensor(score, dtype=f64)))
            checks.append(abs(value - expected) <= tol)

        one = torch.tensor(1.0, dtype=f64)
        zero = torch.tensor(0.0, dtype=f64)
        checks.append(abs(float(total_g_loss(zero, zero, zero))) <= tol)
        checks.append(abs(float(total_g_loss(one, one, one)) - 11.1) <= tol)
        mixed = total_g_loss(torch.tensor(0.5, dtype=f64), torch.tensor(0.2, dtype=f64),
                             torch.tensor(0.3, dtype=f64))
        checks.append(abs(float(mixed) - 5.32) <= tol)
        weights = LossWeights()
        checks.append(weights.lambda_p == 10.0 and weights.lambda_sync == 0.1)

        report(5, "loss arithmetic at 1e-10 with default 10/0.1 weighting",
               all(checks), f"{sum(checks)}/{len(checks)} checks")


class TestCriterion6:
    def test_sync_scorer_separation(self, sync_artifacts):
        run = sync_artifacts["runs"][0]
        matched, mismatched = sync_separation(run["model"], sync_artifacts["dataset"],
                                              pairs=32)
        ok = (matched - mismatched >= 0.2
              and len(run["history"]) <= 500
              and run["seconds"] < 600.0)
        report(6, "sync scorer separates matched from shifted pairs", ok,
               f"matched {matched:.3f} vs mismatched {mismatched:.3f}, "
               f"{run['seconds']:.0f}s")


class TestCriterion7:
    def test_toy_overfit_quality(self, dinet_artifacts):
        run = dinet_artifacts["runs"][0]
        lp = [r["l_p"] for r in run["history"]]
        ratio = lp[-1] / lp[10]

        clip = dinet_artifacts["clip"]
        dataset = dinet_artifacts["dataset"]
        generator = run["generator"]
        generator.eval()
        y0, y1, x0, x1 = mouth_rect(64, 48)
        faces = [dataset.face(0, i) for i in range(len(clip))]
        ref_idx = _even_reference_indices(np.arange(len(clip)))
        refs = torch.from_numpy(np.concatenate([faces[int(i)] for i in ref_idx], axis=0))
        values = []
        with torch.no_grad():
            for i in range(len(clip)):
                masked = torch.from_numpy(mask_mouth(faces[i]))
                window = torch.from_numpy(audio_window(clip.audio_features, i))
                out = generator(masked, refs, window).numpy()
                values.append(ssim(out[:, y0:y1, x0:x1], faces[i][:, y0:y1, x0:x1]))
        mean_ssim = float(np.mean(values))
        ok = (ratio <= 0.5 and mean_ssim >= 0.80
              and len(run["history"]) <= 500 and run["seconds"] < 900.0)
        report(7, "toy overfit halves the perception loss and restores the mouth",
               ok, f"l_p ratio {ratio:.3f}, mouth SSIM {mean_ssim:.3f}, "
                   f"{run['seconds']:.0f}s")


class TestCriterion8:
    def test_frozen_parameters_bit_identical(self, sync_artifacts, dinet_artifacts):
        sync_model, _ = load_sync_scorer(sync_artifacts["runs"][0]["ckpt"])
        extractor = RandomConvExtractor(seed=7)
        sync_before = {k: v.clone() for k, v in sync_model.state_dict().items()}
        ex_before = {k: v.clone() for k, v in extractor.state_dict().items()}

        cfg = dinet_train_config()
        cfg.iterations = 100
        train_dinet(dinet_artifacts["dataset"], sync_model, cfg,
                    network_config=NET_CFG, extractor=extractor)

        same_sync = all(torch.equal(v, sync_before[k])
                        for k, v in sync_model.state_dict().items())
        same_ex = all(torch.equal(v, ex_before[k])
                      for k, v in extractor.state_dict().items())
        report(8, "sync scorer and perceptual extractor frozen over 100 steps",
               same_sync and same_ex)


class TestCriterion9:
    def test_dub_duration_and_locality(self, dub_artifacts):
        clip = dub_artifacts["clip"]
        features = dub_artifacts["features"]
        run = dub_artifacts["runs"][0]
        result = run["result"]

        duration_ok = result.frame_count == features.shape[0]
        pngs = sorted(run["dir"].glob("*.png"))
        files_ok = len(pngs) == features.shape[0]

        locality_ok = True
        for rec, frame in zip(result.manifest["frames"], result.frames):
            src = clip.frames[rec["source_index"]]
            x0, y0, x1, y1 = rec["rect"]
            mask = np.ones(src.shape[:2], bool)
            mask[y0:y1, x0:x1] = False
            if not np.array_equal(frame[mask], src[mask]):
                locality_ok = False
                break
        report(9, "dub output matches audio length and touches only crops",
               duration_ok and files_ok and locality_ok,
               f"{result.frame_count} frames for {features.shape[0]} audio rows")


class TestCriterion10:
    def test_metric_oracles(self):
        rng = np.random.default_rng(1000)
        a = rng.random((3, 24, 20))
        b = np.clip(a + 0.07 * rng.standard_normal(a.shape), 0, 1)

        acc = float(((a - b) ** 2).sum())
        psnr_oracle = 10 * math.log10(1.0 / (acc / a.size))
        psnr_ok = abs(psnr(a, b) - psnr_oracle) <= 1e-9

        skimage_metrics = pytest.importorskip("skimage.metrics")
        ref = skimage_metrics.structural_similarity(
            a, b, channel_axis=0, gaussian_weights=True, sigma=1.5,
            use_sample_covariance=False, data_range=1.0)
        ssim_ok = abs(ssim(a, b) - ref) <= 1e-6

        edge_ok = (psnr(a, a.copy()) == math.inf
                   and abs(ssim(a, a.copy()) - 1.0) <= 1e-9)
        report(10, "metric oracles and edge sentinels", psnr_ok and ssim_ok and edge_ok,
               f"ssim diff {abs(ssim(a, b) - ref):.2e}")


def canonical_log(path: str) -> list[str]:
    lines = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            record = json.loads(line)
            record.pop("wall_time", None)
            lines.append(json.dumps(record, sort_keys=True))
    return lines


class TestCriterion11:
    def test_repeat_runs_bit_identical(self, sync_artifacts, dinet_artifacts,
                                       dub_artifacts):
        sync_a, sync_b = sync_artifacts["runs"]
        sync_ok = canonical_log(sync_a["log"]) == canonical_log(sync_b["log"])
        sync_ckpt_ok = (open(sync_a["ckpt"], "rb").read()
                        == open(sync_b["ckpt"], "rb").read())

        dinet_a, dinet_b = dinet_artifacts["runs"]
        dinet_ok = canonical_log(dinet_a["log"]) == canonical_log(dinet_b["log"])
        dinet_ckpt_ok = (open(dinet_a["ckpt"], "rb").read()
                         == open(dinet_b["ckpt"], "rb").read())

        dub_a, dub_b = dub_artifacts["runs"]
        frames_ok = all(
            pa.read_bytes() == pb.read_bytes()
            for pa, pb in zip(sorted(dub_a["dir"].glob("*.png")),
                              sorted(dub_b["dir"].glob("*.png"))))
        manifest_ok = dub_a["result"].manifest == dub_b["result"].manifest

        report(11, "same-seed reruns reproduce logs, checkpoints and frames",
               sync_ok and sync_ckpt_ok and dinet_ok and dinet_ckpt_ok
               and frames_ok and manifest_ok,
               "logs compared without wall-time fields")
