"""Command-line entry point.

Subcommands: preprocess, train-syncnet, train-dinet, dub, evaluate.
Global flags: --seed (overrides the config seed), --config (training
settings file, 'key = value' lines), --log-level.

Exit codes: 0 success, 1 unexpected failure, 2 usage error, 3 contract
violation, 4 ingestion error, 5 sampling error, 6 configuration error,
7 checkpoint error, 8 training diverged.
"""

from __future__ import annotations

import argparse
import importlib
import logging
import os
import sys

from . import errors

log = logging.getLogger("facedub")

_EXIT_CODES = [
    (errors.ContractError, 3),
    (errors.IngestionError, 4),
    (errors.SamplingError, 5),
    (errors.ConfigurationError, 6),
    (errors.CheckpointError, 7),
    (errors.TrainingDivergedError, 8),
    (errors.MetricsError, 3),
]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="facedub",
        description="Audio-driven face visual dubbing: preprocessing, "
                    "training, inference and evaluation.")
    parser.add_argument("--seed", type=int, default=None,
                        help="global seed; overrides the config file")
    parser.add_argument("--config", default=None,
                        help="training settings file ('key = value' lines)")
    parser.add_argument("--log-level", default="info",
                        choices=["debug", "info", "warning", "error"])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("preprocess", help="build a 25 fps clip directory")
    p.add_argument("--video", help="video file or directory of frames")
    p.add_argument("--landmarks", help="68-point landmark file (.npy or .csv)")
    p.add_argument("--audio-features", help="per-frame feature file")
    p.add_argument("--fps", type=float, default=None,
                   help="source frame rate (required for frame directories)")
    p.add_argument("--identity", default=None, help="identity tag for the manifest")
    p.add_argument("--synthetic", type=int, metavar="N",
                   help="generate an N-frame synthetic clip instead of reading inputs")
    p.add_argument("--out", required=True, help="output clip directory")

    p = sub.add_parser("train-syncnet", help="pretrain the sync scorer")
    p.add_argument("--data", required=True, nargs="+", help="clip directories (or a root)")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", default=None, help="JSONL progress log path")

    p = sub.add_parser("train-dinet", help="train the dubbing generator")
    p.add_argument("--data", required=True, nargs="+", help="clip directories (or a root)")
    p.add_argument("--syncnet", default=None, help="sync scorer checkpoint")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", default=None, help="JSONL progress log path")
    p.add_argument("--vgg-weights", default=None,
                   help="perceptual network weights (overrides config)")

    p = sub.add_parser("dub", help="dub a source video with a driving audio")
    p.add_argument("--video", required=True, help="video file or directory of frames")
    p.add_argument("--audio", required=True,
                   help="feature file, .wav (needs --speech-model), or "
                        "synthetic:frames=N[,seed=S]")
    p.add_argument("--ckpt", required=True, help="generator checkpoint")
    p.add_argument("--out", required=True,
                   help="output video file (.mp4/.avi/.mkv) or directory for PNG frames")
    p.add_argument("--landmarks", default=None,
                   help="landmark file for the source video (.npy or .csv)")
    p.add_argument("--speech-model", default=None,
                   help="pretrained speech model asset for .wav input")
    p.add_argument("--fps", type=float, default=None,
                   help="source frame rate (required for frame directories)")
    p.add_argument("--feather", type=int, default=5, help="paste-back blend band (px)")
    p.add_argument("--no-feather", action="store_true", help="hard paste, no blending")

    p = sub.add_parser("evaluate", help="score dubbed frames against ground truth")
    p.add_argument("--pred", required=True, help="directory of predicted videos/frames")
    p.add_argument("--gt", required=True, help="directory of ground-truth videos/frames")
    p.add_argument("--out", required=True, help="report path (JSON)")
    p.add_argument("--plugin", action="append", default=[],
                   help="extra metric provider as 'module.path:factory'")
    return parser


def _load_train_config(args):
    from .train import TrainConfig

    cfg = TrainConfig.from_file(args.config) if args.config else TrainConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _clip_dirs(paths) -> list[str]:
    from .data.clips import MANIFEST_NAME

    dirs = []
    for path in paths:
        if os.path.exists(os.path.join(path, MANIFEST_NAME)):
            dirs.append(path)
            continue
        if os.path.isdir(path):
            nested = sorted(
                os.path.join(path, n) for n in os.listdir(path)
                if os.path.exists(os.path.join(path, n, MANIFEST_NAME)))
            if nested:
                dirs.extend(nested)
                continue
        raise errors.IngestionError(f"no clip manifests under {path}")
    return dirs


def _build_dataset(args, cfg):
    from .data.clips import ClipDataset
    from .networks import NetworkConfig

    net_cfg = NetworkConfig.from_preset(cfg.network_preset)
    dataset = ClipDataset(
        _clip_dirs(args.data),
        face_size=(net_cfg.image_height, net_cfg.image_width),
        mouth_size=net_cfg.mouth_size,
        window=net_cfg.audio_window,
        exclusion_radius=cfg.exclusion_radius,
    )
    return dataset, net_cfg


def _cmd_preprocess(args, seed: int) -> int:
    from .data.audio import load_audio_features
    from .data.clips import ClipRecord, save_clip
    from .data.landmarks import load_landmarks
    from .data.preprocess import load_frames_dir, load_video, resample_frames
    from .data.synthetic import write_synthetic_raw

    if args.synthetic:
        raw = write_synthetic_raw(os.path.join(args.out, "_raw"), args.synthetic, seed)
        video, landmark_path = raw["frames"], raw["landmarks"]
        feature_path, fps = raw["features"], raw["fps"]
        identity = args.identity or raw["identity"]
    else:
        if not (args.video and args.landmarks and args.audio_features):
            raise errors.ConfigurationError(
                "preprocess needs --video, --landmarks and --audio-features "
                "(or --synthetic N)")
        video, landmark_path = args.video, args.landmarks
        feature_path, fps = args.audio_features, args.fps
        identity = args.identity or os.path.basename(os.path.normpath(args.video))

    if os.path.isdir(video):
        frames = load_frames_dir(video)
        if fps is None:
            raise errors.ConfigurationError("--fps is required for frame-directory input")
    else:
        frames, fps = load_video(video)

    landmarks = load_landmarks(landmark_path)
    features = load_audio_features(feature_path)
    if len(landmarks) != len(frames):
        raise errors.IngestionError(
            f"{len(landmarks)} landmark rows for {len(frames)} frames")
    if fps != 25.0:
        from .data.preprocess import nearest_frame_indices

        idx = nearest_frame_indices(len(frames), fps)
        frames = [frames[i] for i in idx]
        landmarks = landmarks[idx]
        log.info("resampled %s -> 25 fps (%d frames)", fps, len(frames))
    if len(features) != len(frames):
        raise errors.IngestionError(
            f"{len(features)} audio feature rows for {len(frames)} frames "
            "(features must be aligned to 25 fps video frames)")

    import numpy as np

    clip = ClipRecord(frames=np.stack(frames), landmarks=landmarks,
                      audio_features=features, identity=identity)
    manifest = save_clip(args.out, clip)
    log.info("wrote clip: %s", manifest)
    print(manifest)
    return 0


def _cmd_train_syncnet(args, cfg) -> int:
    from .train import train_syncnet

    dataset, net_cfg = _build_dataset(args, cfg)
    train_syncnet(dataset, cfg, network_config=net_cfg,
                  out_path=args.out, log_path=args.log)
    log.info("sync scorer checkpoint: %s", args.out)
    print(args.out)
    return 0


def _cmd_train_dinet(args, cfg) -> int:
    from .train import train_dinet

    if args.vgg_weights:
        cfg.vgg_weights = args.vgg_weights
    dataset, net_cfg = _build_dataset(args, cfg)
    train_dinet(dataset, args.syncnet, cfg, network_config=net_cfg,
                out_path=args.out, log_path=args.log)
    log.info("generator checkpoint: %s", args.out)
    print(args.out)
    return 0


def _cmd_dub(args, seed: int) -> int:
    from .data.audio import resolve_audio_features
    from .data.landmarks import load_landmarks
    from .data.preprocess import load_frames_dir, load_video, resample_frames
    from .infer import dub_video

    if os.path.isdir(args.video):
        frames = load_frames_dir(args.video)
        fps = args.fps if args.fps is not None else 25.0
    else:
        frames, fps = load_video(args.video)
    if args.landmarks:
        landmarks = load_landmarks(args.landmarks)
    else:
        raise errors.ConfigurationError(
            "dub needs --landmarks (landmark detection is not bundled)")
    if len(landmarks) != len(frames):
        raise errors.IngestionError(
            f"{len(landmarks)} landmark rows for {len(frames)} frames")
    if fps != 25.0:
        from .data.preprocess import nearest_frame_indices

        idx = nearest_frame_indices(len(frames), fps)
        frames = [frames[i] for i in idx]
        landmarks = landmarks[idx]

    features = resolve_audio_features(args.audio, args.speech_model)
    feather = 0 if args.no_feather else args.feather
    result = dub_video(frames, landmarks, features, args.ckpt, out=args.out,
                       feather=feather, seed=seed)
    log.info("dubbed %d frames -> %s", result.frame_count, args.out)
    print(args.out)
    return 0


def _load_plugin(spec: str):
    module_name, sep, attr = spec.partition(":")
    if not sep:
        raise errors.ConfigurationError(
            f"bad plugin spec {spec!r}; expected 'module.path:factory'")
    try:
        module = importlib.import_module(module_name)
        factory = getattr(module, attr)
    except (ImportError, AttributeError) as exc:
        raise errors.ConfigurationError(f"cannot load plugin {spec!r}: {exc}") from exc
    plugin = factory() if callable(factory) else factory
    if not hasattr(plugin, "name") or not hasattr(plugin, "score_video"):
        raise errors.ConfigurationError(
            f"plugin {spec!r} lacks the metric provider interface "
            "(name, score_video)")
    return plugin


def _cmd_evaluate(args) -> int:
    from .metrics import evaluate_dirs, write_report

    plugins = [_load_plugin(spec) for spec in args.plugin]
    report = evaluate_dirs(args.pred, args.gt, plugins)
    write_report(report, args.out)
    for name, value in report["aggregate"].items():
        log.info("aggregate %s: %s", name, value)
    print(args.out)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse handles --help and usage errors
        return int(exc.code or 0)

    logging.basicConfig(level=args.log_level.upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2

    try:
        if args.command == "preprocess":
            return _cmd_preprocess(args, args.seed if args.seed is not None else 0)
        if args.command == "train-syncnet":
            return _cmd_train_syncnet(args, _load_train_config(args))
        if args.command == "train-dinet":
            return _cmd_train_dinet(args, _load_train_config(args))
        if args.command == "dub":
            return _cmd_dub(args, args.seed if args.seed is not None else 0)
        if args.command == "evaluate":
            return _cmd_evaluate(args)
        parser.print_usage(sys.stderr)
        return 2
    except errors.FacedubError as exc:
        log.error("%s", exc)
        for klass, code in _EXIT_CODES:
            if isinstance(exc, klass):
                return code
        return 1
    except Exception:  # pragma: no cover - unexpected failure path
        log.exception("unexpected failure")
        return 1


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
