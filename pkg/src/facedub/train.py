"""Training procedures: sync-scorer pretraining, then adversarial training
of the dubbing generator with frozen sync scorer and perceptual extractor.

Progress logs are line-delimited JSON records carrying the iteration, every
loss term and the wall time.  With a fixed seed in single-worker mode both
procedures are exactly reproducible (loss-for-loss); wall-time fields are
the only nondeterministic part of a log.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, fields

import numpy as np
import torch
import torch.nn.functional as F

from .checkpoints import (Checkpoint, load_checkpoint, load_optimizer_groups,
                          optimizer_groups, save_checkpoint)
from .errors import (CheckpointError, ConfigurationError, ContractError,
                     TrainingDivergedError)
from .losses import (IdentityExtractor, LossWeights, PerceptualExtractor,
                     Vgg19Extractor, lsgan_d_loss, lsgan_g_loss,
                     perception_loss, sync_loss, total_g_loss)
from .networks import (NetworkConfig, SyncScorer, build_frame_discriminator,
                       build_generator, build_sequence_discriminator,
                       build_sync_scorer)

__all__ = [
    "TrainConfig",
    "JsonlLogger",
    "train_syncnet",
    "train_dinet",
    "load_sync_scorer",
    "load_generator",
    "sync_separation",
]

log = logging.getLogger(__name__)

SYNC_CHECKPOINT_KIND = "sync-scorer"
DINET_CHECKPOINT_KIND = "dubbing-generator"


@dataclass
class TrainConfig:
    """Optimization settings for both training procedures."""

    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    dinet_batch_size: int = 3
    syncnet_batch_size: int = 20
    iterations: int = 500
    lambda_p: float = 10.0
    lambda_sync: float = 0.1
    seed: int = 0
    device: str = "cpu"
    checkpoint_every: int = 0  # 0: final checkpoint only
    log_every: int = 1
    sequence_length: int = 5
    exclusion_radius: int = 5
    sync_shift_min: int = 5
    network_preset: str = "full"
    vgg_weights: str = ""
    grad_clip: float = 0.0  # 0: disabled

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ContractError("learning_rate must be positive")
        if self.dinet_batch_size < 1 or self.syncnet_batch_size < 1:
            raise ContractError("batch sizes must be >= 1")
        if self.iterations < 1:
            raise ContractError("iterations must be >= 1")

    def weights(self) -> LossWeights:
        return LossWeights(lambda_p=self.lambda_p, lambda_sync=self.lambda_sync)

    def to_file(self, path: str):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# facedub training configuration: 'key = value' per line\n")
            for f in fields(self):
                fh.write(f"{f.name} = {getattr(self, f.name)}\n")

    @classmethod
    def from_file(cls, path: str) -> "TrainConfig":
        types = {f.name: f.type for f in fields(cls)}
        values: dict = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                key, sep, value = line.partition("=")
                key, value = key.strip(), value.strip()
                if not sep or not key:
                    raise ConfigurationError(f"{path}:{lineno}: expected 'key = value'")
                if key not in types:
                    raise ConfigurationError(f"{path}:{lineno}: unknown setting {key!r}")
                values[key] = _parse_value(value, types[key], path, lineno)
        return cls(**values)


def _parse_value(text: str, type_name, path: str, lineno: int):
    name = type_name if isinstance(type_name, str) else getattr(type_name, "__name__", "str")
    try:
        if name == "int":
            return int(text)
        if name == "float":
            return float(text)
        if name == "bool":
            return text.lower() in ("1", "true", "yes", "on")
        return text
    except ValueError as exc:
        raise ConfigurationError(f"{path}:{lineno}: bad {name} value {text!r}") from exc


class JsonlLogger:
    """Writes one JSON object per line; also mirrors to the module logger."""

    def __init__(self, path: str | None = None, echo_every: int = 50):
        self.path = path
        self.echo_every = echo_every
        self._fh = open(path, "w", encoding="utf-8") if path else None
        self.records: list[dict] = []

    def write(self, record: dict):
        self.records.append(record)
        if self._fh is not None:
            self._fh.write(json.dumps(record, sort_keys=True) + "\n")
            self._fh.flush()
        if record.get("iteration", 0) % self.echo_every == 0:
            terms = {k: v for k, v in record.items() if k not in ("iteration", "wall_time")}
            log.info("iter %s: %s", record.get("iteration"),
                     " ".join(f"{k}={v:.5g}" for k, v in terms.items()))

    def close(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None


def _check_finite(record: dict, iteration: int):
    bad = {k: v for k, v in record.items()
           if isinstance(v, float) and not np.isfinite(v)}
    if bad:
        raise TrainingDivergedError(
            f"non-finite loss at iteration {iteration}: {bad}")


def _adam(params, cfg: TrainConfig) -> torch.optim.Adam:
    return torch.optim.Adam(params, lr=cfg.learning_rate, betas=(cfg.beta1, cfg.beta2))


def _freeze(module: torch.nn.Module):
    for p in module.parameters():
        p.requires_grad_(False)
    module.eval()


def _set_requires_grad(module: torch.nn.Module, flag: bool):
    for p in module.parameters():
        p.requires_grad_(flag)


# ---------------------------------------------------------------------------
# sync scorer


def train_syncnet(dataset, cfg: TrainConfig,
                  network_config: NetworkConfig | None = None,
                  out_path: str | None = None,
                  log_path: str | None = None,
                  on_iteration=None):
    """Train the sync scorer on matched vs time-shifted pairs.

    Matched (audio, mouth) pairs carry label 1, pairs whose mouth window is
    shifted by at least ``cfg.sync_shift_min`` frames carry label 0; the
    objective is the squared error to the label.
    """
    net_cfg = network_config or NetworkConfig.from_preset(cfg.network_preset)
    torch.manual_seed(cfg.seed)
    rng = np.random.Generator(np.random.Philox(key=cfg.seed))
    model = build_sync_scorer(net_cfg).to(cfg.device)
    model.train()
    optimizer = _adam(model.parameters(), cfg)
    logger = JsonlLogger(log_path)
    started = time.perf_counter()

    for iteration in range(cfg.iterations):
        audio, mouths, labels = dataset.sync_batch(rng, cfg.syncnet_batch_size,
                                                   cfg.sync_shift_min)
        audio = torch.from_numpy(audio).to(cfg.device)
        mouths = torch.from_numpy(mouths).to(cfg.device)
        labels = torch.from_numpy(labels).to(cfg.device)

        scores = model(audio, mouths)
        loss = ((scores - labels) ** 2).mean()
        optimizer.zero_grad()
        loss.backward()
        if cfg.grad_clip > 0:
            torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
        optimizer.step()

        record = {"iteration": iteration, "loss": float(loss.detach()),
                  "wall_time": time.perf_counter() - started}
        _check_finite(record, iteration)
        if iteration % cfg.log_every == 0 or iteration == cfg.iterations - 1:
            logger.write(record)
        if on_iteration is not None:
            on_iteration(iteration, record)
        if out_path and cfg.checkpoint_every and (iteration + 1) % cfg.checkpoint_every == 0:
            _save_syncnet(out_path, net_cfg, model, optimizer, cfg, iteration)

    if out_path:
        _save_syncnet(out_path, net_cfg, model, optimizer, cfg, cfg.iterations - 1)
    logger.close()
    model.eval()
    return model, logger.records


def _save_syncnet(path, net_cfg, model, optimizer, cfg, iteration):
    opt_tensors, opt_meta = optimizer_groups(optimizer)
    save_checkpoint(path, SYNC_CHECKPOINT_KIND, net_cfg,
                    groups={"model": dict(model.state_dict()),
                            "optimizer": opt_tensors},
                    extra={"iteration": iteration,
                           "train_config": asdict(cfg),
                           "optimizer_meta": opt_meta})


def load_sync_scorer(source) -> tuple[SyncScorer, Checkpoint]:
    """Rebuild a sync scorer from a checkpoint path or object."""
    ckpt = source if isinstance(source, Checkpoint) else load_checkpoint(source)
    if ckpt.kind != SYNC_CHECKPOINT_KIND:
        raise CheckpointError(
            f"expected a {SYNC_CHECKPOINT_KIND!r} checkpoint, got {ckpt.kind!r}")
    model = build_sync_scorer(ckpt.network_config)
    model.load_state_dict(ckpt.group("model"))
    model.eval()
    return model, ckpt


def sync_separation(model: SyncScorer, dataset, seed: int = 1234,
                    pairs: int = 64, shift_min: int = 5) -> tuple[float, float]:
    """Mean matched vs mismatched scores over a deterministic evaluation set."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    matched, mismatched = [], []
    model.eval()
    with torch.no_grad():
        while len(matched) < pairs or len(mismatched) < pairs:
            audio, mouths, label = dataset.sample_sync_pair(rng, shift_min)
            bucket = matched if label == 1.0 else mismatched
            if len(bucket) >= pairs:
                continue
            score = model(torch.from_numpy(audio), torch.from_numpy(mouths))
            bucket.append(float(score))
    return float(np.mean(matched)), float(np.mean(mismatched))


# ---------------------------------------------------------------------------
# dubbing generator


def _resolve_extractor(cfg: TrainConfig, extractor) -> PerceptualExtractor:
    if extractor is not None:
        return extractor
    if cfg.vgg_weights:
        return Vgg19Extractor.from_weights(cfg.vgg_weights)
    log.info("no perceptual weights configured; using identity extractor")
    return IdentityExtractor()


def _resolve_syncnet(source, cfg: TrainConfig, net_cfg: NetworkConfig):
    if source is None:
        if cfg.lambda_sync > 0:
            raise ConfigurationError(
                "lip-sync training (lambda_sync > 0) needs a trained sync "
                "scorer checkpoint; pass one or set lambda_sync = 0")
        return None
    if isinstance(source, SyncScorer):
        return source
    model, ckpt = load_sync_scorer(source)
    if ckpt.network_config.mouth_size != net_cfg.mouth_size:
        raise ConfigurationError(
            f"sync scorer was trained for mouth size "
            f"{ckpt.network_config.mouth_size}, generator config expects "
            f"{net_cfg.mouth_size}")
    return model


def train_dinet(dataset, syncnet, cfg: TrainConfig,
                network_config: NetworkConfig | None = None,
                extractor: PerceptualExtractor | None = None,
                out_path: str | None = None,
                log_path: str | None = None,
                on_iteration=None):
    """Adversarial training of the dubbing generator.

    Per iteration: one generator step on the weighted objective
    (perception + lip-sync + frame/sequence adversarial terms), then one
    step for each discriminator.  The sync scorer and the perceptual
    extractor stay frozen throughout.
    """
    net_cfg = network_config or NetworkConfig.from_preset(cfg.network_preset)
    torch.manual_seed(cfg.seed)
    rng = np.random.Generator(np.random.Philox(key=cfg.seed))

    generator = build_generator(net_cfg).to(cfg.device)
    frame_d = build_frame_discriminator(net_cfg).to(cfg.device)
    seq_d = build_sequence_discriminator(net_cfg).to(cfg.device)
    generator.train()
    frame_d.train()
    seq_d.train()

    sync_model = _resolve_syncnet(syncnet, cfg, net_cfg)
    if sync_model is not None:
        _freeze(sync_model)
    perceptual = _resolve_extractor(cfg, extractor)
    if isinstance(perceptual, torch.nn.Module):
        _freeze(perceptual)

    weights = cfg.weights()
    g_opt = _adam(generator.parameters(), cfg)
    fd_opt = _adam(frame_d.parameters(), cfg)
    sd_opt = _adam(seq_d.parameters(), cfg)
    logger = JsonlLogger(log_path)
    started = time.perf_counter()
    length = cfg.sequence_length
    y0, y1, x0, x1 = dataset.mouth_box
    mouth = net_cfg.mouth_size

    for iteration in range(cfg.iterations):
        sources, reals, refs, audio = dataset.sequence_batch(
            rng, cfg.dinet_batch_size, length)
        b = sources.shape[0]
        h, w = sources.shape[-2:]
        src_flat = torch.from_numpy(sources).reshape(b * length, 3, h, w).to(cfg.device)
        real_flat = torch.from_numpy(reals).reshape(b * length, 3, h, w).to(cfg.device)
        refs_t = torch.from_numpy(refs).to(cfg.device)
        refs_rep = refs_t.repeat_interleave(length, dim=0)
        audio_t = torch.from_numpy(audio).to(cfg.device)
        audio_flat = audio_t.reshape(b * length, *audio_t.shape[2:])

        # generator step; discriminators see no gradients
        _set_requires_grad(frame_d, False)
        _set_requires_grad(seq_d, False)
        out_flat = generator(src_flat, refs_rep, audio_flat)
        l_p = perception_loss(out_flat, real_flat, perceptual)
        l_g_frame = lsgan_g_loss(frame_d(out_flat))
        fake_seq = out_flat.reshape(b, length * 3, h, w)
        l_g_seq = lsgan_g_loss(seq_d(fake_seq))
        if sync_model is not None and cfg.lambda_sync > 0:
            mouths = out_flat[:, :, y0:y1, x0:x1]
            mouths = F.interpolate(mouths, size=(mouth, mouth), mode="bilinear",
                                   align_corners=False)
            mouths = mouths.reshape(b, length * 3, mouth, mouth)
            center_audio = audio_t[:, length // 2]
            l_sync = sync_loss(sync_model(center_audio, mouths))
        else:
            l_sync = out_flat.new_zeros(())
        g_total = total_g_loss(l_p, l_sync, l_g_frame + l_g_seq, weights)
        g_opt.zero_grad()
        g_total.backward()
        if cfg.grad_clip > 0:
            torch.nn.utils.clip_grad_norm_(generator.parameters(), cfg.grad_clip)
        g_opt.step()
        _set_requires_grad(frame_d, True)
        _set_requires_grad(seq_d, True)

        # discriminator steps on detached fakes
        out_det = out_flat.detach()
        l_d_frame = lsgan_d_loss(frame_d(real_flat), frame_d(out_det))
        fd_opt.zero_grad()
        l_d_frame.backward()
        fd_opt.step()

        real_seq = real_flat.reshape(b, length * 3, h, w)
        l_d_seq = lsgan_d_loss(seq_d(real_seq), seq_d(out_det.reshape(b, length * 3, h, w)))
        sd_opt.zero_grad()
        l_d_seq.backward()
        sd_opt.step()

        record = {
            "iteration": iteration,
            "l_p": float(l_p.detach()),
            "l_sync": float(l_sync.detach()),
            "l_g_frame": float(l_g_frame.detach()),
            "l_g_seq": float(l_g_seq.detach()),
            "l_d_frame": float(l_d_frame.detach()),
            "l_d_seq": float(l_d_seq.detach()),
            "total_g": float(g_total.detach()),
            "wall_time": time.perf_counter() - started,
        }
        _check_finite(record, iteration)
        if iteration % cfg.log_every == 0 or iteration == cfg.iterations - 1:
            logger.write(record)
        if on_iteration is not None:
            on_iteration(iteration, record)
        if out_path and cfg.checkpoint_every and (iteration + 1) % cfg.checkpoint_every == 0:
            _save_dinet(out_path, net_cfg, generator, frame_d, seq_d,
                        (g_opt, fd_opt, sd_opt), cfg, iteration)

    if out_path:
        _save_dinet(out_path, net_cfg, generator, frame_d, seq_d,
                    (g_opt, fd_opt, sd_opt), cfg, cfg.iterations - 1)
    logger.close()
    generator.eval()
    return generator, (frame_d, seq_d), logger.records


def _save_dinet(path, net_cfg, generator, frame_d, seq_d, optimizers, cfg, iteration):
    names = ("generator_optimizer", "frame_discriminator_optimizer",
             "sequence_discriminator_optimizer")
    groups = {
        "generator": dict(generator.state_dict()),
        "frame_discriminator": dict(frame_d.state_dict()),
        "sequence_discriminator": dict(seq_d.state_dict()),
    }
    meta = {}
    for name, opt in zip(names, optimizers):
        tensors, opt_meta = optimizer_groups(opt)
        groups[name] = tensors
        meta[name] = opt_meta
    save_checkpoint(path, DINET_CHECKPOINT_KIND, net_cfg, groups=groups,
                    extra={"iteration": iteration,
                           "train_config": asdict(cfg),
                           "optimizer_meta": meta})


def load_generator(source) -> tuple:
    """Rebuild a dubbing generator (eval mode) from a checkpoint."""
    ckpt = source if isinstance(source, Checkpoint) else load_checkpoint(source)
    if ckpt.kind != DINET_CHECKPOINT_KIND:
        raise CheckpointError(
            f"expected a {DINET_CHECKPOINT_KIND!r} checkpoint, got {ckpt.kind!r}")
    generator = build_generator(ckpt.network_config)
    generator.load_state_dict(ckpt.group("generator"))
    generator.eval()
    return generator, ckpt


def resume_optimizer(optimizer: torch.optim.Optimizer, ckpt: Checkpoint, name: str):
    load_optimizer_groups(optimizer, ckpt.group(name),
                          ckpt.extra["optimizer_meta"][name])
