"""Learnable components: encoders, affine head, inpainting decoder,
patch discriminators and the audio-visual sync scorer.

Feature maps live at quarter resolution (H/4 x W/4) with
``feature_channels`` channels; audio/alignment embeddings are
``embedding_dim``-vectors.  All forward methods accept a single sample
(rank matching the documented type) or a leading batch dimension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict, fields

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .adaat import ChannelAffineParams, adaat_deform
from .errors import ContractError, ConfigurationError

__all__ = [
    "NetworkConfig",
    "DubbingGenerator",
    "PatchDiscriminator",
    "SyncScorer",
    "build_generator",
    "build_frame_discriminator",
    "build_sequence_discriminator",
    "build_sync_scorer",
]

REFERENCE_COUNT = 5


@dataclass
class NetworkConfig:
    """Architecture hyperparameters shared by all components."""

    image_height: int = 416
    image_width: int = 320
    feature_channels: int = 256
    base_channels: int = 64
    embedding_dim: int = 128
    audio_window: int = 5
    audio_dim: int = 29
    mouth_size: int = 256
    parameter_seed: int = 0

    def __post_init__(self):
        if self.image_height % 4 or self.image_width % 4:
            raise ContractError(
                f"image size must be divisible by 4, got {self.image_height}x{self.image_width}")
        for name in ("feature_channels", "base_channels", "embedding_dim",
                     "audio_window", "audio_dim", "mouth_size"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be >= 1")

    @classmethod
    def full(cls, **overrides) -> "NetworkConfig":
        return cls(**overrides)

    @classmethod
    def toy(cls, **overrides) -> "NetworkConfig":
        """CPU-sized preset used by tests and demos."""
        values = dict(image_height=64, image_width=48, feature_channels=32,
                      base_channels=16, mouth_size=64)
        values.update(overrides)
        return cls(**values)

    @classmethod
    def from_preset(cls, name: str, **overrides) -> "NetworkConfig":
        try:
            factory = {"full": cls.full, "toy": cls.toy}[name]
        except KeyError:
            raise ConfigurationError(f"unknown network preset {name!r} (expected 'full' or 'toy')")
        return factory(**overrides)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown NetworkConfig fields: {sorted(unknown)}")
        return cls(**data)

    @property
    def map_height(self) -> int:
        return self.image_height // 4

    @property
    def map_width(self) -> int:
        return self.image_width // 4


# ---------------------------------------------------------------------------
# building blocks


class SameBlock2d(nn.Module):
    """conv + norm + relu, stride 1"""

    def __init__(self, in_ch, out_ch, kernel_size=3, padding=1):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, kernel_size, padding=padding)
        self.norm = nn.BatchNorm2d(out_ch)

    def forward(self, x):
        return F.relu(self.norm(self.conv(x)))


class DownBlock2d(nn.Module):
    """conv + norm + relu, stride 2"""

    def __init__(self, in_ch, out_ch, kernel_size=3, padding=1):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, kernel_size, stride=2, padding=padding)
        self.norm = nn.BatchNorm2d(out_ch)

    def forward(self, x):
        return F.relu(self.norm(self.conv(x)))


class UpBlock2d(nn.Module):
    """2x nearest upsample + conv + norm + relu"""

    def __init__(self, in_ch, out_ch, kernel_size=3, padding=1):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, kernel_size, padding=padding)
        self.norm = nn.BatchNorm2d(out_ch)

    def forward(self, x):
        x = F.interpolate(x, scale_factor=2)
        return F.relu(self.norm(self.conv(x)))


class ResBlock2d(nn.Module):
    """pre-activation residual block"""

    def __init__(self, in_ch, out_ch, kernel_size=3, padding=1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, in_ch, kernel_size, padding=padding)
        self.conv2 = nn.Conv2d(in_ch, out_ch, kernel_size, padding=padding)
        self.norm1 = nn.BatchNorm2d(in_ch)
        self.norm2 = nn.BatchNorm2d(in_ch)
        self.skip = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else None

    def forward(self, x):
        out = self.conv1(F.relu(self.norm1(x)))
        out = self.conv2(F.relu(self.norm2(out)))
        return out + (self.skip(x) if self.skip is not None else x)


class SameBlock1d(nn.Module):
    def __init__(self, in_ch, out_ch, kernel_size=3, padding=1):
        super().__init__()
        self.conv = nn.Conv1d(in_ch, out_ch, kernel_size, padding=padding)
        self.norm = nn.BatchNorm1d(out_ch)

    def forward(self, x):
        return F.relu(self.norm(self.conv(x)))


class DownBlock1d(nn.Module):
    def __init__(self, in_ch, out_ch, kernel_size=3, padding=1):
        super().__init__()
        self.conv = nn.Conv1d(in_ch, out_ch, kernel_size, stride=2, padding=padding)
        self.norm = nn.BatchNorm1d(out_ch)

    def forward(self, x):
        return F.relu(self.norm(self.conv(x)))


class ResBlock1d(nn.Module):
    def __init__(self, channels, kernel_size=3, padding=1):
        super().__init__()
        self.conv1 = nn.Conv1d(channels, channels, kernel_size, padding=padding)
        self.conv2 = nn.Conv1d(channels, channels, kernel_size, padding=padding)
        self.norm1 = nn.BatchNorm1d(channels)
        self.norm2 = nn.BatchNorm1d(channels)

    def forward(self, x):
        out = self.conv1(F.relu(self.norm1(x)))
        out = self.conv2(F.relu(self.norm2(out)))
        return out + x


def _image_encoder(in_channels: int, base: int, feature: int) -> nn.Sequential:
    return nn.Sequential(
        SameBlock2d(in_channels, base, kernel_size=7, padding=3),
        DownBlock2d(base, 2 * base),
        DownBlock2d(2 * base, feature),
        ResBlock2d(feature, feature),
    )


class AudioEncoder(nn.Module):
    """(T, audio_dim) acoustic window -> embedding vector."""

    def __init__(self, audio_dim: int, embedding_dim: int):
        super().__init__()
        self.net = nn.Sequential(
            SameBlock1d(audio_dim, embedding_dim, kernel_size=5, padding=2),
            ResBlock1d(embedding_dim),
            DownBlock1d(embedding_dim, embedding_dim),
            ResBlock1d(embedding_dim),
        )
        self.fc = nn.Linear(embedding_dim, embedding_dim)

    def forward(self, x):  # (B, T, audio_dim)
        x = x.transpose(1, 2)  # channels = feature dim
        x = self.net(x).mean(dim=2)
        return self.fc(x)


class AlignmentEncoder(nn.Module):
    """Concatenated source/reference maps -> pose-alignment embedding."""

    def __init__(self, feature: int, embedding_dim: int):
        super().__init__()
        self.net = nn.Sequential(
            SameBlock2d(2 * feature, feature),
            DownBlock2d(feature, feature),
            DownBlock2d(feature, feature),
        )
        self.fc = nn.Linear(feature, embedding_dim)

    def forward(self, x):  # (B, 2*feature, h, w)
        x = self.net(x).mean(dim=(2, 3))
        return self.fc(x)


# shift so that softplus(0 + _SCALE_SHIFT) + _SCALE_EPS == 1 at zero init
_SCALE_EPS = 1e-4
_SCALE_SHIFT = math.log(math.expm1(1.0 - _SCALE_EPS))


class AffineHead(nn.Module):
    """Audio + alignment embeddings -> per-channel affine coefficients.

    The final layer is zero-initialized so an untrained head emits the
    identity transform for every channel; the scale activation is a shifted
    softplus keeping s strictly positive.
    """

    def __init__(self, embedding_dim: int, channels: int):
        super().__init__()
        self.channels = channels
        self.hidden = nn.Linear(2 * embedding_dim, 2 * embedding_dim)
        self.out = nn.Linear(2 * embedding_dim, 4 * channels)
        nn.init.zeros_(self.out.weight)
        nn.init.zeros_(self.out.bias)

    def forward(self, audio_embedding, alignment_embedding) -> ChannelAffineParams:
        code = torch.cat([audio_embedding, alignment_embedding], dim=-1)
        raw = self.out(F.relu(self.hidden(code)))
        theta, raw_scale, tx, ty = raw.split(self.channels, dim=-1)
        scale = F.softplus(raw_scale + _SCALE_SHIFT) + _SCALE_EPS
        return ChannelAffineParams(theta=theta, scale=scale, tx=tx, ty=ty)


class InpaintingDecoder(nn.Module):
    """Fused source + deformed maps -> full-resolution face in [0, 1]."""

    def __init__(self, feature: int, base: int):
        super().__init__()
        self.net = nn.Sequential(
            SameBlock2d(2 * feature, 2 * base),
            UpBlock2d(2 * base, 2 * base),
            ResBlock2d(2 * base, 2 * base),
            UpBlock2d(2 * base, base),
            nn.Conv2d(base, 3, kernel_size=7, padding=3),
            nn.Sigmoid(),
        )

    def forward(self, x):
        return self.net(x)


def _batched(x: Tensor, rank: int, what: str) -> tuple[Tensor, bool]:
    if x.dim() == rank:
        return x.unsqueeze(0), True
    if x.dim() == rank + 1:
        return x, False
    raise ContractError(f"{what} must be rank {rank} or {rank + 1}, got rank {x.dim()}")


class DubbingGenerator(nn.Module):
    """Deform reference features to match the driving audio and the source
    head pose, then decode them against the source features to fill the
    masked mouth region."""

    def __init__(self, config: NetworkConfig):
        super().__init__()
        self.config = config
        f, b, e = config.feature_channels, config.base_channels, config.embedding_dim
        self.source_encoder = _image_encoder(3, b, f)
        self.reference_encoder = _image_encoder(3 * REFERENCE_COUNT, b, f)
        self.audio_encoder = AudioEncoder(config.audio_dim, e)
        self.alignment_encoder = AlignmentEncoder(f, e)
        self.affine_head = AffineHead(e, f)
        self.decoder = InpaintingDecoder(f, b)

    # --- stage methods ----------------------------------------------------

    def encode_source(self, image: Tensor) -> Tensor:
        image, single = _batched(image, 3, "source image")
        self._check_image(image, 3, "source image")
        out = self.source_encoder(image)
        return out[0] if single else out

    def encode_reference(self, stack: Tensor) -> Tensor:
        stack, single = _batched(stack, 3, "reference stack")
        self._check_image(stack, 3 * REFERENCE_COUNT, "reference stack")
        out = self.reference_encoder(stack)
        return out[0] if single else out

    def encode_audio(self, window: Tensor) -> Tensor:
        window, single = _batched(window, 2, "audio window")
        cfg = self.config
        if window.shape[1] != cfg.audio_window or window.shape[2] != cfg.audio_dim:
            raise ContractError(
                f"audio window must be {cfg.audio_window}x{cfg.audio_dim}, "
                f"got {tuple(window.shape[1:])}")
        out = self.audio_encoder(window)
        return out[0] if single else out

    def encode_alignment(self, source_features: Tensor, reference_features: Tensor) -> Tensor:
        fs, single = _batched(source_features, 3, "source features")
        fr, _ = _batched(reference_features, 3, "reference features")
        if fs.shape != fr.shape:
            raise ContractError(
                f"feature maps must match, got {tuple(fs.shape)} vs {tuple(fr.shape)}")
        out = self.alignment_encoder(torch.cat([fs, fr], dim=1))
        return out[0] if single else out

    def predict_affine(self, audio_embedding: Tensor, alignment_embedding: Tensor) -> ChannelAffineParams:
        fa, single = _batched(audio_embedding, 1, "audio embedding")
        fl, _ = _batched(alignment_embedding, 1, "alignment embedding")
        if fa.shape[-1] != self.config.embedding_dim or fl.shape[-1] != self.config.embedding_dim:
            raise ContractError(
                f"embeddings must have length {self.config.embedding_dim}")
        params = self.affine_head(fa, fl)
        if single:
            params = ChannelAffineParams(theta=params.theta[0], scale=params.scale[0],
                                         tx=params.tx[0], ty=params.ty[0])
        return params

    def inpaint_decode(self, source_features: Tensor, deformed_features: Tensor) -> Tensor:
        fs, single = _batched(source_features, 3, "source features")
        fd, _ = _batched(deformed_features, 3, "deformed features")
        if fs.shape != fd.shape:
            raise ContractError(
                f"feature maps must match, got {tuple(fs.shape)} vs {tuple(fd.shape)}")
        out = self.decoder(torch.cat([fs, fd], dim=1))
        return out[0] if single else out

    # --- full pipeline ----------------------------------------------------

    def forward(self, source: Tensor, references: Tensor, audio: Tensor) -> Tensor:
        source, single = _batched(source, 3, "source image")
        references, _ = _batched(references, 3, "reference stack")
        audio, _ = _batched(audio, 2, "audio window")
        fs = self.encode_source(source)
        fr = self.encode_reference(references)
        fa = self.encode_audio(audio)
        fl = self.encode_alignment(fs, fr)
        params = self.predict_affine(fa, fl)
        fd = adaat_deform(fr, params)
        out = self.inpaint_decode(fs, fd)
        return out[0] if single else out

    def _check_image(self, image: Tensor, channels: int, what: str):
        if image.shape[1] != channels:
            raise ContractError(f"{what} must have {channels} channels, got {image.shape[1]}")
        if image.shape[2] % 4 or image.shape[3] % 4:
            raise ContractError(
                f"{what} spatial size must be divisible by 4, got {tuple(image.shape[2:])}")


class PatchDiscriminator(nn.Module):
    """Patch-level realism scores; raw (un-squashed) outputs for LS-GAN."""

    def __init__(self, in_channels: int, base: int = 64):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(in_channels, base, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(base, 2 * base, 4, stride=2, padding=1),
            nn.BatchNorm2d(2 * base),
            nn.LeakyReLU(0.2),
            nn.Conv2d(2 * base, 4 * base, 4, stride=2, padding=1),
            nn.BatchNorm2d(4 * base),
            nn.LeakyReLU(0.2),
            nn.Conv2d(4 * base, 1, 3, padding=1),
        )
        self.in_channels = in_channels

    def forward(self, images: Tensor) -> Tensor:
        images, single = _batched(images, 3, "discriminator input")
        if images.shape[1] != self.in_channels:
            raise ContractError(
                f"discriminator expects {self.in_channels} channels, got {images.shape[1]}")
        out = self.net(images)
        return out[0] if single else out


class SyncScorer(nn.Module):
    """Scores whether a 5-frame mouth stack matches an acoustic window.

    Two encoder towers produce unit embeddings; the score is a sigmoid of
    their scaled cosine similarity, so outputs live in (0, 1) and an
    untrained scorer sits near 0.5.
    """

    def __init__(self, config: NetworkConfig):
        super().__init__()
        self.config = config
        b, e = max(config.base_channels, 8), config.embedding_dim
        self.visual = nn.Sequential(
            SameBlock2d(3 * REFERENCE_COUNT, b, kernel_size=7, padding=3),
            DownBlock2d(b, 2 * b),
            DownBlock2d(2 * b, 2 * b),
            DownBlock2d(2 * b, 4 * b),
        )
        self.visual_fc = nn.Linear(4 * b, e)
        self.audio = AudioEncoder(config.audio_dim, e)
        # steep enough to spread matched/mismatched scores, flat enough that
        # an untrained scorer still sits near 0.5
        self.logit_scale = nn.Parameter(torch.tensor(3.0))
        self.logit_bias = nn.Parameter(torch.tensor(0.0))

    def embed_mouths(self, mouths: Tensor) -> Tensor:
        feat = self.visual(mouths).mean(dim=(2, 3))
        return F.normalize(self.visual_fc(feat), dim=-1)

    def embed_audio(self, window: Tensor) -> Tensor:
        return F.normalize(self.audio(window), dim=-1)

    def forward(self, audio: Tensor, mouths: Tensor) -> Tensor:
        audio, single = _batched(audio, 2, "audio window")
        mouths, _ = _batched(mouths, 3, "mouth stack")
        cfg = self.config
        if mouths.shape[1] != 3 * REFERENCE_COUNT:
            raise ContractError(
                f"mouth stack must have {3 * REFERENCE_COUNT} channels "
                f"(5 frames), got {mouths.shape[1]}")
        if audio.shape[1] != cfg.audio_window or audio.shape[2] != cfg.audio_dim:
            raise ContractError(
                f"audio window must be {cfg.audio_window}x{cfg.audio_dim}, "
                f"got {tuple(audio.shape[1:])}")
        if audio.shape[0] != mouths.shape[0]:
            raise ContractError("audio and mouth batch sizes differ")
        cos = (self.embed_audio(audio) * self.embed_mouths(mouths)).sum(dim=-1)
        score = torch.sigmoid(self.logit_scale * cos + self.logit_bias)
        return score[0] if single else score


# ---------------------------------------------------------------------------
# seeded factories (distinct streams per component)


def _seeded(seed: int, build):
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        return build()


def build_generator(config: NetworkConfig) -> DubbingGenerator:
    return _seeded(config.parameter_seed, lambda: DubbingGenerator(config))


def build_frame_discriminator(config: NetworkConfig) -> PatchDiscriminator:
    return _seeded(config.parameter_seed + 1,
                   lambda: PatchDiscriminator(3, config.base_channels))


def build_sequence_discriminator(config: NetworkConfig) -> PatchDiscriminator:
    return _seeded(config.parameter_seed + 2,
                   lambda: PatchDiscriminator(3 * REFERENCE_COUNT, config.base_channels))


def build_sync_scorer(config: NetworkConfig) -> SyncScorer:
    return _seeded(config.parameter_seed + 3, lambda: SyncScorer(config))
