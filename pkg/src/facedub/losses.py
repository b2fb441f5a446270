"""Training objectives: multi-scale perception loss, least-squares GAN
terms, the lip-sync penalty and their weighted sum."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .errors import ContractError, ConfigurationError

__all__ = [
    "LossWeights",
    "PerceptualExtractor",
    "IdentityExtractor",
    "RandomConvExtractor",
    "Vgg19Extractor",
    "perception_loss",
    "lsgan_d_loss",
    "lsgan_g_loss",
    "sync_loss",
    "total_g_loss",
]


@dataclass
class LossWeights:
    lambda_p: float = 10.0
    lambda_sync: float = 0.1

    def __post_init__(self):
        if self.lambda_p < 0 or self.lambda_sync < 0:
            raise ContractError("loss weights must be non-negative")


class PerceptualExtractor(nn.Module):
    """Frozen feature pyramid used by :func:`perception_loss`.

    Subclasses implement :meth:`stages` returning one map per stage for a
    batch of images.  Parameters never receive gradients.
    """

    def stages(self, images: Tensor) -> list[Tensor]:
        raise NotImplementedError

    def freeze(self):
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()
        return self


class IdentityExtractor(PerceptualExtractor):
    """Single identity stage; makes the loss value hand-checkable."""

    def stages(self, images: Tensor) -> list[Tensor]:
        return [images]


class RandomConvExtractor(PerceptualExtractor):
    """Deterministic frozen conv pyramid; stand-in for pretrained weights."""

    def __init__(self, in_channels: int = 3, widths: tuple[int, ...] = (8, 16, 32), seed: int = 0):
        super().__init__()
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            layers = []
            prev = in_channels
            for w in widths:
                layers.append(nn.Conv2d(prev, w, 3, stride=2, padding=1))
                prev = w
            self.convs = nn.ModuleList(layers)
        self.freeze()

    def stages(self, images: Tensor) -> list[Tensor]:
        out = []
        x = images
        for conv in self.convs:
            x = F.relu(conv(x))
            out.append(x)
        return out


# torchvision-layout conv indices of the VGG-19 feature trunk
_VGG19_CONVS = [
    (0, 3, 64), (2, 64, 64),
    (5, 64, 128), (7, 128, 128),
    (10, 128, 256), (12, 256, 256), (14, 256, 256), (16, 256, 256),
    (19, 256, 512), (21, 512, 512), (23, 512, 512), (25, 512, 512),
    (28, 512, 512), (30, 512, 512), (32, 512, 512), (34, 512, 512),
]
_VGG19_POOL_AFTER = {3, 8, 17, 26}  # relu indices followed by 2x2 max pool
_VGG19_DEFAULT_STAGES = (3, 8, 17, 26, 35)  # relu1_2, relu2_2, relu3_4, relu4_4, relu5_4

_IMAGENET_MEAN = (0.485, 0.456, 0.406)
_IMAGENET_STD = (0.229, 0.224, 0.225)


class Vgg19Extractor(PerceptualExtractor):
    """VGG-19 feature trunk with stages at the conventional relu checkpoints.

    Weights come from a user-supplied state-dict file in the standard
    ``features.N.{weight,bias}`` layout; inputs are [0, 1] RGB images and are
    normalized with the usual ImageNet statistics internally.
    """

    def __init__(self, stage_indices: tuple[int, ...] = _VGG19_DEFAULT_STAGES):
        super().__init__()
        self.stage_indices = tuple(stage_indices)
        convs = {}
        for idx, cin, cout in _VGG19_CONVS:
            convs[str(idx)] = nn.Conv2d(cin, cout, 3, padding=1)
        self.convs = nn.ModuleDict(convs)
        mean = torch.tensor(_IMAGENET_MEAN).view(1, 3, 1, 1)
        std = torch.tensor(_IMAGENET_STD).view(1, 3, 1, 1)
        self.register_buffer("mean", mean)
        self.register_buffer("std", std)
        self.freeze()

    @classmethod
    def from_weights(cls, path: str, stage_indices: tuple[int, ...] = _VGG19_DEFAULT_STAGES) -> "Vgg19Extractor":
        import os

        if not os.path.exists(path):
            raise ConfigurationError(f"perceptual-network weights not found: {path}")
        state = torch.load(path, map_location="cpu", weights_only=True)
        if isinstance(state, dict) and "state_dict" in state:
            state = state["state_dict"]
        model = cls(stage_indices)
        try:
            for idx, _, _ in _VGG19_CONVS:
                conv = model.convs[str(idx)]
                conv.weight.copy_(state[f"features.{idx}.weight"])
                conv.bias.copy_(state[f"features.{idx}.bias"])
        except KeyError as exc:
            raise ConfigurationError(f"weights file {path} misses key {exc}") from exc
        return model.freeze()

    def stages(self, images: Tensor) -> list[Tensor]:
        x = (images - self.mean) / self.std
        out = []
        relu_index = 0
        for idx, _, _ in _VGG19_CONVS:
            x = F.relu(self.convs[str(idx)](x))
            relu_index = idx + 1
            if relu_index in self.stage_indices:
                out.append(x)
            if relu_index in _VGG19_POOL_AFTER:
                x = F.max_pool2d(x, 2)
            if relu_index >= max(self.stage_indices):
                break
        return out


def _as_image_batch(x: Tensor, what: str) -> Tensor:
    if x.dim() == 3:
        return x.unsqueeze(0)
    if x.dim() == 4:
        return x
    raise ContractError(f"{what} must be rank 3 or 4, got rank {x.dim()}")


def perception_loss(out: Tensor, real: Tensor, extractor: PerceptualExtractor) -> Tensor:
    """Two-scale L1 distance between frozen deep features.

    Both images are compared at native resolution and after a 2x bilinear
    downsample; each stage's term is normalized by that stage's own feature
    size, the total by twice the stage count.  Zero iff the images match.
    """
    out = _as_image_batch(out, "generated image")
    real = _as_image_batch(real, "real image")
    if out.shape != real.shape:
        raise ContractError(f"image shapes differ: {tuple(out.shape)} vs {tuple(real.shape)}")
    h, w = out.shape[-2:]
    if h % 2 or w % 2:
        raise ContractError(f"image size must be even for the half-scale term, got {h}x{w}")

    def half(x):
        return F.interpolate(x, size=(h // 2, w // 2), mode="bilinear", align_corners=False)

    batch = out.shape[0]
    total = out.new_zeros(())
    pairs = [(out, real), (half(out), half(real))]
    n_stages = None
    for gen, ref in pairs:
        gen_stages = extractor.stages(gen)
        ref_stages = extractor.stages(ref)
        n_stages = len(gen_stages)
        for g, r in zip(gen_stages, ref_stages):
            size = g.shape[1] * g.shape[2] * g.shape[3]
            total = total + (g - r).abs().sum() / (size * batch)
    return total / (2 * n_stages)


def lsgan_d_loss(d_real: Tensor, d_fake: Tensor) -> Tensor:
    """Least-squares discriminator loss: real scores toward 1, fake toward 0."""
    return 0.5 * ((d_real - 1.0) ** 2).mean() + 0.5 * (d_fake ** 2).mean()


def lsgan_g_loss(d_fake: Tensor) -> Tensor:
    """Least-squares generator loss: fake scores toward 1."""
    return ((d_fake - 1.0) ** 2).mean()


def sync_loss(score: Tensor) -> Tensor:
    """Penalty pushing sync scores toward 1."""
    if not torch.is_tensor(score):
        score = torch.as_tensor(score, dtype=torch.float32)
    return ((score - 1.0) ** 2).mean()


def total_g_loss(l_p: Tensor, l_sync: Tensor, l_gan_g: Tensor,
                 weights: LossWeights | None = None) -> Tensor:
    w = weights if weights is not None else LossWeights()
    return w.lambda_p * l_p + w.lambda_sync * l_sync + l_gan_g
