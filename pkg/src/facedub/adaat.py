"""Channel-wise affine deformation of feature maps.

Every channel of a feature map gets its own rigid-plus-scale transform
(rotation theta, isotropic scale s, translation tx/ty).  For each output
lattice point (x, y), given in normalized coordinates ([-1, 1] across the
map, origin at the center, y increasing downward), the input is sampled at

    x_hat = s*cos(theta)*x - s*sin(theta)*y + tx
    y_hat = s*sin(theta)*x + s*cos(theta)*y + ty

i.e. backward warping: the grid stores where each output pixel reads from.
Sampling is bilinear with border clamping for out-of-range coordinates.

Grids are always float64.  Coordinate round-off at float32 would be on the
order of (w/2)*eps_f32 pixels, large enough to break the identity-warp
invariant on wide maps; with float64 coordinates the residual fraction is
far below float32 resolution, so identity parameters reproduce float32
inputs bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import Tensor

from .errors import ContractError

__all__ = [
    "ChannelAffineParams",
    "identity_params",
    "make_affine_grid",
    "grid_sample_bilinear",
    "adaat_deform",
]


@dataclass
class ChannelAffineParams:
    """Per-channel affine coefficients, each of shape (C,) or (B, C)."""

    theta: Tensor
    scale: Tensor
    tx: Tensor
    ty: Tensor

    def __post_init__(self):
        shapes = {t.shape for t in (self.theta, self.scale, self.tx, self.ty)}
        if len(shapes) != 1:
            raise ContractError(f"coefficient arrays must share one shape, got {shapes}")
        if self.theta.dim() not in (1, 2):
            raise ContractError(f"coefficients must be (C,) or (B, C), got {tuple(self.theta.shape)}")
        if self.channels == 0:
            raise ContractError("channel count must be >= 1")
        with torch.no_grad():
            if not bool((self.scale > 0).all()):
                raise ContractError("scale coefficients must be strictly positive")
            for name in ("theta", "scale", "tx", "ty"):
                if not bool(torch.isfinite(getattr(self, name)).all()):
                    raise ContractError(f"non-finite values in {name}")

    @property
    def channels(self) -> int:
        return self.theta.shape[-1]

    @property
    def batched(self) -> bool:
        return self.theta.dim() == 2


def identity_params(channels: int, batch: int | None = None,
                    dtype: torch.dtype = torch.float32) -> ChannelAffineParams:
    """Parameters that leave every channel unchanged."""
    shape = (channels,) if batch is None else (batch, channels)
    return ChannelAffineParams(
        theta=torch.zeros(shape, dtype=dtype),
        scale=torch.ones(shape, dtype=dtype),
        tx=torch.zeros(shape, dtype=dtype),
        ty=torch.zeros(shape, dtype=dtype),
    )


def _base_lattice(h: int, w: int) -> tuple[Tensor, Tensor]:
    # float64 so that centered normalized coordinates survive unnormalization
    ys = torch.linspace(-1.0, 1.0, h, dtype=torch.float64) if h > 1 else torch.zeros(1, dtype=torch.float64)
    xs = torch.linspace(-1.0, 1.0, w, dtype=torch.float64) if w > 1 else torch.zeros(1, dtype=torch.float64)
    return ys.view(h, 1).expand(h, w), xs.view(1, w).expand(h, w)


def make_affine_grid(params: ChannelAffineParams, h: int, w: int) -> Tensor:
    """Build the sampling grid for the given output size.

    Returns a float64 tensor of shape (C, h, w, 2) — or (B, C, h, w, 2) for
    batched parameters — holding (x_hat, y_hat) in normalized coordinates.
    Differentiable with respect to all four coefficient families.
    """
    if h < 1 or w < 1:
        raise ContractError(f"grid size must be >= 1, got {h}x{w}")
    y, x = _base_lattice(h, w)  # (h, w) each

    lead = params.theta.shape  # (C,) or (B, C)
    theta = params.theta.to(torch.float64).reshape(*lead, 1, 1)
    scale = params.scale.to(torch.float64).reshape(*lead, 1, 1)
    tx = params.tx.to(torch.float64).reshape(*lead, 1, 1)
    ty = params.ty.to(torch.float64).reshape(*lead, 1, 1)

    cos = torch.cos(theta) * scale
    sin = torch.sin(theta) * scale
    x_hat = cos * x - sin * y + tx
    y_hat = sin * x + cos * y + ty
    grid = torch.stack([x_hat, y_hat], dim=-1)
    if not bool(torch.isfinite(grid).all()):
        raise ContractError("sampling grid contains non-finite coordinates")
    return grid


def _sample_nhw(values: Tensor, grid: Tensor) -> Tensor:
    """Bilinear sampling of (N, h, w) float64 values at a (N, h, w, 2) grid."""
    n, h, w = values.shape
    # unnormalize; clamping implements border padding
    px = ((grid[..., 0] + 1.0) * 0.5) * (w - 1)
    py = ((grid[..., 1] + 1.0) * 0.5) * (h - 1)
    px = px.clamp(0.0, float(w - 1))
    py = py.clamp(0.0, float(h - 1))

    x0 = px.floor()
    y0 = py.floor()
    fx = px - x0
    fy = py - y0
    x0 = x0.long()
    y0 = y0.long()
    x1 = (x0 + 1).clamp(max=w - 1)
    y1 = (y0 + 1).clamp(max=h - 1)

    flat = values.reshape(n, h * w)

    def take(yi, xi):
        return torch.gather(flat, 1, (yi * w + xi).reshape(n, -1)).reshape(n, h, w)

    top = take(y0, x0) * (1.0 - fx) + take(y0, x1) * fx
    bottom = take(y1, x0) * (1.0 - fx) + take(y1, x1) * fx
    return top * (1.0 - fy) + bottom * fy


def grid_sample_bilinear(fmap: Tensor, grid: Tensor) -> Tensor:
    """Sample each channel of ``fmap`` at that channel's grid coordinates.

    ``fmap`` is (C, h, w) or (B, C, h, w); ``grid`` must match with a
    trailing coordinate pair.  Out-of-range coordinates clamp to the border
    value.  Differentiable with respect to both arguments.
    """
    if fmap.dim() not in (3, 4):
        raise ContractError(f"feature map must be rank 3 or 4, got rank {fmap.dim()}")
    if grid.dim() != fmap.dim() + 1 or grid.shape[:-1] != fmap.shape or grid.shape[-1] != 2:
        raise ContractError(
            f"grid shape {tuple(grid.shape)} does not match feature map {tuple(fmap.shape)}")

    batched = fmap.dim() == 4
    shape = fmap.shape
    n = shape[0] * shape[1] if batched else shape[0]
    h, w = shape[-2], shape[-1]

    out = _sample_nhw(
        fmap.to(torch.float64).reshape(n, h, w),
        grid.to(torch.float64).reshape(n, h, w, 2),
    )
    return out.reshape(shape).to(fmap.dtype)


def adaat_deform(fmap: Tensor, params: ChannelAffineParams) -> Tensor:
    """Apply the per-channel affine transforms to ``fmap``.

    Output shape equals input shape; channels deform independently.
    """
    if fmap.dim() not in (3, 4):
        raise ContractError(f"feature map must be rank 3 or 4, got rank {fmap.dim()}")
    if params.channels != fmap.shape[-3]:
        raise ContractError(
            f"parameter channels ({params.channels}) != feature map channels ({fmap.shape[-3]})")
    if params.batched != (fmap.dim() == 4):
        raise ContractError("parameter batching must match feature map batching")
    if params.batched and params.theta.shape[0] != fmap.shape[0]:
        raise ContractError(
            f"parameter batch ({params.theta.shape[0]}) != feature map batch ({fmap.shape[0]})")
    grid = make_affine_grid(params, fmap.shape[-2], fmap.shape[-1])
    return grid_sample_bilinear(fmap, grid)
