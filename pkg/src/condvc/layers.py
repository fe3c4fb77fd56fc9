"""Building blocks shared by the analysis/shortcut/synthesis transforms.

Residual and attention blocks follow the bottleneck style common in learned
transform coding; GDN constrains its parameters positive through a squared
reparametrization so no projection step is needed during training.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn


def conv(in_ch: int, out_ch: int, kernel: int = 5, stride: int = 2) -> nn.Conv2d:
    return nn.Conv2d(in_ch, out_ch, kernel, stride=stride, padding=kernel // 2)


def deconv(in_ch: int, out_ch: int, kernel: int = 5, stride: int = 2) -> nn.ConvTranspose2d:
    return nn.ConvTranspose2d(
        in_ch, out_ch, kernel, stride=stride,
        padding=kernel // 2, output_padding=stride - 1,
    )


class ResidualBlock(nn.Module):
    """x + conv-stack(x) with a channel bottleneck; shape preserving."""

    def __init__(self, channels: int):
        super().__init__()
        if channels < 2:
            raise ValueError(f"need at least 2 channels, got {channels}")
        mid = channels // 2
        self.stack = nn.Sequential(
            nn.Conv2d(channels, mid, 1),
            nn.ReLU(),
            nn.Conv2d(mid, mid, 3, padding=1),
            nn.ReLU(),
            nn.Conv2d(mid, channels, 1),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.stack(x)


class AttentionBlock(nn.Module):
    """x + sigmoid(branch(x)) * trunk(x); shape preserving.

    The mask branch ends in a 1x1 conv + sigmoid, so mask values are
    strictly inside (0, 1).
    """

    def __init__(self, channels: int):
        super().__init__()
        self.trunk = nn.Sequential(
            *[ResidualBlock(channels) for _ in range(3)],
            nn.Conv2d(channels, channels, 1),
        )
        self.branch = nn.Sequential(
            *[ResidualBlock(channels) for _ in range(3)],
            nn.Conv2d(channels, channels, 1),
        )

    def mask(self, x: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.branch(x))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.mask(x) * self.trunk(x)


class GDN(nn.Module):
    """Generalized divisive normalization.

    y_c = x_c / sqrt(beta_c + sum_k gamma_ck * x_k^2); the inverse flag
    multiplies instead of divides.  beta and gamma are stored as square
    roots, so the effective values are non-negative by construction (beta
    additionally carries a 1e-6 pedestal to keep the denominator positive).
    """

    def __init__(self, channels: int, inverse: bool = False):
        super().__init__()
        self.inverse = inverse
        self.beta_root = nn.Parameter(torch.ones(channels))
        self.gamma_root = nn.Parameter(0.1 * torch.eye(channels))

    def normalizer(self, x: torch.Tensor) -> torch.Tensor:
        beta = self.beta_root ** 2 + 1e-6
        gamma = (self.gamma_root ** 2).unsqueeze(-1).unsqueeze(-1)
        return torch.sqrt(F.conv2d(x * x, gamma, bias=beta))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        norm = self.normalizer(x)
        return x * norm if self.inverse else x / norm


class MaskedConv2d(nn.Conv2d):
    """Raster-order causal convolution (PixelCNN masks).

    Mask type 'A' excludes the center tap (strict causality w.r.t. the
    input); type 'B' includes it and is only safe after an 'A' layer.  The
    mask is validated at construction: every tap at or after the center in
    raster order (strictly after, for type 'B') must be zero.
    """

    def __init__(self, *args, mask_type: str = "A", **kwargs):
        super().__init__(*args, **kwargs)
        if mask_type not in ("A", "B"):
            raise ValueError(f"mask_type must be 'A' or 'B', got {mask_type!r}")
        kh, kw = self.kernel_size
        if kh % 2 == 0 or kw % 2 == 0:
            raise ValueError("masked convolution requires odd kernel sizes")
        mask = torch.ones(kh, kw)
        mask[kh // 2, kw // 2 + (mask_type == "B"):] = 0
        mask[kh // 2 + 1:, :] = 0
        self._validate_mask(mask, mask_type)
        self.register_buffer("mask", mask.expand_as(self.weight).clone())

    @staticmethod
    def _validate_mask(mask: torch.Tensor, mask_type: str) -> None:
        kh, kw = mask.shape
        center = kh // 2 * kw + kw // 2
        flat = mask.flatten()
        first_forbidden = center + (1 if mask_type == "B" else 0)
        if flat[first_forbidden:].any():
            raise ValueError("mask admits non-causal taps")

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self._conv_forward(x, self.weight * self.mask, self.bias)
