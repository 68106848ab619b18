"""Shared twin feature extractors for 2-channel CSI samples."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import torch
import torch.nn as nn

from .errors import ConfigError, DimensionError

VARIANTS = ("paper-resnet18", "tiny-residual")
DEFAULT_DIM = {"paper-resnet18": 512, "tiny-residual": 64}


@dataclass
class EncoderConfig:
    variant: str = "tiny-residual"
    d1: int | None = None  # None -> variant default
    init: str = "random-documented"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown encoder variant {self.variant!r}; expected one of {VARIANTS}")
        if self.init not in ("random-documented", "imported-pretrained"):
            raise ConfigError(f"unknown init {self.init!r}")
        if self.d1 is None:
            self.d1 = DEFAULT_DIM[self.variant]
        if self.d1 < 2:
            raise ConfigError(f"embedding dimension d1 must be >= 2, got {self.d1}")


class ResidualBlock(nn.Module):
    def __init__(self, c_in: int, c_out: int, stride: int = 1):
        super().__init__()
        self.conv1 = nn.Conv2d(c_in, c_out, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(c_out)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(c_out)
        self.relu = nn.ReLU(inplace=True)
        if stride != 1 or c_in != c_out:
            self.shortcut = nn.Sequential(
                nn.Conv2d(c_in, c_out, 1, stride=stride, bias=False), nn.BatchNorm2d(c_out)
            )
        else:
            self.shortcut = nn.Identity()

    def forward(self, x):
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.relu(out + self.shortcut(x))


class TinyResidualEncoder(nn.Module):
    """Two residual stages on a 2-channel input; fast enough for CI."""

    def __init__(self, d1: int = 64):
        super().__init__()
        self.d1 = d1
        self.stem = nn.Sequential(
            nn.Conv2d(2, 16, 3, stride=2, padding=1, bias=False),
            nn.BatchNorm2d(16),
            nn.ReLU(inplace=True),
        )
        self.stage1 = ResidualBlock(16, 16)
        self.stage2 = ResidualBlock(16, 32, stride=2)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.fc = nn.Linear(32, d1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 4 or x.shape[1] != 2:
            raise DimensionError(f"encoder expects (b, 2, t, D) input, got {tuple(x.shape)}")
        h = self.stage2(self.stage1(self.stem(x)))
        return self.fc(self.pool(h).flatten(1))


def _adapt_first_conv(weight3: torch.Tensor) -> torch.Tensor:
    """Turn a 3-channel pretrained first-conv kernel into a 2-channel one by
    averaging over the input-channel axis and replicating."""
    mean = weight3.mean(dim=1, keepdim=True)
    return mean.repeat(1, 2, 1, 1)


class PaperResNet18Encoder(nn.Module):
    """torchvision ResNet-18 with a 2-channel first convolution."""

    def __init__(self, d1: int = 512, pretrained: bool = False):
        super().__init__()
        from torchvision.models import resnet18

        net = resnet18(num_classes=d1)
        if pretrained:
            try:
                from torchvision.models import ResNet18_Weights

                ref = resnet18(weights=ResNet18_Weights.DEFAULT)
                state = {k: v for k, v in ref.state_dict().items() if not k.startswith("fc.")}
                net.load_state_dict(state, strict=False)
                adapted = _adapt_first_conv(ref.conv1.weight.data)
            except Exception as exc:  # no network / no weight cache
                warnings.warn(
                    f"pretrained weights unavailable ({exc}); falling back to documented random init"
                )
                adapted = None
        else:
            adapted = None
        net.conv1 = nn.Conv2d(2, 64, kernel_size=7, stride=2, padding=3, bias=False)
        if adapted is not None:
            net.conv1.weight.data.copy_(adapted)
        self.d1 = d1
        self.net = net

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 4 or x.shape[1] != 2:
            raise DimensionError(f"encoder expects (b, 2, t, D) input, got {tuple(x.shape)}")
        return self.net(x)


def build_encoder(config: EncoderConfig, generator: torch.Generator | None = None) -> nn.Module:
    """Construct an encoder. Random init is fan-in scaled (Kaiming for convs,
    the PyTorch default), optionally drawn from a seeded generator."""
    if generator is not None:
        # nn module init uses the global RNG; fork it so construction is
        # reproducible regardless of surrounding code.
        state = torch.random.get_rng_state()
        torch.manual_seed(int(torch.randint(0, 2**31 - 1, (1,), generator=generator).item()))
    try:
        if config.variant == "tiny-residual":
            enc = TinyResidualEncoder(d1=config.d1)
        else:
            enc = PaperResNet18Encoder(d1=config.d1, pretrained=config.init == "imported-pretrained")
    finally:
        if generator is not None:
            torch.random.set_rng_state(state)
    return enc
