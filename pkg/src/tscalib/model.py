"""Convolution + self-attention encoder, mirror decoder, and classifier head.

The encoder stacks length-preserving 1-D convolutions over the time axis
(local patterns) and multi-head self-attention with a residual connection
and layer normalization (long-range structure). A ``cnn_only`` variant skips
the attention block and is otherwise identical. The decoder mirrors the
convolution stack back to the input feature width; the classifier
mean-pools over time and applies an affine map to class logits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import torch
from torch import nn

ENCODER_VARIANTS = ("local_global", "cnn_only")

CHECKPOINT_FORMAT_VERSION = 1


@dataclass
class EncoderConfig:
    conv_channels: tuple = (32, 64)
    kernel_size: int = 5
    d_model: int = 64
    n_heads: int = 4
    dropout: float = 0.1
    variant: str = "local_global"

    def validate(self) -> None:
        if not self.conv_channels:
            raise ValueError("conv_channels must be non-empty")
        if self.kernel_size % 2 != 1:
            raise ValueError("kernel_size must be odd (length-preserving padding)")
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.variant not in ENCODER_VARIANTS:
            raise ValueError(f"variant must be one of {ENCODER_VARIANTS}")


@dataclass
class ModelOutputs:
    logits: torch.Tensor  # (B, C)
    embedding: torch.Tensor  # (B, T, d_model)
    reconstruction: Optional[torch.Tensor] = None  # (B, T, F)


class ConvEncoder(nn.Module):
    """Stack of same-padding Conv1d + ReLU over the time axis, F -> d_model."""

    def __init__(self, n_features: int, config: EncoderConfig):
        super().__init__()
        pad = config.kernel_size // 2
        layers = []
        in_ch = n_features
        for out_ch in config.conv_channels:
            layers.append(nn.Conv1d(in_ch, out_ch, config.kernel_size, padding=pad))
            layers.append(nn.ReLU())
            in_ch = out_ch
        if in_ch != config.d_model:
            layers.append(nn.Conv1d(in_ch, config.d_model, 1))
        self.stack = nn.Sequential(*layers)
        self.dropout = nn.Dropout(config.dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # (B, T, F) -> (B, T, d_model)
        h = self.stack(x.transpose(1, 2)).transpose(1, 2)
        return self.dropout(h)


class SelfAttention(nn.Module):
    """Multi-head scaled dot-product self-attention with residual + LayerNorm."""

    def __init__(self, d_model: int, n_heads: int, dropout: float):
        super().__init__()
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.q_proj = nn.Linear(d_model, d_model)
        self.k_proj = nn.Linear(d_model, d_model)
        self.v_proj = nn.Linear(d_model, d_model)
        self.out_proj = nn.Linear(d_model, d_model)
        self.dropout = nn.Dropout(dropout)
        self.norm = nn.LayerNorm(d_model)

    def _split(self, t: torch.Tensor) -> torch.Tensor:
        b, length, _ = t.shape
        return t.view(b, length, self.n_heads, self.d_head).transpose(1, 2)

    def attention_details(self, h: torch.Tensor):
        """Per-head weights/values/context, exposed for inspection and tests."""
        q = self._split(self.q_proj(h))
        k = self._split(self.k_proj(h))
        v = self._split(self.v_proj(h))
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.d_head)
        weights = torch.softmax(scores, dim=-1)  # (B, H, T, T)
        context = weights @ v  # (B, H, T, d_head)
        return {"weights": weights, "values": v, "context": context}

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        det = self.attention_details(h)
        b, length, _ = h.shape
        merged = det["context"].transpose(1, 2).reshape(b, length, -1)
        return self.norm(h + self.dropout(self.out_proj(merged)))


class ConvDecoder(nn.Module):
    """Mirror of the conv stack: d_model back to F per timestep."""

    def __init__(self, n_features: int, config: EncoderConfig):
        super().__init__()
        pad = config.kernel_size // 2
        widths = [config.d_model] + list(reversed(config.conv_channels[:-1])) + [n_features]
        layers = []
        for i in range(len(widths) - 1):
            layers.append(nn.Conv1d(widths[i], widths[i + 1], config.kernel_size, padding=pad))
            if i < len(widths) - 2:
                layers.append(nn.ReLU())
        self.stack = nn.Sequential(*layers)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        return self.stack(z.transpose(1, 2)).transpose(1, 2)


class ClassifierHead(nn.Module):
    """Mean-pool over time, then an affine map to class logits."""

    def __init__(self, d_model: int, n_classes: int):
        super().__init__()
        self.fc = nn.Linear(d_model, n_classes)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        return self.fc(z.mean(dim=1))


class TimeSeriesNet(nn.Module):
    """Encoder + optional attention + decoder + classifier."""

    def __init__(
        self,
        n_features: int,
        n_classes: int,
        config: Optional[EncoderConfig] = None,
        with_decoder: bool = True,
    ):
        super().__init__()
        config = config or EncoderConfig()
        config.validate()
        self.config = config
        self.n_features = n_features
        self.n_classes = n_classes
        self.conv = ConvEncoder(n_features, config)
        self.attention = (
            SelfAttention(config.d_model, config.n_heads, config.dropout)
            if config.variant == "local_global"
            else None
        )
        self.decoder = ConvDecoder(n_features, config) if with_decoder else None
        self.classifier = ClassifierHead(config.d_model, n_classes)

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        h = self.conv(x)
        if self.attention is not None:
            h = self.attention(h)
        return h

    def forward(self, x: torch.Tensor) -> ModelOutputs:
        z = self.encode(x)
        recon = self.decoder(z) if self.decoder is not None else None
        return ModelOutputs(logits=self.classifier(z), embedding=z, reconstruction=recon)


def reconstruction_loss(x: torch.Tensor, x_hat: torch.Tensor) -> torch.Tensor:
    """Mean over the batch of the squared l2 distance over all T*F entries."""
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(x_hat.shape)}")
    return ((x - x_hat) ** 2).sum(dim=(1, 2)).mean()


def save_checkpoint(model: TimeSeriesNet, path) -> None:
    """Single-file checkpoint with a format tag; round-trips bit-exactly."""
    torch.save(
        {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "n_features": model.n_features,
            "n_classes": model.n_classes,
            "with_decoder": model.decoder is not None,
            "config": vars(model.config) | {"conv_channels": list(model.config.conv_channels)},
            "state_dict": model.state_dict(),
        },
        path,
    )


def load_checkpoint(path) -> TimeSeriesNet:
    payload = torch.load(path, weights_only=False)
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format version {version!r}")
    cfg_dict = dict(payload["config"])
    cfg_dict["conv_channels"] = tuple(cfg_dict["conv_channels"])
    model = TimeSeriesNet(
        n_features=payload["n_features"],
        n_classes=payload["n_classes"],
        config=EncoderConfig(**cfg_dict),
        with_decoder=payload["with_decoder"],
    )
    model.load_state_dict(payload["state_dict"])
    return model
