"""IF-CorrNet: dual-path macaron Transformer mapping correlations to deep filters."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from . import dsp
from .features import (
    DEFAULT_BETA,
    DEFAULT_EPS,
    build_stack,
    corr_channels,
    correlation_input,
    n_taps,
    raw_input,
)
from .filtering import MAPPING, MF_FILTER, SF_MASK, apply_filter

IF_CORR = "IF-Corr"
SF_RAW = "SF-Raw"
INPUT_VARIANTS = (IF_CORR, SF_RAW)

# The four ablation rows; any other pairing is rejected.
VARIANT_PAIRS = (
    (IF_CORR, MF_FILTER),
    (SF_RAW, MF_FILTER),
    (SF_RAW, SF_MASK),
    (SF_RAW, MAPPING),
)


@dataclass
class ModelConfig:
    L: int = 3
    C: int = 96
    B: int = 6
    C_H: int = 192
    K: int = 7
    n_heads: int = 4
    input_variant: str = IF_CORR
    output_variant: str = MF_FILTER
    macaron_scale: float = 0.5
    beta: float = DEFAULT_BETA
    eps: float = DEFAULT_EPS
    rope_base: float = 10000.0
    # "post-gate": the stated 2C width of the first input conv is measured after
    # the SwiGLU gate (conv emits 4C). "pre-gate": conv emits 2C, gate leaves C.
    swiglu_width: str = "post-gate"

    def __post_init__(self):
        if self.C % self.n_heads:
            raise ValueError(f"C={self.C} not divisible by n_heads={self.n_heads}")
        if (self.C // self.n_heads) % 2:
            raise ValueError("head dimension must be even for rotary embedding")
        if self.K % 2 == 0:
            raise ValueError(f"kernel size K={self.K} must be odd")
        if self.B < 1 or self.L < 0:
            raise ValueError("need B >= 1 and L >= 0")
        if (self.input_variant, self.output_variant) not in VARIANT_PAIRS:
            raise ValueError(
                f"unsupported variant pair ({self.input_variant}, {self.output_variant})"
            )
        if self.swiglu_width not in ("post-gate", "pre-gate"):
            raise ValueError(f"unknown swiglu_width {self.swiglu_width!r}")

    @classmethod
    def full(cls, **kw) -> "ModelConfig":
        return cls(**kw)

    @classmethod
    def small(cls, **kw) -> "ModelConfig":
        return cls(**{"C": 64, "B": 6, "C_H": 128, "K": 3, **kw})

    @property
    def in_channels(self) -> int:
        return corr_channels(self.L) if self.input_variant == IF_CORR else 2

    @property
    def out_channels(self) -> int:
        return 2 * n_taps(self.L) if self.output_variant == MF_FILTER else 2

    def to_dict(self) -> dict:
        return asdict(self)


def swiglu(x: torch.Tensor, dim: int) -> torch.Tensor:
    value, gate = x.chunk(2, dim=dim)
    return value * F.silu(gate)


class BinLayerNorm(nn.LayerNorm):
    """LayerNorm over channels of a ``(N, C, T, F)`` map, separately per bin."""

    def forward(self, x):
        return super().forward(x.permute(0, 2, 3, 1)).permute(0, 3, 1, 2)


class InputLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        C = cfg.C
        hidden = 2 * C if cfg.swiglu_width == "post-gate" else C
        self.conv1 = nn.Conv2d(cfg.in_channels, 2 * hidden, kernel_size=1)
        self.conv2 = nn.Conv2d(hidden, C, kernel_size=3, padding=1)
        self.norm = BinLayerNorm(C)

    def forward(self, x):
        if x.shape[1] != self.conv1.in_channels:
            raise ValueError(f"expected {self.conv1.in_channels} input channels, got {x.shape[1]}")
        return self.norm(self.conv2(swiglu(self.conv1(x), dim=1)))


class ConvFFN(nn.Module):
    def __init__(self, C: int, C_H: int, K: int):
        super().__init__()
        self.conv1 = nn.Conv1d(C, 2 * C_H, K, padding=K // 2)
        self.conv2 = nn.Conv1d(C_H, C, K, padding=K // 2)

    def forward(self, x):
        # x: (N, S, C)
        h = swiglu(self.conv1(x.transpose(1, 2)), dim=1)
        return self.conv2(h).transpose(1, 2)


def rotary(x: torch.Tensor, base: float = 10000.0) -> torch.Tensor:
    """Rotate consecutive (even, odd) feature pairs of ``(..., S, D)`` by position."""
    S, D = x.shape[-2], x.shape[-1]
    inv_freq = base ** (-torch.arange(0, D, 2, dtype=x.dtype, device=x.device) / D)
    angle = torch.arange(S, dtype=x.dtype, device=x.device)[:, None] * inv_freq
    cos, sin = angle.cos(), angle.sin()
    even, odd = x[..., 0::2], x[..., 1::2]
    out = torch.stack([even * cos - odd * sin, even * sin + odd * cos], dim=-1)
    return out.flatten(-2)


class RoPEAttention(nn.Module):
    def __init__(self, C: int, n_heads: int, rope_base: float = 10000.0):
        super().__init__()
        self.n_heads = n_heads
        self.rope_base = rope_base
        self.qkv = nn.Linear(C, 3 * C)
        self.proj = nn.Linear(C, C)

    def forward(self, x):
        N, S, C = x.shape
        H = self.n_heads
        q, k, v = self.qkv(x).reshape(N, S, 3, H, C // H).permute(2, 0, 3, 1, 4)
        q = rotary(q, self.rope_base)
        k = rotary(k, self.rope_base)
        out = F.scaled_dot_product_attention(q, k, v)
        return self.proj(out.transpose(1, 2).reshape(N, S, C))


class MacaronBlock(nn.Module):
    """Pre-norm ConvFFN -> RoPE MHSA -> ConvFFN, half-step FFN residuals."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        C = cfg.C
        self.scale = cfg.macaron_scale
        self.norm_ffn1 = nn.LayerNorm(C)
        self.ffn1 = ConvFFN(C, cfg.C_H, cfg.K)
        self.norm_attn = nn.LayerNorm(C)
        self.attn = RoPEAttention(C, cfg.n_heads, cfg.rope_base)
        self.norm_ffn2 = nn.LayerNorm(C)
        self.ffn2 = ConvFFN(C, cfg.C_H, cfg.K)
        self.norm_out = nn.LayerNorm(C)

    def forward(self, x):
        x = x + self.scale * self.ffn1(self.norm_ffn1(x))
        x = x + self.attn(self.norm_attn(x))
        x = x + self.scale * self.ffn2(self.norm_ffn2(x))
        return self.norm_out(x)


class FrequencyModule(nn.Module):
    """Each frame is an independent sequence of length F."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.block = MacaronBlock(cfg)

    def forward(self, x):
        N, C, T, F_ = x.shape
        seq = x.permute(0, 2, 3, 1).reshape(N * T, F_, C)
        return self.block(seq).reshape(N, T, F_, C).permute(0, 3, 1, 2)


class TimeModule(nn.Module):
    """Each frequency bin is an independent sequence of length T."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.block = MacaronBlock(cfg)

    def forward(self, x):
        N, C, T, F_ = x.shape
        seq = x.permute(0, 3, 2, 1).reshape(N * F_, T, C)
        return self.block(seq).reshape(N, F_, T, C).permute(0, 3, 2, 1)


class IFCorrNet(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.input_layer = InputLayer(cfg)
        self.freq_modules = nn.ModuleList(FrequencyModule(cfg) for _ in range(cfg.B))
        self.time_modules = nn.ModuleList(TimeModule(cfg) for _ in range(cfg.B))
        self.head = nn.Conv2d(cfg.C, cfg.out_channels, kernel_size=1)
        self.reset_parameters()

    def reset_parameters(self):
        for m in self.modules():
            if isinstance(m, (nn.Conv1d, nn.Conv2d, nn.Linear)):
                nn.init.trunc_normal_(m.weight, std=0.02, a=-0.04, b=0.04)
                nn.init.zeros_(m.bias)
            elif isinstance(m, nn.LayerNorm):
                nn.init.ones_(m.weight)
                nn.init.zeros_(m.bias)
        # An untrained model outputs silence.
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)

    def features(self, X: torch.Tensor) -> torch.Tensor:
        cfg = self.cfg
        if cfg.input_variant == IF_CORR:
            return correlation_input(X, cfg.L, cfg.beta, cfg.eps)
        return raw_input(X)

    def backbone(self, inp: torch.Tensor) -> torch.Tensor:
        h = self.input_layer(inp)
        for fmod, tmod in zip(self.freq_modules, self.time_modules):
            h = tmod(fmod(h))
        return self.head(h)

    def forward(self, X: torch.Tensor):
        """Estimate filters for ``X`` of shape ``(N, T, F)`` (or ``(T, F)``).

        Returns ``(filters, Y)``. ``filters`` is ``(N, T, F, 2L+1)`` for
        MF-Filter, the complex mask ``(N, T, F)`` for SF-Mask, or the mapped
        spectrum for Mapping; ``Y`` is the enhanced spectrum, same shape as X.
        """
        unbatched = X.dim() == 2
        if unbatched:
            X = X.unsqueeze(0)
        cfg = self.cfg
        scale = None
        if cfg.output_variant == MAPPING:
            scale = X.abs().pow(2).mean(dim=(-2, -1), keepdim=True).sqrt().clamp_min(cfg.eps)
            out = self.backbone(self.features(X / scale))
        else:
            out = self.backbone(self.features(X))
        if cfg.output_variant == MF_FILTER:
            P = n_taps(cfg.L)
            w = torch.complex(out[:, :P], out[:, P:]).permute(0, 2, 3, 1)
            Y = apply_filter(w, build_stack(X, cfg.L), MF_FILTER)
        elif cfg.output_variant == SF_MASK:
            w = torch.complex(out[:, 0], out[:, 1])
            Y = apply_filter(w, X.unsqueeze(-1), SF_MASK)
        else:
            w = torch.complex(out[:, 0], out[:, 1]) * scale
            Y = w
        if unbatched:
            w, Y = w[0], Y[0]
        return w, Y

    @torch.no_grad()
    def enhance(self, wav, n_fft: int = dsp.N_FFT, hop: int = dsp.HOP):
        """Waveform in, waveform out (same length)."""
        dtype = next(self.parameters()).dtype
        x = torch.as_tensor(wav, dtype=dtype)
        X = dsp.stft(x, n_fft, hop)
        _, Y = self(X)
        return dsp.istft(Y, length=x.shape[-1], n_fft=n_fft, hop=hop)


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def parameter_formula(cfg: ModelConfig) -> dict[str, int]:
    """Closed-form trainable parameter count, broken down by layer group."""
    C, C_H, K = cfg.C, cfg.C_H, cfg.K
    hidden = 2 * C if cfg.swiglu_width == "post-gate" else C
    input_layer = (cfg.in_channels * 2 * hidden + 2 * hidden) + (hidden * C * 9 + C) + 2 * C
    conv_ffn = (C * 2 * C_H * K + 2 * C_H) + (C_H * C * K + C)
    attention = (C * 3 * C + 3 * C) + (C * C + C)
    block = 2 * conv_ffn + attention + 4 * 2 * C
    head = C * cfg.out_channels + cfg.out_channels
    counts = {
        "input_layer": input_layer,
        "blocks": 2 * cfg.B * block,
        "head": head,
    }
    counts["total"] = sum(counts.values())
    return counts
