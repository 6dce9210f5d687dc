"""Time-domain L1 plus multi-resolution STFT L1 on real/imaginary parts."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch

from . import dsp


@dataclass
class LossConfig:
    fft_sizes: list[int] = field(default_factory=lambda: [256, 512, 768, 1024])
    weight_time: float = 1.0
    weight_tf: float = 1.0

    def __post_init__(self):
        for n in self.fft_sizes:
            if n % 2 or n < 64:
                raise ValueError(f"FFT size {n} must be even and >= 64")


def _check_pair(est: torch.Tensor, ref: torch.Tensor) -> None:
    if est.shape != ref.shape:
        raise ValueError(f"shape mismatch {tuple(est.shape)} vs {tuple(ref.shape)}")


def time_l1(est: torch.Tensor, ref: torch.Tensor) -> torch.Tensor:
    _check_pair(est, ref)
    return (est - ref).abs().mean()


def multires_tf_l1(est: torch.Tensor, ref: torch.Tensor, cfg: LossConfig | None = None) -> torch.Tensor:
    """Mean over resolutions of the per-bin L1 on real and imaginary parts.

    Each resolution uses a Hann window of the FFT size with hop ``n_fft // 2``.
    """
    cfg = cfg or LossConfig()
    _check_pair(est, ref)
    if est.shape[-1] < max(cfg.fft_sizes):
        raise ValueError(
            f"signal of {est.shape[-1]} samples shorter than largest FFT {max(cfg.fft_sizes)}"
        )
    total = est.new_zeros(())
    for n_fft in cfg.fft_sizes:
        diff = dsp.stft(est - ref, n_fft, n_fft // 2)
        total = total + (diff.real.abs() + diff.imag.abs()).mean()
    return total / len(cfg.fft_sizes)


def loss_terms(est, ref, cfg: LossConfig | None = None) -> dict[str, torch.Tensor]:
    cfg = cfg or LossConfig()
    lt = time_l1(est, ref)
    lf = multires_tf_l1(est, ref, cfg)
    return {"loss_time": lt, "loss_tf": lf, "loss_total": cfg.weight_time * lt + cfg.weight_tf * lf}


def total_loss(est, ref, cfg: LossConfig | None = None) -> torch.Tensor:
    return loss_terms(est, ref, cfg)["loss_total"]
