"""Inter-frame correlation features.

All functions take complex spectrograms shaped ``(..., T, F)`` as torch tensors
(numpy arrays are converted) and stay differentiable.
"""

from __future__ import annotations

import numpy as np
import torch

DEFAULT_BETA = 0.5
DEFAULT_EPS = 1e-8

# Stored in checkpoints so exported weights stay unambiguous.
FLATTEN_ORDER = "real-block-then-imag-block/row-major(m,n)"


def _tensor(x) -> torch.Tensor:
    return x if isinstance(x, torch.Tensor) else torch.as_tensor(np.asarray(x))


def n_taps(L: int) -> int:
    return 2 * L + 1


def corr_channels(L: int) -> int:
    return 2 * n_taps(L) ** 2


def build_stack(X, L: int) -> torch.Tensor:
    """Stack ``[X_{t-L}, ..., X_t, ..., X_{t+L}]`` along a new last axis.

    Returns ``(..., T, F, 2L+1)``; frames outside ``[0, T)`` are zero.
    """
    if L < 0:
        raise ValueError(f"L must be >= 0, got {L}")
    X = _tensor(X)
    T = X.shape[-2]
    if T < 1:
        raise ValueError("spectrogram has no frames")
    pad_shape = (*X.shape[:-2], L, X.shape[-1])
    zeros = X.new_zeros(pad_shape)
    padded = torch.cat([zeros, X, zeros], dim=-2)
    taps = [padded[..., m : m + T, :] for m in range(n_taps(L))]
    return torch.stack(taps, dim=-1)


def correlate(stack) -> torch.Tensor:
    """Rank-one outer product ``x x^H`` per bin: ``(..., 2L+1, 2L+1)``.

    Built from real arithmetic so the diagonal is exactly real and the result
    exactly Hermitian.
    """
    stack = _tensor(stack)
    a, b = stack.real, stack.imag
    am, an = a.unsqueeze(-1), a.unsqueeze(-2)
    bm, bn = b.unsqueeze(-1), b.unsqueeze(-2)
    return torch.complex(am * an + bm * bn, bm * an - am * bn)


def phat_beta_weight(Z, beta: float = DEFAULT_BETA, eps: float = DEFAULT_EPS) -> torch.Tensor:
    """Compress each entry's magnitude: ``z / max(|z|, eps)**beta``."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    if eps <= 0:
        raise ValueError("eps must be positive")
    Z = _tensor(Z)
    if beta == 0.0:
        return Z
    mag = Z.abs().clamp_min(eps)
    return Z / mag.pow(beta)


def flatten_input(Z) -> torch.Tensor:
    """``(..., T, F, P, P)`` complex -> ``(..., 2P^2, T, F)`` real."""
    Z = _tensor(Z)
    P = Z.shape[-1]
    flat = Z.reshape(*Z.shape[:-2], P * P)
    out = torch.cat([flat.real, flat.imag], dim=-1)
    return out.movedim(-1, -3).contiguous()


def unflatten_input(inp) -> torch.Tensor:
    """Inverse of :func:`flatten_input`."""
    inp = _tensor(inp)
    C = inp.shape[-3]
    P = int(round((C // 2) ** 0.5))
    if 2 * P * P != C:
        raise ValueError(f"{C} channels is not of the form 2*P^2")
    x = inp.movedim(-3, -1)
    Z = torch.complex(x[..., : P * P], x[..., P * P :])
    return Z.reshape(*Z.shape[:-1], P, P)


def raw_input(X) -> torch.Tensor:
    """Single-frame input: ``(..., 2, T, F)`` holding real and imaginary parts."""
    X = _tensor(X)
    return torch.stack([X.real, X.imag], dim=-3)


def correlation_input(X, L: int, beta: float = DEFAULT_BETA, eps: float = DEFAULT_EPS) -> torch.Tensor:
    return flatten_input(phat_beta_weight(correlate(build_stack(X, L)), beta, eps))
