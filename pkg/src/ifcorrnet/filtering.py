"""Apply per-bin multi-frame filters, plus a least-squares oracle filter.

The oracle is a time-invariant per-frequency solve used only to verify the
filtering pathway; the network estimates time-varying filters.
"""

from __future__ import annotations

import numpy as np
import torch

from . import dsp
from .features import build_stack

MF_FILTER = "MF-Filter"
SF_MASK = "SF-Mask"
MAPPING = "Mapping"
OUTPUT_VARIANTS = (MF_FILTER, SF_MASK, MAPPING)


def apply_filter(w, stack, variant: str = MF_FILTER) -> torch.Tensor:
    """Filter a multi-frame stack ``(..., T, F, 2L+1)``.

    MF-Filter computes ``Y = w^T x`` with a plain (unconjugated) transpose.
    SF-Mask multiplies the centre tap by a complex scalar ``w`` of shape
    ``(..., T, F)``. Mapping returns ``w`` itself as the spectrum.
    """
    w = w if isinstance(w, torch.Tensor) else torch.as_tensor(np.asarray(w))
    stack = stack if isinstance(stack, torch.Tensor) else torch.as_tensor(np.asarray(stack))
    if variant == MF_FILTER:
        if w.shape[-1] != stack.shape[-1]:
            raise ValueError(f"filter has {w.shape[-1]} taps, stack has {stack.shape[-1]}")
        return (w * stack).sum(dim=-1)
    if variant == SF_MASK:
        center = stack[..., stack.shape[-1] // 2]
        if w.shape != center.shape:
            raise ValueError(f"mask shape {tuple(w.shape)} != spectrum shape {tuple(center.shape)}")
        return w * center
    if variant == MAPPING:
        return w
    raise ValueError(f"unknown output variant {variant!r}")


def oracle_ls_filter(stack, target, rel_reg: float = 1e-6) -> np.ndarray:
    """Per-frequency Tikhonov least-squares filter minimising ``|A w - t|^2``.

    Rows of ``A`` are the stacks of one frequency across time. The ridge is
    ``rel_reg * trace(A^H A) / P`` so the solution is unit-invariant. Returns a
    ``(T, F, P)`` array: the per-frequency filter broadcast over frames.
    """
    stack = np.asarray(stack)
    target = np.asarray(target)
    T, F, P = stack.shape
    if target.shape != (T, F):
        raise ValueError(f"target shape {target.shape} != {(T, F)}")
    A = np.transpose(stack, (1, 0, 2))  # (F, T, P)
    gram = np.einsum("ftp,ftq->fpq", A.conj(), A)
    rhs = np.einsum("ftp,ft->fp", A.conj(), target.T)
    lam = rel_reg * np.real(np.trace(gram, axis1=1, axis2=2)) / P
    lam = np.maximum(lam, np.finfo(np.float64).tiny)
    gram = gram + lam[:, None, None] * np.eye(P)
    w = np.linalg.solve(gram, rhs[..., None])[..., 0]  # (F, P)
    return np.broadcast_to(w, (T, F, P)).copy()


def ls_objective(w_f: np.ndarray, A_f: np.ndarray, t_f: np.ndarray, rel_reg: float = 1e-6) -> float:
    """Regularised objective the oracle minimises, for one frequency."""
    P = A_f.shape[1]
    lam = rel_reg * np.real(np.trace(A_f.conj().T @ A_f)) / P
    r = A_f @ w_f - t_f
    return float(np.real(np.vdot(r, r)) + lam * np.real(np.vdot(w_f, w_f)))


def oracle_dereverb(X, target, L: int) -> np.ndarray:
    """Filter ``X`` with the oracle filter fitted against ``target``."""
    stack = build_stack(np.asarray(X), L).numpy()
    w = oracle_ls_filter(stack, target)
    return np.einsum("tfp,tfp->tf", w, stack)


def oracle_dereverb_wav(mixture, target, L: int) -> np.ndarray:
    """Waveform in, waveform out version of :func:`oracle_dereverb`."""
    mixture = np.asarray(mixture, dtype=np.float64)
    Y = oracle_dereverb(dsp.stft(mixture), dsp.stft(np.asarray(target, dtype=np.float64)), L)
    return dsp.istft(Y, length=mixture.size)
