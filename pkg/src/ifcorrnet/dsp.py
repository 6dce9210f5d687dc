"""STFT analysis/synthesis and waveform utilities.

Spectrograms are laid out ``(..., T, F)`` (frames first), complex dtype.
Both functions accept numpy arrays or torch tensors and return the same kind,
so the DSP code and the network share one transform.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from scipy.io import wavfile

SAMPLE_RATE = 16000
N_FFT = 512
HOP = 256
SI_SDR_CAP = 100.0


class AudioError(ValueError):
    """Invalid waveform input (wrong rate, empty, non-finite)."""


def _as_tensor(x):
    if isinstance(x, torch.Tensor):
        return x, False
    return torch.as_tensor(np.asarray(x)), True


def hann(n_fft: int, dtype=torch.float64, device=None) -> torch.Tensor:
    return torch.hann_window(n_fft, periodic=True, dtype=dtype, device=device)


def check_cola(n_fft: int, hop: int, tol: float = 1e-8) -> None:
    """Raise if shifted periodic Hann windows do not sum to a constant."""
    if n_fft % 2 or hop <= 0 or n_fft % hop:
        raise ValueError(f"hop {hop} must divide even n_fft {n_fft}")
    w = hann(n_fft).numpy()
    acc = w.reshape(-1, hop).sum(axis=0)
    if np.ptp(acc) > tol * max(acc.mean(), 1e-30):
        raise ValueError(f"Hann window with n_fft={n_fft}, hop={hop} violates COLA")


def n_frames(n_samples: int, hop: int = HOP) -> int:
    return n_samples // hop + 1


def stft(x, n_fft: int = N_FFT, hop: int = HOP):
    """One-sided STFT with reflect centre padding and a periodic Hann window.

    ``x`` has shape ``(..., N)``; the result has shape ``(..., T, n_fft//2 + 1)``
    with ``T = N // hop + 1``. Frame ``t`` (0-based) is centred on sample
    ``t * hop``.
    """
    xt, was_np = _as_tensor(x)
    if xt.shape[-1] == 0:
        raise AudioError("empty signal")
    if xt.shape[-1] < n_fft:
        raise AudioError(f"signal of {xt.shape[-1]} samples shorter than n_fft={n_fft}")
    check_cola(n_fft, hop)
    if not xt.is_floating_point():
        xt = xt.double()
    lead = xt.shape[:-1]
    flat = xt.reshape(-1, xt.shape[-1])
    spec = torch.stft(
        flat,
        n_fft=n_fft,
        hop_length=hop,
        window=hann(n_fft, flat.dtype, flat.device),
        center=True,
        pad_mode="reflect",
        onesided=True,
        return_complex=True,
    )
    spec = spec.transpose(-1, -2).reshape(*lead, -1, n_fft // 2 + 1)
    return spec.numpy() if was_np else spec


def istft(spec, length: int | None = None, n_fft: int = N_FFT, hop: int = HOP):
    """Inverse of :func:`stft` by weighted overlap-add.

    ``length`` trims/pads the output to the original signal length; without it
    the output has ``(T - 1) * hop`` samples.
    """
    st, was_np = _as_tensor(spec)
    check_cola(n_fft, hop)
    if st.shape[-1] != n_fft // 2 + 1:
        raise ValueError(f"expected {n_fft // 2 + 1} bins, got {st.shape[-1]}")
    if not st.is_complex():
        raise TypeError("istft expects a complex spectrogram")
    lead = st.shape[:-2]
    flat = st.reshape(-1, *st.shape[-2:]).transpose(-1, -2)
    real_dtype = torch.float64 if flat.dtype == torch.complex128 else torch.float32
    y = torch.istft(
        flat,
        n_fft=n_fft,
        hop_length=hop,
        window=hann(n_fft, real_dtype, flat.device),
        center=True,
        onesided=True,
        length=length,
    )
    y = y.reshape(*lead, y.shape[-1])
    return y.numpy() if was_np else y


def si_sdr(est, ref, cap: float = SI_SDR_CAP) -> float:
    """Scale-invariant SDR in dB, capped at ``cap``."""
    est = np.asarray(est, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if est.shape != ref.shape:
        raise ValueError(f"length mismatch {est.shape} vs {ref.shape}")
    ref_energy = np.dot(ref, ref)
    if ref_energy == 0:
        raise ValueError("SI-SDR undefined for an all-zero reference")
    alpha = np.dot(est, ref) / ref_energy
    target = alpha * ref
    residual = est - target
    num = np.dot(target, target)
    den = np.dot(residual, residual)
    if den <= num * 10 ** (-cap / 10):
        return cap
    if num == 0:
        return -cap
    return float(min(cap, 10 * np.log10(num / den)))


def check_waveform(x, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    x = np.asarray(x)
    if sample_rate != SAMPLE_RATE:
        raise AudioError(f"expected {SAMPLE_RATE} Hz audio, got {sample_rate} Hz")
    if x.ndim != 1:
        raise AudioError(f"expected mono audio, got shape {x.shape}")
    if x.size == 0:
        raise AudioError("empty signal")
    if not np.all(np.isfinite(x)):
        raise AudioError("non-finite samples")
    return x


def read_wav(path: str | Path) -> np.ndarray:
    """Load a 16 kHz mono WAV as float64 in [-1, 1)."""
    rate, data = wavfile.read(str(path))
    if data.dtype == np.int16:
        data = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        data = data.astype(np.float64) / 2147483648.0
    elif np.issubdtype(data.dtype, np.floating):
        data = data.astype(np.float64)
    else:
        raise AudioError(f"unsupported WAV sample type {data.dtype}")
    return check_waveform(data, rate)


def write_wav(path: str | Path, x, pcm16: bool = False) -> None:
    x = check_waveform(x)
    if pcm16:
        data = np.clip(np.round(x * 32768.0), -32768, 32767).astype(np.int16)
    else:
        data = x.astype(np.float32)
    wavfile.write(str(path), SAMPLE_RATE, data)
