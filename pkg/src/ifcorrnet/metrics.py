"""Approximations of the REVERB evaluation metrics: CD, LLR, fwSegSNR, SRMR.

Absolute values are not expected to match the official MATLAB tools; the
constants here are frozen so reports stay comparable between runs.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import signal as sps
from scipy.linalg import solve_toeplitz, toeplitz

from .dsp import SAMPLE_RATE, si_sdr

FRAME = 400  # 25 ms
SHIFT = 160  # 10 ms
LPC_ORDER = 12
CEP_ORDER = 16
CD_CLAMP = (0.0, 10.0)
LLR_KEEP = 0.95
FWSNR_BANDS = 23
FWSNR_CLAMP = (-10.0, 35.0)
FWSNR_GAMMA = 0.2
ACTIVE_DB = -40.0  # frames this far below the loudest reference frame are skipped

SRMR_CHANNELS = 23
SRMR_FMIN = 125.0
SRMR_FMAX = 8000.0
SRMR_MOD_BANDS = 8
SRMR_MOD_RANGE = (4.0, 128.0)
SRMR_MOD_Q = 2.0
SRMR_ENV_RATE = 400

REPORT_COLUMNS = ("id", "cd", "llr", "fwsnr", "srmr", "si_sdr")


def frames(x: np.ndarray, size: int = FRAME, shift: int = SHIFT) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.size < size:
        x = np.pad(x, (0, size - x.size))
    return np.lib.stride_tricks.sliding_window_view(x, size)[::shift]


def _pair(est, ref) -> tuple[np.ndarray, np.ndarray]:
    est = np.asarray(est, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if est.shape != ref.shape:
        n = min(est.size, ref.size)
        est, ref = est[:n], ref[:n]
    return est, ref


def align(est, ref, max_shift: int = SHIFT) -> tuple[np.ndarray, np.ndarray]:
    """Undo a global delay of up to ``max_shift`` samples; trim to the overlap."""
    est, ref = _pair(est, ref)
    corr = sps.correlate(est, ref, mode="full", method="fft")
    zero = ref.size - 1
    window = corr[zero - max_shift : zero + max_shift + 1]
    lag = int(np.argmax(window)) - max_shift
    if lag > 0:
        return est[lag:], ref[: ref.size - lag]
    if lag < 0:
        return est[: est.size + lag], ref[-lag:]
    return est, ref


def active_frames(ref_frames: np.ndarray, floor_db: float = ACTIVE_DB) -> np.ndarray:
    energy = np.sum(ref_frames**2, axis=1)
    if energy.max() <= 0:
        return np.zeros(energy.shape, dtype=bool)
    return energy >= energy.max() * 10 ** (floor_db / 10)


def autocorr(frame: np.ndarray, order: int) -> np.ndarray:
    full = np.correlate(frame, frame, mode="full")[frame.size - 1 :]
    return full[: order + 1]


def lpc(frame: np.ndarray, order: int = LPC_ORDER) -> tuple[np.ndarray, np.ndarray]:
    """Return the error filter ``a`` (``a[0] == 1``) and autocorrelation of a frame."""
    r = autocorr(frame * np.hamming(frame.size), order)
    r = r.copy()
    r[0] = r[0] * (1 + 1e-9) + 1e-20  # keeps silent frames well-posed
    alpha = solve_toeplitz(r[:order], r[1 : order + 1])
    return np.concatenate([[1.0], -alpha]), r


def lpc_cepstrum(a: np.ndarray, n_ceps: int = CEP_ORDER) -> np.ndarray:
    """Cepstrum ``c_1..c_n`` of the all-pole model ``1 / A(z)``."""
    p = a.size - 1
    c = np.zeros(n_ceps + 1)
    for n in range(1, n_ceps + 1):
        acc = -a[n] if n <= p else 0.0
        for k in range(max(1, n - p), n):
            acc -= (k / n) * c[k] * a[n - k]
        c[n] = acc
    return c[1:]


def cepstral_distance(est, ref) -> float:
    est, ref = _pair(est, ref)
    fe, fr = frames(est), frames(ref)
    keep = active_frames(fr)
    if not keep.any():
        return 0.0
    scale = 10.0 / math.log(10.0)
    dists = []
    for e, r in zip(fe[keep], fr[keep]):
        ce = lpc_cepstrum(lpc(e)[0])
        cr = lpc_cepstrum(lpc(r)[0])
        d = scale * math.sqrt(2.0 * np.sum((ce - cr) ** 2))
        dists.append(min(max(d, CD_CLAMP[0]), CD_CLAMP[1]))
    return float(np.mean(dists))


def llr(est, ref) -> float:
    est, ref = _pair(est, ref)
    fe, fr = frames(est), frames(ref)
    keep = active_frames(fr)
    if not keep.any():
        return 0.0
    vals = []
    for e, r in zip(fe[keep], fr[keep]):
        a_e, _ = lpc(e)
        a_r, r_r = lpc(r)
        R = toeplitz(r_r)
        vals.append(math.log((a_e @ R @ a_e) / (a_r @ R @ a_r)))
    vals = np.sort(np.maximum(vals, 0.0))
    n_keep = max(1, int(math.ceil(LLR_KEEP * vals.size)))
    return float(np.mean(vals[:n_keep]))


def mel_filterbank(n_bands: int, n_fft: int, fs: int = SAMPLE_RATE) -> np.ndarray:
    def hz2mel(f):
        return 2595.0 * np.log10(1.0 + f / 700.0)

    def mel2hz(m):
        return 700.0 * (10 ** (m / 2595.0) - 1.0)

    edges = mel2hz(np.linspace(hz2mel(0.0), hz2mel(fs / 2), n_bands + 2))
    freqs = np.fft.rfftfreq(n_fft, 1.0 / fs)
    fb = np.zeros((n_bands, freqs.size))
    for b in range(n_bands):
        lo, mid, hi = edges[b : b + 3]
        up = (freqs - lo) / (mid - lo)
        down = (hi - freqs) / (hi - mid)
        fb[b] = np.clip(np.minimum(up, down), 0.0, None)
    return fb


def fw_seg_snr(est, ref) -> float:
    """Frequency-weighted segmental SNR over a 23-band mel filterbank, in dB."""
    est, ref = _pair(est, ref)
    n_fft = 512
    win = np.hanning(FRAME)
    fb = mel_filterbank(FWSNR_BANDS, n_fft)
    spec_r = np.abs(np.fft.rfft(frames(ref) * win, n_fft))
    spec_e = np.abs(np.fft.rfft(frames(est) * win, n_fft))
    band_r = spec_r @ fb.T
    band_e = spec_e @ fb.T
    tiny = np.finfo(np.float64).tiny
    snr = 10 * (np.log10(band_r**2 + tiny) - np.log10((band_r - band_e) ** 2 + tiny))
    snr = np.clip(snr, *FWSNR_CLAMP)
    weight = ((spec_r**2) @ fb.T) ** FWSNR_GAMMA
    total = weight.sum(axis=1)
    valid = total > 0
    if not valid.any():
        return FWSNR_CLAMP[1] if np.array_equal(est, ref) else FWSNR_CLAMP[0]
    per_frame = (weight[valid] * snr[valid]).sum(axis=1) / total[valid]
    return float(np.mean(per_frame))


def erb_space(fmin: float, fmax: float, n: int) -> np.ndarray:
    """Centre frequencies equally spaced on the ERB-rate scale."""
    def erb_rate(f):
        return 21.4 * np.log10(1.0 + 0.00437 * f)

    def inv(e):
        return (10 ** (e / 21.4) - 1.0) / 0.00437

    return inv(np.linspace(erb_rate(fmin), erb_rate(fmax), n))


def modulation_bands() -> list[tuple[float, float]]:
    centers = np.geomspace(*SRMR_MOD_RANGE, SRMR_MOD_BANDS)
    half = 1.0 / (2.0 * SRMR_MOD_Q)
    k = math.sqrt(1.0 + half**2)
    return [(c * (k - half), c * (k + half)) for c in centers]


def srmr(x, fs: int = SAMPLE_RATE) -> float:
    """Ratio of low (4-~20 Hz) to high (~30-128 Hz) modulation-band energy.

    23 gammatone channels, Hilbert envelopes resampled to 400 Hz, eight
    log-spaced Q=2 modulation filters; bands 1-4 over bands 5-8 summed over
    channels.
    """
    x = np.asarray(x, dtype=np.float64)
    if not np.any(x):
        raise ValueError("SRMR undefined for a silent signal")
    fmax = min(SRMR_FMAX, 0.49 * fs)
    decim = fs // SRMR_ENV_RATE
    mod_filters = [
        sps.butter(1, band, btype="bandpass", fs=SRMR_ENV_RATE, output="sos")
        for band in modulation_bands()
    ]
    energy = np.zeros(SRMR_MOD_BANDS)
    for cf in erb_space(SRMR_FMIN, fmax, SRMR_CHANNELS):
        b, a = sps.gammatone(cf, "iir", fs=fs)
        env = np.abs(sps.hilbert(sps.lfilter(b, a, x)))
        env = sps.resample_poly(env, 1, decim)
        for j, sos in enumerate(mod_filters):
            energy[j] += np.mean(sps.sosfilt(sos, env) ** 2)
    half = SRMR_MOD_BANDS // 2
    return float(energy[:half].sum() / max(energy[half:].sum(), 1e-300))


@dataclass
class MetricReport:
    id: str
    cd: float
    llr: float
    fwsnr: float
    srmr: float
    si_sdr: float


def evaluate_pair(uid: str, est, ref, do_align: bool = False) -> MetricReport:
    est, ref = _pair(est, ref)
    if do_align:
        est, ref = align(est, ref)
    try:
        sdr = si_sdr(est, ref)
    except ValueError:
        sdr = float("nan")
    return MetricReport(
        id=uid,
        cd=cepstral_distance(est, ref),
        llr=llr(est, ref),
        fwsnr=fw_seg_snr(est, ref),
        srmr=srmr(est) if np.any(est) else float("nan"),
        si_sdr=sdr,
    )


def aggregate(reports: list[MetricReport]) -> dict[str, float]:
    out = {"n": len(reports)}
    for col in REPORT_COLUMNS[1:]:
        vals = np.array([getattr(r, col) for r in reports], dtype=float)
        finite = vals[~np.isnan(vals)]
        out[col] = float(finite.mean()) if finite.size else float("nan")
    return out


def write_report(reports: list[MetricReport], csv_path: str | Path, json_path: str | Path | None = None) -> dict:
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        writer.writeheader()
        for r in reports:
            writer.writerow(asdict(r))
    agg = aggregate(reports)
    if json_path is not None:
        Path(json_path).write_text(json.dumps(agg, indent=2, sort_keys=True) + "\n")
    return agg
