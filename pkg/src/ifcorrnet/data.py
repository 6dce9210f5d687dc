"""Synthetic reverberant-noisy mixtures with direct-path targets.

Stands in for a licensed corpus: "speech-like" sources are noise shaped by
slowly varying AR(8) spectral envelopes with 2-8 Hz amplitude modulation, and
room responses come from an exponentially decaying noise model or a
rectangular-room image model.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal as sps

from . import dsp

FS = dsp.SAMPLE_RATE
DIRECT_WINDOW_MS = 2.5
DEFAULT_TAIL_GAIN = 0.04
NOISE_KINDS = ("white", "pink", "hum+white")


@dataclass
class RirSpec:
    t60: float = 0.5
    direct_delay: int = 0
    method: str = "exp-decay-noise"
    seed: int = 0
    length: int | None = None  # default: 1.2 * t60 seconds after the direct path
    drr_db: float | None = None  # overrides ``gain`` when set
    gain: float = DEFAULT_TAIL_GAIN
    room_dims: tuple[float, float, float] = (6.0, 5.0, 3.0)
    source_pos: tuple[float, float, float] = (1.7, 3.3, 1.63)
    mic_pos: tuple[float, float, float] = (4.1, 2.2, 1.21)

    def __post_init__(self):
        if not 0.05 <= self.t60 <= 2.0:
            raise ValueError(f"t60={self.t60} s outside [0.05, 2.0]")
        if self.method not in ("exp-decay-noise", "image-method"):
            raise ValueError(f"unknown RIR method {self.method!r}")
        if self.direct_delay < 0:
            raise ValueError("direct_delay must be >= 0")

    @property
    def n_samples(self) -> int:
        if self.length is not None:
            return int(self.length)
        return self.direct_delay + int(math.ceil(1.2 * self.t60 * FS))


def _decay_rate(t60: float) -> float:
    # amplitude envelope exp(-rate * n) loses 60 dB of energy after t60 seconds
    return 3.0 * math.log(10.0) / (t60 * FS)


def make_rir(spec: RirSpec) -> np.ndarray:
    if spec.method == "image-method":
        return image_method_rir(spec)
    n = spec.n_samples
    d = spec.direct_delay
    h = np.zeros(n)
    if d >= n:
        raise ValueError("RIR length must exceed the direct-path delay")
    h[d] = 1.0
    rng = np.random.default_rng(spec.seed)
    k = np.arange(1, n - d)
    tail = rng.standard_normal(k.size) * np.exp(-_decay_rate(spec.t60) * k)
    if spec.drr_db is not None:
        g = math.sqrt(10 ** (-spec.drr_db / 10) / np.sum(tail**2))
    else:
        g = spec.gain
    h[d + 1 :] = g * tail
    return h


def image_method_rir(spec: RirSpec, max_order: int | None = None) -> np.ndarray:
    """Frequency-independent image-source model with Sabine wall reflectance."""
    c = 343.0
    room = np.asarray(spec.room_dims, dtype=float)
    src = np.asarray(spec.source_pos, dtype=float)
    mic = np.asarray(spec.mic_pos, dtype=float)
    if np.any(src <= 0) or np.any(src >= room) or np.any(mic <= 0) or np.any(mic >= room):
        raise ValueError("source and microphone must lie inside the room")
    volume = float(np.prod(room))
    surface = 2.0 * (room[0] * room[1] + room[0] * room[2] + room[1] * room[2])
    alpha = min(0.161 * volume / (surface * spec.t60), 1.0)
    refl = math.sqrt(1.0 - alpha)
    n = spec.n_samples
    if max_order is None:
        max_order = int(np.ceil(n / FS * c / (2 * room.min()))) + 1

    r = np.arange(-max_order, max_order + 1)
    h = np.zeros(n)
    direct = np.linalg.norm(src - mic)
    for px in (0, 1):
        for py in (0, 1):
            for pz in (0, 1):
                p = np.array([px, py, pz])
                # image positions for all (rx, ry, rz) lattice shifts
                ix = (1 - 2 * px) * src[0] + 2 * r * room[0] - mic[0]
                iy = (1 - 2 * py) * src[1] + 2 * r * room[1] - mic[1]
                iz = (1 - 2 * pz) * src[2] + 2 * r * room[2] - mic[2]
                dist = np.sqrt(ix[:, None, None] ** 2 + iy[None, :, None] ** 2 + iz[None, None, :] ** 2)
                order = (
                    np.abs(r - p[0])[:, None, None] + np.abs(r)[:, None, None]
                    + np.abs(r - p[1])[None, :, None] + np.abs(r)[None, :, None]
                    + np.abs(r - p[2])[None, None, :] + np.abs(r)[None, None, :]
                )
                delay = np.round(dist / c * FS).astype(int) + spec.direct_delay
                amp = refl**order * direct / dist
                keep = delay < n
                np.add.at(h, delay[keep], amp[keep])
    # shift so the direct path lands at direct_delay
    first = int(np.round(direct / c * FS))
    h = np.concatenate([h[first:], np.zeros(first)])
    return h


def direct_part(rir, window_ms: float = DIRECT_WINDOW_MS, fs: int = FS) -> np.ndarray:
    """Keep ``[peak, peak + window)`` of the RIR and zero everything else."""
    rir = np.asarray(rir, dtype=float)
    peak = int(np.argmax(np.abs(rir)))
    width = max(1, int(round(window_ms * fs / 1000)))
    out = np.zeros_like(rir)
    out[peak : peak + width] = rir[peak : peak + width]
    return out


def convolve(x, h) -> np.ndarray:
    """Linear convolution truncated to ``len(x)``."""
    return sps.fftconvolve(x, h)[: len(x)]


def make_noise(kind: str, n: int, rng: np.random.Generator) -> np.ndarray:
    if kind == "white":
        return rng.standard_normal(n)
    if kind == "pink":
        spec = np.fft.rfft(rng.standard_normal(n))
        f = np.arange(spec.size)
        f[0] = 1
        return np.fft.irfft(spec / np.sqrt(f), n)
    if kind == "hum+white":
        t = np.arange(n) / FS
        phase = rng.uniform(0, 2 * np.pi, 3)
        hum = sum(a * np.sin(2 * np.pi * f0 * t + ph) for a, f0, ph in zip((1.0, 0.5, 0.25), (120, 240, 360), phase))
        hum = hum / np.sqrt(np.mean(hum**2))
        return hum + 0.3 * rng.standard_normal(n)
    raise ValueError(f"unknown noise kind {kind!r}")


@dataclass
class MixtureSample:
    mixture: np.ndarray
    target: np.ndarray
    clean: np.ndarray
    rir: np.ndarray
    snr_db: float
    noise_kind: str
    reverberant: np.ndarray = field(repr=False, default=None)


def make_mixture(clean, rir, snr_db: float = 20.0, noise_kind: str = "hum+white", seed: int = 0) -> MixtureSample:
    """Reverberate ``clean``, add noise at ``snr_db`` against the reverberant speech.

    ``snr_db=inf`` adds no noise. The target is ``clean`` convolved with the
    direct-path part of the RIR.
    """
    clean = dsp.check_waveform(clean).astype(np.float64)
    if clean.size < FS:
        raise ValueError("clean signal must be at least 1 s long")
    if not np.any(clean):
        raise ValueError("clean signal is silent")
    reverberant = convolve(clean, rir)
    target = convolve(clean, direct_part(rir))
    if math.isinf(snr_db) and snr_db > 0:
        mixture = reverberant.copy()
    else:
        noise = make_noise(noise_kind, clean.size, np.random.default_rng(seed))
        p_speech = np.mean(reverberant**2)
        p_noise = np.mean(noise**2)
        noise *= math.sqrt(p_speech / (p_noise * 10 ** (snr_db / 10)))
        mixture = reverberant + noise
    return MixtureSample(mixture, target, clean, np.asarray(rir), snr_db, noise_kind, reverberant)


def speech_like(n: int, rng: np.random.Generator, segment_s: float = 0.08) -> np.ndarray:
    """Noise shaped by slowly varying AR(8) envelopes with syllabic modulation.

    Four drifting resonances give the voiced part; a high-passed noise share
    stands in for fricatives so the spectrum reaches up to 8 kHz.
    """
    seg = int(segment_s * FS)
    n_seg = int(math.ceil(n / seg)) + 1
    excitation = rng.standard_normal(n_seg * seg)
    out = np.zeros(n_seg * seg)
    fade = np.hanning(2 * seg)
    freqs = rng.uniform([250, 900, 2000, 3200], [700, 1600, 2800, 4200])
    radii = rng.uniform(0.82, 0.92, 4)
    for i in range(n_seg):
        freqs = np.clip(freqs * np.exp(rng.normal(0, 0.05, 4)), 100, 7000)
        poles = radii * np.exp(1j * 2 * np.pi * freqs / FS)
        a = np.real(np.poly(np.concatenate([poles, poles.conj()])))
        start = max(0, i * seg - seg // 2)
        chunk = excitation[start : start + 2 * seg]
        y = sps.lfilter([1.0], a, chunk)
        out[start : start + y.size] += y * fade[: y.size]
    out = out[:n] / (np.std(out[:n]) + 1e-12)
    fric = sps.lfilter(*sps.butter(2, 3000, "highpass", fs=FS), rng.standard_normal(n))
    out = out + 0.3 * fric / (np.std(fric) + 1e-12)
    t = np.arange(n) / FS
    f_am = rng.uniform(2.0, 8.0)
    am = 0.1 + 0.9 * (0.5 * (1 + np.sin(2 * np.pi * f_am * t + rng.uniform(0, 2 * np.pi)))) ** 2
    # word-level gating gives pauses between bursts
    gate_rate = rng.uniform(0.8, 1.6)
    gate = 0.55 + 0.45 * np.sign(np.sin(2 * np.pi * gate_rate * t + rng.uniform(0, 2 * np.pi)))
    gate = sps.lfilter([0.02], [1, -0.98], gate)
    x = out * am * gate
    x /= np.max(np.abs(x)) + 1e-12
    return 0.5 * x


def sample_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


@dataclass
class DataConfig:
    duration_s: float = 4.0
    t60_range: tuple[float, float] = (0.2, 0.8)
    t60_grid: list[float] | None = None  # stratified mode: cycle through these
    snr_db: float = 20.0
    noise_kind: str = "hum+white"
    rir_method: str = "exp-decay-noise"
    clean_dir: str | None = None  # optional user WAVs instead of synthetic sources
    pcm16: bool = False


def _clean_source(cfg: DataConfig, index: int, rng: np.random.Generator) -> np.ndarray:
    n = int(cfg.duration_s * FS)
    if cfg.clean_dir:
        files = sorted(Path(cfg.clean_dir).glob("*.wav"))
        if not files:
            raise FileNotFoundError(f"no WAV files in {cfg.clean_dir}")
        return dsp.read_wav(files[index % len(files)])
    return speech_like(n, rng)


def make_sample(index: int, seed: int, cfg: DataConfig) -> tuple[MixtureSample, float, int]:
    rng = sample_rng(seed, index)
    clean = _clean_source(cfg, index, rng)
    if cfg.t60_grid:
        t60 = float(cfg.t60_grid[index % len(cfg.t60_grid)])
    else:
        t60 = float(rng.uniform(*cfg.t60_range))
    sub_seed = int(rng.integers(2**31))
    rir = make_rir(RirSpec(t60=t60, method=cfg.rir_method, seed=sub_seed))
    sample = make_mixture(clean, rir, cfg.snr_db, cfg.noise_kind, seed=sub_seed + 1)
    return sample, t60, sub_seed


def make_dataset(
    n_utts: int,
    seed: int,
    cfg: DataConfig | None = None,
    out_dir: str | Path | None = None,
    start_index: int = 0,
) -> list[dict]:
    """Generate ``n_utts`` mixtures; write WAV triplets and ``manifest.jsonl``.

    Each utterance is seeded independently from ``(seed, index)``, so the
    dataset is a pure function of the seed and config. Disjoint splits come
    from disjoint index ranges (``start_index``).
    """
    cfg = cfg or DataConfig()
    rows = []
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        (out / "wav").mkdir(parents=True, exist_ok=True)
    for i in range(start_index, start_index + n_utts):
        sample, t60, sub_seed = make_sample(i, seed, cfg)
        uid = f"utt{i:05d}"
        row = {"id": uid, "t60": round(t60, 6), "snr_db": cfg.snr_db, "seed": sub_seed}
        if out is not None:
            for key, wav in (("mixture", sample.mixture), ("target", sample.target), ("clean", sample.clean)):
                path = out / "wav" / f"{uid}_{key}.wav"
                dsp.write_wav(path, wav, pcm16=cfg.pcm16)
                row[f"{key}_path"] = str(path.relative_to(out))
        rows.append(row)
    if out is not None:
        write_manifest(out / "manifest.jsonl", rows)
    return rows


def write_manifest(path: str | Path, rows: list[dict]) -> None:
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def read_manifest(path: str | Path) -> list[dict]:
    """Rows with WAV paths resolved relative to the manifest directory."""
    path = Path(path)
    rows = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            for key in ("mixture_path", "target_path", "clean_path"):
                if key in row and not Path(row[key]).is_absolute():
                    row[key] = str(path.parent / row[key])
            rows.append(row)
    return rows


def manifest_hash(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def data_config_dict(cfg: DataConfig) -> dict:
    return asdict(cfg)
