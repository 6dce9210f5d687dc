"""AdamW training loop with step-exact checkpoint/resume, plus inference."""

from __future__ import annotations

import json
import logging
import math
import os
import shutil
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import dsp
from .data import read_manifest
from .features import FLATTEN_ORDER
from .losses import LossConfig, loss_terms
from .model import IFCorrNet, ModelConfig

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "ifcorrnet-checkpoint/1"


class NumericalError(RuntimeError):
    """Non-finite loss during training."""


@dataclass
class TrainConfig:
    lr: float = 1e-3
    weight_decay: float = 1e-2
    betas: tuple[float, float] = (0.9, 0.98)
    max_epochs: int = 40
    max_steps: int | None = None
    segment_seconds: float = 4.0
    batch_size: int = 2
    grad_clip: float | None = 5.0
    seed: int = 0
    schedule: str = "constant"  # or "warmup-decay"
    warmup_steps: int = 500
    valid_fraction: float = 0.1
    eval_every: int = 1  # epochs between validation + checkpoint
    dtype: str = "float32"
    single_threaded: bool = True

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.schedule not in ("constant", "warmup-decay"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"unsupported dtype {self.dtype!r}")

    def check_segment(self, loss_cfg: LossConfig) -> None:
        if self.segment_seconds * dsp.SAMPLE_RATE < max(loss_cfg.fft_sizes):
            raise ValueError("segment shorter than the largest loss FFT size")

    @property
    def torch_dtype(self) -> torch.dtype:
        return torch.float64 if self.dtype == "float64" else torch.float32


@dataclass
class Utterance:
    id: str
    mixture: np.ndarray
    target: np.ndarray


def load_utterances(manifest) -> list[Utterance]:
    rows = read_manifest(manifest) if isinstance(manifest, (str, Path)) else manifest
    return [
        Utterance(row["id"], dsp.read_wav(row["mixture_path"]), dsp.read_wav(row["target_path"]))
        for row in rows
    ]


def split_train_valid(utts: list[Utterance], fraction: float) -> tuple[list[Utterance], list[Utterance]]:
    """Hold out the last ``ceil(fraction * n)`` utterances (none if only one)."""
    n_valid = int(math.ceil(fraction * len(utts))) if len(utts) > 1 else 0
    n_valid = min(n_valid, len(utts) - 1)
    return utts[: len(utts) - n_valid], utts[len(utts) - n_valid :]


def _seeded(*keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in keys]))


def utt_key(uid: str) -> int:
    return zlib.crc32(uid.encode())


def crop(utt: Utterance, seg_len: int, seed: int, epoch: int) -> tuple[np.ndarray, np.ndarray]:
    """Uniform random crop seeded by (seed, epoch, utterance id); zero-pad short ones."""
    n = utt.mixture.size
    if n <= seg_len:
        pad = seg_len - n
        return np.pad(utt.mixture, (0, pad)), np.pad(utt.target, (0, pad))
    start = int(_seeded(seed, epoch, utt_key(utt.id)).integers(0, n - seg_len + 1))
    return utt.mixture[start : start + seg_len], utt.target[start : start + seg_len]


def epoch_batches(n_train: int, batch_size: int, seed: int, epoch: int) -> list[np.ndarray]:
    order = _seeded(seed, epoch, 0x5EED).permutation(n_train)
    return [order[i : i + batch_size] for i in range(0, n_train, batch_size)]


def model_step_loss(model: IFCorrNet, mixture: torch.Tensor, target: torch.Tensor, loss_cfg: LossConfig):
    X = dsp.stft(mixture)
    _, Y = model(X)
    est = dsp.istft(Y, length=mixture.shape[-1])
    return loss_terms(est, target, loss_cfg)


def make_scheduler(optimizer, cfg: TrainConfig, total_steps: int):
    if cfg.schedule == "constant":
        return torch.optim.lr_scheduler.LambdaLR(optimizer, lambda step: 1.0)
    warm = max(1, cfg.warmup_steps)
    total = max(total_steps, warm + 1)

    def factor(step):
        if step < warm:
            return (step + 1) / warm
        return max(0.0, 0.5 * (1 + math.cos(math.pi * (step - warm) / (total - warm))))

    return torch.optim.lr_scheduler.LambdaLR(optimizer, factor)


def save_checkpoint(path, model: IFCorrNet, optimizer=None, scheduler=None, state: dict | None = None) -> None:
    """Write a self-describing checkpoint.

    Keys: ``format``, ``model_config`` (dict), ``flatten_order``,
    ``state_dict`` (parameter name -> tensor), and optionally ``optimizer``,
    ``scheduler`` and ``train_state`` (step, epoch, position, best loss).
    """
    payload = {
        "format": CHECKPOINT_FORMAT,
        "model_config": model.cfg.to_dict(),
        "flatten_order": FLATTEN_ORDER,
        "state_dict": model.state_dict(),
    }
    if optimizer is not None:
        payload["optimizer"] = optimizer.state_dict()
    if scheduler is not None:
        payload["scheduler"] = scheduler.state_dict()
    if state is not None:
        payload["train_state"] = state
    tmp = Path(str(path) + ".tmp")
    torch.save(payload, tmp)
    os.replace(tmp, path)


def load_checkpoint(path) -> dict:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not an IF-CorrNet checkpoint")
    if payload.get("flatten_order") != FLATTEN_ORDER:
        raise ValueError(f"unsupported flatten order {payload.get('flatten_order')!r}")
    return payload


def load_model(path, dtype: torch.dtype = torch.float32) -> IFCorrNet:
    payload = load_checkpoint(path)
    cfg = payload["model_config"]
    model = IFCorrNet(ModelConfig(**cfg)).to(dtype)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model


def _point(link: Path, target: Path) -> None:
    """Make ``link`` refer to ``target`` (symlink, falling back to a copy)."""
    if link.is_symlink() or link.exists():
        link.unlink()
    try:
        link.symlink_to(target.name)
    except OSError:
        shutil.copyfile(target, link)


@dataclass
class TrainResult:
    out_dir: Path
    step: int
    epoch: int
    best_valid: float
    losses: list[float] = field(default_factory=list)
    model: IFCorrNet | None = None


def train(
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    manifest,
    out_dir,
    loss_cfg: LossConfig | None = None,
    valid_manifest=None,
    resume: str | Path | None = None,
) -> TrainResult:
    """Train on ``manifest`` (path, row list, or list of :class:`Utterance`).

    Checkpoints go to ``out_dir/step_NNNNNNN.pt`` with ``last.pt`` and
    ``best.pt`` links; per-step losses are appended to ``out_dir/train_log.jsonl``.
    Stops after ``max_epochs`` or ``max_steps``, whichever comes first.
    """
    loss_cfg = loss_cfg or LossConfig()
    train_cfg.check_segment(loss_cfg)
    if train_cfg.single_threaded:
        torch.set_num_threads(1)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dtype = train_cfg.torch_dtype

    if isinstance(manifest, list) and manifest and isinstance(manifest[0], Utterance):
        utts = manifest
    else:
        utts = load_utterances(manifest)
    if not utts:
        raise ValueError("training manifest is empty")
    if valid_manifest is not None:
        train_utts, valid_utts = utts, load_utterances(valid_manifest)
    else:
        train_utts, valid_utts = split_train_valid(utts, train_cfg.valid_fraction)

    seg_len = int(train_cfg.segment_seconds * dsp.SAMPLE_RATE)
    batches_per_epoch = math.ceil(len(train_utts) / train_cfg.batch_size)
    total_steps = train_cfg.max_epochs * batches_per_epoch
    if train_cfg.max_steps is not None:
        total_steps = min(total_steps, train_cfg.max_steps)

    torch.manual_seed(train_cfg.seed)
    model = IFCorrNet(model_cfg).to(dtype)
    optimizer = torch.optim.AdamW(
        model.parameters(), lr=train_cfg.lr, betas=tuple(train_cfg.betas), weight_decay=train_cfg.weight_decay
    )
    scheduler = make_scheduler(optimizer, train_cfg, total_steps)
    state = {"step": 0, "epoch": 0, "position": 0, "best_valid": math.inf, "best_path": None}
    if resume is not None:
        payload = load_checkpoint(resume)
        if payload["model_config"] != model_cfg.to_dict():
            raise ValueError("resume checkpoint was trained with a different model config")
        model.load_state_dict(payload["state_dict"])
        optimizer.load_state_dict(payload["optimizer"])
        scheduler.load_state_dict(payload["scheduler"])
        state.update(payload["train_state"])

    def checkpoint() -> Path:
        path = out / f"step_{state['step']:07d}.pt"
        save_checkpoint(path, model, optimizer, scheduler, dict(state))
        _point(out / "last.pt", path)
        return path

    if resume is None:
        path = checkpoint()
        _point(out / "best.pt", path)
        state["best_path"] = path.name

    losses = []
    log_path = out / "train_log.jsonl"
    with open(log_path, "a") as log_fh:
        while state["epoch"] < train_cfg.max_epochs and state["step"] < total_steps:
            epoch = state["epoch"]
            batches = epoch_batches(len(train_utts), train_cfg.batch_size, train_cfg.seed, epoch)
            model.train()
            while state["position"] < len(batches) and state["step"] < total_steps:
                idx = batches[state["position"]]
                pairs = [crop(train_utts[i], seg_len, train_cfg.seed, epoch) for i in idx]
                mix = torch.as_tensor(np.stack([p[0] for p in pairs]), dtype=dtype)
                tgt = torch.as_tensor(np.stack([p[1] for p in pairs]), dtype=dtype)
                terms = model_step_loss(model, mix, tgt, loss_cfg)
                loss = terms["loss_total"]
                if not torch.isfinite(loss):
                    ids = [train_utts[i].id for i in idx]
                    dump = {"step": state["step"], "epoch": epoch, "batch_ids": ids,
                            **{k: float(v.detach()) for k, v in terms.items()}}
                    (out / "nan_dump.json").write_text(json.dumps(dump, indent=2))
                    raise NumericalError(f"non-finite loss at step {state['step']} on batch {ids}")
                optimizer.zero_grad(set_to_none=True)
                loss.backward()
                if train_cfg.grad_clip:
                    torch.nn.utils.clip_grad_norm_(model.parameters(), train_cfg.grad_clip)
                lr = optimizer.param_groups[0]["lr"]
                optimizer.step()
                scheduler.step()
                state["step"] += 1
                state["position"] += 1
                losses.append(float(loss.detach()))
                row = {"step": state["step"], "lr": lr, **{k: float(v.detach()) for k, v in terms.items()}}
                log_fh.write(json.dumps(row) + "\n")
                log_fh.flush()
            if state["position"] >= len(batches):
                state["epoch"] += 1
                state["position"] = 0
                done = state["epoch"] >= train_cfg.max_epochs or state["step"] >= total_steps
                if state["epoch"] % max(1, train_cfg.eval_every) and not done:
                    continue
                valid = validate(model, valid_utts or train_utts, loss_cfg, dtype)
                log.info("epoch %d step %d valid loss %.5f", state["epoch"], state["step"], valid)
                if valid < state["best_valid"]:
                    state["best_valid"] = valid
                    path = checkpoint()
                    _point(out / "best.pt", path)
                    state["best_path"] = path.name
                    continue
            checkpoint()
    model.eval()
    return TrainResult(out, state["step"], state["epoch"], state["best_valid"], losses, model)


@torch.no_grad()
def validate(model: IFCorrNet, utts: list[Utterance], loss_cfg: LossConfig, dtype) -> float:
    model.eval()
    vals = []
    for u in utts:
        mix = torch.as_tensor(u.mixture, dtype=dtype)[None]
        tgt = torch.as_tensor(u.target, dtype=dtype)[None]
        vals.append(float(model_step_loss(model, mix, tgt, loss_cfg)["loss_total"]))
    model.train()
    return float(np.mean(vals))


def infer(checkpoint, wav_in, wav_out=None) -> np.ndarray:
    """Enhance a whole utterance (no segmentation); output matches input length."""
    model = load_model(checkpoint)
    x = dsp.read_wav(wav_in) if isinstance(wav_in, (str, Path)) else dsp.check_waveform(wav_in)
    y = model.enhance(x).double().numpy()
    if wav_out is not None:
        dsp.write_wav(wav_out, y)
    return y
