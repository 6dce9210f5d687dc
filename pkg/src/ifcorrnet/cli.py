"""Command-line entry point.

    ifcorrnet synth-data --out DIR
    ifcorrnet train      --out DIR [--config PATH] [--set key=value ...] [--seed N]
    ifcorrnet infer      CKPT IN.wav OUT.wav
    ifcorrnet evaluate   SOURCE --manifest M --out DIR   (SOURCE: checkpoint, WAV dir, or "none")
    ifcorrnet ablate     --out DIR
    ifcorrnet tap-sweep  --out DIR [--taps 0,1,3,5]

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import torch

from . import dsp
from .config import ConfigError, RunConfig, echo_config, load_config
from .data import make_dataset, read_manifest
from .metrics import MetricReport, evaluate_pair, write_report
from .model import VARIANT_PAIRS, ModelConfig
from .training import NumericalError, infer, load_model, train

log = logging.getLogger("ifcorrnet")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4

ABLATION_METRICS = ("cd", "srmr", "llr", "fwsnr", "si_sdr")


def cmd_synth_data(cfg: RunConfig, out: Path) -> tuple[Path, Path]:
    """Write ``out/train`` and ``out/valid`` datasets from disjoint index ranges."""
    n_train, n_valid = cfg.dataset.n_train, cfg.dataset.n_valid
    make_dataset(n_train, cfg.seed, cfg.data, out / "train")
    make_dataset(n_valid, cfg.seed, cfg.data, out / "valid", start_index=n_train)
    return out / "train" / "manifest.jsonl", out / "valid" / "manifest.jsonl"


def ensure_data(cfg: RunConfig, out: Path) -> tuple[Path, Path]:
    ds = cfg.dataset
    if ds.train_manifest and ds.valid_manifest:
        return Path(ds.train_manifest), Path(ds.valid_manifest)
    if ds.train_manifest or ds.valid_manifest:
        raise ConfigError("set both dataset.train_manifest and dataset.valid_manifest, or neither")
    return cmd_synth_data(cfg, out / "data")


def cmd_train(cfg: RunConfig, out: Path, model_cfg: ModelConfig | None = None):
    train_manifest, valid_manifest = ensure_data(cfg, out)
    if not read_manifest(train_manifest):
        raise FileNotFoundError(f"training manifest {train_manifest} is empty")
    return train(
        model_cfg or cfg.model,
        cfg.train,
        train_manifest,
        out / "checkpoints",
        loss_cfg=cfg.loss,
        valid_manifest=valid_manifest if read_manifest(valid_manifest) else None,
    )


def _score(job) -> MetricReport:
    uid, est, ref, do_align = job
    return evaluate_pair(uid, est, ref, do_align)


def evaluate_rows(rows: list[dict], cfg: RunConfig, model=None, enhanced_dir: Path | None = None,
                  write_dir: Path | None = None) -> list[MetricReport]:
    """Score each manifest row's estimate against its target, in manifest order.

    The estimate is the model output, a WAV ``<id>.wav`` from ``enhanced_dir``,
    or the unprocessed mixture when neither is given.
    """
    if cfg.evaluate.max_utts is not None:
        rows = rows[: cfg.evaluate.max_utts]
    jobs = []
    for row in rows:
        ref = dsp.read_wav(row["target_path"])
        if model is not None:
            est = model.enhance(dsp.read_wav(row["mixture_path"])).double().numpy()
        elif enhanced_dir is not None:
            est = dsp.read_wav(enhanced_dir / f"{row['id']}.wav")
        else:
            est = dsp.read_wav(row["mixture_path"])
        if write_dir is not None:
            write_dir.mkdir(parents=True, exist_ok=True)
            dsp.write_wav(write_dir / f"{row['id']}.wav", est)
        jobs.append((row["id"], est, ref, cfg.evaluate.align))
    if cfg.evaluate.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(cfg.evaluate.workers) as pool:
            return list(pool.map(_score, jobs))
    return [_score(j) for j in jobs]


def cmd_evaluate(cfg: RunConfig, source: str, manifest: Path, out: Path) -> dict:
    rows = read_manifest(manifest)
    out.mkdir(parents=True, exist_ok=True)
    src = Path(source)
    if source.lower() in ("none", "unprocessed"):
        reports = evaluate_rows(rows, cfg)
    elif src.is_dir():
        reports = evaluate_rows(rows, cfg, enhanced_dir=src)
    elif src.is_file():
        reports = evaluate_rows(rows, cfg, model=load_model(src), write_dir=out / "enhanced")
    else:
        raise FileNotFoundError(f"evaluation source {source} not found")
    return write_report(reports, out / "metrics.csv", out / "metrics.json")


def _train_and_score(cfg: RunConfig, model_cfg: ModelConfig, out: Path) -> dict:
    result = cmd_train(cfg, out, model_cfg)
    train_manifest, valid_manifest = ensure_data(cfg, out)
    rows = read_manifest(valid_manifest) or read_manifest(train_manifest)
    model = load_model(result.out_dir / "best.pt")
    reports = evaluate_rows(rows, cfg, model=model)
    return write_report(reports, out / "metrics.csv", out / "metrics.json")


def _write_table(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)


def cmd_ablate(cfg: RunConfig, out: Path) -> list[dict]:
    """Train and score the four input/output variants under identical data and seed."""
    data_cfg = replace(cfg, dataset=replace(cfg.dataset))
    data_cfg.dataset.train_manifest, data_cfg.dataset.valid_manifest = map(str, ensure_data(cfg, out))
    table = []
    for input_variant, output_variant in VARIANT_PAIRS:
        mcfg = replace(cfg.model, input_variant=input_variant, output_variant=output_variant)
        name = f"{input_variant}+{output_variant}".replace("-", "_")
        agg = _train_and_score(data_cfg, mcfg, out / name)
        row = {"input": input_variant, "output": output_variant,
               "in_channels": mcfg.in_channels, "out_channels": mcfg.out_channels}
        row.update({k: agg[k] for k in ABLATION_METRICS})
        table.append(row)
    _write_table(out / "ablation.csv", table)
    (out / "ablation.json").write_text(json.dumps(table, indent=2) + "\n")
    return table


def cmd_tap_sweep(cfg: RunConfig, out: Path, taps: list[int] | None = None) -> list[dict]:
    taps = list(taps if taps is not None else cfg.sweep.taps)
    data_cfg = replace(cfg, dataset=replace(cfg.dataset))
    data_cfg.dataset.train_manifest, data_cfg.dataset.valid_manifest = map(str, ensure_data(cfg, out))
    table = []
    for L in taps:
        mcfg = replace(cfg.model, L=L)
        agg = _train_and_score(data_cfg, mcfg, out / f"L{L}")
        row = {"L": L, "taps": 2 * L + 1, "in_channels": mcfg.in_channels, "out_channels": mcfg.out_channels}
        row.update({k: agg[k] for k in ("cd", "llr", "fwsnr", "srmr", "si_sdr")})
        table.append(row)
    _write_table(out / "tap_sweep.csv", table)
    return table


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ifcorrnet", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--config", type=Path, help="YAML run config")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", type=Path, required=needs_out)
        p.add_argument("-v", "--verbose", action="store_true")

    common(sub.add_parser("synth-data", help="generate a synthetic train/valid dataset"))
    common(sub.add_parser("train", help="train a model"))
    p = sub.add_parser("infer", help="enhance one WAV file")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("wav_in", type=Path)
    p.add_argument("wav_out", type=Path)
    p.add_argument("-v", "--verbose", action="store_true")
    p = sub.add_parser("evaluate", help="score estimates against manifest targets")
    p.add_argument("source", help='checkpoint, directory of <id>.wav files, or "none"')
    p.add_argument("--manifest", type=Path, required=True)
    common(p)
    common(sub.add_parser("ablate", help="train/evaluate the four input/output variants"))
    p = sub.add_parser("tap-sweep", help="train/evaluate across filter lengths L")
    p.add_argument("--taps", help="comma-separated L values, e.g. 0,1,3,5")
    common(p)
    return parser


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "infer":
            infer(args.checkpoint, args.wav_in, args.wav_out)
            return EXIT_OK
        cfg = load_config(args.config, args.overrides, args.seed)
        out = args.out
        echo_config(cfg, out)
        torch.manual_seed(cfg.seed)
        if args.command == "synth-data":
            cmd_synth_data(cfg, out)
        elif args.command == "train":
            result = cmd_train(cfg, out)
            print(f"trained {result.step} steps; best valid loss {result.best_valid:.5f}")
        elif args.command == "evaluate":
            agg = cmd_evaluate(cfg, args.source, args.manifest, out)
            print(json.dumps(agg, sort_keys=True))
        elif args.command == "ablate":
            for row in cmd_ablate(cfg, out):
                print(row)
        elif args.command == "tap-sweep":
            taps = [int(t) for t in args.taps.split(",")] if args.taps else None
            for row in cmd_tap_sweep(cfg, out, taps):
                print(row)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, dsp.AudioError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
