"""Fit a tiny model to one synthetic mixture and report loss and SI-SDR.

    python scripts/overfit_demo.py --steps 500 --out runs/overfit
"""

import argparse

import torch

from ifcorrnet import dsp
from ifcorrnet.data import FS, RirSpec, make_mixture, make_rir, sample_rng, speech_like
from ifcorrnet.model import ModelConfig
from ifcorrnet.training import TrainConfig, Utterance, train


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--steps", type=int, default=500)
    ap.add_argument("--seconds", type=float, default=1.0)
    ap.add_argument("--t60", type=float, default=0.4)
    ap.add_argument("--snr", type=float, default=20.0)
    ap.add_argument("--lr", type=float, default=1e-2)
    ap.add_argument("--schedule", default="warmup-decay", choices=["constant", "warmup-decay"])
    ap.add_argument("--warmup", type=int, default=25)
    ap.add_argument("--out", default="runs/overfit")
    args = ap.parse_args()

    clean = speech_like(int(args.seconds * FS), sample_rng(7, 0))
    m = make_mixture(clean, make_rir(RirSpec(t60=args.t60, seed=3)), args.snr, "hum+white", seed=4)
    res = train(
        ModelConfig(C=16, B=2, C_H=32, K=3, n_heads=4),
        TrainConfig(lr=args.lr, schedule=args.schedule, warmup_steps=args.warmup, max_epochs=10**6,
                    max_steps=args.steps, segment_seconds=args.seconds, batch_size=1, eval_every=10**6),
        [Utterance("overfit", m.mixture, m.target)],
        args.out,
    )
    y = res.model.enhance(torch.tensor(m.mixture, dtype=torch.float32)).double().numpy()
    print(f"loss {res.losses[0]:.4f} -> {res.losses[-1]:.4f} (ratio {res.losses[-1] / res.losses[0]:.3f})")
    print(f"SI-SDR mixture {dsp.si_sdr(m.mixture, m.target):.2f} dB, output {dsp.si_sdr(y, m.target):.2f} dB")


if __name__ == "__main__":
    main()
