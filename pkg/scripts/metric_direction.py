"""Check that every metric degrades with reverberation time.

    python scripts/metric_direction.py --sources 20
"""

import argparse

import numpy as np
from scipy.stats import spearmanr

from ifcorrnet.data import FS, RirSpec, make_mixture, make_rir, sample_rng, speech_like
from ifcorrnet.metrics import cepstral_distance, fw_seg_snr, llr, srmr

GRID = (0.2, 0.4, 0.6, 0.8)


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--sources", type=int, default=20)
    ap.add_argument("--seconds", type=float, default=4.0)
    args = ap.parse_args()

    table = {k: np.zeros((args.sources, len(GRID))) for k in ("cd", "llr", "fwsnr", "srmr")}
    for s in range(args.sources):
        clean = speech_like(int(args.seconds * FS), sample_rng(123, s))
        for j, t60 in enumerate(GRID):
            m = make_mixture(clean, make_rir(RirSpec(t60=t60, seed=1000 + s)), 20.0, "hum+white", seed=s)
            table["cd"][s, j] = cepstral_distance(m.mixture, m.target)
            table["llr"][s, j] = llr(m.mixture, m.target)
            table["fwsnr"][s, j] = fw_seg_snr(m.mixture, m.target)
            table["srmr"][s, j] = srmr(m.mixture)
    print("metric  " + "  ".join(f"t60={t:.1f}" for t in GRID) + "   mean rho")
    for k, v in table.items():
        rho = np.mean([spearmanr(GRID, row)[0] for row in v])
        print(f"{k:6s}  " + "  ".join(f"{x:8.3f}" for x in v.mean(axis=0)) + f"   {rho:+.2f}")


if __name__ == "__main__":
    main()
