"""Print trainable parameter counts for the published model sizes.

    python scripts/param_count.py
"""

import torch

from ifcorrnet.model import IFCorrNet, ModelConfig, count_parameters, parameter_formula


def main():
    rows = [
        ("full", ModelConfig()),
        ("small", ModelConfig.small()),
        ("full, pre-gate width", ModelConfig(swiglu_width="pre-gate")),
        ("small, pre-gate width", ModelConfig.small(swiglu_width="pre-gate")),
    ]
    for name, cfg in rows:
        with torch.device("meta"):
            n = count_parameters(IFCorrNet(cfg))
        parts = parameter_formula(cfg)
        breakdown = ", ".join(f"{k} {v:,}" for k, v in parts.items() if k != "total")
        print(f"{name:24s} {n / 1e6:7.3f} M   ({breakdown})")


if __name__ == "__main__":
    main()
