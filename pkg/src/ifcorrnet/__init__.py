"""IF-CorrNet: inter-frame correlation features to multi-frame deep filters for dereverberation."""

from .model import IFCorrNet, ModelConfig

__all__ = ["IFCorrNet", "ModelConfig"]
