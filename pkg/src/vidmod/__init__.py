"""vidmod: desk-scale streaming multimodal video moderation pipeline."""

__version__ = "0.1.0"

from .labels import HARMFUL_LABELS, NUM_CLASSES, LabelClass

__all__ = ["LabelClass", "NUM_CLASSES", "HARMFUL_LABELS", "__version__"]
