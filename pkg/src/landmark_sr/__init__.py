"""Prior-guided 8x face super-resolution toolkit.

Reconstructs 128x128 faces from 16x16 inputs with a lightweight U-Net whose
reconstruction loss is spatially reweighted by importance heatmaps built from
external object-detector bounding boxes.
"""

__version__ = "0.1.0"

from .errors import ConfigError, DataError, InputError

__all__ = ["ConfigError", "DataError", "InputError", "__version__"]
