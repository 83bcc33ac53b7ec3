"""hsalbedo - Albedo recovery from hyperspectral imagery and LiDAR intensity."""

__version__ = "0.1.0"
__author__ = "hsalbedo Team"
__license__ = "MIT"

from hsalbedo import models

__all__ = ["models"]
