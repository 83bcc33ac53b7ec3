"""sRGB transfer functions shared by the albedo types and the pipeline."""

import numpy as np


def encode_srgb(linear: np.ndarray) -> np.ndarray:
    """
    Apply the sRGB transfer curve to linear values in [0, 1].

    Args:
        linear: Linear-light values, any shape

    Returns:
        Encoded values in [0, 1], same shape
    """
    c = np.clip(np.asarray(linear, dtype=np.float64), 0.0, 1.0)
    return np.where(c <= 0.0031308, 12.92 * c, 1.055 * np.power(c, 1.0 / 2.4) - 0.055)


def decode_srgb(encoded: np.ndarray) -> np.ndarray:
    """Invert encode_srgb."""
    c = np.clip(np.asarray(encoded, dtype=np.float64), 0.0, 1.0)
    return np.where(c <= 0.04045, c / 12.92, np.power((c + 0.055) / 1.055, 2.4))


def to_8bit(encoded: np.ndarray) -> np.ndarray:
    """Quantize encoded sRGB in [0, 1] to uint8."""
    return np.rint(np.clip(encoded, 0.0, 1.0) * 255.0).astype(np.uint8)
