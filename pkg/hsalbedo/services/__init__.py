"""hsalbedo services - calibration, recovery, densification, metrics and simulation."""

__all__ = []
