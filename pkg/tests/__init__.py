"""hsalbedo test suite."""
