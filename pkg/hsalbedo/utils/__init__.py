"""Utility helpers for hsalbedo."""
