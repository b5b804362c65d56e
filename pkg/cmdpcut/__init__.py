"""Cutting-plane dual solver for tabular constrained MDPs."""
