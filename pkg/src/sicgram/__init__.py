"""Numerical construction and symmetry classification of SIC-POVM Gram matrices."""

__version__ = "0.1.0"
