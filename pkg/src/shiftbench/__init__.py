"""shiftbench: desk-scale robustness evaluation for zero-shot classifiers."""

from .data import Dataset, Image, LabeledExample

__version__ = "0.1.0"
