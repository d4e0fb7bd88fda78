"""Provably optimal sparse regression trees over binary features."""

from .dataset import BinaryDataset, Binarizer, DataError, binarize, from_arrays, load_csv
from .model import Tree, evaluate, render_text
from .solver import SolverConfig, solve

__version__ = "0.1.0"

__all__ = [
    "BinaryDataset",
    "Binarizer",
    "DataError",
    "Tree",
    "SolverConfig",
    "binarize",
    "evaluate",
    "from_arrays",
    "load_csv",
    "render_text",
    "solve",
]
