"""Camassa-Holm flows by factorization on the group of Hilbert-Schmidt operators."""

from .errors import HSFlowError
from .grid import Grid, GridFunction, integrate, make_grid
from .operators import KernelOperator, GroupElement

__version__ = "0.1.0"

__all__ = ["Grid", "GridFunction", "GroupElement", "HSFlowError", "KernelOperator", "integrate", "make_grid"]
