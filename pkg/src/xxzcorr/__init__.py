"""Twisted density matrices and factorized correlators of the critical XXZ chain."""

from .params import ModelParams, MODE_FINITE, MODE_TEMPERATURE
from .contour import ContourGrid, build_contour, integrate, classify

__all__ = [
    "ModelParams", "MODE_FINITE", "MODE_TEMPERATURE",
    "ContourGrid", "build_contour", "integrate", "classify",
]
