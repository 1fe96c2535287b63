"""Locate, patch, and simulate image pre-processing in disassembled apps."""

__version__ = "0.1.0"

from .perturbation import PerturbationSpec  # noqa: F401
