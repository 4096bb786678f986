"""Spectral simulator and verifier for convex-integration stages of dissipative Euler flows."""

from . import errors
from .kernels import BACKEND as KERNEL_BACKEND

__all__ = ["errors", "KERNEL_BACKEND"]
__version__ = "0.1.0"
