"""Squeeze-and-Remember feature-memory block and a deterministic desk-scale CNN toolkit.

Kept import-light on purpose: the CLI entry point must be able to cap BLAS
thread pools via environment variables before numpy is loaded. Import the
submodules you need (``srkit.ops``, ``srkit.sr_block``, ...) directly.
"""

__version__ = "0.1.0"
