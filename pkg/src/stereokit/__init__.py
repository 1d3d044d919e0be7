"""Coarse-to-fine stereo disparity estimation toolkit.

Submodules are imported lazily by callers; keep this module free of heavy
imports so the CLI can configure threading before numpy loads.
"""

__version__ = "0.1.0"
