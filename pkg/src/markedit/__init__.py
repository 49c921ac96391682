"""Marker-guided sentence rewriting toolkit.

Train a dual-attention editor on simulated post-edits, decode under hard
negative word constraints, and serve interactive editing over HTTP.
"""

__version__ = "0.1.0"
