"""Replay-attack detection for a networked three-tank process using
signed-permutation output coding keyed by Fibonacci p-sequences."""

__version__ = "0.1.0"
