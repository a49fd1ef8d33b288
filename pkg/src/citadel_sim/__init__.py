"""Deterministic simulator of a modular SoC security enclave for supply-chain defenses."""

__version__ = "0.1.0"
