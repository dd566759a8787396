"""Desk-scale causal image generation: a procedural sprite microworld,
causal-chain annotations, guided conditional diffusion, and a full
evaluation suite."""

__version__ = "0.1.0"
