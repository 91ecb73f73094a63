"""Core package — Import-safe, model-free utilities for MixIRT (RNG streams, kernels, errors, defaults)."""
