"""Seeded families of smooth test functions used by checks and the CLI."""
from __future__ import annotations

import numpy as np

from .numgrid import GridSpec


def bump(t: np.ndarray) -> np.ndarray:
    """C-infinity bump supported on |t| < 1."""
    out = np.zeros_like(t, dtype=float)
    inside = np.abs(t) < 1
    out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
    return out


def bump_battery(grid: GridSpec, count: int, rng: np.random.Generator, margin: float = 0.25) -> list[np.ndarray]:
    """Oscillating bumps vanishing (with all derivatives) well inside a 1D box."""
    a, b = grid.intervals[0]
    x = grid.axis(0)
    L = b - a
    out = []
    for _ in range(count):
        r = rng.uniform(0.1, 0.25) * L
        c = rng.uniform(a + margin * L + r, b - margin * L - r) if b - a - 2 * (margin * L + r) > 0 else (a + b) / 2
        k = rng.uniform(0, 3)
        out.append((bump((x - c) / r) * np.cos(k * (x - c)))[:, None].astype(complex))
    return out


def gaussian_battery(grid: GridSpec, count: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Smooth localized functions (not compactly supported) for round-trip checks."""
    a, b = grid.intervals[0]
    x = grid.axis(0)
    L = b - a
    out = []
    for _ in range(count):
        c = rng.uniform(a + 0.25 * L, b - 0.25 * L)
        s = rng.uniform(0.07, 0.17) * L
        k = rng.uniform(0, 2)
        out.append((np.exp(-(x - c) ** 2 / (2 * s * s)) * np.cos(k * (x - c)))[:, None].astype(complex))
    return out


def smooth_random(grid: GridSpec, channels: int, rng: np.random.Generator, terms: int = 3) -> np.ndarray:
    """Random low-frequency trigonometric-exponential field of shape grid.shape + (channels,)."""
    X = grid.coords()
    out = np.zeros(grid.shape + (channels,), dtype=complex)
    for c in range(channels):
        for _ in range(terms):
            k = rng.uniform(-1.5, 1.5, size=grid.dim)
            phase = rng.uniform(0, 2 * np.pi)
            amp = rng.standard_normal() + 1j * rng.standard_normal()
            arg = sum(kj * xj for kj, xj in zip(k, X))
            out[..., c] += amp * np.exp(1j * (arg + phase)) * np.exp(0.3 * rng.standard_normal() * X[0])
    return out
