from __future__ import annotations

import numpy as np


def check_functions(X, n_points: int | None = None, name: str = "X") -> np.ndarray:
    """Coerce samples to a finite complex array of shape (n_functions, n_points)."""
    A = np.asarray(X)
    if A.ndim == 1:
        A = A[None, :]
    if A.ndim != 2:
        raise ValueError(f"{name} must be 2D (functions x grid nodes), got shape {A.shape}")
    if A.dtype.kind not in "biufc":
        raise ValueError(f"{name} must be numeric")
    A = A.astype(complex)
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains non-finite values")
    if n_points is not None and A.shape[1] != n_points:
        raise ValueError(f"{name} has {A.shape[1]} nodes, expected {n_points}")
    return A


def check_interval(interval) -> tuple[float, float]:
    a, b = (float(v) for v in interval)
    if not a < b:
        raise ValueError(f"interval must satisfy a < b, got ({a}, {b})")
    return a, b


def check_choice(value, choices, name: str):
    if value not in choices:
        raise ValueError(f"{name} must be one of {sorted(choices)}, got {value!r}")
    return value


def maybe_real(A: np.ndarray, like) -> np.ndarray:
    """Drop the imaginary part when every input was real."""
    return A.real if not np.iscomplexobj(like) else A
