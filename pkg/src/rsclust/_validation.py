"""Input checks shared by the estimators and the functional API."""

from __future__ import annotations

import math
import numbers

import numpy as np
from sklearn.utils.validation import check_array

__all__ = ["check_tau", "check_seed", "check_distance_matrix"]


def check_tau(tau, t_prime=None) -> float:
    if not isinstance(tau, numbers.Real) or math.isnan(tau):
        raise ValueError(f"tau must be a real number, got {tau!r}")
    if tau < 0 or (t_prime is not None and tau > t_prime):
        upper = "t'" if t_prime is None else t_prime
        raise ValueError(f"tau={tau} outside [0, {upper}]")
    return float(tau)


def check_seed(seed) -> int:
    if seed is None or isinstance(seed, bool) or not isinstance(seed, numbers.Integral):
        raise ValueError(f"an integer seed is required, got {seed!r}")
    return int(seed)


def check_distance_matrix(X) -> np.ndarray:
    X = check_array(X, dtype=float, ensure_min_samples=1, ensure_min_features=1)
    if X.shape[0] != X.shape[1]:
        raise ValueError(f"distance matrix must be square, got {X.shape}")
    if (X < 0).any():
        raise ValueError("distances must be non-negative")
    return X
