"""Input validation shared by the estimator API."""
from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from .dynamics import SIMPLEX_TOL, triangle_violation
from .exceptions import DomainError
from .hjb_solver import clamp_points


def check_states(X, tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Validate an ``(n_samples, 2)`` array of ``(s, i)`` states in the triangle.

    Violations up to ``tol`` are clamped; anything larger is a ``DomainError``.
    """
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if X.shape[1] != 2:
        raise DomainError(f"states need exactly 2 columns (s, i), got {X.shape[1]}")
    viol = triangle_violation(X[:, 0], X[:, 1])
    if np.any(viol > tol):
        k = int(np.argmax(viol))
        raise DomainError(f"state {tuple(X[k])} (row {k}) lies outside the triangle")
    return clamp_points(X)
