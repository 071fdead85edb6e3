"""Numeric oracle for the free-matrix summation bound.

For R > 0, any M and vector theta, and a sequence {x(s)}, s = alpha..beta,
with y(s) = x(s+1) - x(s):

    -sum_{s=alpha}^{beta-1} y(s)' R y(s)
        <= (beta - alpha) theta' M R^-1 M' theta
           + 2 theta' M [x(beta) - x(alpha)]

This inequality underlies the sampling-interval terms of the feasibility
conditions; here it is checked directly on concrete sequences.
"""

from __future__ import annotations

import numpy as np

from ..errors import SingularRError


def verify_summation_inequality(R, M, theta, sequence) -> tuple[float, float, bool]:
    """Evaluate both sides on a sequence; returns (lhs, rhs, holds)."""
    R = np.atleast_2d(np.asarray(R, dtype=float))
    M = np.atleast_2d(np.asarray(M, dtype=float))
    theta = np.asarray(theta, dtype=float).ravel()
    xs = [np.asarray(x, dtype=float).ravel() for x in sequence]
    ev = np.linalg.eigvalsh(0.5 * (R + R.T))
    if ev.min() <= 0:
        raise SingularRError("R must be positive definite")

    steps = len(xs) - 1
    lhs = 0.0
    for s in range(steps):
        y = xs[s + 1] - xs[s]
        lhs -= float(y @ R @ y)
    Mt = M.T @ theta
    rhs = steps * float(Mt @ np.linalg.solve(R, Mt))
    if steps >= 0 and len(xs) >= 1:
        rhs += 2.0 * float(theta @ M @ (xs[-1] - xs[0]))
    return lhs, rhs, lhs <= rhs + 1e-10
