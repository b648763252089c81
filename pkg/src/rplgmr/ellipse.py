"""Exact overlap test for two ellipses through their conic pencil.

An ellipse ``(x - c)^T M (x - c) <= 1`` is written as a 3x3 conic matrix
``Q`` with a negative interior. For two such conics the cubic
``f(l) = det(l * Q1 + Q2)`` has two distinct positive roots exactly when the
ellipses are disjoint; a double positive root means they touch. Both end
coefficients of ``f`` are negative, so by Descartes' rule "two positive
roots" reduces to a sign condition on the middle coefficients once the
discriminant shows all three roots are real.
"""

from __future__ import annotations

import numpy as np

from .model import regularize_cov


def conic_matrix(c, gamma, scale: float) -> np.ndarray:
    """Conic of the ellipse ``{x : (x-c)^T Gamma^-1 (x-c) <= scale^2}``."""
    c = np.asarray(c, dtype=np.float64)
    M = np.linalg.inv(regularize_cov(gamma)) / (scale * scale)
    Mc = M @ c
    Q = np.empty((3, 3))
    Q[:2, :2] = M
    Q[:2, 2] = -Mc
    Q[2, :2] = -Mc
    Q[2, 2] = c @ Mc - 1.0
    return Q


def _adjugate(a: np.ndarray) -> np.ndarray:
    # rows of adj(A) are cross products of A's columns
    c0, c1, c2 = a[:, 0], a[:, 1], a[:, 2]
    return np.array([np.cross(c1, c2), np.cross(c2, c0), np.cross(c0, c1)])


def pencil_coefficients(q1, q2) -> np.ndarray:
    """Coefficients ``(a3, a2, a1, a0)`` of ``det(l * q1 + q2)``."""
    return np.array([
        np.linalg.det(q1),
        np.trace(_adjugate(q1) @ q2),
        np.trace(_adjugate(q2) @ q1),
        np.linalg.det(q2),
    ])


def cubic_discriminant(a, b, c, d) -> float:
    return 18 * a * b * c * d - 4 * b ** 3 * d + b * b * c * c - 4 * a * c ** 3 - 27 * a * a * d * d


def conics_separated(q1, q2) -> bool:
    coef = pencil_coefficients(q1, q2)
    coef = coef / np.abs(coef).max()
    a3, a2, a1, a0 = coef
    if cubic_discriminant(a3, a2, a1, a0) <= 0:
        return False
    # a3, a0 < 0: two sign changes iff some middle coefficient is positive
    return bool(a2 > 0 or a1 > 0)


def ellipses_overlap(a, b, c_dm: float) -> bool:
    """True when the ``c_dm``-scaled Mahalanobis ellipses of two components
    intersect, touch, or one contains the other.

    ``a`` and ``b`` need ``c`` and ``Gamma`` attributes. The argument order
    is canonicalised so the result is exactly symmetric.
    """
    ka = (tuple(np.ravel(a.c)), tuple(np.ravel(a.Gamma)))
    kb = (tuple(np.ravel(b.c)), tuple(np.ravel(b.Gamma)))
    if kb < ka:
        a, b = b, a
    if ka == kb:
        return True
    return not conics_separated(conic_matrix(a.c, a.Gamma, c_dm), conic_matrix(b.c, b.Gamma, c_dm))
