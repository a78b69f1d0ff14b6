"""Small exact linear algebra and the projective action of 2x2 matrices.

Projective points are plain floats in ``[0, pi)``: the angle of a line through
the origin. Every reduction goes through :func:`wrap_angle`.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .errors import DomainError

ALGEBRAIC_TOL = 1e-12
CONTRACTION_SLACK = 1e-9


def wrap_angle(theta):
    """Reduce an angle (scalar or array) into ``[0, pi)``."""
    if np.ndim(theta) == 0:
        r = float(theta) % math.pi
        return 0.0 if r >= math.pi else r
    r = np.mod(np.asarray(theta, dtype=float), math.pi)
    r[r >= math.pi] = 0.0
    return r


def proj_dist(t1, t2):
    """Wrap-around distance on P(R^2) = R mod pi."""
    d = np.abs(wrap_angle(np.asarray(t1, dtype=float) - t2))
    out = np.minimum(d, math.pi - d)
    return float(out) if np.ndim(out) == 0 else out


def as_matrix(A) -> np.ndarray:
    M = np.asarray(A, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise DomainError("matrix has non-finite entries")
    return M


def rotation(alpha: float) -> np.ndarray:
    """Rotation by ``alpha``; quarter turns are returned with exact zeros."""
    q = alpha / (math.pi / 2)
    if abs(q - round(q)) < 1e-15:
        c, s = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)][int(round(q)) % 4]
    else:
        c, s = math.cos(alpha), math.sin(alpha)
    return np.array([[c, -s], [s, c]])


def normalize_unimodular(A) -> np.ndarray:
    """Return ``A / |det A|^(1/d)``, which has the same projective action."""
    M = as_matrix(A)
    det = float(np.linalg.det(M)) if M.shape[0] > 2 else float(M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0])
    if det == 0.0 or not math.isfinite(det):
        raise DomainError("cannot normalize a singular matrix")
    out = M / abs(det) ** (1.0 / M.shape[0])
    return out


def is_unimodular(A, tol: float = ALGEBRAIC_TOL) -> bool:
    """| |det A| - 1 | <= tol, with tol scaled by |ad| + |bc| for 2x2 input.

    The scaling is the rounding floor of the determinant: for |A| ~ 1e3 the
    two products are ~1e6 and their difference carries ~1e-10 error.
    """
    M = as_matrix(A)
    if M.shape == (2, 2):
        scale = max(1.0, abs(M[0, 0] * M[1, 1]) + abs(M[0, 1] * M[1, 0]))
        det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
        return bool(abs(abs(det) - 1.0) <= tol * scale)
    return bool(abs(abs(np.linalg.det(M)) - 1.0) <= tol)


def proj_act(A, theta):
    """Angle of ``A (cos theta, sin theta)`` reduced mod pi. Vectorized over theta."""
    M = as_matrix(A)
    t = np.asarray(theta, dtype=float)
    u, v = np.cos(t), np.sin(t)
    out = wrap_angle(np.arctan2(M[1, 0] * u + M[1, 1] * v, M[0, 0] * u + M[0, 1] * v))
    return float(out) if np.ndim(out) == 0 else out


def singular_values_2x2(A) -> tuple[float, float]:
    """Closed-form (s_min, s_max) from the Gram matrix of a 2x2 matrix."""
    M = as_matrix(A)
    fro = float(np.sum(M * M))
    det = abs(float(M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]))
    disc = max(fro * fro - 4.0 * det * det, 0.0)
    s_max = math.sqrt(0.5 * (fro + math.sqrt(disc)))
    s_min = det / s_max if s_max > 0 else 0.0
    return s_min, s_max


def op_norm(A) -> float:
    return singular_values_2x2(A)[1]


class MinExpansion(NamedTuple):
    theta0: float
    s_min: float
    s_max: float
    degenerate: bool


def min_expansion_direction(A) -> MinExpansion:
    """Direction ``theta0`` minimizing ``|A e^{i theta}|`` over unit vectors.

    For conformal ``A`` (equal singular values) every direction is minimal;
    ``theta0 = 0`` is returned with ``degenerate=True``.
    """
    M = as_matrix(A)
    if M.shape != (2, 2):
        raise DomainError("min_expansion_direction is defined for 2x2 matrices")
    s_min, s_max = singular_values_2x2(M)
    if s_min == 0.0:
        raise DomainError("matrix is singular")
    if s_max - s_min <= ALGEBRAIC_TOL * s_max:
        return MinExpansion(0.0, s_min, s_max, True)
    g11 = M[0, 0] ** 2 + M[1, 0] ** 2
    g22 = M[0, 1] ** 2 + M[1, 1] ** 2
    g12 = M[0, 0] * M[0, 1] + M[1, 0] * M[1, 1]
    major = 0.5 * math.atan2(2.0 * g12, g11 - g22)
    return MinExpansion(wrap_angle(major + math.pi / 2), s_min, s_max, False)


class ContractionCheck(NamedTuple):
    holds: bool
    lhs: float
    bound: float


def check_contraction_lemma(A, eps: float, theta1: float, theta2: float) -> ContractionCheck:
    """Check ``dist(A.theta1, A.theta2) <= 2 pi^3 / (|A|^2 eps^2)``.

    Both angles must lie at distance >= eps from the most contracted direction
    of A. For conformal A that condition is vacuous and is skipped.
    """
    M = as_matrix(A)
    if not is_unimodular(M):
        raise DomainError("contraction check needs a unimodular-normalized matrix")
    if eps <= 0:
        raise DomainError(f"eps must be positive, got {eps}")
    mx = min_expansion_direction(M)
    if not mx.degenerate:
        for name, th in (("theta1", theta1), ("theta2", theta2)):
            if proj_dist(th, mx.theta0) < eps:
                raise DomainError(
                    f"{name}={th!r} lies within eps={eps} of the contracted direction {mx.theta0!r}"
                )
    lhs = proj_dist(proj_act(M, theta1), proj_act(M, theta2))
    bound = 2.0 * math.pi ** 3 / (mx.s_max ** 2 * eps ** 2)
    return ContractionCheck(lhs <= bound + CONTRACTION_SLACK, lhs, bound)
