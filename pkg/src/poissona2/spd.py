"""Closed-form spectral arithmetic on symmetric 2x2 matrices.

Every function accepts either an :class:`Spd2` or a numpy array of shape
``(..., 2, 2)``; array inputs are processed elementwise over the leading axes.
No iterative eigensolvers are used.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class Spd2:
    a11: float
    a12: float
    a22: float

    def __post_init__(self):
        if not (self.a11 > 0 and self.a11 * self.a22 - self.a12 ** 2 > 0):
            raise ValueError(f"matrix [[{self.a11}, {self.a12}], [{self.a12}, {self.a22}]] is not positive definite")

    @classmethod
    def from_matrix(cls, m) -> "Spd2":
        m = np.asarray(m, dtype=float)
        if m.shape != (2, 2):
            raise ValueError(f"expected a 2x2 matrix, got shape {m.shape}")
        if abs(m[0, 1] - m[1, 0]) > 1e-12 * max(1.0, np.abs(m).max()):
            raise ValueError("matrix is not symmetric")
        return cls(float(m[0, 0]), float(0.5 * (m[0, 1] + m[1, 0])), float(m[1, 1]))

    @classmethod
    def identity(cls) -> "Spd2":
        return cls(1.0, 0.0, 1.0)

    @classmethod
    def diag(cls, a: float, b: float) -> "Spd2":
        return cls(float(a), 0.0, float(b))

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.a11, self.a12], [self.a12, self.a22]])

    def triple(self) -> tuple[float, float, float]:
        return (self.a11, self.a12, self.a22)

    def __array__(self, dtype=None, copy=None):
        return self.matrix.astype(dtype or float)


def _arr(a) -> np.ndarray:
    if isinstance(a, Spd2):
        return a.matrix
    return np.asarray(a, dtype=float)


def eigvalsh2(a):
    """Return ``(smaller, larger)`` eigenvalues of symmetric 2x2 matrices."""
    a = _arr(a)
    p, q, r = a[..., 0, 0], 0.5 * (a[..., 0, 1] + a[..., 1, 0]), a[..., 1, 1]
    mid = 0.5 * (p + r)
    rad = np.hypot(0.5 * (p - r), q)
    hi = mid + rad
    # product of roots is the determinant; avoids cancellation in mid - rad
    det = p * r - q * q
    lo = np.where(hi > 0, det / np.where(hi > 0, hi, 1.0), mid - rad)
    return lo, hi


def min_eig(a):
    lo, _ = eigvalsh2(a)
    return float(lo) if np.ndim(lo) == 0 else lo


def op_norm(a):
    """Largest eigenvalue; this is the operator norm for positive matrices."""
    _, hi = eigvalsh2(a)
    return float(hi) if np.ndim(hi) == 0 else hi


def det2(a):
    a = _arr(a)
    return a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]


def inv2(a) -> np.ndarray:
    a = _arr(a)
    out = np.empty_like(a)
    det = det2(a)
    out[..., 0, 0] = a[..., 1, 1] / det
    out[..., 1, 1] = a[..., 0, 0] / det
    out[..., 0, 1] = -a[..., 0, 1] / det
    out[..., 1, 0] = -a[..., 1, 0] / det
    return out


def sqrtm2(a) -> np.ndarray:
    """Positive square root via ``(A + sqrt(det) I) / sqrt(tr + 2 sqrt(det))``."""
    a = _arr(a)
    s = np.sqrt(det2(a))
    t = np.sqrt(a[..., 0, 0] + a[..., 1, 1] + 2 * s)
    out = a.copy()
    out[..., 0, 0] += s
    out[..., 1, 1] += s
    return out / t[..., None, None]


def sqrt_inv(a):
    """Return ``(A^(1/2), A^(-1))``."""
    if isinstance(a, Spd2):
        return Spd2.from_matrix(sqrtm2(a)), Spd2.from_matrix(inv2(a))
    return sqrtm2(a), inv2(a)


def dominates(a, b, slack: float | None = None):
    """True where ``A - B + slack*I`` is positive semidefinite.

    The default slack is ``1e-12 * (|A| + |B|)`` with ``|.|`` the largest
    absolute eigenvalue.  Uses the trace/determinant test, which is exact
    for symmetric 2x2 matrices.
    """
    a, b = _arr(a), _arr(b)
    if slack is None:
        slack = 1e-12 * (_abs_norm(a) + _abs_norm(b))
    m = a - b
    m = 0.5 * (m + np.swapaxes(m, -1, -2))
    p = m[..., 0, 0] + slack
    r = m[..., 1, 1] + slack
    q = m[..., 0, 1]
    ok = (p + r >= 0) & (p * r - q * q >= 0)
    return bool(ok) if np.ndim(ok) == 0 else ok


def _abs_norm(a):
    lo, hi = eigvalsh2(a)
    return np.maximum(np.abs(lo), np.abs(hi))


def generalized_max_eig(a, b):
    """Largest ``t`` with ``det(B - t A) = 0``, i.e. ``|A^(-1/2) B A^(-1/2)|``.

    This is the smallest ``C`` with ``B <= C A`` for positive definite ``A``.
    The congruence is formed explicitly so that coincident eigenvalues do
    not lose half the digits to a square root of a cancelled discriminant.
    """
    a, b = _arr(a), _arr(b)
    s = inv2(sqrtm2(a))
    return eigvalsh2(s @ b @ s)[1]


def smoothness_ratio(a, b):
    """Best ``C`` with ``A <= C B`` and ``B <= C A``."""
    return np.maximum(generalized_max_eig(a, b), generalized_max_eig(b, a))


def a2_product(a, b):
    """``|A^(1/2) B^(1/2)|^2``, the largest eigenvalue of ``AB``."""
    a, b = _arr(a), _arr(b)
    s = sqrtm2(a)
    return eigvalsh2(s @ b @ s)[1]


def comparability_margin(mats: Sequence) -> float:
    """``min_i m(A_i) / sum_i |A_i|``."""
    mats = np.asarray([_arr(m) for m in mats]) if not isinstance(mats, np.ndarray) else mats
    if len(mats) == 0:
        raise ValueError("comparability margin of an empty family")
    lo, hi = eigvalsh2(mats)
    return float(lo.min() / hi.sum())


def convex_combination(mats, weights) -> np.ndarray:
    mats = np.asarray([_arr(m) for m in mats]) if not isinstance(mats, np.ndarray) else mats
    return np.tensordot(np.asarray(weights, dtype=float), mats, axes=(0, 0))


def check_convex_comparability(mats, lam, mu, eps: float) -> bool:
    """Check ``C <= (1+eps) D`` and ``D <= (1+eps) C`` for the two combinations.

    ``C = sum lam_i A_i`` and ``D = sum mu_i A_i``.  When
    ``|lam_i - mu_i| <= eps * comparability_margin(A)`` both always hold.
    """
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)
    for w in (lam, mu):
        if abs(w.sum() - 1.0) > 1e-12 or np.any(w < -1e-15):
            raise ValueError(f"{w} is not a convex weight vector")
    c = convex_combination(mats, lam)
    d = convex_combination(mats, mu)
    return dominates((1 + eps) * d, c) and dominates((1 + eps) * c, d)


def batch_convex_comparability(corners: np.ndarray, lam: np.ndarray, mu: np.ndarray, eps: float) -> np.ndarray:
    """Vectorized :func:`check_convex_comparability` over rows of ``lam``/``mu``.

    ``corners`` has shape ``(n, 2, 2)``; ``lam`` and ``mu`` have shape
    ``(m, n)``.  Returns a boolean array of length ``m``.
    """
    c = np.einsum("mn,nij->mij", lam, corners)
    d = np.einsum("mn,nij->mij", mu, corners)
    return dominates((1 + eps) * d, c) & dominates((1 + eps) * c, d)
