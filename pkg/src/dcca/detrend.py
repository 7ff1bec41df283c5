"""Deterministic matrices behind every DFA/DCCA quantity.

For a box of ``m + 1`` points and a polynomial fit of degree ``nu + 1``:

* ``D`` is the Vandermonde design on the grid ``t = 1..m+1``,
* ``P`` the orthogonal projector onto its columns and ``Q = I - P``,
* ``J`` the lower-triangular matrix of ones (cumulative summation),
* ``K = J' Q J``, through which every population moment becomes a trace.

The superdiagonal sums of ``K`` are the weights ``alpha_j`` with which
autocovariance lags enter the expected fluctuation functions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import GeometryError, UnsupportedOrder

__all__ = [
    "MAX_NU",
    "OVERLAPPING",
    "NON_OVERLAPPING",
    "BoxGeometry",
    "DetrendOperators",
    "AlphaCoefficients",
    "build_operators",
    "build_K_shifted",
    "alpha_bruteforce",
    "alpha_closed_form",
    "alpha_coefficients",
    "j0",
]

MAX_NU = 5
OVERLAPPING = "overlapping"
NON_OVERLAPPING = "non-overlapping"

_MODE_ALIASES = {
    "overlapping": OVERLAPPING,
    "overlap": OVERLAPPING,
    "non-overlapping": NON_OVERLAPPING,
    "nonoverlapping": NON_OVERLAPPING,
    "nonoverlap": NON_OVERLAPPING,
}


def normalize_mode(mode: str) -> str:
    try:
        return _MODE_ALIASES[mode.lower()]
    except (KeyError, AttributeError):
        raise GeometryError(
            f"unknown overlap mode {mode!r}; expected one of {sorted(_MODE_ALIASES)}"
        ) from None


@dataclass(frozen=True)
class BoxGeometry:
    """Box parameter ``m`` (``m + 1`` points per box), order ``nu`` and overlap mode.

    The local fit has degree ``nu + 1`` because the detrending is applied to
    the integrated series.
    """

    m: int
    nu: int = 0
    mode: str = OVERLAPPING

    def __post_init__(self):
        if not isinstance(self.m, (int, np.integer)) or not isinstance(self.nu, (int, np.integer)):
            raise GeometryError(f"m and nu must be integers, got m={self.m!r}, nu={self.nu!r}")
        if self.nu < 0:
            raise GeometryError(f"nu must be non-negative, got {self.nu}")
        if self.nu > MAX_NU:
            raise UnsupportedOrder(f"nu={self.nu} exceeds the supported maximum {MAX_NU}")
        if self.m < self.nu + 2:
            raise GeometryError(
                f"box parameter m={self.m} leaves no residual degree of freedom "
                f"for nu={self.nu} (need m >= nu + 2 = {self.nu + 2})"
            )
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "nu", int(self.nu))
        object.__setattr__(self, "mode", normalize_mode(self.mode))

    @property
    def size(self) -> int:
        """Number of points in a box."""
        return self.m + 1

    @property
    def overlapping(self) -> bool:
        return self.mode == OVERLAPPING

    def n_boxes(self, n: int) -> int:
        if self.overlapping:
            return max(n - self.m, 0)
        return n // (self.m + 1)

    def box_starts(self, n: int) -> np.ndarray:
        """Zero-based start index of every box in a series of length ``n``."""
        step = 1 if self.overlapping else self.m + 1
        return np.arange(self.n_boxes(n)) * step

    def check_fits(self, n: int) -> None:
        if self.n_boxes(n) < 1:
            raise GeometryError(
                f"series of length {n} holds no {self.mode} box of {self.m + 1} points"
            )


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DetrendOperators:
    geometry: BoxGeometry
    D: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    J: np.ndarray
    K: np.ndarray
    # orthonormal basis of col(D); the estimator projects against it directly
    basis: np.ndarray = field(repr=False)


# Operators are dense (m+1)^2 arrays; only small boxes are worth keeping.
_CACHE_MAX_M = 512


def _operators(m: int, nu: int) -> tuple:
    if m <= _CACHE_MAX_M:
        return _cached_operators(m, nu)
    return _compute_operators(m, nu)


def _compute_operators(m: int, nu: int) -> tuple:
    size = m + 1
    t = np.arange(1, size + 1, dtype=np.float64)
    D = np.vander(t, nu + 2, increasing=True)
    # Same column space as D, but Legendre polynomials on [-1, 1] keep the
    # factorization well conditioned for every supported order.
    x = (2.0 * t - (size + 1)) / m
    U, _ = np.linalg.qr(np.polynomial.legendre.legvander(x, nu + 1))
    P = U @ U.T
    P = 0.5 * (P + P.T)
    Q = np.eye(size) - P
    J = np.tril(np.ones((size, size)))
    QJ = J - U @ (U.T @ J)
    K = QJ.T @ QJ
    K = 0.5 * (K + K.T)
    # Q annihilates constants, so the first column of QJ vanishes exactly.
    K[0, :] = 0.0
    K[:, 0] = 0.0
    return tuple(_frozen(a) for a in (D, P, Q, J, K, U))


_cached_operators = lru_cache(maxsize=256)(_compute_operators)


def build_operators(geometry: BoxGeometry) -> DetrendOperators:
    D, P, Q, J, K, U = _operators(geometry.m, geometry.nu)
    return DetrendOperators(geometry=geometry, D=D, P=P, Q=Q, J=J, K=K, basis=U)


def build_K_shifted(geometry: BoxGeometry, h: int) -> np.ndarray:
    """``K`` for a box shifted by ``h`` steps, expressed on ``m + 1 + h`` points.

    Equal to ``[[0, 0], [0, K]]`` with an ``h x h`` zero block in the corner.
    """
    if h < 0:
        raise ValueError(f"lag h must be non-negative, got {h}")
    K = build_operators(geometry).K
    out = np.zeros((geometry.m + 1 + h, geometry.m + 1 + h))
    out[h:, h:] = K
    return out


def alpha_bruteforce(operators: DetrendOperators, j: int) -> float:
    """Sum of the ``j``-th superdiagonal of ``K`` (``trace(K M_j*)``)."""
    m = operators.geometry.m
    if not 0 <= j <= m:
        raise IndexError(f"alpha index j={j} outside 0..{m}")
    return float(np.trace(operators.K, offset=j))


def alpha_closed_form(m: int, j: int, nu: int = 0) -> float:
    if nu != 0:
        raise UnsupportedOrder(f"closed-form alpha only exists for nu=0, got nu={nu}")
    if not 0 <= j <= m:
        raise IndexError(f"alpha index j={j} outside 0..{m}")
    a0 = (m * m + 2 * m - 3) / 15.0
    if j == 0:
        return a0
    ratio = (m - j) * (m + 1 - j) * (m + 2 - j) / (m * (m + 1) * (m + 2))
    return ratio * (a0 - (j * j + 3 * j * (m + 1)) / 10.0)


def j0(m: float) -> float:
    """Lag at which ``beta_j`` changes sign for a linear fit (``nu = 0``)."""
    return (math.sqrt(105 * m * m + 210 * m + 9) - 9 * (m + 1)) / 6.0


@dataclass(frozen=True)
class AlphaCoefficients:
    m: int
    alpha: np.ndarray
    beta: np.ndarray


@lru_cache(maxsize=4096)
def _alpha_vector(m: int, nu: int, method: str) -> np.ndarray:
    if method == "closed":
        a = np.array([alpha_closed_form(m, j, nu) for j in range(m + 1)])
    elif method == "bruteforce":
        K = _operators(m, nu)[4]
        a = np.array([np.trace(K, offset=j) for j in range(m + 1)])
    else:
        raise ValueError(f"unknown alpha method {method!r}")
    a[m] = 0.0
    return _frozen(a)


def alpha_coefficients(m: int, nu: int = 0, method: str = "bruteforce") -> AlphaCoefficients:
    """All ``alpha_j``, ``j = 0..m``, and their normalization ``beta_j``.

    ``method="closed"`` uses the polynomial formula (``nu = 0`` only);
    ``"bruteforce"`` sums superdiagonals of ``K`` and works for any order.
    """
    BoxGeometry(m, nu)
    alpha = _alpha_vector(int(m), int(nu), method)
    beta = alpha / alpha[0]
    return AlphaCoefficients(m=int(m), alpha=alpha, beta=_frozen(beta))
