"""Population counterparts of the DFA/DCCA statistics.

Every expectation is a trace of ``K`` against a banded covariance matrix and is
evaluated through the superdiagonal weights ``alpha_j`` of ``K``. The
covariances of the per-box statistics add a fourth-order cumulant term, which
is summed directly over the non-zero part of ``K`` instead of materializing
the Kronecker products it is defined through.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .detrend import BoxGeometry, alpha_coefficients, build_operators
from .errors import (
    DegenerateVariance,
    InvalidParameter,
    LagUnavailable,
    NonSummable,
    SizeCap,
)

__all__ = [
    "CovarianceModel",
    "LinearProcessSpec",
    "DENSE_SIZE_CAP",
    "assemble_gamma",
    "expected_dfa",
    "expected_dcca",
    "rho_eps",
    "fluctuation_covariance",
    "fluctuation_covariance_dense",
    "linear_process_cov",
    "asymptotic_expectation_slope",
    "rho_limit",
]

DENSE_SIZE_CAP = 4096

# kappa(p, r, q, s): joint cumulant of X_{a,p}, X_{a,r}, X_{b,q}, X_{b,s} at
# one-based time indices; must accept broadcastable integer arrays.
Cumulant = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]

_WHICH = {1: 1, 2: 2, "1": 1, "2": 2, "dfa1": 1, "dfa2": 2,
          12: 12, "12": 12, "cross": 12, "dcca": 12}


def _which(which) -> int:
    try:
        return _WHICH[which]
    except (KeyError, TypeError):
        raise ValueError(f"which must be one of 1, 2, 'cross' (got {which!r})") from None


@dataclass(frozen=True)
class CovarianceModel:
    """Second-order structure of a jointly stationary pair, tabulated by lag.

    Parameters
    ----------
    acov1, acov2 : array_like
        Autocovariances at lags ``0..L_k``.
    ccov : array_like
        Cross-covariances ``gamma12(h) = cov(X1_t, X2_{t+h})`` at lags
        ``-L..L`` (odd length, lag 0 in the middle).
    exact_support : bool
        When true, lags beyond the tables are exactly zero. Otherwise asking
        for them raises :class:`LagUnavailable`.
    kappa1, kappa2, kappa12 : callable, optional
        Fourth-order joint cumulants for the DFA of each series and for the
        DCCA. ``None`` means identically zero (Gaussian).
    """

    acov1: np.ndarray
    acov2: np.ndarray
    ccov: np.ndarray
    exact_support: bool = False
    kappa1: Optional[Cumulant] = None
    kappa2: Optional[Cumulant] = None
    kappa12: Optional[Cumulant] = None

    def __post_init__(self):
        for name in ("acov1", "acov2", "ccov"):
            a = np.array(getattr(self, name), dtype=np.float64, ndmin=1)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if self.ccov.size % 2 != 1:
            raise InvalidParameter("ccov must cover lags -L..L (odd length)")
        for k, g in ((1, self.acov1), (2, self.acov2)):
            if not g[0] > 0:
                raise InvalidParameter(f"gamma{k}(0) must be positive, got {g[0]}")
            if np.any(np.abs(g) > g[0] * (1 + 1e-12)):
                raise InvalidParameter(f"|gamma{k}(h)| exceeds gamma{k}(0)")

    @classmethod
    def from_functions(cls, gamma1, gamma2, gamma12, max_lag: int, **kwargs) -> "CovarianceModel":
        """Tabulate covariance functions of an integer lag on ``|h| <= max_lag``."""
        lags = range(max_lag + 1)
        return cls(
            acov1=[gamma1(h) for h in lags],
            acov2=[gamma2(h) for h in lags],
            ccov=[gamma12(h) for h in range(-max_lag, max_lag + 1)],
            **kwargs,
        )

    @classmethod
    def white_noise(cls, var1=1.0, var2=1.0, cov=0.0) -> "CovarianceModel":
        return cls([var1], [var2], [cov], exact_support=True)

    @property
    def cross_max_lag(self) -> int:
        return (self.ccov.size - 1) // 2

    def _lookup(self, table, offset, h, name):
        h = np.asarray(h, dtype=np.int64)
        idx = h + offset
        inside = (idx >= 0) & (idx < table.size)
        if not self.exact_support and not np.all(inside):
            worst = int(np.max(np.abs(h)))
            raise LagUnavailable(f"{name} needs lag {worst}, model only tabulates {table.size - 1 - offset}")
        out = np.zeros(idx.shape)
        out[inside] = table[idx[inside]]
        return out if out.ndim else float(out)

    def gamma1(self, h):
        return self._lookup(self.acov1, 0, np.abs(h), "gamma1")

    def gamma2(self, h):
        return self._lookup(self.acov2, 0, np.abs(h), "gamma2")

    def gamma12(self, h):
        return self._lookup(self.ccov, self.cross_max_lag, h, "gamma12")

    def gamma(self, which, h):
        w = _which(which)
        return {1: self.gamma1, 2: self.gamma2, 12: self.gamma12}[w](h)

    def kappa(self, which) -> Optional[Cumulant]:
        return {1: self.kappa1, 2: self.kappa2, 12: self.kappa12}[_which(which)]


@dataclass(frozen=True)
class LinearProcessSpec:
    """``X_{k,t} = sum_j psi_{k,j} eps_{k,t-j}`` with ``cov(eps_1t, eps_2t) = tau12``.

    ``psi_k[i]`` is the coefficient of index ``j = start_k + i``.
    """

    psi1: np.ndarray
    psi2: np.ndarray
    tau1_sq: float = 1.0
    tau2_sq: float = 1.0
    tau12: float = 0.0
    start1: int = 0
    start2: int = 0

    def __post_init__(self):
        for name in ("psi1", "psi2"):
            a = np.array(getattr(self, name), dtype=np.float64, ndmin=1)
            if not np.all(np.isfinite(a)):
                raise InvalidParameter(f"{name} has non-finite coefficients")
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if self.tau1_sq <= 0 or self.tau2_sq <= 0:
            raise InvalidParameter("innovation variances must be positive")
        if self.tau12 ** 2 > self.tau1_sq * self.tau2_sq * (1 + 1e-12):
            raise InvalidParameter("tau12^2 exceeds tau1^2 * tau2^2")


def linear_process_cov(spec: LinearProcessSpec) -> CovarianceModel:
    """Exact (finite-support) covariance model of a linear process pair."""
    a, b = spec.psi1, spec.psi2
    acov1 = spec.tau1_sq * np.correlate(a, a, "full")[a.size - 1:]
    acov2 = spec.tau2_sq * np.correlate(b, b, "full")[b.size - 1:]
    # conv[k] = sum_i a[i] b[i + k - (len(a) - 1)]; lag h = k - (len(a)-1) + start2 - start1
    conv = np.convolve(b, a[::-1])
    lags = np.arange(conv.size) - (a.size - 1) + spec.start2 - spec.start1
    L = int(np.max(np.abs(lags)))
    ccov = np.zeros(2 * L + 1)
    ccov[lags + L] = spec.tau12 * conv
    return CovarianceModel(acov1, acov2, ccov, exact_support=True)


def _band(fn, offset: int, size: int) -> np.ndarray:
    """``size x size`` matrix with entry ``(r, s) = fn(offset + s - r)``."""
    r = np.arange(size)
    return np.asarray(fn(offset + r[None, :] - r[:, None]), dtype=np.float64)


def assemble_gamma(model: CovarianceModel, m: int, h1: int = 0, h2: int = 0, which=1) -> np.ndarray:
    """Covariance matrix of ``X_{1..m+1+h1}`` against ``X_{1..m+1+h2}``.

    Entry ``(r, s)`` is ``gamma(s - r)``; for ``which="cross"`` the first
    argument is series 1 and the second series 2.
    """
    w = _which(which)
    rows, cols = m + 1 + h1, m + 1 + h2
    r = np.arange(rows)[:, None]
    s = np.arange(cols)[None, :]
    G = np.asarray(model.gamma(w, s - r), dtype=np.float64)
    if w != 12 and h1 == h2:
        lo = np.linalg.eigvalsh(G)[0]
        if lo < -1e-10 * rows * G[0, 0]:
            raise InvalidParameter(f"gamma{w} is not positive semidefinite (eigenvalue {lo:.3g})")
    return G


def _trace_K_gamma(model: CovarianceModel, geometry: BoxGeometry, which) -> float:
    w = _which(which)
    m = geometry.m
    # the polynomial weights agree with the superdiagonal sums to rounding
    # and avoid forming K for large boxes
    method = "closed" if geometry.nu == 0 else "bruteforce"
    alpha = alpha_coefficients(m, geometry.nu, method).alpha
    h = np.arange(1, m)
    if w == 12:
        band = model.gamma12(h) + model.gamma12(-h)
        return float(alpha[0] * model.gamma12(0) + np.dot(alpha[1:m], band))
    g = model.gamma(w, np.arange(m))
    return float(alpha[0] * g[0] + 2.0 * np.dot(alpha[1:m], g[1:]))


def expected_dfa(model: CovarianceModel, geometry: BoxGeometry, which=1) -> float:
    """``E f2_DFA(m, i) = trace(K Gamma_k) / m`` for series ``which``."""
    if _which(which) == 12:
        raise ValueError("expected_dfa takes which=1 or 2; use expected_dcca for the cross term")
    return _trace_K_gamma(model, geometry, which) / geometry.m


def expected_dcca(model: CovarianceModel, geometry: BoxGeometry) -> float:
    """``E f_DCCA(m, i) = trace(K Gamma_12) / m``."""
    return _trace_K_gamma(model, geometry, 12) / geometry.m


def rho_eps(model: CovarianceModel, geometry: BoxGeometry) -> float:
    """Finite-``m`` limit in probability of ``rho_DCCA(m)`` as ``n`` grows."""
    v1 = _trace_K_gamma(model, geometry, 1)
    v2 = _trace_K_gamma(model, geometry, 2)
    if v1 <= 0 or v2 <= 0:
        raise DegenerateVariance(f"expected detrended variance is not positive at m={geometry.m}")
    return _trace_K_gamma(model, geometry, 12) / math.sqrt(v1 * v2)


def _cumulant_term(kappa: Cumulant, K: np.ndarray, h: int, workers: int = 1) -> float:
    """``sum K[p,q] K[r,s] kappa(p, h+r, q, h+s)`` over the non-zero block of ``K``.

    Row and column 1 of ``K`` vanish, so all four indices run over ``2..m+1``.
    """
    Kin = np.ascontiguousarray(K[1:, 1:])
    n = Kin.shape[0]
    idx = np.arange(2, n + 2)
    r = (h + idx)[:, None]
    s = (h + idx)[None, :]
    chunk = max(1, 4_000_000 // (n * n))

    def outer(i):
        p = idx[i]
        total = 0.0
        for lo in range(0, n, chunk):
            q = idx[lo:lo + chunk][:, None, None]
            vals = np.asarray(kappa(p, r[None], q, s[None]), dtype=np.float64)
            vals = np.broadcast_to(vals, (q.shape[0], n, n))
            total += float(np.einsum("q,rs,qrs->", Kin[i, lo:lo + chunk], Kin, vals))
        return total

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partial = list(pool.map(outer, range(n)))
    else:
        partial = [outer(i) for i in range(n)]
    return math.fsum(partial)


def fluctuation_covariance(
    model: CovarianceModel,
    geometry: BoxGeometry,
    h: int = 0,
    which="dfa1",
    workers: int = 1,
) -> float:
    """Autocovariance at box lag ``h`` of ``f2_DFA(m, i)`` or ``f_DCCA(m, i)``.

    ``which`` is ``"dfa1"``, ``"dfa2"`` or ``"dcca"``. Boxes are the
    overlapping ones. With no cumulant supplied the Gaussian value is
    returned.

    The two second-order terms reduce to ``trace(K A K B)`` with ``A`` and
    ``B`` the ``(m+1) x (m+1)`` shifted covariance bands, since the padded
    rows and columns of ``K(h)`` are zero.
    """
    if h < 0:
        raise ValueError(f"lag h must be non-negative, got {h}")
    w = _which(which)
    m = geometry.m
    K = build_operators(geometry).K
    size = m + 1

    def tr(ga, gb):
        A = _band(ga, h, size)
        B = _band(gb, -h, size)
        return float(np.sum((K @ A) * (K @ B).T))

    if w == 12:
        second = tr(model.gamma1, model.gamma2) + tr(model.gamma12, model.gamma12)
    else:
        g = model.gamma1 if w == 1 else model.gamma2
        second = 2.0 * tr(g, g)
    kappa = model.kappa(w)
    fourth = 0.0 if kappa is None else _cumulant_term(kappa, K, h, workers)
    return (fourth + second) / (m * m)


def fluctuation_covariance_dense(
    model: CovarianceModel,
    geometry: BoxGeometry,
    h: int = 0,
    which="dfa1",
    size_cap: int = DENSE_SIZE_CAP,
) -> float:
    """Reference evaluation that materializes every matrix of the trace formulas.

    Builds ``K(h)`` by explicit multiplication of the shifted cumulative-sum
    rows, the Kronecker product ``K (x) K(h)`` and the full cumulant block
    matrix. Intended for cross-checking small cases.

    Raises
    ------
    SizeCap
        If ``(m + 1) * (m + 1 + h)`` exceeds ``size_cap``.
    """
    w = _which(which)
    m = geometry.m
    M = m + 1 + h
    N = (m + 1) * M
    if N > size_cap:
        raise SizeCap(f"dense covariance needs {N}x{N} matrices, cap is {size_cap}")
    ops = build_operators(geometry)
    J_shift = np.tril(np.ones((M, M)))[h:, :]
    K = ops.J.T @ ops.Q @ ops.J
    Kh = J_shift.T @ ops.Q @ J_shift

    def G(h1, h2, k):
        r = np.arange(m + 1 + h1)[:, None]
        s = np.arange(m + 1 + h2)[None, :]
        return np.asarray(model.gamma(k, s - r), dtype=np.float64)

    def tr(ka, kb):
        return float(np.trace(K @ G(0, h, ka) @ Kh @ G(h, 0, kb)))

    if w == 12:
        second = tr(1, 2) + tr(12, 12)
    else:
        second = 2.0 * tr(w, w)

    fourth = 0.0
    kappa = model.kappa(w)
    if kappa is not None:
        p = np.arange(1, m + 2)[:, None, None, None]
        r = np.arange(1, M + 1)[None, :, None, None]
        q = np.arange(1, m + 2)[None, None, :, None]
        s = np.arange(1, M + 1)[None, None, None, :]
        cum = np.broadcast_to(np.asarray(kappa(p, r, q, s), dtype=np.float64), (m + 1, M, m + 1, M))
        cum = cum.reshape(N, N)
        kron = np.kron(K, Kh)
        fourth = float(np.trace(kron @ cum))
    return (fourth + second) / (m * m)


def _summed(model: CovarianceModel, which, tail_fraction: float) -> float:
    w = _which(which)
    if w == 12:
        g = model.ccov
        lags = np.abs(np.arange(-model.cross_max_lag, model.cross_max_lag + 1))
        total = float(np.sum(g))
    else:
        g = model.acov1 if w == 1 else model.acov2
        lags = np.arange(g.size)
        total = float(g[0] + 2.0 * np.sum(g[1:]))
    if not model.exact_support and lags.max() > 0:
        mags = np.abs(g)
        far = mags[lags >= max(1, int(0.9 * lags.max()))].sum()
        if far > tail_fraction * mags.sum():
            raise NonSummable(
                f"outer 10% of tabulated lags carry {far / mags.sum():.2e} of the "
                f"absolute covariance mass (limit {tail_fraction:g})"
            )
    return total


def asymptotic_expectation_slope(model: CovarianceModel, which="dfa1", tail_fraction: float = 1e-3) -> float:
    """Slope ``c`` in ``E f ~ c m`` as ``m`` grows: ``sum_h gamma(h) / 15`` (``nu = 0``)."""
    return _summed(model, which, tail_fraction) / 15.0


def rho_limit(obj: Union[CovarianceModel, LinearProcessSpec], tail_fraction: float = 1e-3) -> float:
    """Limit of ``rho_DCCA`` as both ``n`` and ``m`` grow (``nu = 0``).

    For a covariance model, the summed cross-covariance over the geometric
    mean of the summed autocovariances. For a linear process, the innovation
    correlation signed by the product of the coefficient sums.
    """
    if isinstance(obj, LinearProcessSpec):
        psi_prod = float(np.sum(obj.psi1)) * float(np.sum(obj.psi2))
        if psi_prod == 0.0:
            raise DegenerateVariance("a coefficient sequence sums to zero")
        return math.copysign(1.0, psi_prod) * obj.tau12 / math.sqrt(obj.tau1_sq * obj.tau2_sq)
    s1 = _summed(obj, 1, tail_fraction)
    s2 = _summed(obj, 2, tail_fraction)
    if s1 <= 0 or s2 <= 0:
        raise DegenerateVariance("summed autocovariance is not positive")
    return _summed(obj, 12, tail_fraction) / math.sqrt(s1 * s2)
