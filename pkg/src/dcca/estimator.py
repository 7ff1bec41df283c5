"""Sample DFA / DCCA: profiles, per-box residuals and fluctuation functions."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .detrend import BoxGeometry, build_operators, normalize_mode
from .errors import EmptyInput, GeometryError

__all__ = [
    "DEFAULT_M_GRID",
    "SeriesPair",
    "PerBoxSeries",
    "FluctuationProfile",
    "integrate",
    "box_residuals",
    "box_windows",
    "per_box_series",
    "fluctuation_profile",
    "add_polynomial_trend",
]

DEFAULT_M_GRID = tuple(range(3, 101))

FLAG_OK = ""
FLAG_DEGENERATE = "degenerate_variance"
FLAG_SHORT = "insufficient_length"

_ROUNDING_FLOOR = 1e-12


def _as_series(x, name="series") -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {a.shape}")
    if a.size == 0:
        raise EmptyInput(f"{name} is empty")
    return a


@dataclass(frozen=True)
class SeriesPair:
    x1: np.ndarray
    x2: np.ndarray

    def __post_init__(self):
        x1 = _as_series(self.x1, "x1")
        x2 = _as_series(self.x2, "x2")
        if x1.shape != x2.shape:
            raise ValueError(f"series lengths differ: {x1.size} != {x2.size}")
        object.__setattr__(self, "x1", x1)
        object.__setattr__(self, "x2", x2)

    @property
    def n(self) -> int:
        return self.x1.size


@dataclass(frozen=True)
class PerBoxSeries:
    geometry: BoxGeometry
    f2_dfa_1: np.ndarray
    f2_dfa_2: np.ndarray
    f_dcca: np.ndarray


@dataclass
class FluctuationProfile:
    """Per-``m`` detrended variances, covariance and correlation.

    ``rho`` is NaN where either detrended variance is zero; ``flags`` then
    holds ``"degenerate_variance"`` for that entry.
    """

    m_grid: np.ndarray
    f2_dfa_1: np.ndarray
    f2_dfa_2: np.ndarray
    f_dcca: np.ndarray
    rho: np.ndarray
    nu: int = 0
    mode: str = "overlapping"
    flags: list = field(default_factory=list)

    def rows(self):
        for i, m in enumerate(self.m_grid):
            yield {
                "m": int(m),
                "F2_1": float(self.f2_dfa_1[i]),
                "F2_2": float(self.f2_dfa_2[i]),
                "F_DCCA": float(self.f_dcca[i]),
                "rho": float(self.rho[i]),
                "flag": self.flags[i] if self.flags else FLAG_OK,
            }


def integrate(series) -> np.ndarray:
    """Integrated signal (profile) ``R_t = X_1 + ... + X_t``."""
    return np.cumsum(_as_series(series))


def box_windows(profile: np.ndarray, geometry: BoxGeometry) -> np.ndarray:
    """All boxes of ``profile`` as rows of an ``(n_boxes, m + 1)`` array (a view)."""
    n = profile.size
    geometry.check_fits(n)
    size = geometry.m + 1
    if geometry.overlapping:
        return sliding_window_view(profile, size)
    nb = n // size
    return profile[: nb * size].reshape(nb, size)


def _residuals(windows: np.ndarray, basis: np.ndarray) -> np.ndarray:
    # Q kills constants: re-anchoring each box on its first value keeps the
    # entries at the scale of in-box increments instead of the whole walk.
    anchored = windows - windows[:, :1]
    return anchored - (anchored @ basis) @ basis.T


def box_residuals(profile, geometry: BoxGeometry, i: int) -> np.ndarray:
    """Detrended walk ``Q R`` of the ``i``-th box (zero-based index)."""
    profile = _as_series(profile, "profile")
    n_boxes = geometry.n_boxes(profile.size)
    if not 0 <= i < n_boxes:
        raise IndexError(
            f"box {i} overruns a profile of length {profile.size} "
            f"({n_boxes} {geometry.mode} boxes of {geometry.m + 1} points)"
        )
    start = int(geometry.box_starts(profile.size)[i])
    window = profile[start : start + geometry.m + 1]
    return _residuals(window[None, :], build_operators(geometry).basis)[0]


def _per_box(r1: np.ndarray, r2: np.ndarray, geometry: BoxGeometry):
    basis = build_operators(geometry).basis
    e1 = _residuals(box_windows(r1, geometry), basis)
    e2 = _residuals(box_windows(r2, geometry), basis)
    m = geometry.m
    return (
        np.einsum("ij,ij->i", e1, e1) / m,
        np.einsum("ij,ij->i", e2, e2) / m,
        np.einsum("ij,ij->i", e1, e2) / m,
    )


def per_box_series(pair: SeriesPair, geometry: BoxGeometry) -> PerBoxSeries:
    """``f2_DFA(m, i)`` for both series and ``f_DCCA(m, i)`` for every box ``i``.

    The residual sums are divided by ``m``, not by the box size ``m + 1``.
    """
    geometry.check_fits(pair.n)
    f1, f2, f12 = _per_box(integrate(pair.x1), integrate(pair.x2), geometry)
    return PerBoxSeries(geometry=geometry, f2_dfa_1=f1, f2_dfa_2=f2, f_dcca=f12)


def _profile_at(r1, r2, m, nu, mode):
    geometry = BoxGeometry(int(m), nu, mode)
    f1, f2, f12 = _per_box(r1, r2, geometry)
    return f1.mean(), f2.mean(), f12.mean()


def fluctuation_profile(
    pair: SeriesPair,
    m_grid: Iterable[int] = DEFAULT_M_GRID,
    nu: int = 0,
    mode: str = "overlapping",
    workers: int = 1,
) -> FluctuationProfile:
    """Detrended variances ``F2``, covariance ``F_DCCA`` and ``rho_DCCA`` per ``m``.

    Parameters
    ----------
    pair : SeriesPair
        The two series (raw observations, not profiles).
    m_grid : iterable of int
        Box parameters; each box holds ``m + 1`` points.
    nu : int
        Local fits have degree ``nu + 1``.
    mode : {"overlapping", "non-overlapping"}
    workers : int
        Evaluate grid points on a thread pool. Each ``m`` is independent, so
        the result does not depend on this value.

    Raises
    ------
    GeometryError
        If some ``m`` is invalid for ``nu`` or does not fit the series.
    """
    mode = normalize_mode(mode)
    grid = np.asarray(list(m_grid), dtype=np.int64)
    if grid.size == 0:
        raise EmptyInput("m_grid is empty")
    for m in grid:
        BoxGeometry(int(m), nu, mode).check_fits(pair.n)
    r1, r2 = integrate(pair.x1), integrate(pair.x2)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(lambda m: _profile_at(r1, r2, m, nu, mode), grid))
    else:
        out = [_profile_at(r1, r2, m, nu, mode) for m in grid]
    F = np.array(out, dtype=np.float64).reshape(len(grid), 3)

    f2_1, f2_2, f_dcca = F[:, 0], F[:, 1], F[:, 2]
    # Residuals of an exactly polynomial profile are rounding noise of order
    # eps * |x| * m; anything at that level counts as zero variance.
    floor1 = (_ROUNDING_FLOOR * np.max(np.abs(pair.x1)) * (grid + 1)) ** 2
    floor2 = (_ROUNDING_FLOOR * np.max(np.abs(pair.x2)) * (grid + 1)) ** 2
    degenerate = (f2_1 <= floor1) | (f2_2 <= floor2)
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = f_dcca / (np.sqrt(f2_1) * np.sqrt(f2_2))
    rho[degenerate] = np.nan
    flags = [FLAG_DEGENERATE if d else FLAG_OK for d in degenerate]
    return FluctuationProfile(
        m_grid=grid, f2_dfa_1=f2_1, f2_dfa_2=f2_2, f_dcca=f_dcca, rho=rho,
        nu=nu, mode=mode, flags=flags,
    )


def add_polynomial_trend(series, coefficients: Sequence[float]) -> np.ndarray:
    """``X_t + p(t)`` on ``t = 1..n``; ``coefficients`` are in increasing degree."""
    x = _as_series(series)
    t = np.arange(1, x.size + 1, dtype=np.float64)
    return x + np.polynomial.polynomial.polyval(t, np.asarray(coefficients, dtype=np.float64))
