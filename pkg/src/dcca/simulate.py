"""Seedable generators for the benchmark data-generating processes."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.signal import lfilter

from .errors import InvalidParameter
from .estimator import SeriesPair, add_polynomial_trend
from .theory import LinearProcessSpec

__all__ = [
    "SCENARIOS",
    "ScenarioSpec",
    "make_rng",
    "generate",
    "theoretical_model",
    "burn_in",
]

# kind -> default parameters
SCENARIOS = {
    "iid_gaussian_pair": {},
    "bivariate_gaussian": {"rho": 0.5},
    "ar1_vs_ma1": {"phi": 0.6, "theta": 0.6},
    "signal_plus_noise": {"beta0": 3.0, "beta1": 2.0, "noise_var": 4.0},
    "ma_cascade": {"q": 20, "theta": None},
    "ar1_driven": {"phi": 0.6},
    "shared_noise_ar": {"alpha1": 0.4, "alpha2": 0.6, "beta": 0.7},
    "shared_noise_arma": {"alpha1": 0.4, "alpha2": 0.6, "beta": 0.7},
}

_PSI_REL_TAIL = 1e-12


@dataclass(frozen=True)
class ScenarioSpec:
    """A named scenario, its parameters, sample length and master seed.

    ``trend1`` / ``trend2`` are optional polynomial coefficients (increasing
    degree) added to the generated series.
    """

    kind: str
    n: int = 2000
    seed: int = 0
    params: dict = field(default_factory=dict)
    trend1: Optional[Sequence[float]] = None
    trend2: Optional[Sequence[float]] = None

    def __post_init__(self):
        if self.kind not in SCENARIOS:
            raise InvalidParameter(
                f"unknown scenario {self.kind!r}; valid presets: {', '.join(SCENARIOS)}"
            )
        unknown = set(self.params) - set(SCENARIOS[self.kind])
        if unknown:
            raise InvalidParameter(f"{self.kind} does not take parameters {sorted(unknown)}")
        if self.n < 1:
            raise InvalidParameter(f"n must be at least 1, got {self.n}")
        merged = {**SCENARIOS[self.kind], **self.params}
        object.__setattr__(self, "params", merged)
        _validate(self.kind, merged)

    def theta(self) -> np.ndarray:
        """MA-cascade weights ``theta_0..theta_q`` (``theta_0 = 1``)."""
        q = int(self.params["q"])
        custom = self.params.get("theta")
        if custom is None:
            rest = [(q + 1 - j) / 10 for j in range(1, q + 1)]
        else:
            rest = list(custom)
            if len(rest) != q:
                raise InvalidParameter(f"theta must list theta_1..theta_q ({q} values), got {len(rest)}")
        return np.array([1.0] + rest, dtype=np.float64)


def _validate(kind, p):
    def stationary(name):
        if not abs(p[name]) < 1:
            raise InvalidParameter(f"{kind}: |{name}| must be < 1 for stationarity, got {p[name]}")

    if kind == "bivariate_gaussian" and not abs(p["rho"]) <= 1:
        raise InvalidParameter(f"|rho| must be <= 1, got {p['rho']}")
    if kind in ("ar1_vs_ma1", "ar1_driven"):
        stationary("phi")
    if kind.startswith("shared_noise"):
        for name in ("alpha1", "alpha2", "beta"):
            stationary(name)
    if kind == "signal_plus_noise" and p["noise_var"] < 0:
        raise InvalidParameter("noise_var must be non-negative")
    if kind == "ma_cascade" and int(p["q"]) < 0:
        raise InvalidParameter("q must be non-negative")


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for ``stream`` under a 64-bit master ``seed``.

    Streams are derived by hashing ``(seed, stream)``, so replication ``i``
    draws the same numbers whatever order replications run in.
    """
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(ss))


def burn_in(phi_max: float) -> int:
    """Discarded start-up samples for an autoregression with largest root ``phi_max``."""
    return 1000 + math.ceil(50 / (1 - abs(phi_max)))


def _ar1(innov: np.ndarray, phi: float) -> np.ndarray:
    return lfilter([1.0], [1.0, -phi], innov)


def _draw(spec: ScenarioSpec, rng: np.random.Generator):
    p, n, kind = spec.params, spec.n, spec.kind
    if kind == "iid_gaussian_pair":
        z = rng.standard_normal((2, n))
        return z[0], z[1]
    if kind == "bivariate_gaussian":
        rho = p["rho"]
        z = rng.standard_normal((2, n))
        return z[0], rho * z[0] + math.sqrt(1 - rho * rho) * z[1]
    if kind == "signal_plus_noise":
        z = rng.standard_normal((2, n))
        x1 = z[0]
        return x1, p["beta0"] + p["beta1"] * x1 + math.sqrt(p["noise_var"]) * z[1]
    if kind == "ma_cascade":
        theta = spec.theta()
        q = theta.size - 1
        x1 = rng.standard_normal(n + q)
        return x1[q:], np.convolve(x1, theta, mode="valid")
    if kind == "ar1_vs_ma1":
        b = burn_in(p["phi"])
        e = rng.standard_normal((2, n + b))
        x1 = _ar1(e[0], p["phi"])[b:]
        x2 = e[1, b:] + p["theta"] * e[1, b - 1:-1]
        return x1, x2
    if kind == "ar1_driven":
        b = burn_in(p["phi"])
        x1 = rng.standard_normal(n + b)
        return x1[b:], _ar1(x1, p["phi"])[b:]
    if kind == "shared_noise_ar":
        b = burn_in(max(abs(p["alpha1"]), abs(p["alpha2"]), abs(p["beta"])))
        eps = _ar1(rng.standard_normal(n + b), p["beta"])
        return _ar1(eps, p["alpha1"])[b:], _ar1(eps, p["alpha2"])[b:]
    if kind == "shared_noise_arma":
        b = burn_in(p["beta"])
        eps = _ar1(rng.standard_normal(n + b), p["beta"])
        return eps[b:] + p["alpha1"] * eps[b - 1:-1], eps[b:] + p["alpha2"] * eps[b - 1:-1]
    raise AssertionError(kind)


def generate(spec: ScenarioSpec, rng: Optional[np.random.Generator] = None) -> SeriesPair:
    """Draw one sample pair; without ``rng`` the stream is ``make_rng(spec.seed)``."""
    if rng is None:
        rng = make_rng(spec.seed)
    x1, x2 = _draw(spec, rng)
    if spec.trend1 is not None:
        x1 = add_polynomial_trend(x1, spec.trend1)
    if spec.trend2 is not None:
        x2 = add_polynomial_trend(x2, spec.trend2)
    return SeriesPair(np.ascontiguousarray(x1), np.ascontiguousarray(x2))


def _truncated(psi_of_j, rate: float) -> np.ndarray:
    """Causal coefficients cut where the absolute tail drops below 1e-12 of the total."""
    if rate <= 0:
        return np.asarray(psi_of_j(np.arange(2)), dtype=np.float64)
    # decay ~ j * rate**j at worst; the extra 200 terms cover the polynomial factor
    j_max = int(math.ceil(math.log(1e-18) / math.log(rate))) + 200
    psi = np.asarray(psi_of_j(np.arange(j_max + 1)), dtype=np.float64)
    mags = np.abs(psi)
    tail = np.cumsum(mags[::-1])[::-1]  # tail[j] = sum_{i >= j} |psi_i|
    keep = np.nonzero(tail > _PSI_REL_TAIL * tail[0])[0][-1] + 1
    return psi[:keep]


def _shared_ar_psi(alpha: float, beta: float):
    if alpha == beta:
        return lambda j: (j + 1) * beta ** j
    return lambda j: (beta ** (j + 1) - alpha ** (j + 1)) / (beta - alpha)


def _shared_arma_psi(alpha: float, beta: float):
    def psi(j):
        out = np.where(j >= 1, (beta + alpha) * np.power(beta, np.maximum(j - 1, 0).astype(float)), 1.0)
        return out
    return psi


def theoretical_model(spec: ScenarioSpec) -> LinearProcessSpec:
    """Population model of ``spec`` as a pair of linear processes.

    Infinite coefficient sequences are truncated once the discarded absolute
    mass falls below ``1e-12`` of the total.
    """
    p, kind = spec.params, spec.kind
    one = np.array([1.0])
    if kind == "iid_gaussian_pair":
        return LinearProcessSpec(one, one, 1.0, 1.0, 0.0)
    if kind == "bivariate_gaussian":
        return LinearProcessSpec(one, one, 1.0, 1.0, p["rho"])
    if kind == "signal_plus_noise":
        b1 = p["beta1"]
        return LinearProcessSpec(one, one, 1.0, b1 * b1 + p["noise_var"], b1)
    if kind == "ma_cascade":
        return LinearProcessSpec(one, spec.theta(), 1.0, 1.0, 1.0)
    if kind == "ar1_vs_ma1":
        phi = p["phi"]
        psi1 = _truncated(lambda j: phi ** j, abs(phi))
        return LinearProcessSpec(psi1, np.array([1.0, p["theta"]]), 1.0, 1.0, 0.0)
    if kind == "ar1_driven":
        phi = p["phi"]
        return LinearProcessSpec(one, _truncated(lambda j: phi ** j, abs(phi)), 1.0, 1.0, 1.0)
    if kind.startswith("shared_noise"):
        a1, a2, beta = p["alpha1"], p["alpha2"], p["beta"]
        if kind == "shared_noise_ar":
            make, rate = _shared_ar_psi, lambda a: max(abs(a), abs(beta))
        else:
            make, rate = _shared_arma_psi, lambda a: abs(beta)
        psi1 = _truncated(make(a1, beta), rate(a1))
        psi2 = _truncated(make(a2, beta), rate(a2))
        return LinearProcessSpec(psi1, psi2, 1.0, 1.0, 1.0)
    raise AssertionError(kind)
