"""Replication harness: simulate, estimate over an m-grid, summarize."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .detrend import BoxGeometry, normalize_mode
from .estimator import SeriesPair, fluctuation_profile, per_box_series
from .errors import DegenerateVariance, InvalidParameter
from .simulate import ScenarioSpec, generate, make_rng, theoretical_model
from . import theory

__all__ = ["McConfig", "McSummary", "run_mc", "compare_modes", "per_box_replicates", "STATISTICS"]

STATISTICS = ("rho", "F2_1", "F2_2", "F_DCCA")
QUANTILES = {"q05": 0.05, "q25": 0.25, "median": 0.5, "q75": 0.75, "q95": 0.95}


@dataclass(frozen=True)
class McConfig:
    scenario: ScenarioSpec
    reps: int = 300
    m_grid: Sequence[int] = tuple(range(3, 101))
    nu: int = 0
    mode: str = "overlapping"
    master_seed: Optional[int] = None
    workers: int = 1

    def __post_init__(self):
        if self.reps < 1:
            raise InvalidParameter(f"reps must be >= 1, got {self.reps}")
        object.__setattr__(self, "m_grid", tuple(int(m) for m in self.m_grid))
        object.__setattr__(self, "mode", normalize_mode(self.mode))
        for m in self.m_grid:
            BoxGeometry(m, self.nu, self.mode).check_fits(self.scenario.n)

    @property
    def seed(self) -> int:
        return self.scenario.seed if self.master_seed is None else self.master_seed


@dataclass
class McSummary:
    """Distribution of each statistic across replications, per ``m``.

    ``stats[name][key]`` is an array over ``m_grid`` for ``key`` in
    ``q05, q25, median, q75, q95, mean, std, whisker_lo, whisker_hi``.
    Replications where ``rho`` is undefined are left out of its summary and
    counted in ``n_excluded``.
    """

    scenario: str
    mode: str
    m_grid: np.ndarray
    reps: int
    stats: dict
    theory: dict
    n_effective: np.ndarray
    n_excluded: np.ndarray
    samples: dict = field(repr=False, default_factory=dict)

    def iqr(self, statistic: str = "rho") -> np.ndarray:
        s = self.stats[statistic]
        return s["q75"] - s["q25"]

    def long_rows(self):
        """``(scenario, m, statistic, value)`` rows, ``statistic`` like ``rho.median``."""
        for i, m in enumerate(self.m_grid):
            for name, table in self.stats.items():
                for key, values in table.items():
                    yield self.scenario, int(m), f"{name}.{key}", float(values[i])
            for name, values in self.theory.items():
                yield self.scenario, int(m), f"{name}.theory", float(values[i])
            yield self.scenario, int(m), "n_effective", float(self.n_effective[i])
            yield self.scenario, int(m), "n_excluded", float(self.n_excluded[i])


def _summarize_column(col: np.ndarray) -> dict:
    col = np.sort(col[np.isfinite(col)])
    if col.size == 0:
        return {k: np.nan for k in (*QUANTILES, "mean", "std", "whisker_lo", "whisker_hi")}
    out = {k: float(np.quantile(col, q)) for k, q in QUANTILES.items()}
    out["mean"] = float(np.mean(col))
    out["std"] = float(np.std(col, ddof=1)) if col.size > 1 else 0.0
    spread = 1.5 * (out["q75"] - out["q25"])
    out["whisker_lo"] = float(col[col >= out["q25"] - spread][0])
    out["whisker_hi"] = float(col[col <= out["q75"] + spread][-1])
    return out


def _summarize(samples: dict, m_grid, reps, scenario: ScenarioSpec, nu, mode) -> McSummary:
    stats = {}
    for name, arr in samples.items():
        cols = [_summarize_column(arr[:, i]) for i in range(arr.shape[1])]
        stats[name] = {k: np.array([c[k] for c in cols]) for k in cols[0]}
    finite = np.isfinite(samples["rho"]).sum(axis=0)
    return McSummary(
        scenario=scenario.kind,
        mode=mode,
        m_grid=np.asarray(m_grid),
        reps=reps,
        stats=stats,
        theory=_theory_reference(scenario, m_grid, nu),
        n_effective=finite,
        n_excluded=reps - finite,
        samples=samples,
    )


def _theory_reference(scenario: ScenarioSpec, m_grid, nu) -> dict:
    model = theory.linear_process_cov(theoretical_model(scenario))
    out = {name: np.full(len(m_grid), np.nan) for name in STATISTICS}
    for i, m in enumerate(m_grid):
        g = BoxGeometry(int(m), nu)
        out["F2_1"][i] = theory.expected_dfa(model, g, 1)
        out["F2_2"][i] = theory.expected_dfa(model, g, 2)
        out["F_DCCA"][i] = theory.expected_dcca(model, g)
        try:
            out["rho"][i] = theory.rho_eps(model, g)
        except DegenerateVariance:
            pass
    return out


def _one_rep(config: McConfig, rep: int, modes) -> list:
    pair = generate(config.scenario, make_rng(config.seed, rep))
    out = []
    for mode in modes:
        p = fluctuation_profile(pair, config.m_grid, config.nu, mode)
        out.append(np.stack([p.rho, p.f2_dfa_1, p.f2_dfa_2, p.f_dcca]))
    return out


def _replicate(config: McConfig, modes) -> list:
    def task(rep):
        return _one_rep(config, rep, modes)

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(task, range(config.reps)))
    else:
        results = [task(rep) for rep in range(config.reps)]
    per_mode = []
    for k in range(len(modes)):
        block = np.stack([r[k] for r in results])  # (reps, 4, M)
        per_mode.append({name: block[:, j, :] for j, name in enumerate(STATISTICS)})
    return per_mode


def run_mc(config: McConfig) -> McSummary:
    """Replicate ``config.scenario`` and summarize the estimates per ``m``.

    Replication ``i`` draws from ``make_rng(seed, i)``; the summary does not
    depend on ``workers`` or on the order in which replications finish.
    """
    (samples,) = _replicate(config, [config.mode])
    return _summarize(samples, config.m_grid, config.reps, config.scenario, config.nu, config.mode)


def compare_modes(config: McConfig) -> tuple:
    """Overlapping and non-overlapping summaries computed on the same series."""
    modes = ["overlapping", "non-overlapping"]
    for m in config.m_grid:
        BoxGeometry(m, config.nu, "non-overlapping").check_fits(config.scenario.n)
    both = _replicate(config, modes)
    return tuple(
        _summarize(s, config.m_grid, config.reps, config.scenario, config.nu, mode)
        for s, mode in zip(both, modes)
    )


def per_box_replicates(config: McConfig, m: int, statistic: str = "f_dcca") -> np.ndarray:
    """Per-box series ``f(m, i)`` of every replication, shape ``(reps, n_boxes)``.

    ``statistic`` is ``"f_dcca"``, ``"f2_dfa_1"`` or ``"f2_dfa_2"``.
    """
    geometry = BoxGeometry(int(m), config.nu, config.mode)

    def task(rep):
        pair = generate(config.scenario, make_rng(config.seed, rep))
        return getattr(per_box_series(pair, geometry), statistic)

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            rows = list(pool.map(task, range(config.reps)))
    else:
        rows = [task(rep) for rep in range(config.reps)]
    return np.stack(rows)
