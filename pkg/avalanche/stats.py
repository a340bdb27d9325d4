"""Monte-Carlo statistics: histograms, standard errors, goodness of fit, tails."""
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import stats


def binomial_se(p: float, n: int) -> float:
    if n <= 0:
        return float('nan')
    return math.sqrt(max(p * (1 - p), 0.0) / n)


def mean_se(values: Sequence[float]) -> Tuple[float, float]:
    data = np.asarray(values, dtype=float)
    if len(data) < 2:
        return float(data.mean()) if len(data) else float('nan'), float('nan')
    return float(data.mean()), float(data.std(ddof=1) / math.sqrt(len(data)))


@dataclass
class MassHistogram:
    """Counts of the mass of the particle containing the edge (0, 1)."""
    counts: Dict[int, int] = field(default_factory=dict)
    total: int = 0

    def add(self, mass: int, n: int = 1):
        self.counts[mass] = self.counts.get(mass, 0) + n
        self.total += n

    def merge(self, other: 'MassHistogram'):
        for mass, n in other.counts.items():
            self.add(mass, n)

    def probability(self, k: int) -> float:
        return self.counts.get(k, 0) / self.total if self.total else 0.0

    def c_hat(self, k: int) -> float:
        """Concentration estimate P[M=k] / k."""
        return self.probability(k) / k

    def c_se(self, k: int) -> float:
        return binomial_se(self.probability(k), self.total) / k

    def _moment(self, weight: Callable[[int], float]) -> Tuple[float, float]:
        masses = np.array(sorted(self.counts), dtype=float)
        freq = np.array([self.counts[int(m)] for m in masses], dtype=float) / self.total
        values = np.array([weight(int(m)) for m in masses])
        mean = float(values @ freq)
        var = float(((values - mean) ** 2) @ freq)
        return mean, math.sqrt(var / self.total)

    def m0(self) -> Tuple[float, float]:
        """sum_k c_k = E[1/M], with its standard error."""
        return self._moment(lambda m: 1.0 / m)

    def m2(self) -> Tuple[float, float]:
        """sum_k k^2 c_k = E[M], with its standard error."""
        return self._moment(float)

    def table(self, kmax: Optional[int] = None) -> List[dict]:
        kmax = kmax or (max(self.counts) if self.counts else 0)
        return [{'k': k, 'count': self.counts.get(k, 0), 'total': self.total,
                 'c_k': self.c_hat(k), 'se': self.c_se(k)} for k in range(1, kmax + 1)]

    def to_dict(self) -> dict:
        return {'counts': {str(k): v for k, v in sorted(self.counts.items())}, 'total': self.total}


def histogram_rows(values: Iterable[int]) -> List[dict]:
    """{value, count, total} rows sorted by value."""
    counts = Counter(values)
    total = sum(counts.values())
    return [{'value': v, 'count': counts[v], 'total': total} for v in sorted(counts)]


def chi_square_gof(observed: Mapping, probabilities: Mapping, min_expected: float = 5.0) -> Tuple[float, float]:
    """Goodness of fit of counts to a law, pooling sparse cells into one.

    Cells of ``probabilities`` missing from ``observed`` count as zero; any
    observed mass outside the law's support goes to the pooled cell.
    """
    n = sum(observed.values())
    obs, exp = [], []
    pooled_obs, pooled_exp = 0.0, 0.0
    for key, p in probabilities.items():
        if p * n >= min_expected:
            obs.append(observed.get(key, 0))
            exp.append(p * n)
        else:
            pooled_obs += observed.get(key, 0)
            pooled_exp += p * n
    pooled_obs += sum(v for k, v in observed.items() if k not in probabilities)
    pooled_exp += n - sum(exp) - pooled_exp
    if pooled_exp > 1e-9 or pooled_obs:
        obs.append(pooled_obs)
        exp.append(max(pooled_exp, 1e-9))
    result = stats.chisquare(np.array(obs, dtype=float), np.array(exp, dtype=float) * sum(obs) / sum(exp))
    return float(result.statistic), float(result.pvalue)


def chi_square_two_sample(first: Mapping, second: Mapping, min_count: int = 5) -> Tuple[float, float]:
    """Homogeneity test between two categorical samples; sparse cells are pooled."""
    keys = sorted(set(first) | set(second))
    rows = [[first.get(k, 0) for k in keys], [second.get(k, 0) for k in keys]]
    kept = [j for j, k in enumerate(keys) if rows[0][j] + rows[1][j] >= min_count]
    sparse = [j for j in range(len(keys)) if j not in kept]
    table = [[row[j] for j in kept] + ([sum(row[j] for j in sparse)] if sparse else []) for row in rows]
    table = [list(col) for col in zip(*table) if sum(col) > 0]
    if len(table) < 2:
        return 0.0, 1.0
    statistic, pvalue, _, _ = stats.chi2_contingency(np.array(table).T, correction=False)
    return float(statistic), float(pvalue)


def tv_distance(first: Mapping, second: Mapping) -> float:
    """Half the summed absolute differences of two empirical laws."""
    n1, n2 = sum(first.values()), sum(second.values())
    keys = set(first) | set(second)
    return 0.5 * sum(abs(first.get(k, 0) / n1 - second.get(k, 0) / n2) for k in keys)


def tv_noise_floor(first: Mapping, second: Mapping) -> float:
    """Expected TV between two samples of these sizes drawn from one pooled law."""
    n1, n2 = sum(first.values()), sum(second.values())
    pooled = Counter(first)
    pooled.update(second)
    total = n1 + n2
    scale = math.sqrt(2 / math.pi) * math.sqrt(1 / n1 + 1 / n2)
    return 0.5 * sum(scale * math.sqrt(c / total * (1 - c / total)) for c in pooled.values())


def dependence_statistic(pairs: np.ndarray) -> float:
    """sum over the four cells (a, b) of |P[ab] - P[a]P[b]| for 0/1 pairs."""
    pairs = np.asarray(pairs)
    x, y = pairs[:, 0], pairs[:, 1]
    px, py = x.mean(), y.mean()
    p11 = (x & y).mean()
    # the four cell deviations share one magnitude
    return float(4 * abs(p11 - px * py))


def bootstrap_ci(data: np.ndarray, statistic: Callable[[np.ndarray], float],
                 rng: np.random.Generator, n_boot: int = 200, level: float = 0.95) -> Tuple[float, float]:
    n = len(data)
    draws = [statistic(data[rng.integers(0, n, n)]) for _ in range(n_boot)]
    alpha = (1 - level) / 2
    return float(np.quantile(draws, alpha)), float(np.quantile(draws, 1 - alpha))


def survival(values: Sequence[float], grid: Optional[Sequence[float]] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Empirical P[X >= t] on ``grid`` (default: the distinct observed values)."""
    data = np.sort(np.asarray(values, dtype=float))
    grid = np.unique(data) if grid is None else np.asarray(grid, dtype=float)
    above = len(data) - np.searchsorted(data, grid, side='left')
    return grid, above / len(data)


def exponential_tail_fit(values: Sequence[float], min_count: int = 10, bins: int = 30) -> dict:
    """Line bounding the log-survival from above over the observed range.

    The slope is a least-squares fit of log P[X >= t] on points supported by
    at least ``min_count`` observations; the intercept is then raised until
    the line dominates every such point.
    """
    data = np.asarray(values, dtype=float)
    n = len(data)
    grid = np.unique(data)
    if len(grid) > bins:
        grid = np.linspace(data.min(), data.max(), bins)
    grid, surv = survival(data, grid)
    mask = surv * n >= min_count
    if mask.sum() < 3:
        return {'slope': float('nan'), 'intercept': float('nan'), 'points': int(mask.sum()), 'max_excess': 0.0}
    x, y = grid[mask], np.log(surv[mask])
    slope, intercept = np.polyfit(x, y, 1)
    excess = float((y - (slope * x + intercept)).max())
    return {'slope': float(slope), 'intercept': float(intercept + excess),
            'points': int(mask.sum()), 'max_excess': excess}
