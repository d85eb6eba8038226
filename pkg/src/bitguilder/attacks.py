"""Monte Carlo attack studies over the sampled-mining race kernels.

``double_spend_study`` estimates attack success rates across confirmation
policies; each hash-power point shares one winner matrix across all
policies (common random numbers), which makes the estimated rates exactly
monotone in the confirmation threshold run by run.  ``majority_rewrite_study``
races an over-half attacker against an already published suffix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import draw_winner_matrix, simulate_races

__all__ = [
    "RatePoint",
    "double_spend_point",
    "double_spend_study",
    "majority_rewrite_study",
    "wilson_interval",
    "log_linear_fit",
]

DEFAULT_HORIZON = 500


@dataclass(frozen=True)
class RatePoint:
    q: float
    k_c: int
    runs: int
    successes: int

    @property
    def rate(self) -> float:
        return self.successes / self.runs if self.runs else 0.0


def _seed_for(seed: int, q: float) -> int:
    # stable sub-seed per hash-power point, independent of evaluation order
    return (seed * 1_000_003 + int(round(q * 10_000))) & 0x7FFFFFFF


def double_spend_point(
    q: float, k_c: int, runs: int, seed: int = 0, horizon: int = DEFAULT_HORIZON
) -> RatePoint:
    winners = draw_winner_matrix(_seed_for(seed, q), runs, horizon, q)
    outcomes = simulate_races(winners, k_c=k_c, start_pub=0)
    return RatePoint(q=q, k_c=k_c, runs=runs, successes=int(outcomes.sum()))


def double_spend_study(
    qs, k_cs, runs: int, seed: int = 0, horizon: int = DEFAULT_HORIZON
) -> list[RatePoint]:
    """Success rates for every (q, k_c) pair; one winner matrix per q."""
    points = []
    for q in qs:
        winners = draw_winner_matrix(_seed_for(seed, q), runs, horizon, q)
        for k_c in k_cs:
            outcomes = simulate_races(winners, k_c=int(k_c), start_pub=0)
            points.append(RatePoint(q=float(q), k_c=int(k_c), runs=runs, successes=int(outcomes.sum())))
    return points


def majority_rewrite_study(
    q: float = 0.55,
    suffix_len: int = 5,
    runs: int = 100,
    seed: int = 0,
    horizon: int = 2000,
) -> RatePoint:
    """Race a private miner against a ``suffix_len``-block public lead."""
    winners = draw_winner_matrix(_seed_for(seed, q), runs, horizon, q)
    outcomes = simulate_races(winners, k_c=0, start_pub=suffix_len)
    return RatePoint(q=q, k_c=0, runs=runs, successes=int(outcomes.sum()))


def wilson_interval(successes: int, runs: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial rate."""
    if runs == 0:
        return (0.0, 1.0)
    p = successes / runs
    denom = 1 + z * z / runs
    center = (p + z * z / (2 * runs)) / denom
    half = z * np.sqrt(p * (1 - p) / runs + z * z / (4 * runs * runs)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


def log_linear_fit(k_cs, rates) -> tuple[float, float, float]:
    """Least-squares fit of log(rate) against k_c over positive rates.

    Returns (slope, intercept, r_squared).  Zero-rate points cannot enter a
    log fit and are skipped; at least three positive points are required.
    """
    xs = [float(k) for k, r in zip(k_cs, rates) if r > 0]
    ys = [float(np.log(r)) for r in rates if r > 0]
    if len(xs) < 3:
        raise ValueError("need at least three positive rates for a log-linear fit")
    x = np.asarray(xs)
    y = np.asarray(ys)
    slope, intercept = np.polyfit(x, y, 1)
    predicted = slope * x + intercept
    ss_res = float(np.sum((y - predicted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), r_squared
