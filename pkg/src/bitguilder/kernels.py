"""Hot Monte Carlo kernels for attack-race studies.

A race distills the sampled-mining competition between honest miners and a
private attacker to its winner sequence: per block, the attacker wins with
probability equal to its hash-power share.  The victim hands over goods
once the public branch shows ``k_c`` confirmations; the attack succeeds if
the private branch ever outweighs the public one afterwards (equal
per-block difficulty, so strictly longer means strictly heavier).

Both implementations consume a pre-drawn winner matrix, so they return
bit-identical results: a numba ``@njit`` loop and a vectorized pure-numpy
fallback.  Set ``BITGUILDER_NO_NUMBA=1`` to force the fallback (it is also
used automatically when numba is unavailable); ``benchmarks/bench_kernels.py``
compares the two.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = ["simulate_races", "draw_winner_matrix", "race_backend", "NUMBA_ENABLED"]

_DISABLED = os.environ.get("BITGUILDER_NO_NUMBA", "").strip() not in ("", "0")

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via the env flag instead
    _HAVE_NUMBA = False

NUMBA_ENABLED = _HAVE_NUMBA and not _DISABLED


def _race_loop_py(winners: np.ndarray, k_c: int, start_pub: int, out: np.ndarray) -> None:
    n_runs, horizon = winners.shape
    for i in range(n_runs):
        pub = start_pub
        att = 0
        acted = k_c <= start_pub
        for t in range(horizon):
            if winners[i, t]:
                att += 1
            else:
                pub += 1
            if not acted and pub >= k_c:
                acted = True
            if acted and att > pub:
                out[i] = True
                break


if NUMBA_ENABLED:
    _race_loop = njit(cache=True)(_race_loop_py)
else:
    _race_loop = None


def _race_numpy(winners: np.ndarray, k_c: int, start_pub: int) -> np.ndarray:
    att = np.cumsum(winners, axis=1, dtype=np.int64)
    steps = np.arange(1, winners.shape[1] + 1, dtype=np.int64)
    pub = start_pub + steps[np.newaxis, :] - att
    lead = att - pub

    if k_c <= start_pub:
        acted_from = np.zeros(winners.shape[0], dtype=np.int64)
    else:
        reached = pub >= k_c
        ever = reached.any(axis=1)
        acted_from = np.where(ever, reached.argmax(axis=1), winners.shape[1])

    cols = np.arange(winners.shape[1], dtype=np.int64)
    eligible = cols[np.newaxis, :] >= acted_from[:, np.newaxis]
    return np.any(eligible & (lead >= 1), axis=1)


def simulate_races(winners: np.ndarray, k_c: int, start_pub: int = 0) -> np.ndarray:
    """Resolve each pre-drawn race row to success or failure.

    ``winners`` is a (runs, horizon) uint8 matrix, 1 where the attacker
    mined that block.  ``start_pub`` seeds the public branch with already
    published blocks (the majority-rewrite setting).  Returns a boolean
    vector of attack outcomes, identical under either backend.
    """
    winners = np.ascontiguousarray(winners, dtype=np.uint8)
    if winners.ndim != 2:
        raise ValueError("winner matrix must be 2-d (runs, horizon)")
    if k_c < 0 or start_pub < 0:
        raise ValueError("k_c and start_pub must be nonnegative")
    if _race_loop is not None:
        out = np.zeros(winners.shape[0], dtype=np.bool_)
        _race_loop(winners, k_c, start_pub, out)
        return out
    return _race_numpy(winners, k_c, start_pub)


def race_backend() -> str:
    return "numba" if _race_loop is not None else "numpy"


def draw_winner_matrix(seed: int, n_runs: int, horizon: int, q: float) -> np.ndarray:
    """Seeded Bernoulli(q) winner matrix; the same seed gives the same
    draws on every backend, which also makes success rates exactly
    monotone across confirmation policies evaluated on shared draws."""
    if not 0.0 <= q <= 1.0:
        raise ValueError("attacker share q must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    return (rng.random((n_runs, horizon)) < q).astype(np.uint8)
