"""Grade-dependent item allocation.

Items are ranked from easiest (rank 1) to hardest (rank I) and drawn from a
probability mass function over ranks that shifts with the student's grade
``g``: low grades pile mass on the easy end, high grades on the hard end,
and at the pivot grade ``m`` the distribution is exactly uniform.

Each branch mixes a truncated geometric component (steepness ``q``) with a
uniform component, the mixing weight moving linearly in ``g``:

    g < m:   p(r) = geo_up(r)   * (m - g)/m      + g/(I*m)
    g >= m:  p(r) = geo_down(r) * (g - m)/(1 - m) + (1 - g)/(I*(1 - m))

where ``geo_up(r)``  is proportional to q**r (mass on low ranks) and
``geo_down(r)`` to q**(I - r + 1) (mass on high ranks). Both branches sum
to one analytically and meet the uniform 1/I at g = m from either side.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

Mode = Literal["uniform", "grade-adaptive"]

#: Default steepness / pivot used by the service and simulator.
DEFAULT_STEEPNESS = 0.85
DEFAULT_PIVOT = 0.5


@dataclass(frozen=True)
class AllocationPolicy:
    """Parameters of the allocation PMF.

    q: steepness of the geometric component, in [0, 1]. q = 1 flattens the
       geometric part to uniform; q = 0 degenerates it to a point mass on
       the extreme rank.
    m: pivot grade in (0, 1) at which the PMF is uniform.
    """

    q: float = DEFAULT_STEEPNESS
    m: float = DEFAULT_PIVOT
    mode: Mode = "grade-adaptive"

    def __post_init__(self) -> None:
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"steepness q must be in [0, 1], got {self.q}")
        if not 0.0 < self.m < 1.0:
            raise ValueError(f"pivot m must be in (0, 1), got {self.m}")
        if self.mode not in ("uniform", "grade-adaptive"):
            raise ValueError(f"unknown allocation mode {self.mode!r}")


def _geometric_weights(exponents: np.ndarray, q: float) -> np.ndarray:
    """Normalized q**exponent over the given exponents (each in 1..I).

    Computed in log space so tiny q with large I cannot underflow. The
    q -> 0 limit is a point mass on the smallest exponent; q = 1 is uniform.
    """
    if q == 0.0:
        w = (exponents == exponents.min()).astype(float)
        return w / w.sum()
    logw = exponents * np.log(q)
    logw -= logw.max()
    w = np.exp(logw)
    return w / w.sum()


def allocation_pmf(policy: AllocationPolicy, n_items: int, grade: float) -> np.ndarray:
    """Probability of allocating each difficulty rank 1..n_items at a grade.

    Returns a vector ``p`` with ``p[r - 1]`` the probability of rank ``r``;
    nonnegative and summing to one. ``mode="uniform"`` ignores the grade.
    """
    if n_items < 1:
        raise ValueError(f"n_items must be >= 1, got {n_items}")
    if not 0.0 <= grade <= 1.0:
        raise ValueError(f"grade must be in [0, 1], got {grade}")
    if policy.mode == "uniform":
        return uniform_pmf(n_items)

    ranks = np.arange(1, n_items + 1)
    q, m = policy.q, policy.m
    if grade < m:
        geo = _geometric_weights(ranks, q)  # mass toward rank 1 (easy)
        p = geo * (m - grade) / m + grade / (n_items * m)
    else:
        geo = _geometric_weights(n_items - ranks + 1, q)  # mass toward rank I (hard)
        p = geo * (grade - m) / (1.0 - m) + (1.0 - grade) / (n_items * (1.0 - m))
    return p


def uniform_pmf(n_items: int) -> np.ndarray:
    """The legacy allocation: every item equally likely."""
    if n_items < 1:
        raise ValueError(f"n_items must be >= 1, got {n_items}")
    return np.full(n_items, 1.0 / n_items)


def draw_item(
    p: np.ndarray, ranking: Sequence[str], rng: np.random.Generator | int | None = None
) -> str:
    """Sample an item id from a rank-indexed probability vector.

    Inverse-CDF sampling over ranks; deterministic under a fixed seed.
    ``ranking[r - 1]`` must be the item holding rank ``r``.
    """
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or len(p) != len(ranking):
        raise ValueError(f"probability vector length {p.shape} does not match ranking ({len(ranking)})")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("probability vector must be nonnegative and sum to 1")
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    u = gen.random()
    idx = int(np.searchsorted(np.cumsum(p), u, side="right"))
    idx = min(idx, len(ranking) - 1)  # guard the u ~ 1.0 edge
    return ranking[idx]
