"""Closed forms and certified truncations for the contour-counting series.

Both series are functions of the entropy-energy ratio ``x = 3 exp(-2 beta J)``
and converge exactly when ``x < 1``:

* ``c_beta``:        sum_{n>=4} (2n+3) 3^(n-1) exp(-2 beta J n)
* ``peierls_bound``: exp(6 beta l1) * sum_{n>=4} n x^n

The closed forms reduce to geometric-series identities

    sum_{n>=4} n x^n = x^4 (4 - 3x) / (1-x)^2
    sum_{n>=4} x^n   = x^4 / (1-x)

(the first is the cancellation-free rearrangement of
x/(1-x)^2 - x - 2x^2 - 3x^3, exact for small x where the subtractive form
loses digits), and the truncated evaluators carry the exact tail of the
dropped terms, so a truncation's value plus its error bound always brackets
the true sum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidRegionError, RegimeError, VerificationError
from .field_lattice import Region, Site

MAX_LOOP_LENGTH = 10


@dataclass(frozen=True)
class SeriesValue:
    """A series evaluation: value, certified truncation error, and provenance."""

    value: float
    truncation_error_bound: float
    closed_form_used: bool


def entropy_ratio(beta: float, J: float) -> float:
    """x = 3 exp(-2 beta J), the per-step growth ratio of the loop-count series."""
    return 3.0 * math.exp(-2.0 * beta * J)


def _require_convergent(beta: float, J: float) -> float:
    x = entropy_ratio(beta, J)
    if x >= 1.0:
        raise RegimeError(
            f"series diverges: 3*exp(-2*beta*J) = {x:.6g} >= 1 "
            f"(margin {1.0 - x:.6g}); increase beta*J above ln(3)/2"
        )
    return x


def _tail_sum_n_xn(x: float, last_kept: int) -> float:
    # Exact value of sum_{n > last_kept} n x^n.
    n1 = last_kept + 1
    return x**n1 * (n1 / (1.0 - x) + x / (1.0 - x) ** 2)


def _tail_sum_xn(x: float, last_kept: int) -> float:
    return x ** (last_kept + 1) / (1.0 - x)


def _sum_n_xn_from_4(x: float) -> float:
    return x**4 * (4.0 - 3.0 * x) / (1.0 - x) ** 2


def c_beta(beta: float, J: float = 1.0) -> SeriesValue:
    """Closed form of sum_{n>=4} (2n+3) 3^(n-1) exp(-2 beta J n)."""
    x = _require_convergent(beta, J)
    s1 = _sum_n_xn_from_4(x)
    s0 = x**4 / (1.0 - x)
    return SeriesValue(value=(2.0 * s1 + 3.0 * s0) / 3.0, truncation_error_bound=0.0, closed_form_used=True)


def c_beta_truncated(beta: float, J: float = 1.0, terms: int = 10**6) -> SeriesValue:
    """Direct truncation of the same series with the exact tail as error bound."""
    x = _require_convergent(beta, J)
    last = 3 + terms
    n = np.arange(4, last + 1, dtype=np.float64)
    value = float(np.sum((2.0 * n + 3.0) / 3.0 * np.exp(n * math.log(x)))) if x > 0 else 0.0
    tail = (2.0 * _tail_sum_n_xn(x, last) + 3.0 * _tail_sum_xn(x, last)) / 3.0
    return SeriesValue(value=value, truncation_error_bound=tail, closed_form_used=False)


def peierls_bound(beta: float, J: float, l1_norm: float) -> SeriesValue:
    """Closed form of exp(6 beta l1) * sum_{n>=4} n x^n.

    This dominates the minus-boundary probability of a plus spin whenever
    J > 3 l1; the evaluation itself only needs convergence (x < 1).
    """
    if l1_norm < 0 or math.isinf(l1_norm):
        raise RegimeError(f"l1 norm must be finite and nonnegative, got {l1_norm}")
    x = _require_convergent(beta, J)
    return SeriesValue(
        value=math.exp(6.0 * beta * l1_norm) * _sum_n_xn_from_4(x),
        truncation_error_bound=0.0,
        closed_form_used=True,
    )


def peierls_bound_truncated(
    beta: float, J: float, l1_norm: float, terms: int = 10**6
) -> SeriesValue:
    if l1_norm < 0 or math.isinf(l1_norm):
        raise RegimeError(f"l1 norm must be finite and nonnegative, got {l1_norm}")
    x = _require_convergent(beta, J)
    last = 3 + terms
    n = np.arange(4, last + 1, dtype=np.float64)
    partial = float(np.sum(n * np.exp(n * math.log(x)))) if x > 0 else 0.0
    factor = math.exp(6.0 * beta * l1_norm)
    return SeriesValue(
        value=factor * partial,
        truncation_error_bound=factor * _tail_sum_n_xn(x, last),
        closed_form_used=False,
    )


def plus_bc_lower_bound(beta: float, J: float = 1.0) -> float:
    """1 - 2 c(beta): a floor for the plus-boundary magnetization when h >= 0.

    A pointwise nonnegative field can only raise the plus-boundary
    magnetization above its zero-field value, and the zero-field probability
    of a minus spin is at most c(beta).
    """
    return 1.0 - 2.0 * c_beta(beta, J).value


# ---------------------------------------------------------------------------
# empirical certification of the n * 3^n loop-count overestimate


def _clusters_containing(root: Site, max_size: int) -> list[frozenset[Site]]:
    """All subsets containing ``root`` that are connected under 8-adjacency.

    8-adjacency (edge or corner touch) is a superset of the adjacency that
    merges sites into one contour, so every single-contour plus set appears.
    Each cluster is enumerated exactly once.
    """

    def adjacent(site: Site) -> list[Site]:
        x, y = site
        return [
            (x + dx, y + dy)
            for dx in (-1, 0, 1)
            for dy in (-1, 0, 1)
            if (dx, dy) != (0, 0)
        ]

    results: list[frozenset[Site]] = []

    def rec(cluster: frozenset[Site], banned: frozenset[Site]) -> None:
        results.append(cluster)
        if len(cluster) == max_size:
            return
        frontier = sorted(
            {n for s in cluster for n in adjacent(s)} - cluster - banned
        )
        for k, v in enumerate(frontier):
            rec(cluster | {v}, banned | frozenset(frontier[:k]))

    rec(frozenset([root]), frozenset())
    return results


def count_surrounding_contours(region: Region, i: Site, n: int) -> int:
    """Exhaustive count of single contours of length ``n`` enclosing ``i``.

    Enumerates candidate plus sets (their area is at most (n/4)^2 by the
    isoperimetric inequality), keeps those whose disagreement edges trace to
    exactly one loop of length ``n``, and certifies the count against the
    n * 3^n overestimate used by the probability bound.
    """
    from .contour import dual_edges_of_plus_set, trace_loops  # cycle-free at call time

    if n % 2 != 0:
        raise ValueError(f"contours have even length, got n={n}")
    if not 4 <= n <= MAX_LOOP_LENGTH:
        raise ValueError(f"loop length must be in [4, {MAX_LOOP_LENGTH}], got {n}")
    if i not in region.sites:
        raise ValueError(f"site {i} is not in the box")
    max_size = (n * n) // 16
    x, y = i
    for dx in range(-max_size, max_size + 1):
        for dy in range(-max_size + abs(dx), max_size - abs(dx) + 1):
            if (x + dx, y + dy) not in region.sites:
                raise InvalidRegionError(
                    f"box too small: length-{n} loops around {i} need all sites "
                    f"within graph distance {max_size} inside the box"
                )
    count = 0
    for cluster in _clusters_containing(i, max_size):
        loops = trace_loops(dual_edges_of_plus_set(cluster))
        if len(loops) == 1 and len(loops[0]) == n:
            count += 1
    limit = n * 3**n
    if count > limit:
        raise VerificationError(
            f"loop count {count} exceeds the n*3^n overestimate {limit} for n={n}"
        )
    return count
