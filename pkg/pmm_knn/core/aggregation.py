"""
Aggregation operators: support functions, Power Average, Muirhead Mean and
Power Muirhead Mean.

The permutation sum shared by MM and PMM is the permanent of
A[i, j] = b[i] ** p[j]. Three evaluators are provided: a literal
enumeration over all n! permutations (test oracle), Ryser's
inclusion-exclusion formula (any exponent vector, n <= 20) and the
elementary-symmetric-polynomial recurrence for ones-chain exponents
(any n).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import comb
from scipy.stats import gmean

from pmm_knn.core.data import euclidean_distance
from pmm_knn.errors import DimensionalityError, DomainError, ParameterError, SizeError

BRUTEFORCE_MAX_N = 10
RYSER_MAX_N = 20
_CHUNK = 1 << 16
_BALANCE_PASSES = 8

DistanceFunction = Callable[[Any, Any], float]
SupportFunction = Callable[[Any, Any], float]


# --------- Exponent vectors ---------

@dataclass(frozen=True)
class ExponentVector:
    exponents: Tuple[float, ...]

    def __post_init__(self):
        p = tuple(float(v) for v in self.exponents)
        if not p:
            raise ParameterError("exponent vector must not be empty")
        if not all(math.isfinite(v) for v in p):
            raise ParameterError("exponents must be finite")
        if sum(p) == 0:
            raise ParameterError("exponents must not sum to zero")
        object.__setattr__(self, "exponents", p)

    @classmethod
    def ones_chain(cls, r: int, n: int) -> "ExponentVector":
        if not 1 <= r <= n:
            raise ParameterError(f"ones-chain length must satisfy 1 <= r <= n, got r={r}, n={n}")
        return cls((1.0,) * r + (0.0,) * (n - r))

    def __len__(self) -> int:
        return len(self.exponents)

    @property
    def total(self) -> float:
        return math.fsum(self.exponents)

    @property
    def is_ones_chain(self) -> bool:
        return self.ones_count is not None

    @property
    def ones_count(self) -> Optional[int]:
        """r for (1,..,1,0,..,0) with r >= 1 leading ones, otherwise None."""
        p = self.exponents
        r = 0
        while r < len(p) and p[r] == 1.0:
            r += 1
        if r == 0 or any(v != 0.0 for v in p[r:]):
            return None
        return r

    def truncated(self, n: int) -> "ExponentVector":
        return self if n >= len(self) else ExponentVector(self.exponents[:n])

    def as_array(self) -> np.ndarray:
        return np.asarray(self.exponents, dtype=np.float64)


def _as_exponents(p: Union[ExponentVector, Sequence[float]]) -> ExponentVector:
    return p if isinstance(p, ExponentVector) else ExponentVector(tuple(p))


# --------- Supports ---------

def support_inverse_distance(a: Any, b: Any, dist: DistanceFunction = euclidean_distance) -> float:
    d = float(dist(a, b))
    if not math.isfinite(d) or d < 0:
        raise DomainError(f"distance must be finite and nonnegative, got {d}")
    return 1.0 / (1.0 + d)


def power_weights(support: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Return (T, w) for support matrices stacked along the leading axes.

    T[i] sums the supports of item i from every other item; the weights
    w[i] = n (1 + T[i]) / sum_j (1 + T[j]) always sum to n.
    """
    s = np.asarray(support, dtype=np.float64)
    n = s.shape[-1]
    off_diagonal = ~np.eye(n, dtype=bool)
    totals = np.where(off_diagonal, s, 0.0).sum(axis=-1)
    lifted = 1.0 + totals
    weights = n * lifted / lifted.sum(axis=-1, keepdims=True)
    return totals, weights


@dataclass(frozen=True, eq=False)
class SupportContext:
    values: np.ndarray
    pairwise_support: np.ndarray
    totals: np.ndarray
    weights: np.ndarray

    @classmethod
    def from_support_matrix(cls, values: Sequence[Any], support: np.ndarray) -> "SupportContext":
        s = np.asarray(support, dtype=np.float64)
        n = len(values)
        if s.shape != (n, n):
            raise DimensionalityError(f"support matrix must be {n}x{n}, got {s.shape}")
        if np.any(s < 0) or np.any(s > 1):
            raise ParameterError("supports must lie in [0, 1]")
        if not np.allclose(s, s.T, rtol=0.0, atol=1e-12):
            raise ParameterError("support matrix must be symmetric")
        totals, weights = power_weights(s)
        return cls(np.asarray(values, dtype=np.float64), s, totals, weights)

    @property
    def size(self) -> int:
        return int(self.weights.shape[0])

    @property
    def T(self) -> np.ndarray:
        return self.totals


def build_support_context(
    values: Sequence[Any], support: SupportFunction = support_inverse_distance
) -> SupportContext:
    items = np.asarray(values, dtype=np.float64)
    n = len(items)
    if n == 0:
        raise ParameterError("cannot build a support context for no values")
    s = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            s[i, j] = s[j, i] = support(items[i], items[j])
    return SupportContext.from_support_matrix(items, s)


# --------- Permanents and symmetric polynomials ---------

@lru_cache(maxsize=None)
def _permutation_table(n: int) -> np.ndarray:
    table = np.array(list(itertools.permutations(range(n))), dtype=np.int8)
    table.setflags(write=False)
    return table


def permanent_bruteforce(matrix: np.ndarray) -> float:
    a = np.asarray(matrix, dtype=np.float64)
    n = a.shape[0]
    if n > BRUTEFORCE_MAX_N:
        raise SizeError(f"brute-force permanent limited to n <= {BRUTEFORCE_MAX_N}, got {n}")
    table = _permutation_table(n)
    cols = np.arange(n)
    total = 0.0
    for start in range(0, table.shape[0], _CHUNK):
        rows = table[start:start + _CHUNK]
        total += float(np.prod(a[rows, cols], axis=1).sum())
    return total


def _balance(a: np.ndarray, passes: int = _BALANCE_PASSES) -> Tuple[Optional[np.ndarray], float]:
    """Alternately normalise row and column absolute sums.

    Returns (None, 0) when a row or column is all zeros (permanent is 0).
    """
    log_scale = 0.0
    for _ in range(passes):
        for axis in (1, 0):
            sums = np.abs(a).sum(axis=axis)
            if np.any(sums == 0):
                return None, 0.0
            a = a / (sums[:, None] if axis == 1 else sums[None, :])
            log_scale += float(np.log(sums).sum())
    return a, log_scale


def permanent_ryser(matrix: np.ndarray) -> float:
    """Permanent by Ryser inclusion-exclusion, O(2^n n^2).

    Uses the Nijenhuis-Wilf centring (row offsets x_i = a_in - sum_j a_ij / 2),
    which halves the subsets. Rows and columns are first balanced towards unit
    absolute sums; the permanent is multilinear, so the scale factors out.
    """
    a = np.asarray(matrix, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n) or n == 0:
        raise DimensionalityError(f"permanent needs a nonempty square matrix, got {a.shape}")
    if n > RYSER_MAX_N:
        raise SizeError(f"Ryser permanent limited to n <= {RYSER_MAX_N}, got {n}")
    a, log_scale = _balance(a)
    if a is None:
        return 0.0
    x = a[:, n - 1] - 0.5 * a.sum(axis=1)
    head = a[:, : n - 1].T
    shifts = np.arange(n - 1, dtype=np.int64)
    total = 0.0
    for start in range(0, 1 << (n - 1), _CHUNK):
        masks = np.arange(start, min(start + _CHUNK, 1 << (n - 1)), dtype=np.int64)
        bits = ((masks[:, None] >> shifts) & 1).astype(np.float64)
        prods = np.prod(x + bits @ head, axis=1)
        signs = 1.0 - 2.0 * (bits.sum(axis=1) % 2)
        total += float(np.dot(signs, prods))
    return (-1.0) ** (n - 1) * 2.0 * total * math.exp(log_scale)


def elementary_symmetric(values: np.ndarray, r: int, axis: int = 0) -> np.ndarray:
    """e_r of the values along `axis`, vectorized over the remaining axes."""
    b = np.moveaxis(np.asarray(values, dtype=np.float64), axis, 0)
    n = b.shape[0]
    if not 0 <= r <= n:
        raise ParameterError(f"order r must satisfy 0 <= r <= {n}, got {r}")
    e = np.zeros((r + 1,) + b.shape[1:])
    e[0] = 1.0
    for i in range(n):
        for j in range(min(i + 1, r), 0, -1):
            e[j] = e[j] + b[i] * e[j - 1]
    return e[r]


# --------- Muirhead family ---------

def _root(mean: float, total: float) -> float:
    mean = max(mean, 0.0)
    if mean == 0.0:
        if total < 0:
            raise DomainError("permutation sum is zero and the root exponent is negative")
        return 0.0
    return float(mean ** (1.0 / total))


def _aggregate(b: np.ndarray, exponents: ExponentVector, method: str) -> float:
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    p = exponents.as_array()
    n = b.shape[0]
    if n == 0:
        raise ParameterError("cannot aggregate an empty collection")
    if p.shape[0] != n:
        raise DimensionalityError(f"{n} values but {p.shape[0]} exponents")
    if np.any(b < 0) or not np.all(np.isfinite(b)):
        raise DomainError("values must be finite and nonnegative")
    if np.any(b == 0) and np.any(p < 0):
        raise DomainError("zero value with a negative exponent")

    if method == "auto":
        if exponents.is_ones_chain:
            method = "ones-chain"
        elif n <= RYSER_MAX_N:
            method = "ryser"
        else:
            raise SizeError(f"general exponent vectors limited to n <= {RYSER_MAX_N}, got {n}")

    if method == "ones-chain":
        r = exponents.ones_count
        if r is None:
            raise ParameterError("exponent vector is not a ones chain")
        mean = float(elementary_symmetric(b, r)) / float(comb(n, r, exact=True))
    elif method == "ryser":
        mean = permanent_ryser(b[:, None] ** p[None, :]) / math.factorial(n)
    elif method == "bruteforce":
        mean = permanent_bruteforce(b[:, None] ** p[None, :]) / math.factorial(n)
    else:
        raise ParameterError(f"unknown evaluation method: {method}")
    return _root(mean, exponents.total)


def _context_for(values: np.ndarray, ctx: Optional[SupportContext]) -> SupportContext:
    if ctx is None:
        return build_support_context(values)
    if ctx.size != len(values):
        raise DimensionalityError(f"support context has {ctx.size} items, expected {len(values)}")
    return ctx


def power_average(values: Sequence[float], ctx: Optional[SupportContext] = None) -> float:
    a = np.asarray(values, dtype=np.float64).reshape(-1)
    ctx = _context_for(a, ctx)
    lifted = 1.0 + ctx.totals
    return float(np.dot(lifted, a) / lifted.sum())


def muirhead_mean(
    values: Sequence[float], P: Union[ExponentVector, Sequence[float]], method: str = "auto"
) -> float:
    return _aggregate(np.asarray(values, dtype=np.float64), _as_exponents(P), method)


def power_muirhead_mean(
    values: Sequence[float],
    P: Union[ExponentVector, Sequence[float]],
    ctx: Optional[SupportContext] = None,
    method: str = "auto",
) -> float:
    """Muirhead mean of the power-weighted values b_i = w_i * a_i.

    `ctx` may come from the values themselves or from the items the values
    were taken from (e.g. one feature of a set of vectors).
    """
    a = np.asarray(values, dtype=np.float64).reshape(-1)
    ctx = _context_for(a, ctx)
    return _aggregate(ctx.weights * a, _as_exponents(P), method)


def pmm_bruteforce_oracle(values, P, ctx: Optional[SupportContext] = None) -> float:
    if len(values) > BRUTEFORCE_MAX_N:
        raise SizeError(f"brute-force oracle limited to n <= {BRUTEFORCE_MAX_N}, got {len(values)}")
    return power_muirhead_mean(values, P, ctx, method="bruteforce")


def pmm_ryser(values, P, ctx: Optional[SupportContext] = None) -> float:
    if len(values) > RYSER_MAX_N:
        raise SizeError(f"Ryser evaluator limited to n <= {RYSER_MAX_N}, got {len(values)}")
    return power_muirhead_mean(values, P, ctx, method="ryser")


def pmm_ones_chain(values, r: int, ctx: Optional[SupportContext] = None) -> float:
    n = len(values)
    if not 1 <= r <= n:
        raise ParameterError(f"ones-chain length must satisfy 1 <= r <= {n}, got {r}")
    return power_muirhead_mean(values, ExponentVector.ones_chain(r, n), ctx, method="ones-chain")


# --------- Closed forms of the Muirhead special cases ---------

def arithmetic_mean(values: Sequence[float]) -> float:
    return float(np.mean(np.asarray(values, dtype=np.float64)))


def geometric_mean(values: Sequence[float]) -> float:
    with np.errstate(divide="ignore"):
        return float(gmean(np.asarray(values, dtype=np.float64)))


def bonferroni_mean(values: Sequence[float]) -> float:
    a = np.asarray(values, dtype=np.float64)
    n = a.shape[0]
    if n < 2:
        raise ParameterError("Bonferroni mean needs at least two values")
    cross = a.sum() ** 2 - np.dot(a, a)
    return float(math.sqrt(max(cross, 0.0) / (n * (n - 1))))


def maclaurin_mean(values: Sequence[float], r: int) -> float:
    a = [float(v) for v in values]
    n = len(a)
    if not 1 <= r <= n:
        raise ParameterError(f"Maclaurin order must satisfy 1 <= r <= {n}, got {r}")
    total = math.fsum(math.prod(c) for c in itertools.combinations(a, r))
    return (total / comb(n, r, exact=True)) ** (1.0 / r)
