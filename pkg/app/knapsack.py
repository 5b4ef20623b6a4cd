"""
Modular knapsack systems A x = T (mod q) built from a ciphertext and leaked coefficients.

Leaking m_i turns coefficient i of c = 3 r*h + m into one linear equation in r:
3^{-1}(c_i - m_i) = sum_j h_{i-j} r_j (mod q). Known coefficients of r are then
folded into the target and their columns dropped.
"""
import itertools
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Sequence, Tuple

import numpy as np

from app.config import config
from app.exceptions import ComplexityError, ParameterError
from app.ntru import NtruParams
from app.poly import ModPoly, inv3_mod_q

logger = logging.getLogger(__name__)

BOUND_SET = (-1, 0, 1)

Matrix = Tuple[Tuple[int, ...], ...]


@dataclass(frozen=True)
class LeakProfile:
    known_m: Dict[int, int] = field(default_factory=dict)
    known_r: Dict[int, int] = field(default_factory=dict)

    def validate(self, N: int):
        for label, leak in (("m", self.known_m), ("r", self.known_r)):
            for pos, val in leak.items():
                if not 0 <= pos < N:
                    raise ParameterError(f"leaked {label} position {pos} outside [0, {N})")
                if val not in BOUND_SET:
                    raise ParameterError(f"leaked {label}[{pos}] = {val} is not ternary")

    @property
    def k1(self) -> int:
        return len(self.known_m)

    @property
    def k2(self) -> int:
        return len(self.known_r)

    def zero_positions(self) -> List[int]:
        return sorted(p for p, v in self.known_r.items() if v == 0)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "known_m": {str(k): v for k, v in sorted(self.known_m.items())},
            "known_r": {str(k): v for k, v in sorted(self.known_r.items())},
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LeakProfile":
        return cls(
            known_m={int(k): int(v) for k, v in data.get("known_m", {}).items()},
            known_r={int(k): int(v) for k, v in data.get("known_r", {}).items()},
        )


@dataclass(frozen=True)
class KnapsackSystem:
    A: Matrix
    T: Tuple[int, ...]
    q: int
    column_map: Tuple[int, ...]

    def __post_init__(self):
        if len(self.A) != len(self.T):
            raise ParameterError(f"{len(self.A)} rows but {len(self.T)} targets")
        if len(self.column_map) != self.n:
            raise ParameterError("column_map length differs from the column count")
        for row in self.A:
            if len(row) != self.n:
                raise ParameterError("ragged coefficient matrix")
            if any(not 0 <= a < self.q for a in row):
                raise ParameterError("matrix entries must be canonical mod q")
        if any(not 0 <= t < self.q for t in self.T):
            raise ParameterError("targets must be canonical mod q")

    @property
    def k(self) -> int:
        return len(self.A)

    @property
    def n(self) -> int:
        return len(self.column_map)

    @property
    def bound_set(self) -> Tuple[int, ...]:
        return BOUND_SET

    def column(self, j: int) -> List[int]:
        return [row[j] for row in self.A]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "q": self.q,
            "k": self.k,
            "n": self.n,
            "A": [list(row) for row in self.A],
            "T": list(self.T),
            "column_map": list(self.column_map),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "KnapsackSystem":
        return cls(
            A=tuple(tuple(row) for row in data["A"]),
            T=tuple(data["T"]),
            q=data["q"],
            column_map=tuple(data["column_map"]),
        )


def target_entries(c: ModPoly, known_m: Dict[int, int], q: int) -> List[int]:
    """a_i = 3^{-1}(c_i - m_i) mod q, ascending leaked index"""
    inv3 = inv3_mod_q(q)
    return [inv3 * (c.coeffs[i] - known_m[i]) % q for i in sorted(known_m)]


def circulant_row(h: ModPoly, index: int) -> Tuple[int, ...]:
    """(h_l, h_{l-1}, ..., h_{l-(N-1)}), indices mod N"""
    N = h.N
    return tuple(h.coeffs[(index - j) % N] for j in range(N))


def circulant_rows(h: ModPoly, indices: Iterable[int]) -> Matrix:
    indices = sorted(set(indices))
    for i in indices:
        if not 0 <= i < h.N:
            raise ParameterError(f"row index {i} outside [0, {h.N})")
    return tuple(circulant_row(h, i) for i in indices)


def build_system(c: ModPoly, h: ModPoly, leak: LeakProfile, params: NtruParams) -> KnapsackSystem:
    """One equation per leaked message coefficient; known_r is not consumed here"""
    if not leak.known_m:
        raise ParameterError("at least one leaked message coefficient is required")
    leak.validate(params.N)
    q = params.q
    A = circulant_rows(h, leak.known_m)
    T = target_entries(c, leak.known_m, q)
    logger.info("built %dx%d knapsack system mod %d", len(A), params.N, q)
    return KnapsackSystem(A=A, T=tuple(T), q=q, column_map=tuple(range(params.N)))


def reduce_system_with_known_r(system: KnapsackSystem, known_r: Dict[int, int]) -> KnapsackSystem:
    """Drop columns of known nonce coefficients and move their contribution into T"""
    if not known_r:
        return system
    position = {orig: j for j, orig in enumerate(system.column_map)}
    for pos, val in known_r.items():
        if pos not in position:
            raise ParameterError(f"known nonce position {pos} is not a column of the system")
        if val not in BOUND_SET:
            raise ParameterError(f"known r[{pos}] = {val} is not ternary")
    if len(known_r) >= system.n:
        raise ParameterError("every unknown would be eliminated")

    q = system.q
    S = [0] * system.k
    for pos, val in known_r.items():
        if val:
            j = position[pos]
            S = [s + val * row[j] for s, row in zip(S, system.A)]
    keep = [j for j, orig in enumerate(system.column_map) if orig not in known_r]
    A_z = tuple(tuple(row[j] for j in keep) for row in system.A)
    T_z = tuple((t - s) % q for t, s in zip(system.T, S))
    logger.info("eliminated %d known nonce coefficients, %d unknowns remain", len(known_r), len(keep))
    return KnapsackSystem(A=A_z, T=T_z, q=q, column_map=tuple(system.column_map[j] for j in keep))


def verify_solution(system: KnapsackSystem, x: Sequence[int]) -> bool:
    if len(x) != system.n:
        raise ParameterError(f"solution has length {len(x)}, system has {system.n} unknowns")
    if any(v not in system.bound_set for v in x):
        return False
    q = system.q
    return all(sum(a * v for a, v in zip(row, x)) % q == t for row, t in zip(system.A, system.T))


def brute_force_solve(system: KnapsackSystem, limit: int = None) -> List[Tuple[int, ...]]:
    """Every x in bound_set^n with A x = T (mod q), lexicographic order"""
    limit = config.BRUTE_FORCE_LIMIT if limit is None else limit
    n, q = system.n, system.q
    if n > limit:
        raise ComplexityError(f"3^{n} candidates exceed the enumeration limit 3^{limit}")
    if n == 0:
        raise ParameterError("system has no unknowns")

    # the last `tail` coordinates are enumerated as one vectorised block per prefix
    tail = min(n, 10)
    head = n - tail
    dtype = np.int64 if q * 3 * n < 2 ** 62 else object
    A = np.array(system.A, dtype=dtype).reshape(system.k, n)
    T = np.array(system.T, dtype=dtype)
    grid = np.array(list(itertools.product(system.bound_set, repeat=tail)), dtype=dtype).reshape(-1, tail)
    tail_values = A[:, head:] @ grid.T

    solutions = []
    for prefix in itertools.product(system.bound_set, repeat=head):
        residual = T - A[:, :head] @ np.array(prefix, dtype=dtype) if head else T
        hits = np.all((tail_values - residual[:, None]) % q == 0, axis=0)
        for idx in np.flatnonzero(hits):
            solutions.append(tuple(prefix) + tuple(int(v) for v in grid[idx]))
    return solutions
