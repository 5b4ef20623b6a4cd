"""
Smith normal form over Z, integer kernels, and the zero-block theorem checker.

The theorem: if A (k x N, full row rank) has integer kernel V with V and
W = span(e_1..e_k) meeting only in zero, then for N2^2 > c(N, k) every LLL-reduced
basis of the embedding lattice has its first N rows zero on the last k columns,
which is what makes the marker scan work.
"""
import logging
import math
from dataclasses import dataclass, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

from sympy import ZZ
from sympy.polys.matrices import DM

from app.exceptions import ParameterError, TheoremError
from app.knapsack import KnapsackSystem
from app.lattice import IntegerBasis, ScalingParams, build_Bk
from app.reduction import Reducer, make_reducer

logger = logging.getLogger(__name__)

IntMatrix = List[List[int]]


@dataclass(frozen=True)
class SnfDecomposition:
    D: Tuple[Tuple[int, ...], ...]
    P: Tuple[Tuple[int, ...], ...]
    Q: Tuple[Tuple[int, ...], ...]
    divisors: Tuple[int, ...]

    @property
    def rank(self) -> int:
        return len(self.divisors)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "divisors": list(self.divisors),
            "D": [list(r) for r in self.D],
            "P": [list(r) for r in self.P],
            "Q": [list(r) for r in self.Q],
        }


def _identity(n: int) -> IntMatrix:
    return [[int(i == j) for j in range(n)] for i in range(n)]


def _freeze(M: IntMatrix) -> Tuple[Tuple[int, ...], ...]:
    return tuple(tuple(row) for row in M)


def smith_normal_form(A: Sequence[Sequence[int]]) -> SnfDecomposition:
    """P A Q = D with P, Q unimodular and d_1 | d_2 | ... | d_r, all d_i > 0"""
    M = [[int(v) for v in row] for row in A]
    k = len(M)
    if k == 0 or not M[0]:
        raise ParameterError("empty matrix")
    n = len(M[0])
    if any(len(row) != n for row in M):
        raise ParameterError("ragged matrix")
    if not any(any(row) for row in M):
        raise ParameterError("zero matrix has no Smith form to speak of")
    P, Q = _identity(k), _identity(n)

    def swap_rows(i, j):
        M[i], M[j] = M[j], M[i]
        P[i], P[j] = P[j], P[i]

    def swap_cols(i, j):
        for X in (M, Q):
            for row in X:
                row[i], row[j] = row[j], row[i]

    def add_row(dst, src, f):
        M[dst] = [a + f * b for a, b in zip(M[dst], M[src])]
        P[dst] = [a + f * b for a, b in zip(P[dst], P[src])]

    def add_col(dst, src, f):
        for X in (M, Q):
            for row in X:
                row[dst] += f * row[src]

    divisors = []
    for t in range(min(k, n)):
        while True:
            # smallest nonzero magnitude in the trailing block
            best = None
            for i in range(t, k):
                for j in range(t, n):
                    v = M[i][j]
                    if v and (best is None or abs(v) < best[0]):
                        best = (abs(v), i, j)
            if best is None:
                break
            _, i, j = best
            if i != t:
                swap_rows(t, i)
            if j != t:
                swap_cols(t, j)
            pivot = M[t][t]
            clear = True
            for i in range(t + 1, k):
                if M[i][t]:
                    add_row(i, t, -(M[i][t] // pivot))
                    clear = clear and M[i][t] == 0
            for j in range(t + 1, n):
                if M[t][j]:
                    add_col(j, t, -(M[t][j] // pivot))
                    clear = clear and M[t][j] == 0
            if not clear:
                continue
            offending = next((i for i in range(t + 1, k)
                              if any(M[i][j] % pivot for j in range(t + 1, n))), None)
            if offending is None:
                break
            add_row(t, offending, 1)
        if M[t][t] == 0:
            break
        if M[t][t] < 0:
            M[t] = [-v for v in M[t]]
            P[t] = [-v for v in P[t]]
        divisors.append(M[t][t])

    logger.debug("Smith form of %dx%d matrix: divisors %s", k, n, divisors)
    return SnfDecomposition(D=_freeze(M), P=_freeze(P), Q=_freeze(Q), divisors=tuple(divisors))


def kernel_basis(A: Sequence[Sequence[int]], snf: Optional[SnfDecomposition] = None) -> List[Tuple[int, ...]]:
    """The last n - r columns of Q generate Ker_Z(A)"""
    snf = snf or smith_normal_form(A)
    n = len(snf.Q)
    return [tuple(snf.Q[i][j] for i in range(n)) for j in range(snf.rank, n)]


def _rank(rows: Sequence[Sequence[int]]) -> int:
    return DM([list(r) for r in rows], ZZ).to_field().rank()


def check_precondition(A: Sequence[Sequence[int]]) -> bool:
    """Ker(A) and span(e_1..e_k) intersect trivially"""
    k, n = len(A), len(A[0])
    if _rank(A) < k:
        raise ParameterError(f"matrix has rank below its {k} rows")
    stacked = kernel_basis(A) + [tuple(int(i == j) for j in range(n)) for i in range(k)]
    return _rank(stacked) == n


@dataclass(frozen=True)
class TheoremCheck:
    precondition_holds: bool
    c_bound: int
    N2_min: int
    lower: int
    N2: Optional[int] = None
    zero_block_ok: Optional[bool] = None
    marker_gcd: Optional[int] = None

    @property
    def admissible(self) -> bool:
        if not self.lower < self.c_bound:
            return False
        return self.N2 is None or self.N2 * self.N2 > self.c_bound

    def to_dict(self) -> Dict[str, Any]:
        return {
            "precondition_holds": self.precondition_holds,
            "c_bound": self.c_bound,
            "N2_min": self.N2_min,
            "N2": self.N2,
            "admissible": self.admissible,
            "zero_block_ok": self.zero_block_ok,
            "marker_gcd": self.marker_gcd,
        }


def theorem_bound(A: Sequence[Sequence[int]], r: Sequence[int], N1: int, q: int) -> TheoremCheck:
    """c(N,k) = 2^(N+k) max(|r|^2 + N1^2, |q_j|^2, q^2) over the embedded independent set"""
    k, n = len(A), len(A[0])
    if len(r) != n:
        raise ParameterError(f"solution has length {len(r)}, matrix has {n} columns")
    if not check_precondition(A):
        raise TheoremError("kernel meets span(e_1..e_k) nontrivially")
    norms = [sum(v * v for v in r) + N1 * N1]
    norms += [sum(v * v for v in qj) for qj in kernel_basis(A)]
    if k > 1:
        norms.append(q * q)
    c = 2 ** (n + k) * max(norms)
    return TheoremCheck(
        precondition_holds=True,
        c_bound=c,
        N2_min=math.isqrt(c) + 1,
        lower=2 ** (n + k) * N1 * N1,
    )


def check_zero_block(reduced: IntegerBasis, n_vars: int, k: int, N1: Optional[int] = None) -> bool:
    """Rows [0, n_vars) vanish on columns n_vars+1 .. n_vars+k and N1 divides the marker column"""
    if N1 is None:
        N1 = reduced.layout.N1 if reduced.layout is not None else 1
    for i, row in enumerate(reduced.rows):
        if row[n_vars] % N1:
            return False
        if i < n_vars and any(row[n_vars + 1:n_vars + 1 + k]):
            return False
    return True


def verify_theorem(system: KnapsackSystem, r: Sequence[int], N1: int = 1,
                   reducer: Optional[Reducer] = None, N2: Optional[int] = None) -> TheoremCheck:
    """Reduce the embedding with an admissible N2 and replay the zero-block conclusion"""
    check = theorem_bound(system.A, r, N1, system.q)
    N2 = N2 if N2 is not None else max(check.N2_min, N1 + 1)
    basis = build_Bk(system, ScalingParams(N1=N1, N2=N2))
    reduced = (reducer or make_reducer("internal")).reduce(basis)
    zero_ok = check_zero_block(reduced, system.n, system.k, N1)
    marker_gcd = math.gcd(*reduced.column(system.n))
    logger.info("zero block %s, marker gcd %d", "holds" if zero_ok else "fails", marker_gcd)
    return replace(check, N2=N2, zero_block_ok=zero_ok, marker_gcd=marker_gcd)


def theorem_gap(check: TheoremCheck, scale: ScalingParams) -> float:
    """log2(N2_min) - log2(N2): how far a configured scaling sits below the proven bound"""
    return math.log2(check.N2_min) - math.log2(scale.N2)


def bound_floor(n_vars: int, k: int, q: int, N1: int = 1) -> int:
    """Least value c(N,k) can take for this shape, before the nonce and kernel are known"""
    return 2 ** (n_vars + k) * max(q * q if k > 1 else 0, N1 * N1)


def floor_gap(n_vars: int, k: int, q: int, scale: ScalingParams) -> float:
    """theorem_gap against bound_floor; a lower bound on the gap of any instance of this shape"""
    return math.log2(math.isqrt(bound_floor(n_vars, k, q, scale.N1)) + 1) - math.log2(scale.N2)
