"""
Embedding lattices for the modular knapsack, in row convention.

For a k x n system the basis is the (n+k+1)-square block matrix

    [ I_n   0    N2 A^T    ]
    [ 0     N1   -N2 T^T   ]
    [ 0     0    N2 q I_k  ]

whose determinant is N1 (N2 q)^k. A ternary solution x appears as the lattice
point (x, N1, 0, ..., 0).
"""
import logging
import re
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple, Union

from sympy import ZZ, QQ, integer_nthroot
from sympy.polys.matrices import DM
from sympy.polys.matrices.exceptions import DMNonInvertibleMatrixError

from app.exceptions import ParameterError
from app.knapsack import KnapsackSystem

logger = logging.getLogger(__name__)

Rows = Tuple[Tuple[int, ...], ...]


@dataclass(frozen=True)
class ScalingParams:
    N1: int
    N2: int
    x: Optional[Union[int, Fraction]] = None

    def __post_init__(self):
        if self.N1 < 1:
            raise ParameterError(f"N1 must be positive, got {self.N1}")
        if self.N2 <= self.N1:
            raise ParameterError(f"need N1 < N2, got N1={self.N1}, N2={self.N2}")

    @classmethod
    def from_exponent(cls, N1: int, q: int, x: Union[int, float, str, Fraction]) -> "ScalingParams":
        """N2 = ceil(q^x), exact for rational x"""
        x = Fraction(x).limit_denominator(1000) if not isinstance(x, int) else x
        if isinstance(x, int) or x.denominator == 1:
            return cls(N1=N1, N2=q ** int(x), x=int(x))
        if x <= 0:
            raise ParameterError(f"exponent must be positive, got {x}")
        root, exact = integer_nthroot(q ** x.numerator, x.denominator)
        return cls(N1=N1, N2=int(root) if exact else int(root) + 1, x=x)

    def to_dict(self):
        return {"N1": self.N1, "N2": self.N2, "x": str(self.x) if self.x is not None else None}


@dataclass(frozen=True)
class EmbeddingLayout:
    n_vars: int
    k: int
    N1: int
    N2: int
    q: int

    @property
    def dim(self) -> int:
        return self.n_vars + self.k + 1

    @property
    def marker(self) -> int:
        """Index of the column carrying N1"""
        return self.n_vars


@dataclass(frozen=True)
class IntegerBasis:
    rows: Rows
    layout: Optional[EmbeddingLayout] = None

    def __post_init__(self):
        D = len(self.rows)
        for row in self.rows:
            if len(row) != D:
                raise ParameterError(f"basis must be square, got a row of length {len(row)} in dimension {D}")
        if self.layout is not None and self.layout.dim != D:
            raise ParameterError(f"layout expects dimension {self.layout.dim}, basis has {D}")

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]], layout: Optional[EmbeddingLayout] = None) -> "IntegerBasis":
        return cls(tuple(tuple(int(v) for v in row) for row in rows), layout)

    @property
    def dim(self) -> int:
        return len(self.rows)

    def with_rows(self, rows: Sequence[Sequence[int]]) -> "IntegerBasis":
        return replace(self, rows=tuple(tuple(int(v) for v in row) for row in rows))

    def column(self, j: int) -> List[int]:
        return [row[j] for row in self.rows]

    def determinant(self) -> int:
        if self.is_upper_triangular():
            det = 1
            for i, row in enumerate(self.rows):
                det *= row[i]
            return det
        return int(DM([list(r) for r in self.rows], ZZ).det())

    def is_upper_triangular(self) -> bool:
        return all(not any(row[:i]) for i, row in enumerate(self.rows))


def expected_determinant(scale: ScalingParams, q: int, k: int) -> int:
    return scale.N1 * (scale.N2 * q) ** k


def build_Bk(system: KnapsackSystem, scale: ScalingParams) -> IntegerBasis:
    n, k, q = system.n, system.k, system.q
    N1, N2 = scale.N1, scale.N2
    D = n + k + 1
    rows = []
    for i in range(n):
        row = [0] * D
        row[i] = 1
        for j in range(k):
            row[n + 1 + j] = N2 * system.A[j][i]
        rows.append(tuple(row))
    rows.append(tuple([0] * n + [N1] + [-N2 * t for t in system.T]))
    for j in range(k):
        row = [0] * D
        row[n + 1 + j] = N2 * q
        rows.append(tuple(row))
    layout = EmbeddingLayout(n_vars=n, k=k, N1=N1, N2=N2, q=q)
    logger.info("embedding basis of dimension %d (N1=%d, N2 has %d bits)", D, N1, N2.bit_length())
    return IntegerBasis(tuple(rows), layout)


def build_Bz(system_z: KnapsackSystem, scale: ScalingParams) -> IntegerBasis:
    """Same block layout over the columns left after eliminating known nonce coefficients"""
    return build_Bk(system_z, scale)


def embed_solution(x: Sequence[int], scale: ScalingParams, k: int) -> Tuple[int, ...]:
    """(x, N1, 0_k); squared norm is |x|^2 + N1^2"""
    if any(v not in (-1, 0, 1) for v in x):
        raise ParameterError("only ternary vectors are embedded")
    return tuple(x) + (scale.N1,) + (0,) * k


def is_lattice_point(basis: IntegerBasis, v: Sequence[int]) -> bool:
    """Exact test that v is an integer combination of the rows of basis"""
    D = basis.dim
    if len(v) != D:
        raise ParameterError(f"vector of length {len(v)} against basis of dimension {D}")
    if basis.is_upper_triangular():
        return _triangular_membership(basis.rows, v)
    # solve c B = v over QQ and check integrality
    BT = DM([list(r) for r in basis.rows], ZZ).transpose().to_field()
    rhs = DM([[int(x)] for x in v], ZZ).to_field()
    try:
        coeffs = BT.lu_solve(rhs)
    except DMNonInvertibleMatrixError as e:
        raise ParameterError("basis rows are linearly dependent") from e
    return all(QQ.denom(c) == 1 for row in coeffs.to_list() for c in row)


def _triangular_membership(rows: Rows, v: Sequence[int]) -> bool:
    D = len(rows)
    coeffs = [0] * D
    for j in range(D):
        pivot = rows[j][j]
        if pivot == 0:
            raise ParameterError("basis rows are linearly dependent")
        acc = v[j] - sum(coeffs[i] * rows[i][j] for i in range(j) if coeffs[i])
        if acc % pivot:
            return False
        coeffs[j] = acc // pivot
    return True


def format_matrix(rows: Sequence[Sequence[int]]) -> str:
    """Bracketed text form: [[a b c]\\n[d e f]]"""
    return "[" + "\n".join("[" + " ".join(str(int(v)) for v in row) + "]" for row in rows) + "]\n"


_ROW = re.compile(r"\[([^\[\]]*)\]")


def parse_matrix(text: str) -> List[List[int]]:
    try:
        rows = [[int(tok) for tok in body.split()] for body in _ROW.findall(text)]
    except ValueError as e:
        raise ParameterError(f"non-integer matrix entry: {e}") from e
    rows = [row for row in rows if row]
    if not rows:
        raise ParameterError("no matrix rows found")
    width = len(rows[0])
    if any(len(row) != width for row in rows):
        raise ParameterError("ragged matrix text")
    return rows
