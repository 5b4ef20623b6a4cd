"""
Arithmetic in R = Z[x]/(x^N - 1) and its quotients R/q, R/3.

Coefficients are stored lowest degree first. ModPoly keeps canonical residues in
[0, modulus); the centerlifted form is the separate IntegerPoly type.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from sympy import Poly, factorint, symbols
from sympy.polys.polyerrors import NotInvertible as SympyNotInvertible

from app.exceptions import NotInvertible, ParameterError

logger = logging.getLogger(__name__)

_x = symbols("x")
_INT64_SAFE = 2 ** 62


@dataclass(frozen=True)
class ModPoly:
    coeffs: Tuple[int, ...]
    modulus: int

    def __post_init__(self):
        if self.modulus < 1:
            raise ParameterError(f"modulus must be positive, got {self.modulus}")
        if not self.coeffs:
            raise ParameterError("polynomial needs at least one coefficient")
        for c in self.coeffs:
            if not 0 <= c < self.modulus:
                raise ParameterError(f"coefficient {c} outside [0, {self.modulus})")

    @classmethod
    def from_coeffs(cls, coeffs: Sequence[int], modulus: int) -> "ModPoly":
        """Reduce arbitrary integer coefficients into canonical form"""
        return cls(tuple(int(c) % modulus for c in coeffs), modulus)

    @classmethod
    def one(cls, N: int, modulus: int) -> "ModPoly":
        return cls.from_coeffs([1] + [0] * (N - 1), modulus)

    @property
    def N(self) -> int:
        return len(self.coeffs)

    def __add__(self, other: "ModPoly") -> "ModPoly":
        _check_compatible(self, other)
        return ModPoly.from_coeffs([a + b for a, b in zip(self.coeffs, other.coeffs)], self.modulus)

    def __sub__(self, other: "ModPoly") -> "ModPoly":
        _check_compatible(self, other)
        return ModPoly.from_coeffs([a - b for a, b in zip(self.coeffs, other.coeffs)], self.modulus)

    def scale(self, factor: int) -> "ModPoly":
        return ModPoly.from_coeffs([factor * c for c in self.coeffs], self.modulus)

    def is_one(self) -> bool:
        return self.coeffs[0] == 1 % self.modulus and not any(self.coeffs[1:])


@dataclass(frozen=True)
class IntegerPoly:
    coeffs: Tuple[int, ...]

    @property
    def N(self) -> int:
        return len(self.coeffs)

    def reduce(self, modulus: int) -> ModPoly:
        return ModPoly.from_coeffs(self.coeffs, modulus)

    def norm_sq(self) -> int:
        return sum(c * c for c in self.coeffs)


@dataclass(frozen=True)
class TernaryPoly:
    coeffs: Tuple[int, ...]
    weights: Optional[Tuple[int, int]] = None

    def __post_init__(self):
        for c in self.coeffs:
            if c not in (-1, 0, 1):
                raise ParameterError(f"ternary coefficient expected, got {c}")
        if self.weights is not None and self.counts() != tuple(self.weights):
            raise ParameterError(f"declared weights {self.weights} but found {self.counts()}")

    @property
    def N(self) -> int:
        return len(self.coeffs)

    def counts(self) -> Tuple[int, int]:
        """(number of ones, number of minus ones)"""
        return self.coeffs.count(1), self.coeffs.count(-1)

    def to_mod(self, modulus: int) -> ModPoly:
        return ModPoly.from_coeffs(self.coeffs, modulus)

    def to_integer(self) -> IntegerPoly:
        return IntegerPoly(tuple(self.coeffs))

    def norm_sq(self) -> int:
        return sum(c * c for c in self.coeffs)


def _check_compatible(a: ModPoly, b: ModPoly):
    if a.N != b.N:
        raise ParameterError(f"ring degree mismatch: {a.N} vs {b.N}")
    if a.modulus != b.modulus:
        raise ParameterError(f"modulus mismatch: {a.modulus} vs {b.modulus}")


def cyclic_convolve(a: Sequence[int], b: Sequence[int], bound: int) -> np.ndarray:
    """Product in Z[x]/(x^N - 1) of two length-N integer vectors.

    `bound` is an upper bound on |a_i| * |b_j|; int64 is used when N * bound fits.
    """
    N = len(a)
    if len(b) != N:
        raise ParameterError(f"ring degree mismatch: {N} vs {len(b)}")
    dtype = np.int64 if N * bound < _INT64_SAFE else object
    full = np.convolve(np.array(a, dtype=dtype), np.array(b, dtype=dtype))
    out = full[:N].copy()
    out[:N - 1] += full[N:]
    return out


def conv_mod(a: ModPoly, b: ModPoly) -> ModPoly:
    """c_k = sum over i + j = k (mod N) of a_i b_j, reduced mod q"""
    _check_compatible(a, b)
    q = a.modulus
    prod = cyclic_convolve(a.coeffs, b.coeffs, (q - 1) * (q - 1))
    return ModPoly.from_coeffs([int(c) for c in prod], q)


def _invert_prime(f: ModPoly, p: int) -> ModPoly:
    N = f.N
    if not any(c % p for c in f.coeffs):
        raise NotInvertible(f"zero polynomial has no inverse mod {p}")
    fp = Poly(list(reversed([c % p for c in f.coeffs])), _x, modulus=p)
    ring = Poly(_x ** N - 1, _x, modulus=p)
    try:
        inv = fp.invert(ring)
    except SympyNotInvertible as e:
        raise NotInvertible(f"polynomial not invertible in R/{p}") from e
    coeffs = [int(c) % p for c in reversed(inv.all_coeffs())]
    coeffs += [0] * (N - len(coeffs))
    return ModPoly(tuple(coeffs[:N]), p)


def invert_poly(f: ModPoly, modulus: Optional[int] = None) -> ModPoly:
    """Inverse of f in R/modulus for a prime or prime-power modulus.

    Prime moduli go through the extended Euclidean algorithm over GF(p)[x];
    prime powers p^e are Hensel-lifted from the mod-p inverse with F <- F(2 - fF).
    """
    modulus = modulus or f.modulus
    if modulus != f.modulus:
        raise ParameterError(f"polynomial lives mod {f.modulus}, not mod {modulus}")
    factors = factorint(modulus)
    if len(factors) != 1:
        raise ParameterError(f"modulus {modulus} is not a prime power")
    (p, e), = factors.items()

    F = _invert_prime(f, p)
    if e > 1:
        F = ModPoly.from_coeffs(F.coeffs, modulus)
        two = ModPoly.one(f.N, modulus).scale(2)
        precision = 1
        while precision < e:
            F = conv_mod(F, two - conv_mod(f, F))
            precision *= 2
    if not conv_mod(f, F).is_one():
        raise NotInvertible(f"polynomial not invertible in R/{modulus}")
    return F


def centerlift(p: ModPoly) -> IntegerPoly:
    """Map each residue into (-q/2, q/2]"""
    q = p.modulus
    half = q // 2
    return IntegerPoly(tuple(c - q if c > half else c for c in p.coeffs))


def make_rng(seed: Optional[int]) -> np.random.Generator:
    """Seedable PCG64 generator (128-bit state)"""
    return np.random.default_rng(seed)


def sample_ternary(N: int, rng: np.random.Generator, degree_bound: bool = True) -> TernaryPoly:
    """Uniform ternary polynomial; coefficient N-1 stays zero under the degree bound"""
    free = N - 1 if degree_bound else N
    coeffs = [int(c) for c in rng.integers(-1, 2, size=free)] + [0] * (N - free)
    return TernaryPoly(tuple(coeffs))


def sample_fixed_weight(N: int, d1: int, d2: int, rng: np.random.Generator,
                        degree_bound: bool = True) -> TernaryPoly:
    """Exactly d1 ones and d2 minus-ones at uniformly chosen positions"""
    free = N - 1 if degree_bound else N
    if d1 < 0 or d2 < 0 or d1 + d2 > free:
        raise ParameterError(f"cannot place weights ({d1}, {d2}) in {free} positions")
    positions = rng.permutation(free)[:d1 + d2]
    coeffs = [0] * N
    for pos in positions[:d1]:
        coeffs[int(pos)] = 1
    for pos in positions[d1:]:
        coeffs[int(pos)] = -1
    return TernaryPoly(tuple(coeffs), weights=(d1, d2))


def inv3_mod_q(q: int) -> int:
    if q % 3 == 0:
        raise ParameterError(f"3 is not invertible mod {q}")
    return pow(3, -1, q)
