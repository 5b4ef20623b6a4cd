"""
Lattice basis reduction.

The internal reducer is an all-integer LLL: Gram-Schmidt data is carried as the
integers d_i = prod_{j<=i} |b_j*|^2 and lambda_{i,j} = d_{j+1} mu_{i,j}, so every
test is decided exactly with no floating point. External reducers (flatter, fplll)
are driven as subprocesses over the bracketed matrix text format.
"""
import logging
import math
import os
import shlex
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from fractions import Fraction
from operator import mul
from typing import Any, Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np
from sympy import prevprime

from app.config import config
from app.exceptions import ComplexityError, ExternalToolError, IntegrityError, ParameterError, ReductionError
from app.lattice import IntegerBasis, format_matrix, is_lattice_point, parse_matrix

logger = logging.getLogger(__name__)


def _dot(a: Sequence[int], b: Sequence[int]) -> int:
    return sum(map(mul, a, b))


def _delta_parts(delta) -> Tuple[int, int]:
    delta = Fraction(delta)
    if not Fraction(1, 4) < delta <= 1:
        raise ParameterError(f"delta must lie in (1/4, 1], got {delta}")
    return delta.numerator, delta.denominator


def integral_gram_schmidt(rows: Sequence[Sequence[int]]) -> Tuple[List[int], List[List[int]]]:
    """d (length n+1, d[0] = 1) and the lower-triangular lambda table of the rows"""
    n = len(rows)
    d = [1] + [0] * n
    lam = [[0] * n for _ in range(n)]
    for k in range(n):
        for j in range(k + 1):
            u = _dot(rows[k], rows[j])
            for i in range(j):
                u = (d[i + 1] * u - lam[k][i] * lam[j][i]) // d[i]
            if j < k:
                lam[k][j] = u
            else:
                if u == 0:
                    raise ReductionError(f"row {k} is linearly dependent on the previous rows")
                d[k + 1] = u
    return d, lam


def lll_reduce(basis: IntegerBasis, delta=Fraction(3, 4)) -> IntegerBasis:
    """LLL-reduce the rows of basis: |mu_ij| <= 1/2 and the Lovasz condition with delta"""
    num, den = _delta_parts(delta)
    b = [list(r) for r in basis.rows]
    n = len(b)
    if n <= 1:
        return basis
    d = [1] + [0] * n
    lam = [[0] * n for _ in range(n)]

    def red(k: int, l: int):
        dl = d[l + 1]
        lkl = lam[k][l]
        if 2 * abs(lkl) > dl:
            r = (2 * lkl + dl) // (2 * dl)
            bl = b[l]
            b[k] = [x - r * y for x, y in zip(b[k], bl)]
            lam[k][l] = lkl - r * dl
            lk, ll = lam[k], lam[l]
            for i in range(l):
                if ll[i]:
                    lk[i] -= r * ll[i]

    def swap(k: int, kmax: int):
        b[k], b[k - 1] = b[k - 1], b[k]
        lk, lk1 = lam[k], lam[k - 1]
        for j in range(k - 1):
            lk[j], lk1[j] = lk1[j], lk[j]
        L = lk[k - 1]
        dk, dk1 = d[k + 1], d[k]
        B = (d[k - 1] * dk + L * L) // dk1
        for i in range(k + 1, kmax + 1):
            li = lam[i]
            t = li[k]
            li[k] = (dk * li[k - 1] - L * t) // dk1
            li[k - 1] = (B * t + L * li[k]) // dk
        d[k] = B

    d[1] = _dot(b[0], b[0])
    if d[1] == 0:
        raise ReductionError("row 0 is zero")
    k, kmax, swaps = 1, 0, 0
    while k < n:
        if k > kmax:
            kmax = k
            for j in range(k + 1):
                u = _dot(b[k], b[j])
                for i in range(j):
                    u = (d[i + 1] * u - lam[k][i] * lam[j][i]) // d[i]
                if j < k:
                    lam[k][j] = u
                else:
                    if u == 0:
                        raise ReductionError(f"row {k} is linearly dependent on the previous rows")
                    d[k + 1] = u
        red(k, k - 1)
        if den * d[k + 1] * d[k - 1] < num * d[k] * d[k] - den * lam[k][k - 1] ** 2:
            swap(k, kmax)
            swaps += 1
            k = max(1, k - 1)
        else:
            for l in range(k - 2, -1, -1):
                red(k, l)
            k += 1
    logger.debug("LLL finished in dimension %d after %d swaps", n, swaps)
    return basis.with_rows(b)


def check_reduced(basis: IntegerBasis, delta=Fraction(3, 4)) -> bool:
    """Exact check of size reduction and the Lovasz condition"""
    num, den = _delta_parts(delta)
    try:
        d, lam = integral_gram_schmidt(basis.rows)
    except ReductionError:
        return False
    n = basis.dim
    for i in range(n):
        for j in range(i):
            if 2 * abs(lam[i][j]) > d[j + 1]:
                return False
        if i > 0 and den * d[i + 1] * d[i - 1] < num * d[i] * d[i] - den * lam[i][i - 1] ** 2:
            return False
    return True


@dataclass(frozen=True)
class BasisProfile:
    sq_norms: Tuple[Fraction, ...]
    log_norms: Tuple[float, ...]
    drop: float

    def to_dict(self) -> Dict[str, Any]:
        return {"log_norms": list(self.log_norms), "drop": self.drop}


def _log_fraction(x: Fraction) -> float:
    return math.log(x.numerator) - math.log(x.denominator)


def basis_profile(basis: IntegerBasis) -> BasisProfile:
    """l_i = log |b_i*| and drop = sum over descents of (l_i - l_{i+1})"""
    d, _ = integral_gram_schmidt(basis.rows)
    sq = tuple(Fraction(d[i + 1], d[i]) for i in range(basis.dim))
    logs = tuple(0.5 * _log_fraction(s) for s in sq)
    drop = sum(logs[i] - logs[i + 1] for i in range(len(logs) - 1) if logs[i + 1] < logs[i])
    return BasisProfile(sq_norms=sq, log_norms=logs, drop=drop)


def drop_change(before: IntegerBasis, after: IntegerBasis) -> float:
    """drop(after) - drop(before); reduction is not guaranteed to lower it"""
    change = basis_profile(after).drop - basis_profile(before).drop
    if change > 1e-9:
        logger.info("drop rose by %.4f under reduction", change)
    return change


def shortest_vector(basis: IntegerBasis) -> Tuple[int, ...]:
    """A shortest nonzero lattice vector by exact Fincke-Pohst enumeration"""
    n = basis.dim
    if n > config.ENUM_MAX_DIM:
        raise ComplexityError(f"enumeration refused in dimension {n} > {config.ENUM_MAX_DIM}")
    reduced = lll_reduce(basis)
    rows = reduced.rows
    d, lam = integral_gram_schmidt(rows)
    B = [Fraction(d[i + 1], d[i]) for i in range(n)]
    mu = [[Fraction(lam[i][j], d[j + 1]) for j in range(n)] for i in range(n)]

    best = {"norm": Fraction(_dot(rows[0], rows[0])), "coeffs": [1] + [0] * (n - 1)}
    x = [0] * n

    def search(i: int, partial: Fraction):
        center = -sum(x[j] * mu[j][i] for j in range(i + 1, n))
        room = (best["norm"] - partial) / B[i]
        if room < 0:
            return
        radius = math.sqrt(float(room)) + 1
        lo, hi = math.floor(float(center) - radius), math.ceil(float(center) + radius)
        for xi in range(lo, hi + 1):
            step = partial + (xi - center) ** 2 * B[i]
            if step > best["norm"]:
                continue
            x[i] = xi
            if i == 0:
                if step > 0 and (step < best["norm"] or best["coeffs"] is None):
                    best["norm"] = step
                    best["coeffs"] = list(x)
            else:
                search(i - 1, step)
        x[i] = 0

    search(n - 1, Fraction(0))
    coeffs = best["coeffs"]
    return tuple(sum(c * row[j] for c, row in zip(coeffs, rows)) for j in range(n))


def satisfies_lll_bound(reduced: IntegerBasis, vectors: Sequence[Sequence[int]], count: Optional[int] = None) -> bool:
    """|b_j|^2 <= 2^(n-1) max |x_t|^2 for the first `count` reduced rows, given independent lattice vectors x_t"""
    count = len(vectors) if count is None else count
    bound = 2 ** (reduced.dim - 1) * max(_dot(v, v) for v in vectors)
    return all(_dot(row, row) <= bound for row in reduced.rows[:count])


def _det_mod_p(rows: Sequence[Sequence[int]], p: int) -> int:
    M = np.array([[v % p for v in row] for row in rows], dtype=np.int64)
    n = M.shape[0]
    det = 1
    for c in range(n):
        nz = np.flatnonzero(M[c:, c])
        if nz.size == 0:
            return 0
        r = c + int(nz[0])
        if r != c:
            M[[c, r]] = M[[r, c]]
            det = -det
        pivot = int(M[c, c])
        det = det * pivot % p
        inv = pow(pivot, -1, p)
        factors = M[c + 1:, c] * inv % p
        M[c + 1:] = (M[c + 1:] - (factors[:, None] * M[c][None, :]) % p) % p
    return det % p


def same_lattice(before: IntegerBasis, after: IntegerBasis, samples: Optional[int] = None,
                 rng: Optional[np.random.Generator] = None) -> None:
    """Raise IntegrityError unless after spans the same lattice as before"""
    samples = config.INTEGRITY_SAMPLES if samples is None else samples
    rng = rng or np.random.default_rng(0)
    D = before.dim
    if after.dim != D:
        raise IntegrityError(f"reducer returned dimension {after.dim}, expected {D}")

    if D <= config.EXACT_DET_MAX_DIM or before.is_upper_triangular() and after.is_upper_triangular():
        if abs(before.determinant()) != abs(after.determinant()):
            raise IntegrityError("determinant magnitude changed during reduction")
    else:
        p = 2 ** 31 - 1
        for _ in range(3):
            a, b = _det_mod_p(before.rows, p), _det_mod_p(after.rows, p)
            if a != b and a != (-b) % p:
                raise IntegrityError(f"determinant fingerprint mismatch mod {p}")
            p = prevprime(p)

    picks = rng.choice(D, size=min(samples, D), replace=False)
    for i in picks:
        if not is_lattice_point(before, after.rows[int(i)]):
            raise IntegrityError(f"reduced row {int(i)} is not in the input lattice")
    if D <= config.EXACT_DET_MAX_DIM or after.is_upper_triangular():
        for i in picks:
            if not is_lattice_point(after, before.rows[int(i)]):
                raise IntegrityError(f"input row {int(i)} is not in the reduced lattice")


class Reducer(Protocol):
    name: str

    def reduce(self, basis: IntegerBasis) -> IntegerBasis:
        ...

    def describe(self) -> Dict[str, Any]:
        ...


class LLLReducer:
    name = "internal"

    def __init__(self, delta=None):
        self.delta = Fraction(config.LLL_DELTA if delta is None else delta)
        _delta_parts(self.delta)

    def reduce(self, basis: IntegerBasis) -> IntegerBasis:
        return lll_reduce(basis, self.delta)

    def describe(self) -> Dict[str, Any]:
        return {"name": self.name, "delta": str(self.delta)}


@dataclass
class ExternalRun:
    command: List[str]
    returncode: Optional[int]
    stderr: str
    seconds: float


class ExternalReducer:
    """Runs a reducer executable.

    The command template may contain {input} and {output}; without them the matrix
    goes through stdin and the result is read from stdout.
    """
    name = "external"

    def __init__(self, command: str, timeout: Optional[float] = None, verify: bool = True):
        if not command.strip():
            raise ParameterError("external reducer needs a command")
        self.command = command
        self.timeout = config.EXTERNAL_TIMEOUT if timeout is None else timeout
        self.verify = verify
        self.last_run: Optional[ExternalRun] = None

    def reduce(self, basis: IntegerBasis) -> IntegerBasis:
        return external_reduce(basis, self.command, self.timeout, verify=self.verify, reducer=self)

    def describe(self) -> Dict[str, Any]:
        info: Dict[str, Any] = {"name": self.name, "command": self.command, "timeout": self.timeout}
        if self.last_run is not None:
            info["argv"] = self.last_run.command
            info["stderr"] = self.last_run.stderr
            info["seconds"] = round(self.last_run.seconds, 3)
        return info


def _split_command(command: str) -> List[str]:
    try:
        return shlex.split(command)
    except ValueError as e:
        raise ParameterError(f"cannot parse reducer command '{command}': {e}") from e


def external_reduce(basis: IntegerBasis, command: str, timeout: Optional[float] = None,
                    verify: bool = True, reducer: Optional[ExternalReducer] = None) -> IntegerBasis:
    timeout = config.EXTERNAL_TIMEOUT if timeout is None else timeout
    text = format_matrix(basis.rows)
    with tempfile.TemporaryDirectory(prefix="reduce-") as workdir:
        in_path = os.path.join(workdir, "input.txt")
        out_path = os.path.join(workdir, "output.txt")
        argv = [tok.replace("{input}", in_path).replace("{output}", out_path) for tok in _split_command(command)]
        uses_input = "{input}" in command
        uses_output = "{output}" in command
        if uses_input:
            with open(in_path, 'w', encoding='utf-8') as f:
                f.write(text)

        logger.info("running external reducer: %s", " ".join(argv))
        start = time.perf_counter()
        try:
            proc = subprocess.run(argv, input=None if uses_input else text, capture_output=True,
                                  text=True, timeout=timeout, check=False)
        except FileNotFoundError as e:
            raise ExternalToolError(f"executable not found: {argv[0]}", command=argv) from e
        except subprocess.TimeoutExpired as e:
            raise ExternalToolError(f"reducer timed out after {timeout}s", command=argv,
                                    stdout=_text(e.stdout), stderr=_text(e.stderr)) from e
        elapsed = time.perf_counter() - start
        if reducer is not None:
            reducer.last_run = ExternalRun(argv, proc.returncode, proc.stderr, elapsed)
        if proc.stderr:
            logger.debug("reducer stderr:\n%s", proc.stderr)
        if proc.returncode != 0:
            raise ExternalToolError(f"reducer exited with status {proc.returncode}", command=argv,
                                    returncode=proc.returncode, stdout=proc.stdout, stderr=proc.stderr)
        if uses_output:
            if not os.path.exists(out_path):
                raise ExternalToolError("reducer produced no output file", command=argv, stderr=proc.stderr)
            with open(out_path, 'r', encoding='utf-8') as f:
                output = f.read()
        else:
            output = proc.stdout

    try:
        rows = parse_matrix(output)
    except (ParameterError, ValueError) as e:
        raise IntegrityError(f"could not parse reducer output: {e}") from e
    if len(rows) != basis.dim or any(len(r) != basis.dim for r in rows):
        raise IntegrityError(f"reducer returned a {len(rows)}x{len(rows[0])} matrix, expected {basis.dim}-square")
    result = basis.with_rows(rows)
    if verify:
        same_lattice(basis, result)
    logger.info("external reduction finished in %.1fs", elapsed)
    return result


def _text(data) -> str:
    if data is None:
        return ""
    return data.decode(errors="replace") if isinstance(data, bytes) else data


class FpylllReducer:
    """LLL through fpylll, when it is installed"""
    name = "fpylll"

    def __init__(self, delta=None, verify: bool = True):
        self.delta = float(Fraction(config.LLL_DELTA if delta is None else delta))
        self.verify = verify

    def reduce(self, basis: IntegerBasis) -> IntegerBasis:
        try:
            import fpylll
        except ImportError as e:
            raise ExternalToolError("fpylll is not installed", command=["fpylll"]) from e
        m = fpylll.IntegerMatrix.from_matrix([list(r) for r in basis.rows])
        fpylll.LLL.reduction(m, delta=self.delta)
        rows = [[0] * m.ncols for _ in range(m.nrows)]
        m.to_matrix(rows)
        result = basis.with_rows(rows)
        if self.verify:
            same_lattice(basis, result)
        return result

    def describe(self) -> Dict[str, Any]:
        return {"name": self.name, "delta": self.delta}


def _parse_delta(text: str) -> Optional[Fraction]:
    if not text:
        return None
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as e:
        raise ParameterError(f"bad delta '{text}': use a fraction like 3/4 or a decimal like 0.99") from e


def make_reducer(spec: Optional[str] = None, timeout: Optional[float] = None) -> Reducer:
    """'internal', 'internal:<delta>', 'fpylll' or 'external:<command template>'"""
    spec = (spec or config.REDUCER).strip()
    kind, _, arg = spec.partition(":")
    if kind == "internal":
        return LLLReducer(_parse_delta(arg))
    if kind == "fpylll":
        return FpylllReducer(_parse_delta(arg))
    if kind == "external":
        return ExternalReducer(arg, timeout=timeout)
    raise ParameterError(f"unknown reducer '{spec}' (use internal, fpylll or external:<cmd>)")
