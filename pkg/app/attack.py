"""
Message recovery from partially leaked plaintext (and optionally nonce) coefficients.

The leaked coefficients give a modular knapsack in the nonce r. Its embedding
lattice is reduced; rows whose marker column holds a nonzero multiple of N1 and
whose leading part has gcd equal to that multiple are normalized into candidate
nonces. The first candidate that is ternary, short enough and satisfies the
original system is accepted and m' = centerlift(c - 3 h*r') is returned.
"""
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.config import config
from app.exceptions import ParameterError
from app.knapsack import (BOUND_SET, KnapsackSystem, LeakProfile, build_system,
                          reduce_system_with_known_r, verify_solution)
from app.lattice import IntegerBasis, ScalingParams, build_Bk, build_Bz
from app.ntru import Ciphertext, KeyPair, NtruParams, encrypt, keygen, sample_message, sample_nonce
from app.poly import IntegerPoly, ModPoly, TernaryPoly, centerlift, conv_mod
from app.reduction import Reducer, make_reducer

logger = logging.getLogger(__name__)

RECOVERED = "recovered"
NOT_FOUND = "not-found"

LEAK_MODES = ("prefix", "random")

# tabulated thresholds for the standard sets
APP_VALUES = {509: 19, 677: 21, 821: 24}

# default (N1, x) with N2 = ceil(q^x)
CALIBRATED_SCALING: Dict[str, Tuple[int, int]] = {
    "ntruhps2048509": (9, 8),
    "ntruhps2048677": (1, 15),
    "ntruhps4096821": (7, 21),
    "toy31": (1, 2),
    "toy61": (1, 2),
    "toy101": (1, 2),
}


def app_value_for(N: int) -> int:
    """Norm threshold for candidate nonces: E[|r|^2] = 2N/3, rounded up plus one"""
    if N < 1:
        raise ParameterError(f"N must be positive, got {N}")
    if N in APP_VALUES:
        return APP_VALUES[N]
    s = math.isqrt(2 * N // 3)
    while 3 * s * s < 2 * N:
        s += 1
    return s + 1


def default_scaling(params: NtruParams) -> ScalingParams:
    N1, x = CALIBRATED_SCALING.get(params.name, (1, 2))
    return ScalingParams.from_exponent(N1, params.q, x)


@dataclass(frozen=True)
class AttackConfig:
    params: NtruParams
    scale: ScalingParams
    k1: int
    k2: int = 0
    leak_mode: str = "prefix"
    app_value: Optional[int] = None
    reducer: str = "internal"
    seed: Optional[int] = None
    timeout: Optional[float] = None

    def __post_init__(self):
        N = self.params.N
        if self.k1 < 1:
            raise ParameterError(f"at least one message coefficient must leak, got k1={self.k1}")
        if self.k1 > N or not 0 <= self.k2 < N:
            raise ParameterError(f"leak sizes k1={self.k1}, k2={self.k2} do not fit N={N}")
        if self.leak_mode not in LEAK_MODES:
            raise ParameterError(f"leak mode must be one of {LEAK_MODES}, got '{self.leak_mode}'")
        if self.app_value is not None and self.app_value <= 0:
            raise ParameterError("app_value must be positive")

    @property
    def threshold(self) -> int:
        return self.app_value if self.app_value is not None else app_value_for(self.params.N)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "params": self.params.to_dict(),
            "scale": self.scale.to_dict(),
            "k1": self.k1,
            "k2": self.k2,
            "leak_mode": self.leak_mode,
            "app_value": self.threshold,
            "reducer": self.reducer,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class AttackInstance:
    """Public data plus the leak; ct keeps the generator's m and r for scoring only"""
    params: NtruParams
    h: ModPoly
    ct: Ciphertext
    leak: LeakProfile
    keys: Optional[KeyPair] = None

    @property
    def c(self) -> ModPoly:
        return self.ct.c

    def to_dict(self, include_secrets: bool = True) -> Dict[str, Any]:
        data = {
            "params": self.params.to_dict(),
            "h": list(self.h.coeffs),
            "ciphertext": self.ct.to_dict(include_secrets),
            "leak": self.leak.to_dict(),
        }
        if include_secrets and self.keys is not None:
            data["keys"] = self.keys.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "AttackInstance":
        params = NtruParams.from_dict(data["params"])
        return cls(
            params=params,
            h=ModPoly(tuple(data["h"]), params.q),
            ct=Ciphertext.from_dict(data["ciphertext"], params),
            leak=LeakProfile.from_dict(data["leak"]),
            keys=KeyPair.from_dict(data["keys"], params) if "keys" in data else None,
        )


def _leak_positions(N: int, k: int, mode: str, rng: np.random.Generator) -> List[int]:
    if mode == "prefix":
        return list(range(k))
    return sorted(int(p) for p in rng.choice(N, size=k, replace=False))


def make_instance(params: NtruParams, k1: int, k2: int = 0, leak_mode: str = "prefix",
                  rng: Optional[np.random.Generator] = None) -> AttackInstance:
    """Keygen, encrypt a random message and leak k1 coefficients of m and k2 of r"""
    if leak_mode not in LEAK_MODES:
        raise ParameterError(f"leak mode must be one of {LEAK_MODES}, got '{leak_mode}'")
    if not 0 <= k1 <= params.N or not 0 <= k2 < params.N:
        raise ParameterError(f"leak sizes k1={k1}, k2={k2} do not fit N={params.N}")
    rng = rng if rng is not None else np.random.default_rng(config.SEED)
    keys = keygen(params, rng)
    m = sample_message(params, rng)
    r = sample_nonce(params, rng)
    ct = encrypt(keys.h, m, r, params)
    known_m = {p: m.coeffs[p] for p in _leak_positions(params.N, k1, leak_mode, rng)}
    known_r = {p: r.coeffs[p] for p in _leak_positions(params.N, k2, leak_mode, rng)}
    return AttackInstance(params=params, h=keys.h, ct=ct, leak=LeakProfile(known_m, known_r), keys=keys)


@dataclass(frozen=True)
class ScanRecord:
    index: int
    marker: int
    quotient: Optional[int]
    gcd: int
    norm_sq: int
    candidate: bool
    within_norm: bool = False
    verified: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {
            "index": self.index,
            "marker": self.marker,
            "quotient": self.quotient,
            "gcd": self.gcd,
            "norm_sq": self.norm_sq,
            "candidate": self.candidate,
            "within_norm": self.within_norm,
            "verified": self.verified,
        }


@dataclass(frozen=True)
class AttackOutcome:
    status: str
    algorithm: int
    r: Optional[TernaryPoly] = None
    m: Optional[IntegerPoly] = None
    accepted_row: Optional[int] = None
    trace: Tuple[ScanRecord, ...] = ()
    timings: Dict[str, float] = field(default_factory=dict)
    reducer: Dict[str, Any] = field(default_factory=dict)
    dim: int = 0

    @property
    def recovered(self) -> bool:
        return self.status == RECOVERED

    @property
    def hits(self) -> int:
        return sum(1 for rec in self.trace if rec.verified)

    def replay(self, c: ModPoly, h: ModPoly) -> bool:
        """c == 3 h*r' + m' (mod q)"""
        if not self.recovered:
            return False
        q = c.modulus
        return conv_mod(self.r.to_mod(q), h).scale(3) + self.m.reduce(q) == c

    def to_dict(self) -> Dict[str, Any]:
        return {
            "status": self.status,
            "algorithm": self.algorithm,
            "r": list(self.r.coeffs) if self.r is not None else None,
            "m": list(self.m.coeffs) if self.m is not None else None,
            "accepted_row": self.accepted_row,
            "dim": self.dim,
            "trace": [rec.to_dict() for rec in self.trace],
            "timings": self.timings,
            "reducer": self.reducer,
        }


def scan_basis(reduced: IntegerBasis, scale: ScalingParams, n_vars: int) -> List[Tuple[ScanRecord, Optional[Tuple[int, ...]]]]:
    """Walk rows [0, n_vars) and normalize every row passing the quotient test"""
    results = []
    for i in range(min(n_vars, reduced.dim)):
        row = reduced.rows[i]
        marker = row[n_vars]
        if marker == 0:
            continue
        quotient = marker // scale.N1 if marker % scale.N1 == 0 else None
        head = row[:n_vars]
        g = math.gcd(*head)
        norm_sq = sum(v * v for v in head)
        if quotient is None or g != abs(quotient):
            logger.debug("row %d: marker %d rejected (gcd %d)", i, marker, g)
            results.append((ScanRecord(i, marker, quotient, g, norm_sq, candidate=False), None))
            continue
        cand = tuple(v // quotient for v in head)
        results.append((ScanRecord(i, marker, quotient, g, sum(v * v for v in cand), candidate=True), cand))
    return results


def extract_candidates(reduced: IntegerBasis, scale: ScalingParams, n_vars: int) -> List[Tuple[int, ...]]:
    return [cand for _, cand in scan_basis(reduced, scale, n_vars) if cand is not None]


def set_known_positions(candidate: Sequence[int], column_map: Sequence[int],
                        known_r: Dict[int, int], N: int) -> Tuple[int, ...]:
    """Spread a reduced-system solution back over all N nonce coordinates"""
    if len(candidate) != len(column_map):
        raise ParameterError("candidate length differs from the number of unknown columns")
    full = [0] * N
    for pos, val in known_r.items():
        full[pos] = val
    for pos, val in zip(column_map, candidate):
        full[pos] = val
    return tuple(full)


def reconstruct_message(c: ModPoly, h: ModPoly, r: TernaryPoly) -> IntegerPoly:
    q = c.modulus
    return centerlift(c - conv_mod(r.to_mod(q), h).scale(3))


def build_attack_basis(cfg: AttackConfig, instance: AttackInstance,
                       use_known_r: bool) -> Tuple[KnapsackSystem, KnapsackSystem, IntegerBasis]:
    """(original system, working system, embedding basis of the working system)"""
    leak = instance.leak
    system = build_system(instance.c, instance.h, LeakProfile(leak.known_m), cfg.params)
    if not use_known_r:
        return system, system, build_Bk(system, cfg.scale)
    reduced = reduce_system_with_known_r(system, leak.known_r)
    return system, reduced, build_Bz(reduced, cfg.scale)


def _check_leak(cfg: AttackConfig, instance: AttackInstance):
    if instance.params != cfg.params:
        raise ParameterError(f"instance uses {instance.params.label}, config uses {cfg.params.label}")
    if instance.leak.k1 != cfg.k1 or instance.leak.k2 != cfg.k2:
        raise ParameterError(f"instance leaks k1={instance.leak.k1}, k2={instance.leak.k2}; "
                             f"config expects k1={cfg.k1}, k2={cfg.k2}")


def _run(cfg: AttackConfig, instance: AttackInstance, reducer: Optional[Reducer], algorithm: int) -> AttackOutcome:
    _check_leak(cfg, instance)
    N = cfg.params.N
    known_r = instance.leak.known_r if algorithm == 2 else {}
    reducer = reducer or make_reducer(cfg.reducer, timeout=cfg.timeout)
    timings = {}

    start = time.perf_counter()
    original, working, basis = build_attack_basis(cfg, instance, use_known_r=algorithm == 2)
    timings["build"] = time.perf_counter() - start

    start = time.perf_counter()
    reduced = reducer.reduce(basis)
    timings["reduce"] = time.perf_counter() - start
    logger.info("reduced %d-dimensional basis in %.2fs with %s", basis.dim, timings["reduce"], reducer.name)

    start = time.perf_counter()
    bound = cfg.threshold ** 2
    trace: List[ScanRecord] = []
    accepted: Optional[Tuple[int, Tuple[int, ...]]] = None
    for record, cand in scan_basis(reduced, cfg.scale, working.n):
        if cand is None:
            trace.append(record)
            continue
        full = set_known_positions(cand, working.column_map, known_r, N)
        ternary = all(v in BOUND_SET for v in full)
        within = ternary and sum(v * v for v in full) <= bound
        verified = within and verify_solution(original, full)
        trace.append(ScanRecord(record.index, record.marker, record.quotient, record.gcd,
                                record.norm_sq, True, within, verified))
        if verified and accepted is None:
            accepted = (record.index, full)
    timings["extract"] = time.perf_counter() - start

    common = dict(algorithm=algorithm, trace=tuple(trace), timings=timings,
                  reducer=reducer.describe(), dim=basis.dim)
    if accepted is None:
        logger.info("no candidate passed the acceptance test")
        return AttackOutcome(status=NOT_FOUND, **common)
    row, full = accepted
    r = TernaryPoly(full)
    m = reconstruct_message(instance.c, instance.h, r)
    logger.info("candidate nonce accepted from row %d", row)
    return AttackOutcome(status=RECOVERED, r=r, m=m, accepted_row=row, **common)


def recover_message(cfg: AttackConfig, instance: AttackInstance, reducer: Optional[Reducer] = None) -> AttackOutcome:
    """Recovery from leaked message coefficients only"""
    if cfg.k2 != 0:
        raise ParameterError("leaked nonce coefficients need recover_message_alt")
    return _run(cfg, instance, reducer, algorithm=1)


def recover_message_alt(cfg: AttackConfig, instance: AttackInstance, reducer: Optional[Reducer] = None) -> AttackOutcome:
    """Recovery with known nonce coefficients eliminated from the system first"""
    return _run(cfg, instance, reducer, algorithm=2)
