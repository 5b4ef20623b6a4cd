"""
Textbook NTRU-HPS: key generation, encryption and decryption over R = Z[x]/(x^N - 1).

h = Fq * g (mod q) and c = 3 r * h + m (mod q). f is drawn from the full T_{N-2},
g and m carry the fixed weight d = q/16 - 1, r is any ternary polynomial of degree <= N-2.
"""
import logging
from dataclasses import dataclass
from math import gcd
from typing import Any, Dict, Optional

import numpy as np
from sympy import isprime

from app.config import config
from app.exceptions import GenerationError, NotInvertible, ParameterError
from app.poly import (ModPoly, TernaryPoly, centerlift, conv_mod, invert_poly,
                      sample_fixed_weight, sample_ternary)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NtruParams:
    N: int
    q: int
    d: int
    name: str = ""

    def __post_init__(self):
        if not isprime(self.N):
            raise ParameterError(f"N={self.N} is not prime")
        if self.q < 2 or self.q & (self.q - 1):
            raise ParameterError(f"q={self.q} is not a power of two")
        if gcd(self.q, self.N) != 1 or self.q % 3 == 0:
            raise ParameterError(f"q={self.q} must be coprime to N and 3")
        if self.d < 0 or 2 * self.d > self.N - 1:
            raise ParameterError(f"weight d={self.d} does not fit in degree {self.N - 2}")
        # |3 g*r + f*m| <= 3*2d + 2d must stay inside (-q/2, q/2]
        if 8 * self.d >= self.q // 2:
            raise ParameterError(f"decryption margin fails: 8d={8 * self.d} >= q/2={self.q // 2}")

    @classmethod
    def from_nq(cls, N: int, q: int, name: str = "") -> "NtruParams":
        return cls(N=N, q=q, d=q // 16 - 1, name=name)

    @property
    def label(self) -> str:
        return self.name or f"N{self.N}q{self.q}"

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "N": self.N, "q": self.q, "d": self.d}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "NtruParams":
        return cls(N=data["N"], q=data["q"], d=data["d"], name=data.get("name", ""))


PARAMETER_SETS: Dict[str, NtruParams] = {
    "ntruhps2048509": NtruParams(509, 2048, 127, "ntruhps2048509"),
    "ntruhps2048677": NtruParams(677, 2048, 127, "ntruhps2048677"),
    "ntruhps4096821": NtruParams(821, 4096, 255, "ntruhps4096821"),
    "toy31": NtruParams(31, 128, 7, "toy31"),
    "toy61": NtruParams(61, 256, 15, "toy61"),
    "toy101": NtruParams(101, 512, 31, "toy101"),
}


def get_params(name: str) -> NtruParams:
    """Look up a registered set, or parse an explicit 'N,q[,d]' triple"""
    if name in PARAMETER_SETS:
        return PARAMETER_SETS[name]
    parts = name.split(",")
    if len(parts) in (2, 3) and all(p.strip().isdigit() for p in parts):
        N, q = int(parts[0]), int(parts[1])
        if len(parts) == 3:
            return NtruParams(N, q, int(parts[2]))
        return NtruParams.from_nq(N, q)
    raise ParameterError(f"unknown parameter set '{name}' (known: {', '.join(PARAMETER_SETS)})")


@dataclass(frozen=True)
class KeyPair:
    f: TernaryPoly
    g: TernaryPoly
    Fq: ModPoly
    F3: ModPoly
    h: ModPoly

    def to_dict(self) -> Dict[str, Any]:
        return {
            "f": list(self.f.coeffs),
            "g": list(self.g.coeffs),
            "Fq": list(self.Fq.coeffs),
            "F3": list(self.F3.coeffs),
            "h": list(self.h.coeffs),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], params: NtruParams) -> "KeyPair":
        return cls(
            f=TernaryPoly(tuple(data["f"])),
            g=TernaryPoly(tuple(data["g"])),
            Fq=ModPoly(tuple(data["Fq"]), params.q),
            F3=ModPoly(tuple(data["F3"]), 3),
            h=ModPoly(tuple(data["h"]), params.q),
        )


@dataclass(frozen=True)
class Ciphertext:
    c: ModPoly
    # generator-side ground truth, never read by the attack
    m: Optional[TernaryPoly] = None
    r: Optional[TernaryPoly] = None

    def to_dict(self, include_secrets: bool = True) -> Dict[str, Any]:
        data: Dict[str, Any] = {"c": list(self.c.coeffs)}
        if include_secrets and self.m is not None:
            data["m"] = list(self.m.coeffs)
        if include_secrets and self.r is not None:
            data["r"] = list(self.r.coeffs)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any], params: NtruParams) -> "Ciphertext":
        return cls(
            c=ModPoly(tuple(data["c"]), params.q),
            m=TernaryPoly(tuple(data["m"])) if "m" in data else None,
            r=TernaryPoly(tuple(data["r"])) if "r" in data else None,
        )


def keygen(params: NtruParams, rng: np.random.Generator,
           max_tries: Optional[int] = None) -> KeyPair:
    """Sample f until it is invertible both mod q and mod 3, then h = Fq * g"""
    max_tries = max_tries or config.KEYGEN_MAX_TRIES
    N, q = params.N, params.q
    for attempt in range(1, max_tries + 1):
        f = sample_ternary(N, rng)
        try:
            Fq = invert_poly(f.to_mod(q))
            F3 = invert_poly(f.to_mod(3))
        except NotInvertible:
            logger.debug("f not invertible (attempt %d/%d), resampling", attempt, max_tries)
            continue
        g = sample_fixed_weight(N, params.d, params.d, rng)
        h = conv_mod(Fq, g.to_mod(q))
        logger.debug("key generated after %d attempt(s)", attempt)
        return KeyPair(f=f, g=g, Fq=Fq, F3=F3, h=h)
    raise GenerationError(f"no invertible f after {max_tries} attempts for {params.label}")


def _check_degree_bound(p: TernaryPoly, params: NtruParams, label: str):
    if p.N != params.N:
        raise ParameterError(f"{label} has degree {p.N}, expected {params.N}")
    if p.coeffs[-1] != 0:
        raise ParameterError(f"{label} exceeds degree N-2")


def encrypt(h: ModPoly, m: TernaryPoly, r: TernaryPoly, params: NtruParams) -> Ciphertext:
    """c = 3 r * h + m (mod q)"""
    _check_degree_bound(m, params, "message")
    _check_degree_bound(r, params, "nonce")
    if m.counts() != (params.d, params.d):
        raise ParameterError(f"message weights {m.counts()} differ from ({params.d}, {params.d})")
    q = params.q
    c = conv_mod(r.to_mod(q), h).scale(3) + m.to_mod(q)
    return Ciphertext(c=c, m=m, r=r)


def decrypt(ct: Ciphertext, keys: KeyPair, params: NtruParams) -> TernaryPoly:
    q = params.q
    v = conv_mod(keys.f.to_mod(q), ct.c)
    v_lift = centerlift(v)
    b = conv_mod(keys.F3, v_lift.reduce(3))
    return TernaryPoly(centerlift(b).coeffs)


def sample_message(params: NtruParams, rng: np.random.Generator) -> TernaryPoly:
    return sample_fixed_weight(params.N, params.d, params.d, rng)


def sample_nonce(params: NtruParams, rng: np.random.Generator) -> TernaryPoly:
    return sample_ternary(params.N, rng)
