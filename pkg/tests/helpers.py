import itertools
import os

import numpy as np

from app.knapsack import KnapsackSystem

FIXTURES_DIR = os.path.join(os.path.dirname(__file__), "fixtures")


def random_ternary(rng: np.random.Generator, n: int):
    return tuple(int(v) for v in rng.integers(-1, 2, size=n))


def random_system(rng: np.random.Generator, k: int, n: int, q: int) -> KnapsackSystem:
    A = tuple(tuple(int(v) for v in rng.integers(0, q, size=n)) for _ in range(k))
    T = tuple(int(v) for v in rng.integers(0, q, size=k))
    return KnapsackSystem(A=A, T=T, q=q, column_map=tuple(range(n)))


def system_for(rng: np.random.Generator, k: int, n: int, q: int, x) -> KnapsackSystem:
    """Random A with T chosen so that x is a solution"""
    A = tuple(tuple(int(v) for v in rng.integers(0, q, size=n)) for _ in range(k))
    T = tuple(sum(a * v for a, v in zip(row, x)) % q for row in A)
    return KnapsackSystem(A=A, T=T, q=q, column_map=tuple(range(n)))


def naive_cyclic(a, b, q):
    N = len(a)
    out = [0] * N
    for i in range(N):
        for j in range(N):
            out[(i + j) % N] += a[i] * b[j]
    return [v % q for v in out]


def exhaustive_solutions(system: KnapsackSystem):
    q = system.q
    return [x for x in itertools.product((-1, 0, 1), repeat=system.n)
            if all(sum(a * v for a, v in zip(row, x)) % q == t for row, t in zip(system.A, system.T))]


def matmul(X, Y):
    return [[sum(a * b for a, b in zip(row, col)) for col in zip(*Y)] for row in X]
