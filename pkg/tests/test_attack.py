import numpy as np
import pytest

from app.attack import (NOT_FOUND, RECOVERED, AttackConfig, AttackInstance, app_value_for, build_attack_basis,
                        default_scaling, extract_candidates, make_instance, recover_message, recover_message_alt,
                        reconstruct_message, scan_basis, set_known_positions)
from app.exceptions import ParameterError
from app.knapsack import brute_force_solve, verify_solution
from app.lattice import IntegerBasis, ScalingParams


def attack_config(params, k1, k2=0, **kwargs):
    return AttackConfig(params=params, scale=default_scaling(params), k1=k1, k2=k2, **kwargs)


@pytest.mark.parametrize("N, expected", [(509, 19), (677, 21), (821, 24), (61, 8), (31, 6)])
def test_app_value(N, expected):
    assert app_value_for(N) == expected


def test_app_value_rejects_empty_ring():
    with pytest.raises(ParameterError):
        app_value_for(0)


def test_config_validation(toy31):
    with pytest.raises(ParameterError):
        attack_config(toy31, 0)
    with pytest.raises(ParameterError):
        attack_config(toy31, 32)
    with pytest.raises(ParameterError):
        attack_config(toy31, 10, leak_mode="suffix")
    with pytest.raises(ParameterError):
        attack_config(toy31, 10, app_value=0)
    assert attack_config(toy31, 10).threshold == 6
    assert attack_config(toy31, 10, app_value=9).threshold == 9


def test_scan_normalizes_marker_rows():
    scale = ScalingParams(N1=1, N2=4)
    reduced = IntegerBasis.from_rows([
        [-2, 0, 2, -2, 0],
        [1, 0, 0, 0, 0],
        [1, 1, 0, 3, 0],
        [0, 0, 0, 1, 4],
        [0, 0, 0, 0, 8],
    ])
    assert extract_candidates(reduced, scale, 3) == [(1, 0, -1)]
    records = [rec for rec, _ in scan_basis(reduced, scale, 3)]
    assert [rec.index for rec in records] == [0, 2]
    assert records[1].quotient == 3 and records[1].gcd == 1 and not records[1].candidate


def test_scan_respects_N1():
    scale = ScalingParams(N1=2, N2=4)
    reduced = IntegerBasis.from_rows([
        [1, 0, 1, 0],
        [1, -1, 4, 0],
        [1, 1, 3, 0],
        [0, 0, 0, 8],
    ])
    # 1 is not a multiple of N1; 4 = 2 N1 but gcd(1, -1) = 1
    assert extract_candidates(reduced, scale, 2) == []


def test_set_known_positions():
    assert set_known_positions((1, -1), (1, 3), {0: 1, 2: 0}, 4) == (1, 1, 0, -1)
    with pytest.raises(ParameterError):
        set_known_positions((1,), (1, 3), {}, 4)


def test_make_instance_is_deterministic(toy31, instance_factory):
    a = instance_factory(toy31, k1=10, k2=5, seed=7)
    b = instance_factory(toy31, k1=10, k2=5, seed=7)
    assert a.to_dict() == b.to_dict()
    assert sorted(a.leak.known_m) == list(range(10))
    assert sorted(a.leak.known_r) == list(range(5))
    assert all(a.ct.m.coeffs[p] == v for p, v in a.leak.known_m.items())
    assert all(a.ct.r.coeffs[p] == v for p, v in a.leak.known_r.items())


def test_make_instance_random_positions(toy31, instance_factory):
    instance = instance_factory(toy31, k1=10, seed=3, leak_mode="random")
    assert len(instance.leak.known_m) == 10
    assert all(0 <= p < 31 for p in instance.leak.known_m)
    with pytest.raises(ParameterError):
        make_instance(toy31, 10, leak_mode="suffix", rng=np.random.default_rng(0))
    with pytest.raises(ParameterError):
        make_instance(toy31, 40, rng=np.random.default_rng(0))


def test_instance_serialization(toy31, instance_factory):
    instance = instance_factory(toy31, k1=5, k2=2, seed=1)
    restored = AttackInstance.from_dict(instance.to_dict())
    assert restored.to_dict() == instance.to_dict()
    public = AttackInstance.from_dict(instance.to_dict(include_secrets=False))
    assert public.keys is None and public.ct.m is None


def test_reconstruct_with_true_nonce(toy31, instance_factory):
    instance = instance_factory(toy31, k1=5, seed=2)
    m = reconstruct_message(instance.c, instance.h, instance.ct.r)
    assert m.coeffs == instance.ct.m.coeffs


def test_recover_message(toy31, instance_factory):
    instance = instance_factory(toy31, k1=27, seed=11)
    outcome = recover_message(attack_config(toy31, 27), instance)
    assert outcome.status == RECOVERED
    assert outcome.algorithm == 1 and outcome.dim == 31 + 27 + 1
    assert outcome.m.coeffs == instance.ct.m.coeffs
    assert outcome.r.coeffs == instance.ct.r.coeffs
    assert outcome.replay(instance.c, instance.h)
    assert outcome.hits >= 1
    assert set(outcome.timings) == {"build", "reduce", "extract"}
    assert outcome.to_dict()["reducer"]["name"] == "internal"


def test_recover_message_alt(toy31, instance_factory):
    instance = instance_factory(toy31, k1=15, k2=13, seed=5)
    outcome = recover_message_alt(attack_config(toy31, 15, 13), instance)
    assert outcome.status == RECOVERED
    assert outcome.algorithm == 2 and outcome.dim == 31 - 13 + 15 + 1
    assert outcome.m.coeffs == instance.ct.m.coeffs
    assert outcome.replay(instance.c, instance.h)


def test_alt_basis_without_nonce_leak_matches_plain_basis(toy31, instance_factory):
    instance = instance_factory(toy31, k1=20, seed=4)
    cfg = attack_config(toy31, 20)
    _, _, plain = build_attack_basis(cfg, instance, use_known_r=False)
    _, _, alt = build_attack_basis(cfg, instance, use_known_r=True)
    assert plain == alt


def test_leak_size_must_match_config(toy31, instance_factory):
    instance = instance_factory(toy31, k1=10, seed=0)
    with pytest.raises(ParameterError):
        recover_message(attack_config(toy31, 12), instance)
    with pytest.raises(ParameterError):
        recover_message(attack_config(toy31, 10, 2), instance)


def test_accepted_nonce_is_an_exact_solution(toy31, instance_factory):
    instance = instance_factory(toy31, k1=10, k2=20, seed=9)
    cfg = attack_config(toy31, 10, 20)
    outcome = recover_message_alt(cfg, instance)
    assert outcome.recovered
    _, working, _ = build_attack_basis(cfg, instance, use_known_r=True)
    assert working.n == 11
    unknown = tuple(outcome.r.coeffs[p] for p in working.column_map)
    assert unknown in brute_force_solve(working)
    assert verify_solution(working, unknown)


def test_too_little_leakage_fails(toy31, instance_factory):
    successes = 0
    for seed in range(3):
        instance = instance_factory(toy31, k1=6, seed=seed)
        outcome = recover_message(attack_config(toy31, 6), instance)
        assert outcome.status in (RECOVERED, NOT_FOUND)
        successes += outcome.recovered and outcome.m.coeffs == instance.ct.m.coeffs
    assert successes < 3


def test_failed_outcome_does_not_replay(toy31, instance_factory):
    instance = instance_factory(toy31, k1=27, seed=11)
    cfg = attack_config(toy31, 27, app_value=1)
    outcome = recover_message(cfg, instance)
    assert outcome.status == NOT_FOUND
    assert outcome.m is None and outcome.hits == 0
    assert not outcome.replay(instance.c, instance.h)


@pytest.mark.slow
def test_acceptance_toy61(toy61):
    params = toy61
    rng = np.random.default_rng(2024)
    ok = 0
    for _ in range(10):
        instance = make_instance(params, 52, rng=rng)
        outcome = recover_message(attack_config(params, 52), instance)
        ok += outcome.recovered and outcome.m.coeffs == instance.ct.m.coeffs
    assert ok >= 7


@pytest.mark.slow
def test_acceptance_toy61_alt(toy61):
    params = toy61
    rng = np.random.default_rng(2025)
    ok = 0
    for _ in range(10):
        instance = make_instance(params, 30, 25, rng=rng)
        outcome = recover_message_alt(attack_config(params, 30, 25), instance)
        ok += outcome.recovered and outcome.m.coeffs == instance.ct.m.coeffs
    assert ok >= 5
