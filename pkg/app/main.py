#!/usr/bin/env python3
import argparse
import logging
import os
import sys
from typing import Dict, List, Optional, Sequence

from dotenv import dotenv_values

from app.attack import (AttackConfig, AttackInstance, default_scaling, make_instance,
                        recover_message, recover_message_alt)
from app.config import config
from app.exceptions import ExternalToolError, ParameterError, ToolkitError
from app.experiment import (PUBLISHED_TABLES, ExperimentConfig, calibrate, resolve_table, run_experiment,
                            scaling_from_calibration)
from app.knapsack import KnapsackSystem
from app.lattice import IntegerBasis, ScalingParams, format_matrix, parse_matrix
from app.ntru import Ciphertext, KeyPair, decrypt, encrypt, get_params, keygen, sample_message, sample_nonce
from app.poly import make_rng
from app.reduction import basis_profile, check_reduced, drop_change, make_reducer, shortest_vector
from app.report import (format_calibration, format_coeffs, format_published_row, format_profile,
                        format_summary, format_summary_row, format_theorem_check, format_trace)
from app.snf import kernel_basis, smith_normal_form, theorem_bound, theorem_gap, verify_theorem
from app.utils import ensure_directories, load_json, print_colored, save_json

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NOT_FOUND = 1
EXIT_USAGE = 2
EXIT_EXTERNAL = 3
EXIT_FAILURE = 4


def parse_grid(text: str) -> List[int]:
    """'1-9' or '1,3,5'"""
    try:
        if "-" in text:
            lo, hi = text.split("-", 1)
            return list(range(int(lo), int(hi) + 1))
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise ParameterError(f"bad grid '{text}': use a range like 1-9 or a list like 1,3,5") from e


def parse_ints(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise ParameterError(f"bad integer list '{text}'") from e


def table_arg(text: str) -> str:
    try:
        return resolve_table(text)
    except ParameterError as e:
        raise argparse.ArgumentTypeError(str(e)) from e


def _read_text(path: str) -> str:
    if not os.path.exists(path):
        raise FileNotFoundError(f"File not found: {path}")
    with open(path, 'r', encoding='utf-8') as f:
        return f.read()


class ToolkitCLI:
    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.seed = args.seed if args.seed is not None else config.SEED

    def _params(self):
        if not self.args.params:
            raise ParameterError("--params is required (a set name or N,q[,d])")
        return get_params(self.args.params)

    def _scale(self, params, k1: int = 0, k2: int = 0) -> ScalingParams:
        default = default_scaling(params)
        if self.args.calibration:
            best = scaling_from_calibration(self.args.calibration, params.name or self.args.params, k1, k2)
            if best is not None:
                default = ScalingParams.from_exponent(best[0], params.q, best[1])
        N1 = self.args.N1 if self.args.N1 is not None else default.N1
        x = self.args.x if self.args.x is not None else default.x
        return ScalingParams.from_exponent(N1, params.q, x)

    def _save(self, data: Dict, label: str):
        if self.args.out:
            save_json(data, self.args.out)
            print_colored(f"💾 {label} written to {self.args.out}", "green")

    def keygen(self) -> int:
        params = self._params()
        keys = keygen(params, make_rng(self.seed))
        print_colored(f"🔑 Key pair for {params.label} (seed {self.seed})", "blue")
        print(f"   h: {format_coeffs(keys.h.coeffs)}")
        self._save({"params": params.to_dict(), "seed": self.seed, "keys": keys.to_dict()}, "Keys")
        return EXIT_OK

    def encrypt(self) -> int:
        params = self._params()
        keys = KeyPair.from_dict(load_json(self.args.keys)["keys"], params)
        rng = make_rng(self.seed)
        m, r = sample_message(params, rng), sample_nonce(params, rng)
        ct = encrypt(keys.h, m, r, params)
        print_colored(f"🔒 Encrypted a random message under {params.label}", "blue")
        print(f"   m: {format_coeffs(m.coeffs)}")
        print(f"   c: {format_coeffs(ct.c.coeffs)}")
        self._save({"params": params.to_dict(), "ciphertext": ct.to_dict()}, "Ciphertext")
        return EXIT_OK

    def decrypt(self) -> int:
        params = self._params()
        keys = KeyPair.from_dict(load_json(self.args.keys)["keys"], params)
        ct = Ciphertext.from_dict(load_json(self.args.ciphertext)["ciphertext"], params)
        m = decrypt(ct, keys, params)
        print_colored("🔓 Decrypted message:", "blue")
        print(f"   {format_coeffs(m.coeffs)}")
        if ct.m is not None:
            ok = ct.m.coeffs == m.coeffs
            print_colored(f"   {'✅ matches' if ok else '❌ differs from'} the recorded plaintext", "green" if ok else "red")
        self._save({"params": params.to_dict(), "m": list(m.coeffs)}, "Message")
        return EXIT_OK

    def attack(self, alternative: bool = False) -> int:
        args = self.args
        if args.instance:
            instance = AttackInstance.from_dict(load_json(args.instance))
            params = instance.params
            k1, k2 = instance.leak.k1, instance.leak.k2
        else:
            params = self._params()
            k1, k2 = args.k1, args.k2 if alternative else 0
            if k1 is None:
                raise ParameterError("--k1 is required unless --instance is given")
            instance = make_instance(params, k1, k2, args.leak_mode, make_rng(self.seed))
        cfg = AttackConfig(params=params, scale=self._scale(params, k1, k2), k1=k1, k2=k2, leak_mode=args.leak_mode,
                           app_value=args.app_value, reducer=args.reducer or config.REDUCER,
                           seed=self.seed, timeout=args.timeout)
        name = "alternative attack" if alternative else "attack"
        print_colored(f"🎯 Running {name} on {params.label}: k1={k1}, k2={k2}, "
                      f"N1={cfg.scale.N1}, N2=q^{cfg.scale.x}", "blue")
        outcome = (recover_message_alt if alternative else recover_message)(cfg, instance)

        if args.trace:
            print(format_trace(outcome))
        success = outcome.recovered and instance.ct.m is not None and outcome.m.coeffs == instance.ct.m.coeffs
        record = {"config": cfg.to_dict(), "instance": instance.to_dict(), "outcome": outcome.to_dict(),
                  "success": success}
        self._save(record, "Attack record")
        timings = ", ".join(f"{k} {v:.2f}s" for k, v in outcome.timings.items())
        if not outcome.recovered:
            print_colored(f"❌ No valid nonce found ({timings})", "red")
            return EXIT_NOT_FOUND
        print_colored(f"✅ Message recovered from basis row {outcome.accepted_row} ({timings})", "green")
        print(f"   m': {format_coeffs(outcome.m.coeffs)}")
        if instance.ct.m is not None and not success:
            print_colored("⚠️  Recovered message differs from the generated plaintext", "yellow")
        return EXIT_OK

    def reduce(self) -> int:
        args = self.args
        basis = IntegerBasis.from_rows(parse_matrix(_read_text(args.input)))
        if args.svp:
            v = shortest_vector(basis)
            print_colored(f"📏 Shortest vector (norm^2 {sum(x * x for x in v)}):", "blue")
            print(format_matrix([v]), end="")
            return EXIT_OK
        reducer = make_reducer(args.reducer, timeout=args.timeout)
        reduced = reducer.reduce(basis)
        print_colored(f"✅ Reduced a {basis.dim}-dimensional basis with {reducer.name}", "green")
        print(f"   LLL-reduced (delta=3/4): {'✅' if check_reduced(reduced) else '❌'}")
        if args.profile:
            print(format_profile(basis_profile(reduced)))
            print(f"drop change: {drop_change(basis, reduced):+.4f}")
        if args.out:
            with open(args.out, 'w', encoding='utf-8') as f:
                f.write(format_matrix(reduced.rows))
            print_colored(f"💾 Reduced basis written to {args.out}", "green")
        else:
            print(format_matrix(reduced.rows), end="")
        return EXIT_OK

    def snf(self) -> int:
        args = self.args
        A = parse_matrix(_read_text(args.input))
        snf = smith_normal_form(A)
        print_colored(f"🧮 Smith form of a {len(A)}x{len(A[0])} matrix", "blue")
        print(f"   elementary divisors: {list(snf.divisors)}")
        data = snf.to_dict()
        if args.kernel:
            kernel = kernel_basis(A, snf)
            print(f"   kernel basis ({len(kernel)} vectors):")
            print(format_matrix(kernel) if kernel else "   (trivial)\n", end="")
            data["kernel"] = [list(v) for v in kernel]
        if args.theorem:
            data["theorem"] = self._theorem(A)
        self._save(data, "Decomposition")
        return EXIT_OK

    def _theorem(self, A: List[List[int]]) -> Dict:
        args = self.args
        if not args.q or args.q < 2 or not args.solution:
            raise ParameterError("--theorem needs --q and --solution")
        r = parse_ints(args.solution)
        if any(v not in (-1, 0, 1) for v in r):
            raise ParameterError("--solution must be ternary")
        if len(r) != len(A[0]):
            raise ParameterError(f"solution has length {len(r)}, matrix has {len(A[0])} columns")
        q, N1 = args.q, args.N1 or 1
        A_q = tuple(tuple(a % q for a in row) for row in A)
        T = tuple(sum(a * v for a, v in zip(row, r)) % q for row in A_q)
        system = KnapsackSystem(A=A_q, T=T, q=q, column_map=tuple(range(len(r))))
        if args.bound_only:
            check = theorem_bound(system.A, r, N1, q)
        else:
            check = verify_theorem(system, r, N1, reducer=make_reducer(args.reducer, timeout=args.timeout))
        gap = theorem_gap(check, ScalingParams.from_exponent(N1, q, args.x or 2))
        print_colored("📐 Zero-block theorem", "blue")
        for line in format_theorem_check(check):
            print(f"   {line}")
        print(f"   gap to N2 = ceil(q^{args.x or 2}): {gap:.2f} bits")
        return {**check.to_dict(), "c_bound": str(check.c_bound), "N2_min": str(check.N2_min),
                "gap_bits": round(gap, 3)}

    def experiment(self) -> int:
        args = self.args
        common = dict(trials=args.trials, seed=self.seed, reducer=args.reducer, workers=args.workers,
                      timeout=args.timeout, leak_mode=args.leak_mode, app_value=args.app_value)
        if args.table:
            if args.row is None:
                raise ParameterError("--table needs --row")
            cfg = ExperimentConfig.from_published(args.table, args.row, params=args.params, N1=args.N1,
                                                 x=args.x, **common)
            print_colored("📖 Published row:", "yellow")
            print(f"   {format_published_row(PUBLISHED_TABLES[resolve_table(args.table)][args.row - 1])}")
        else:
            if args.k1 is None:
                raise ParameterError("--k1 is required unless --table is given")
            if not args.params:
                raise ParameterError("--params is required unless --table is given")
            N1, x = args.N1, args.x
            if args.calibration and N1 is None and x is None:
                best = scaling_from_calibration(args.calibration, args.params, args.k1, args.k2)
                if best is not None:
                    N1, x = best[0], str(best[1])
            cfg = ExperimentConfig(params=args.params, k1=args.k1, k2=args.k2, N1=N1, x=x,
                                   algorithm=2 if args.k2 or args.alt else 1,
                                   **{k: v for k, v in common.items() if v is not None})
        out = args.out or os.path.join(config.RESULTS_DIR, f"{cfg.params}-k{cfg.k1}-{cfg.k2}-s{cfg.seed}.jsonl")
        summary = run_experiment(cfg, out_path=out)
        print_colored("\n📊 Experiment summary:", "blue")
        print(format_summary(summary))
        print(f"   {format_summary_row(cfg, summary)}")
        print_colored(f"💾 Trial records appended to {out}", "green")
        return EXIT_OK

    def calibrate(self) -> int:
        args = self.args
        if args.k1 is None:
            raise ParameterError("--k1 is required")
        params = self._params()
        result = calibrate(params.name or args.params, args.k1, args.k2, parse_grid(args.n1_grid),
                           parse_grid(args.x_grid), trials=args.trials or 5, seed=self.seed,
                           reducer=args.reducer or config.REDUCER, leak_mode=args.leak_mode,
                           workers=args.workers or 1, out_csv=args.out)
        print_colored("\n📊 Calibration:", "blue")
        print(format_calibration(result.table))
        if result.best is None:
            print_colored("⚠️  No grid point recovered any message", "yellow")
        else:
            print_colored(f"✅ Best scaling: N1={result.best[0]}, x={result.best[1]}", "green")
        return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--params', help='Parameter set name or N,q[,d]')
    common.add_argument('--seed', type=int, help='Master seed')
    common.add_argument('--reducer', help='internal[:delta], fpylll[:delta] or external:<command>')
    common.add_argument('--timeout', type=float, help='External reducer timeout in seconds')
    common.add_argument('--out', help='Output path')
    common.add_argument('--config', help='Key-value file of flag defaults')
    common.add_argument('--log-level', help='Logging level')

    attack_flags = argparse.ArgumentParser(add_help=False)
    attack_flags.add_argument('--k1', type=int, help='Leaked message coefficients')
    attack_flags.add_argument('--N1', type=int, help='Marker scaling N1')
    attack_flags.add_argument('--x', help='Exponent with N2 = ceil(q^x)')
    attack_flags.add_argument('--leak-mode', choices=['prefix', 'random'], default='prefix')
    attack_flags.add_argument('--app-value', type=int, help='Norm threshold for candidate nonces')
    attack_flags.add_argument('--calibration', help='Calibration CSV supplying the default N1, x')

    parser = argparse.ArgumentParser(description="NTRU-HPS partial-leakage message recovery toolkit")
    subparsers = parser.add_subparsers(dest='command', help='Command to execute')

    subparsers.add_parser('keygen', parents=[common], help='Generate a key pair')

    encrypt_parser = subparsers.add_parser('encrypt', parents=[common], help='Encrypt a random message')
    encrypt_parser.add_argument('--keys', required=True, help='Key file from keygen')

    decrypt_parser = subparsers.add_parser('decrypt', parents=[common], help='Decrypt a ciphertext')
    decrypt_parser.add_argument('--keys', required=True, help='Key file from keygen')
    decrypt_parser.add_argument('--ciphertext', required=True, help='Ciphertext file from encrypt')

    for name, helptext in (('attack', 'Recover a message from leaked coefficients'),
                           ('attack-alt', 'Recover using leaked message and nonce coefficients')):
        p = subparsers.add_parser(name, parents=[common, attack_flags], help=helptext)
        p.add_argument('--instance', help='Instance file instead of generating one')
        p.add_argument('--trace', action='store_true', help='Show the basis scan')
        if name == 'attack-alt':
            p.add_argument('--k2', type=int, default=0, help='Leaked nonce coefficients')

    reduce_parser = subparsers.add_parser('reduce', parents=[common], help='Reduce a basis file')
    reduce_parser.add_argument('--input', required=True, help='Bracketed matrix file')
    reduce_parser.add_argument('--profile', action='store_true', help='Print the Gram-Schmidt profile')
    reduce_parser.add_argument('--svp', action='store_true', help='Print a shortest vector instead')

    snf_parser = subparsers.add_parser('snf', parents=[common], help='Smith normal form of a matrix file')
    snf_parser.add_argument('--input', required=True, help='Bracketed matrix file')
    snf_parser.add_argument('--kernel', action='store_true', help='Print an integer kernel basis')
    snf_parser.add_argument('--theorem', action='store_true', help='Check the zero-block bound for A x = A r (mod q)')
    snf_parser.add_argument('--q', type=int, help='Modulus for --theorem')
    snf_parser.add_argument('--solution', help='Ternary r as a comma list, e.g. 1,0,-1')
    snf_parser.add_argument('--N1', type=int, help='Marker scaling N1 (default 1)')
    snf_parser.add_argument('--x', help='Exponent of the scaling the gap is measured against (default 2)')
    snf_parser.add_argument('--bound-only', action='store_true', help='Skip the reduction, print the bound')

    exp_parser = subparsers.add_parser('experiment', parents=[common, attack_flags], help='Run seeded trials')
    exp_parser.add_argument('--k2', type=int, default=0, help='Leaked nonce coefficients')
    exp_parser.add_argument('--alt', action='store_true', help='Use the alternative attack even with k2=0')
    exp_parser.add_argument('--trials', type=int, help='Number of trials')
    exp_parser.add_argument('--workers', type=int, help='Parallel trials')
    exp_parser.add_argument('--table', type=table_arg, help='Published table: message (1) or combined (2) leakage')
    exp_parser.add_argument('--row', type=int, help='Row of the published table, from 1')

    cal_parser = subparsers.add_parser('calibrate', parents=[common, attack_flags], help='Grid search over N1, x')
    cal_parser.add_argument('--k2', type=int, default=0, help='Leaked nonce coefficients')
    cal_parser.add_argument('--n1-grid', default='1-9', help='N1 values, e.g. 1-9')
    cal_parser.add_argument('--x-grid', default='2-20', help='Exponents, e.g. 2-20')
    cal_parser.add_argument('--trials', type=int, help='Trials per grid point')
    cal_parser.add_argument('--workers', type=int, help='Parallel trials')

    parser.set_defaults(_subparsers=subparsers)
    return parser


def apply_config_file(parser: argparse.ArgumentParser, argv: Sequence[str]):
    """Values from --config become defaults of every subcommand; explicit flags still win"""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument('--config')
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    if not os.path.exists(known.config):
        raise FileNotFoundError(f"File not found: {known.config}")
    defaults = {key.lower().replace("-", "_"): value for key, value in dotenv_values(known.config).items()
                if value is not None}
    subparsers = parser.get_default('_subparsers')
    for sub in list(subparsers.choices.values()) + [parser]:
        dests = {action.dest for action in sub._actions}
        # flag destinations keep their case (N1), config keys are upper-case
        sub.set_defaults(**{dest: defaults[dest.lower()] for dest in dests if dest.lower() in defaults})


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        apply_config_file(parser, argv)
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    except (FileNotFoundError, ValueError) as e:
        print_colored(f"❌ {e}", "red")
        return EXIT_USAGE

    if not args.command:
        parser.print_help()
        return EXIT_USAGE

    logging.basicConfig(level=(args.log_level or config.LOG_LEVEL).upper(),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    ensure_directories()
    cli = ToolkitCLI(args)
    handlers = {
        'keygen': cli.keygen,
        'encrypt': cli.encrypt,
        'decrypt': cli.decrypt,
        'attack': cli.attack,
        'attack-alt': lambda: cli.attack(alternative=True),
        'reduce': cli.reduce,
        'snf': cli.snf,
        'experiment': cli.experiment,
        'calibrate': cli.calibrate,
    }
    try:
        return handlers[args.command]()
    except (ParameterError, FileNotFoundError, ValueError) as e:
        print_colored(f"❌ {e}", "red")
        return EXIT_USAGE
    except ExternalToolError as e:
        print_colored(f"❌ External reducer failed: {e}", "red")
        return EXIT_EXTERNAL
    except ToolkitError as e:
        print_colored(f"❌ {type(e).__name__}: {e}", "red")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
