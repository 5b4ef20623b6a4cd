"""Plain-text rendering for the CLI."""
from typing import List, Sequence

import pandas as pd

from app.attack import AttackOutcome
from app.experiment import ExperimentConfig, ExperimentSummary, PublishedRow
from app.ntru import get_params
from app.reduction import BasisProfile
from app.snf import TheoremCheck


def _minutes(seconds: float) -> str:
    if seconds >= 60:
        return f"{seconds / 60:.1f}m"
    return f"{seconds:.1f}s"


def format_summary_row(cfg: ExperimentConfig, summary: ExperimentSummary) -> str:
    """One line in the layout of the published tables"""
    params = get_params(cfg.params)
    scale = cfg.scale()
    k = f"{cfg.k1}" if cfg.algorithm == 1 else f"{cfg.k1} & {cfg.k2} & {cfg.k1 + cfg.k2}"
    return (f"({params.N}, {params.q}) & {scale.N1} & {scale.x} & {k} & {summary.percentage:.0f}% & "
            f"{_minutes(summary.mean_times['total'])} & {summary.rate * 100:.0f}%")


def format_published_row(row: PublishedRow) -> str:
    params = get_params(row.params)
    mark = " *" if row.highlighted else ""
    k = f"{row.k1}" if not row.k2 else f"{row.k1} & {row.k2} & {row.k1 + row.k2}"
    return f"({params.N}, {params.q}) & {row.N1} & {row.x} & {k} & {row.runtime} & {row.rate}%{mark}"


def format_summary(summary: ExperimentSummary) -> str:
    lines = [
        f"   Trials: {summary.trials}",
        f"   Recovered: {summary.successes} ({summary.rate * 100:.0f}%)",
        f"   Errors: {summary.errors}",
        f"   Leak percentage: {summary.percentage:.1f}%",
    ]
    if summary.theorem_gap_bits is not None:
        lines.append(f"   Gap to proven N2: >= {summary.theorem_gap_bits:.1f} bits")
    for phase, mean in summary.mean_times.items():
        lines.append(f"   {phase:>8}: {mean:.3f}s ± {summary.std_times[phase]:.3f}s")
    return "\n".join(lines)


def format_trace(outcome: AttackOutcome, limit: int = 20) -> str:
    """Scan trace of an attack, one row per inspected basis vector"""
    if not outcome.trace:
        return "No basis row carried a nonzero marker"
    lines = ["  row  marker  quotient  gcd  norm^2  cand  short  ok"]
    for rec in outcome.trace[:limit]:
        q = "-" if rec.quotient is None else str(rec.quotient)
        lines.append(f"{rec.index:5d} {rec.marker:7d} {q:>9} {rec.gcd:4d} {rec.norm_sq:7d} "
                     f"{'y' if rec.candidate else 'n':>5} {'y' if rec.within_norm else 'n':>6} "
                     f"{'y' if rec.verified else 'n':>3}")
    if len(outcome.trace) > limit:
        lines.append(f"  ... {len(outcome.trace) - limit} more rows")
    return "\n".join(lines)


def format_coeffs(coeffs: Sequence[int], width: int = 32) -> str:
    body = " ".join(f"{c:+d}" if c else "0" for c in coeffs[:width])
    return body + (" ..." if len(coeffs) > width else "")


def format_profile(profile: BasisProfile) -> str:
    logs = ", ".join(f"{v:.2f}" for v in profile.log_norms)
    return f"log|b_i*|: [{logs}]\ndrop: {profile.drop:.4f}"


def format_theorem_check(check: TheoremCheck) -> List[str]:
    lines = [
        f"precondition: {'holds' if check.precondition_holds else 'fails'}",
        f"c(N,k) has {check.c_bound.bit_length()} bits, N2_min has {check.N2_min.bit_length()} bits",
        f"admissible: {check.admissible}",
    ]
    if check.zero_block_ok is not None:
        lines.append(f"zero block: {'yes' if check.zero_block_ok else 'no'}, marker gcd {check.marker_gcd}")
    return lines


def format_calibration(table: pd.DataFrame, top: int = 10) -> str:
    if table.empty:
        return "No grid point could be evaluated"
    return table.head(top).to_string(index=False)
