"""Command-line entry point: ``ifpca <subcommand> ...``.

Exit status is 0 on success, 1 on a runtime failure and 2 on a usage error.
Output files are written atomically and contain no timestamps, so identical
arguments give byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from typing import Sequence

import numpy as np

from . import __version__
from .data import (DataError, DataMatrix, atomic_write_text, load_labels, load_matrix,
                   write_matrix)
from .metrics import ari, clustering_error, format_footer_csv, read_error_table, regret_and_rank
from .pipelines import METHODS, IFConfig, NoFeaturesSelected, feature_sweep, if_step, run_method
from .rareweak import (PHASE_METHODS, BoundaryError, run_phase_grid, simulate_cell,
                       write_grid)
from .scoring import DEFAULT_B, KINDS, PVALUE_MODES, build_null_cdf, get_null_table
from .selection import HC_VARIANTS
from .vae import VaeHyper

logger = logging.getLogger("ifpca")

SCHEMA_VERSION = 1
PHASE_ALIASES = {"spca": "simplified_pca", "sifpca": "simplified_ifpca", "pca": "pca",
                 "ifpca": "ifpca"}


class UsageError(Exception):
    pass


def parse_grid(text: str) -> list[float]:
    """``lo:hi:step`` (lo included, stops before hi + step/2) or a comma list."""
    if ":" not in text:
        try:
            return [float(v) for v in text.split(",") if v.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad list {text!r}") from None
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"grid must be lo:hi:step, got {text!r}")
    try:
        lo, hi, step = (float(v) for v in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}") from None
    if step <= 0:
        raise argparse.ArgumentTypeError("grid step must be positive")
    out, i = [], 0
    while lo + i * step < hi + step / 2:
        out.append(round(lo + i * step, 10))
        i += 1
    if not out:
        raise argparse.ArgumentTypeError(f"grid {text!r} is empty")
    return out


def parse_int_grid(text: str) -> list[int]:
    vals = parse_grid(text)
    if any(v != int(v) for v in vals):
        raise argparse.ArgumentTypeError(f"grid {text!r} must contain integers")
    return [int(v) for v in vals]


def _phase_methods(text: str) -> list[str]:
    out = []
    for m in text.split(","):
        m = m.strip()
        m = PHASE_ALIASES.get(m, m)
        if m not in PHASE_METHODS:
            raise argparse.ArgumentTypeError(f"unknown method {m!r}")
        out.append(m)
    return out


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _add_if_flags(ap: argparse.ArgumentParser) -> None:
    g = ap.add_argument_group("IF-step")
    g.add_argument("--pvalue-mode", choices=PVALUE_MODES, default="null_score")
    g.add_argument("--B", type=int, default=DEFAULT_B, help="null table size")
    g.add_argument("--null-seed", type=int, default=0)
    g.add_argument("--hc-variant", choices=HC_VARIANTS, default="printed")
    g.add_argument("--sd-mode", choices=("sample", "population"), default="sample")
    g.add_argument("--n-vectors", type=_positive_int, default=None,
                   help="override the number of singular vectors")


def _add_vae_flags(ap: argparse.ArgumentParser) -> None:
    g = ap.add_argument_group("VAE")
    g.add_argument("--latent-dim", type=_positive_int, default=25)
    g.add_argument("--hidden", type=_positive_int, default=128)
    g.add_argument("--epochs", type=_positive_int, default=100)
    g.add_argument("--batches", type=_positive_int, default=50)
    g.add_argument("--lr", type=float, default=5e-4)


def _add_data_flags(ap: argparse.ArgumentParser, labels_required: bool = False) -> None:
    ap.add_argument("--data", required=True, help="CSV/TSV matrix, subjects in rows")
    ap.add_argument("--transpose", action="store_true", help="file has features in rows")
    ap.add_argument("--header", action="store_true", help="first line holds column names")
    ap.add_argument("--labels", required=labels_required, help="one integer label per line")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ifpca", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)
    jobs_default = os.cpu_count() or 1

    c = sub.add_parser("cluster", help="cluster a data matrix")
    _add_data_flags(c)
    c.add_argument("--k", type=int, required=True)
    c.add_argument("--method", choices=list(METHODS), default="ifpca")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--repeats", type=_positive_int, default=None)
    c.add_argument("--jobs", type=_positive_int, default=jobs_default)
    c.add_argument("--out", help="report JSON (stdout if omitted)")
    _add_if_flags(c)
    _add_vae_flags(c)

    s = sub.add_parser("sweep", help="clustering error against the number of top features")
    _add_data_flags(s, labels_required=True)
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--m-grid", type=parse_int_grid, required=True, help="lo:hi:step or list")
    s.add_argument("--clusterer", choices=("pca", "vae"), default="pca")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--repeats", type=_positive_int, default=5)
    s.add_argument("--jobs", type=_positive_int, default=jobs_default)
    s.add_argument("--out", help="CSV (stdout if omitted)")
    _add_if_flags(s)
    _add_vae_flags(s)

    m = sub.add_parser("simulate", help="Monte Carlo Hamming error for one Rare/Weak cell")
    m.add_argument("--p", type=int, required=True)
    m.add_argument("--theta", type=float, required=True)
    m.add_argument("--beta", type=float, required=True)
    m.add_argument("--alpha", type=float, required=True)
    m.add_argument("--method", type=_phase_methods, default=["simplified_ifpca"],
                   help="comma list of spca, sifpca, pca, ifpca")
    m.add_argument("--reps", type=_positive_int, default=50)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--n", type=int, default=None, help="override round(p^theta)")
    m.add_argument("--epsilon", type=float, default=None)
    m.add_argument("--tau", type=float, default=None)
    m.add_argument("--support-size", type=int, default=None)
    m.add_argument("--jobs", type=_positive_int, default=jobs_default)
    m.add_argument("--out", help="JSON (stdout if omitted)")
    _add_if_flags(m)

    ph = sub.add_parser("phase", help="Rare/Weak phase-diagram grid")
    ph.add_argument("--p", type=int, required=True)
    ph.add_argument("--theta", type=float, required=True)
    ph.add_argument("--beta-grid", type=parse_grid, required=True)
    ph.add_argument("--alpha-grid", type=parse_grid, required=True)
    ph.add_argument("--methods", type=_phase_methods, default=["simplified_pca",
                                                                "simplified_ifpca"])
    ph.add_argument("--reps", type=_positive_int, default=50)
    ph.add_argument("--seed", type=int, default=0)
    ph.add_argument("--jobs", type=_positive_int, default=jobs_default)
    ph.add_argument("--out", required=True, help="grid CSV; metadata goes to <out>.json")
    _add_if_flags(ph)

    nt = sub.add_parser("null-table", help="build (or load) a Monte Carlo null table")
    nt.add_argument("--n", type=int, required=True)
    nt.add_argument("--B", type=int, default=DEFAULT_B)
    nt.add_argument("--seed", type=int, default=0)
    nt.add_argument("--kind", choices=KINDS, default="studentized_value")
    nt.add_argument("--out", help="write here instead of the cache directory")

    se = sub.add_parser("select", help="run the IF-step and report the kept features")
    _add_data_flags(se)
    se.add_argument("--out", help="JSON (stdout if omitted)")
    se.add_argument("--scores-out", help="per-feature scores CSV")
    se.add_argument("--submatrix-out", help="kept columns of X as CSV with a header row")
    se.add_argument("--normalized-out", help="kept columns of W as CSV with a header row")
    _add_if_flags(se)

    lb = sub.add_parser("leaderboard", help="regret and rank summaries of an error table")
    lb.add_argument("--errors", required=True, help="CSV: method,<dataset>,...")
    lb.add_argument("--digits", type=int, default=3)
    lb.add_argument("--out", help="footer CSV (stdout if omitted)")
    return ap


def _emit(text: str, out: str | None) -> None:
    if out:
        atomic_write_text(out, text)
    else:
        sys.stdout.write(text)


def _json(obj: dict) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _if_config(a) -> IFConfig:
    return IFConfig(pvalue_mode=a.pvalue_mode, B=a.B, null_seed=a.null_seed,
                    hc_variant=a.hc_variant, sd_mode=a.sd_mode, n_vectors=a.n_vectors)


def _hyper(a, seed: int) -> VaeHyper:
    return VaeHyper(a.latent_dim, a.hidden, a.epochs, a.batches, a.lr, seed)


def _load(a) -> tuple[DataMatrix, np.ndarray | None]:
    X = load_matrix(a.data, transpose=a.transpose, has_header=a.header)
    y = None
    if a.labels:
        y = load_labels(a.labels)
        if y.size != X.n:
            raise DataError(f"{y.size} labels for {X.n} subjects")
    return X, y


def cmd_cluster(a) -> int:
    if a.k < 2:
        raise UsageError("--k must be >= 2")
    X, y = _load(a)
    if y is not None and (y.min() < 1 or y.max() > a.k):
        raise DataError(f"labels must lie in 1..{a.k}")
    rep = run_method(a.method, X, a.k, a.seed, a.repeats, y, _if_config(a),
                     _hyper(a, a.seed), a.jobs)
    labels = rep.assignment.labels
    diag = {k: v for k, v in rep.diagnostics.items() if k != "elapsed_s"}
    out = {"schema_version": SCHEMA_VERSION, "method": a.method, "seed": a.seed, "K": a.k,
           "n": X.n, "p": X.p, "repeats": len(rep.repeat_assignments) or 1,
           "labels": labels.tolist(),
           "retained_count": None if rep.retained is None else len(rep.retained),
           "retained": None if rep.retained is None else rep.retained.indices.tolist(),
           "diagnostics": diag}
    if y is not None:
        m = clustering_error(labels, y, a.k)
        out.update(error_count=m.error_count, accuracy=m.accuracy, ari=ari(labels, y),
                   per_repeat_errors=rep.per_repeat_errors.tolist(),
                   mean_error_count=float(rep.per_repeat_errors.mean()))
    _emit(_json(out), a.out)
    return 0


def cmd_sweep(a) -> int:
    if a.k < 2:
        raise UsageError("--k must be >= 2")
    X, y = _load(a)
    rows = feature_sweep(X, a.k, a.m_grid, y, a.clusterer, a.seed, a.repeats, _if_config(a),
                         _hyper(a, a.seed), jobs=a.jobs)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["m", "mean_error_rate", "mean_error_count", "errors"])
    for r in rows:
        w.writerow([r.m, repr(r.mean_error_rate), repr(r.mean_error_count),
                    " ".join(map(str, r.errors))])
    _emit(buf.getvalue(), a.out)
    return 0


def cmd_simulate(a) -> int:
    over = {k: v for k, v in (("n", a.n), ("epsilon", a.epsilon), ("tau", a.tau),
                              ("support_size", a.support_size)) if v is not None}
    cells = simulate_cell(a.p, a.theta, a.beta, a.alpha, a.method, a.reps, a.seed,
                          _if_config(a), a.jobs, **over)
    res = [{"method": c.method, "reps": c.reps, "hamming_mean": c.hamming_mean,
            "hamming_sd": c.hamming_sd, "select_exact_rate": c.select_exact_rate,
            "no_selection": c.no_selection} for c in cells]
    out = {"schema_version": SCHEMA_VERSION, "p": a.p, "theta": a.theta, "beta": a.beta,
           "alpha": a.alpha, "seed": a.seed, "overrides": over, "results": res}
    if len(res) == 1:
        out.update(res[0])
    _emit(_json(out), a.out)
    return 0


def cmd_phase(a) -> int:
    cells = run_phase_grid(a.p, a.theta, a.beta_grid, a.alpha_grid, a.methods, a.reps,
                           a.seed, _if_config(a), a.jobs)
    write_grid(cells, a.out, a.p, a.theta, a.seed,
               {"reps": a.reps, "methods": list(a.methods)})
    return 0


def cmd_null_table(a) -> int:
    if a.out:
        build_null_cdf(a.n, a.B, a.seed, a.kind).save(a.out)
    else:
        get_null_table(a.n, a.B, a.seed, a.kind)
    return 0


def cmd_select(a) -> int:
    X, _ = _load(a)
    step = if_step(X, _if_config(a))
    idx = step.retained.indices
    sel = step.selection
    out = {"schema_version": SCHEMA_VERSION, "n": X.n, "p": X.p, "retained": idx.tolist(),
           "retained_ids": [X.feature_ids[j] for j in idx], "n_retained": int(idx.size),
           "threshold": sel.threshold, "j_hat": sel.j_hat, "fallback_used": sel.fallback_used,
           "dropped_constant": list(step.normalized.dropped_features),
           "pvalue_mode": step.scores.mode, "null_table": step.scores.null_table_ref}
    _emit(_json(out), a.out)
    if a.scores_out:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["feature", "id", "ks_score", "standardized", "pvalue"])
        ks = step.scores
        for k, j in enumerate(step.normalized.retained_features):
            w.writerow([int(j), X.feature_ids[j], repr(float(ks.raw_scores[k])),
                        repr(float(ks.standardized[k])), repr(float(ks.pvalues[k]))])
        atomic_write_text(a.scores_out, buf.getvalue())
    if a.submatrix_out:
        write_matrix(X.columns(idx), a.submatrix_out, header=True)
    if a.normalized_out:
        ids = tuple(X.feature_ids[j] for j in idx)
        Wk = step.normalized.values[:, step.selection.retained]
        write_matrix(DataMatrix(Wk, feature_ids=ids), a.normalized_out, header=True)
    return 0


def cmd_leaderboard(a) -> int:
    E, methods, datasets = read_error_table(a.errors)
    rep = regret_and_rank(E, methods, datasets)
    _emit(format_footer_csv(rep, a.digits), a.out)
    return 0


COMMANDS = {"cluster": cmd_cluster, "sweep": cmd_sweep, "simulate": cmd_simulate,
            "phase": cmd_phase, "null-table": cmd_null_table, "select": cmd_select,
            "leaderboard": cmd_leaderboard}


def run_command(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    try:
        a = ap.parse_args(argv)
    except SystemExit as exc:  # argparse: 0 for --help/--version, 2 for usage errors
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(a.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[a.command](a)
    except UsageError as exc:
        ap.print_usage(sys.stderr)
        print(f"ifpca: error: {exc}", file=sys.stderr)
        return 2
    except (DataError, BoundaryError, NoFeaturesSelected, ValueError, RuntimeError,
            OSError) as exc:
        print(f"ifpca: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main(argv: Sequence[str] | None = None) -> int:
    return run_command(argv)


if __name__ == "__main__":
    sys.exit(main())
