"""
Command-line front end.

    confsel pvalues    --calib C.csv --test T.csv [--randomized false]
    confsel select     --calib C.csv --test T.csv --q 0.1 --method wcs-dtm
    confsel simulate   --scenario ite1 --trials 500 --out results/
    confsel prds-check --draws 10000000 --seed 0
    confsel evaluate   --selection sel.json --test T.csv

Exit codes: 0 success, 2 usage or input error, 1 internal error. Results go
to stdout or ``--out``; diagnostics go to stderr.
"""

import argparse
import logging
from pathlib import Path
import sys
from typing import Any, Dict, Optional, Sequence

from . import __version__
from .core.exceptions import ConfSelError
from .core.types import Method, Pruning, SelectionConfig
from .inference.metrics import TrialMetrics
from .inference.pvalues import wcp_nonrandomized, wcp_randomized
from .inference.selection import select
from .io.exporter import RunManifest, manifest_path, write_csv, write_json
from .io.loader import DataLoader, load_selection
from .simulation.prds import prds_counterexample_mc
from .simulation.runner import run_trials
from .simulation.spec import SimulationSpec

logger = logging.getLogger("confsel")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2

PVALUE_COLUMNS = ["index", "pvalue", "kind"]
TRIAL_COLUMNS = ["trial", "method", "n_calib", "m", "fdp", "power", "weighted_fdp",
                 "n_selected", "discrepancy", "gamma_hat"]


def _boolean(text: str) -> bool:
    value = text.strip().lower()
    if value in ("true", "1", "yes"):
        return True
    if value in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got '{text}'")


def _level(text: str) -> float:
    try:
        q = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid level '{text}'") from None
    if not 0.0 < q < 1.0:
        raise argparse.ArgumentTypeError(f"q must lie strictly between 0 and 1, got {text}")
    return q


def _seed(text: str) -> int:
    try:
        seed = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed '{text}'") from None
    if not 0 <= seed < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return seed


def _method(text: str) -> Method:
    try:
        return Method.parse(text)
    except ConfSelError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _pruning(text: str) -> Pruning:
    try:
        return Pruning.parse(text)
    except ConfSelError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with every subcommand."""
    parser = argparse.ArgumentParser(
        prog="confsel",
        description="Weighted conformal p-values and conformalized selection.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress (INFO)")
    parser.add_argument("--debug", action="store_true", help="log details (DEBUG)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pvalues", help="weighted conformal p-values as CSV")
    p.add_argument("--calib", required=True, type=Path, help="calibration CSV (score,weight)")
    p.add_argument("--test", required=True, type=Path, help="test CSV (score,weight)")
    p.add_argument("--randomized", type=_boolean, default=True,
                   help="tie-randomized p-values (default true)")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--tie-tolerance", type=float, default=0.0)
    p.add_argument("--out", type=Path, help="output CSV (default stdout)")

    s = sub.add_parser("select", help="run a selection procedure, emit JSON")
    s.add_argument("--calib", required=True, type=Path)
    s.add_argument("--test", required=True, type=Path)
    s.add_argument("--q", type=_level, default=0.1, help="nominal FDR level")
    s.add_argument("--method", type=_method, default=Method.WCS_DTM,
                   help="wbh, wcs-hete, wcs-homo, wcs-dtm or hc-wcs")
    s.add_argument("--pruning", type=_pruning, default=Pruning.DTM,
                   help="pruning of hc-wcs: hete, homo or dtm")
    s.add_argument("--seed", type=_seed, default=0)
    s.add_argument("--tie-tolerance", type=float, default=0.0)
    s.add_argument("--no-randomized", action="store_true",
                   help="wbh on non-randomized p-values")
    s.add_argument("--out", type=Path, help="output JSON (default stdout)")

    m = sub.add_parser("simulate", help="run a simulation study")
    m.add_argument("--scenario", required=True,
                   choices=["ite1", "ite2", "ite3", "outlier", "covshift_binary"])
    m.add_argument("--coupling", default="independent",
                   choices=["independent", "positive", "negative"])
    m.add_argument("--corr", default="ind", choices=["ind", "corr"],
                   help="latent covariance: identity or AR(0.9)")
    m.add_argument("--n", type=int, help="(target) calibration size")
    m.add_argument("--m", type=int, help="(target) test size")
    m.add_argument("--n-train", type=int)
    m.add_argument("--q", type=_level, default=0.1)
    m.add_argument("--trials", type=int, default=100)
    m.add_argument("--seed", type=_seed, default=0)
    m.add_argument("--rho", type=float, help="outlier fraction")
    m.add_argument("--signal", type=float, help="outlier signal strength a")
    m.add_argument("--gamma", type=float, default=1.0, help="weight perturbation level")
    m.add_argument("--score", help="score name (scenario dependent)")
    m.add_argument("--negatives-only", action="store_true",
                   help="calibrate on null units only (covshift_binary)")
    m.add_argument("--threads", type=int, help="worker threads (default CONFSEL_THREADS)")
    m.add_argument("--out", type=Path, help="output directory for summary.json and trials.csv")

    c = sub.add_parser("prds-check", help="Monte-Carlo PRDS counterexample")
    c.add_argument("--draws", type=int, default=10_000_000)
    c.add_argument("--seed", type=_seed, default=0)
    c.add_argument("--out", type=Path, help="output JSON (default stdout)")

    e = sub.add_parser("evaluate", help="FDP and power of a selection")
    e.add_argument("--selection", required=True, type=Path, help="selection JSON")
    e.add_argument("--test", required=True, type=Path, help="test CSV with null_flag")
    e.add_argument("--out", type=Path, help="output JSON (default stdout)")
    return parser


def _write_sidecar(manifest: RunManifest, out: Optional[Path]) -> None:
    if out is not None:
        write_json(manifest.finish().to_dict(), manifest_path(out))


def cmd_pvalues(args: argparse.Namespace) -> int:
    """Write one row per test unit: index, pvalue, kind."""
    manifest = RunManifest.start(
        "pvalues",
        config={"randomized": args.randomized, "tie_tolerance": args.tie_tolerance},
        seed=args.seed,
        inputs=[args.calib, args.test],
    )
    loader = DataLoader()
    calib = loader.load_calibration(args.calib)
    test = loader.load_test(args.test)
    if args.randomized:
        pv = wcp_randomized(calib, test, seed=args.seed, tie_tolerance=args.tie_tolerance)
    else:
        pv = wcp_nonrandomized(calib, test, args.tie_tolerance)
    rows = [{"index": j, "pvalue": float(p), "kind": pv.kind.value}
            for j, p in enumerate(pv.values)]
    write_csv(rows, args.out, columns=PVALUE_COLUMNS)
    _write_sidecar(manifest, args.out)
    return EXIT_OK


def cmd_select(args: argparse.Namespace) -> int:
    """Selection JSON with the manifest embedded."""
    config = SelectionConfig(
        q=args.q,
        method=args.method,
        randomized_pvalues=not args.no_randomized,
        seed=args.seed,
        tie_tolerance=args.tie_tolerance,
        pruning=args.pruning,
    )
    manifest = RunManifest.start("select", config=config.to_dict(), seed=args.seed,
                                 inputs=[args.calib, args.test])
    loader = DataLoader()
    result = select(loader.load_calibration(args.calib), loader.load_test(args.test), config)
    logger.info(f"{config.method.value}: selected {result.n_selected} of {result.m}")
    payload = result.to_dict()
    payload["manifest"] = manifest.finish().to_dict()
    write_json(payload, args.out)
    return EXIT_OK


def _simulation_spec(args: argparse.Namespace) -> SimulationSpec:
    overrides: Dict[str, Any] = {
        "coupling": args.coupling,
        "covariance": args.corr,
        "q": args.q,
        "trials": args.trials,
        "master_seed": args.seed,
        "gamma": args.gamma,
        "negatives_only": args.negatives_only,
    }
    optional = {
        "n_calib_target": args.n,
        "m": args.m,
        "n_train": args.n_train,
        "rho": args.rho,
        "signal": args.signal,
        "score": args.score,
    }
    overrides.update({k: v for k, v in optional.items() if v is not None})
    return SimulationSpec.for_scenario(args.scenario, **overrides)


def cmd_simulate(args: argparse.Namespace) -> int:
    """summary.json and trials.csv in --out, or the summary on stdout."""
    spec = _simulation_spec(args)
    manifest = RunManifest.start("simulate", config=spec.to_dict(), seed=spec.master_seed)
    summary = run_trials(spec, n_jobs=args.threads)
    payload = summary.to_dict()
    payload["manifest"] = manifest.finish().to_dict()
    if args.out is None:
        write_json(payload)
        return EXIT_OK
    args.out.mkdir(parents=True, exist_ok=True)
    write_json(payload, args.out / "summary.json")
    write_csv(summary.records_as_rows(), args.out / "trials.csv", columns=TRIAL_COLUMNS)
    return EXIT_OK


def cmd_prds_check(args: argparse.Namespace) -> int:
    """PRDS counterexample estimates; the manifest goes to a sidecar file."""
    manifest = RunManifest.start("prds-check", config={"draws": args.draws}, seed=args.seed)
    report = prds_counterexample_mc(args.draws, seed=args.seed)
    write_json(report.to_dict(), args.out)
    _write_sidecar(manifest, args.out)
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    """fdp, power and weighted_fdp of a saved selection."""
    manifest = RunManifest.start("evaluate", inputs=[args.selection, args.test])
    selected = load_selection(args.selection)
    test = DataLoader(require_null_flags=True).load_test(args.test)
    assert test.null_flags is not None
    metrics = TrialMetrics.compute(selected, test.null_flags, test.weights)
    payload = metrics.to_dict()
    payload["manifest"] = manifest.finish().to_dict()
    write_json(payload, args.out)
    return EXIT_OK


COMMANDS = {
    "pvalues": cmd_pvalues,
    "select": cmd_select,
    "simulate": cmd_simulate,
    "prds-check": cmd_prds_check,
    "evaluate": cmd_evaluate,
}


def _configure_logging(args: argparse.Namespace) -> None:
    level = logging.DEBUG if args.debug else logging.INFO if args.verbose else logging.WARNING
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point of the ``confsel`` console script."""
    parser = build_parser()
    args = parser.parse_args(list(argv) if argv is not None else None)
    _configure_logging(args)
    try:
        return COMMANDS[args.command](args)
    except ConfSelError as e:
        print(f"confsel {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:
        logger.exception(f"Internal error in {args.command}: {e}")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
