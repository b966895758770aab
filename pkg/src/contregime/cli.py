"""Command-line interface.

Subcommands: simulate, estimate, converge, dr-grid, diagnose. Every run
is driven by a TOML or JSON config; estimate also takes direct flags
that override the config. Exit codes: 0 on success, 2 when a run
completes but an acceptance flag failed, 1 on error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .dgp import simulate_observed, spec_from_config
from .harness import (
    ExperimentConfig,
    _write_json,
    build_nuisance,
    convergence_study,
    diagnose,
    dr_grid,
    estimate_once,
    load_config,
)
from .regimes import regime_from_config
from .timegrid import Cohort, make_partition

__all__ = ["main"]


def _parse_regime_flag(text: str) -> dict:
    """name[:key=value,...] -> regime config mapping."""
    name, _, rest = text.partition(":")
    block: dict = {"variant": name.strip()}
    if rest:
        for item in rest.split(","):
            key, sep, value = item.partition("=")
            if not sep:
                raise ValueError(f"--regime: expected key=value, got {item!r}")
            value = value.strip()
            try:
                block[key.strip()] = float(value)
            except ValueError:
                block[key.strip()] = value
    return block


def _cmd_simulate(cfg: ExperimentConfig, out: Path) -> int:
    spec = spec_from_config(cfg.spec)
    decisions = make_partition(spec.horizon, cfg.decisions)
    cohort = simulate_observed(spec, decisions, cfg.n, cfg.seed)
    out.mkdir(parents=True, exist_ok=True)
    csv = out / "cohort.csv"
    meta = out / "cohort_meta.json"
    cohort.to_csv(str(csv))
    _write_json({
        "spec": spec.name, "kind": spec.kind, "n": cfg.n,
        "seed": cfg.seed, "decisions": cfg.decisions,
        "fine_steps": cohort.grid.n_steps,
    }, meta)
    print(f"wrote {csv} and {meta}")
    return 0


def _cmd_estimate(cfg: ExperimentConfig, args: argparse.Namespace, out: Path) -> int:
    spec = spec_from_config(cfg.spec)
    decisions = make_partition(spec.horizon, cfg.decisions)
    g = regime_from_config(cfg.regime)
    if args.input:
        cohort = Cohort.from_csv(args.input)
    else:
        cohort = simulate_observed(spec, decisions, cfg.n, cfg.seed)
    name = cfg.estimators[0] if cfg.estimators else "gcomp"
    nuis = build_nuisance(cfg.nuisance_for(name), spec, cohort, decisions)
    est = estimate_once(name, nuis, g, decisions, cohort, cap=cfg.weight_cap)
    payload = {
        "point": est.point, "se": est.se, "n": est.n, "K": est.K,
        "diagnostics": est.diagnostics,
    }
    out.mkdir(parents=True, exist_ok=True)
    _write_json(payload, out / "estimate.json")
    print(json.dumps(payload, sort_keys=True))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="contregime",
        description="Simulate and estimate treatment-regime targets on longitudinal paths.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="TOML or JSON config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=".", help="output directory")

    add_common(sub.add_parser("simulate", help="write an observed cohort to CSV"))

    p_est = sub.add_parser("estimate", help="one estimate on a cohort")
    add_common(p_est)
    p_est.add_argument("--estimator", choices=["gcomp", "ipw", "dr"], default=None)
    p_est.add_argument("--nuisance", default=None,
                       help="exact | fitted | misspec:<knob>[,<knob>]")
    p_est.add_argument("--regime", default=None, help="name[:key=value,...]")
    p_est.add_argument("--decisions", type=int, default=None, help="number of decision times")
    p_est.add_argument("--n", type=int, default=None, help="cohort size when simulating")
    source = p_est.add_mutually_exclusive_group()
    source.add_argument("--input", default=None, help="cohort CSV to estimate on")
    source.add_argument("--simulate", action="store_true",
                        help="simulate the cohort from the config (default)")

    add_common(sub.add_parser("converge", help="mesh-refinement study"))
    add_common(sub.add_parser("dr-grid", help="doubly robust misspecification grid"))
    add_common(sub.add_parser("diagnose", help="martingale and estimating-equation batteries"))

    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1

    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        out = Path(args.out)

        if args.command == "simulate":
            return _cmd_simulate(cfg, out)
        if args.command == "estimate":
            overrides = {}
            if args.estimator:
                overrides["estimators"] = (args.estimator,)
            if args.nuisance:
                overrides["nuisance"] = args.nuisance
            if args.regime:
                overrides["regime"] = _parse_regime_flag(args.regime)
            if args.decisions:
                overrides["decisions"] = args.decisions
            if args.n:
                overrides["n"] = args.n
            if overrides:
                cfg = replace(cfg, **overrides)
            return _cmd_estimate(cfg, args, out)
        if args.command == "converge":
            result = convergence_study(cfg)
            files = result.write(out)
            print(f"wrote {files[0]} and {files[1]}; passed={result.passed}")
            return 0 if result.passed else 2
        if args.command == "dr-grid":
            result = dr_grid(cfg)
            files = result.write(out)
            print(f"wrote {', '.join(str(f) for f in files)}; pattern_ok={result.pattern_ok}")
            return 0 if result.pattern_ok else 2
        if args.command == "diagnose":
            result = diagnose(cfg)
            files = result.write(out)
            print(f"wrote {files[0]} and {files[1]}; passed={result.passed}")
            return 0 if result.passed else 2
        raise ValueError(f"unknown command {args.command!r}")
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
