"""Experiment orchestration.

Configs come from TOML or JSON files (or plain mappings), every run is
keyed by an integer seed, and each entry point returns a result object
that can write its tables (CSV) and aggregates (JSON) deterministically:
the same config and seed reproduce the same bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd

from .dgp import DgpSpec, simulate_observed, spec_from_config
from .estimators import (
    ConstantH,
    CovariateH,
    NuisanceSet,
    PerturbedH,
    build_H,
    build_Q,
    dr_estimate,
    ee_residual_gcomp,
    ee_residual_ipw,
    gcomp_estimate,
    indicator_weights,
    ipw_estimate,
    martingale_means,
    scale_weights,
    unit_weights,
)
from .oracle import PathBudgetError, enumerate_exact, mesh_convergence, simulate_counterfactual
from .regimes import Regime, regime_from_config
from .timegrid import Cohort, make_partition

__all__ = [
    "ExperimentConfig",
    "ReportBundle",
    "GridResult",
    "ConvergenceResult",
    "DiagnosticsResult",
    "run_experiment",
    "dr_grid",
    "convergence_study",
    "diagnose",
    "load_config",
]

DEFAULT_KNOBS = ("transition_shift(0.15)", "propensity_drop_covariate")

ESTIMATOR_NAMES = ("gcomp", "ipw", "dr")


def _require(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise ValueError(f"{path}: {message}")


def _valid_nuisance_mode(mode: str) -> bool:
    return mode in ("exact", "fitted") or mode.startswith("misspec:")


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated settings shared by the harness entry points.

    `estimators` lists which estimators a run covers; `nuisance` is either
    one mode string applied to all of them or a mapping from estimator
    name to mode.
    """

    spec: dict
    regime: dict = field(default_factory=lambda: {"variant": "null"})
    decisions: int = 3
    n: int = 2000
    seed: int = 0
    replications: int = 1
    estimators: tuple = ESTIMATOR_NAMES
    nuisance: Union[str, dict] = "exact"
    k_schedule: tuple = (4, 8, 16, 32)
    oracle_multiplier: int = 10
    threshold: float = 3.0
    knobs: tuple = DEFAULT_KNOBS
    weight_cap: Optional[float] = None

    def nuisance_for(self, estimator: str) -> str:
        if isinstance(self.nuisance, dict):
            return self.nuisance.get(estimator, "exact")
        return self.nuisance

    def single_nuisance(self) -> str:
        if isinstance(self.nuisance, dict):
            raise ValueError(
                "nuisance: this entry point takes a single mode, not a per-estimator table")
        return self.nuisance

    @classmethod
    def from_mapping(cls, raw: dict) -> "ExperimentConfig":
        _require(isinstance(raw, dict), "config", "must be a mapping")
        known = {
            "spec", "regime", "decisions", "n", "seed", "replications",
            "estimator", "estimators", "nuisance", "k_schedule",
            "oracle_multiplier", "threshold", "knobs", "weight_cap",
        }
        for key in raw:
            _require(key in known, key, "unknown config field")
        _require("spec" in raw, "spec", "missing")
        _require(isinstance(raw["spec"], dict), "spec", "must be a mapping")
        out: dict = {"spec": raw["spec"]}
        if "regime" in raw:
            _require(isinstance(raw["regime"], dict), "regime", "must be a mapping")
            out["regime"] = raw["regime"]
        for key, kind in (("decisions", int), ("n", int), ("seed", int),
                          ("replications", int), ("oracle_multiplier", int)):
            if key in raw:
                _require(isinstance(raw[key], int) and not isinstance(raw[key], bool),
                         key, "must be an integer")
                _require(raw[key] >= (0 if key == "seed" else 1), key, "out of range")
                out[key] = raw[key]
        _require(not ("estimator" in raw and "estimators" in raw), "estimator",
                 "give either estimator or estimators, not both")
        if "estimator" in raw:
            _require(raw["estimator"] in ESTIMATOR_NAMES, "estimator",
                     f"unknown estimator {raw['estimator']!r}")
            out["estimators"] = (raw["estimator"],)
        if "estimators" in raw:
            names = raw["estimators"]
            _require(isinstance(names, (list, tuple)), "estimators", "must be a list")
            for name in names:
                _require(name in ESTIMATOR_NAMES, "estimators",
                         f"unknown estimator {name!r}")
            out["estimators"] = tuple(names)
        if "nuisance" in raw:
            nu = raw["nuisance"]
            if isinstance(nu, dict):
                for est_name, mode in nu.items():
                    _require(est_name in ESTIMATOR_NAMES, "nuisance",
                             f"unknown estimator key {est_name!r}")
                    _require(isinstance(mode, str) and _valid_nuisance_mode(mode),
                             f"nuisance.{est_name}", f"unknown nuisance mode {mode!r}")
                out["nuisance"] = dict(nu)
            else:
                _require(isinstance(nu, str), "nuisance",
                         "must be a string or a table keyed by estimator")
                _require(_valid_nuisance_mode(nu), "nuisance",
                         f"unknown nuisance mode {nu!r}")
                out["nuisance"] = nu
        if "k_schedule" in raw:
            ks = raw["k_schedule"]
            _require(isinstance(ks, (list, tuple)) and len(ks) > 0,
                     "k_schedule", "must be a non-empty list of integers")
            _require(all(isinstance(k, int) and k >= 1 for k in ks),
                     "k_schedule", "entries must be positive integers")
            out["k_schedule"] = tuple(ks)
        if "threshold" in raw:
            _require(isinstance(raw["threshold"], (int, float)) and raw["threshold"] > 0,
                     "threshold", "must be a positive number")
            out["threshold"] = float(raw["threshold"])
        if "knobs" in raw:
            ks = raw["knobs"]
            _require(isinstance(ks, (list, tuple)) and len(ks) == 2,
                     "knobs", "must list exactly two misspecification knobs")
            out["knobs"] = tuple(str(k) for k in ks)
        if "weight_cap" in raw and raw["weight_cap"] is not None:
            _require(isinstance(raw["weight_cap"], (int, float)) and raw["weight_cap"] > 0,
                     "weight_cap", "must be a positive number")
            out["weight_cap"] = float(raw["weight_cap"])
        # Resolve the referenced names now so a bad config fails at load
        # time with the field named, not mid-run.
        try:
            spec_from_config(out["spec"])
        except (ValueError, KeyError) as exc:
            msg = str(exc)
            raise ValueError(msg if msg.startswith(("spec", "dgp")) else f"spec: {msg}") from None
        if "regime" in out:
            try:
                regime_from_config(out["regime"])
            except ValueError as exc:
                msg = str(exc)
                raise ValueError(msg if msg.startswith("regime") else f"regime: {msg}") from None
        return cls(**out)


def _load_toml(text: str) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    return tomllib.loads(text)


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """Read a TOML or JSON config file."""
    p = Path(path)
    text = p.read_bytes().decode("utf-8")
    if p.suffix.lower() == ".json":
        raw = json.loads(text)
    elif p.suffix.lower() == ".toml":
        raw = _load_toml(text)
    else:
        try:
            raw = json.loads(text)
        except json.JSONDecodeError:
            raw = _load_toml(text)
    return ExperimentConfig.from_mapping(raw)


def _json_default(obj):
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)!r}")


def _write_json(payload: dict, path: Path) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")


def build_nuisance(
    mode: str,
    spec: DgpSpec,
    cohort: Optional[Cohort],
    decisions,
) -> NuisanceSet:
    """Resolve a nuisance mode string: exact, fitted, or misspec:<knobs>."""
    if mode == "exact":
        return NuisanceSet.exact(spec)
    if mode == "fitted":
        if cohort is None:
            raise ValueError("fitted nuisances need a cohort")
        return NuisanceSet.fitted(spec, cohort, decisions)
    if mode.startswith("misspec:"):
        knobs = [k.strip() for k in mode[len("misspec:"):].split(",") if k.strip()]
        if not knobs:
            raise ValueError("nuisance: misspec: needs at least one knob")
        return NuisanceSet.misspecified(spec, knobs)
    raise ValueError(f"unknown nuisance mode {mode!r}")


def estimate_once(
    estimator: str,
    nuis: NuisanceSet,
    g: Regime,
    decisions,
    cohort: Cohort,
    cap: Optional[float] = None,
):
    """One estimate on one cohort with pre-built nuisances."""
    if estimator == "gcomp":
        return gcomp_estimate(build_H(nuis, g, decisions, cohort))
    if estimator == "ipw":
        return ipw_estimate(build_Q(nuis, g, decisions, cohort, cap=cap), cohort)
    if estimator == "dr":
        H = build_H(nuis, g, decisions, cohort)
        Q = build_Q(nuis, g, decisions, cohort, cap=cap)
        return dr_estimate(H, Q, g, decisions, cohort)
    raise ValueError(f"unknown estimator {estimator!r}")


def _oracle_value(spec: DgpSpec, g: Regime, decisions, cfg: ExperimentConfig) -> tuple[float, float, str]:
    """Ground truth with its own uncertainty: exact when enumerable."""
    if spec.kind == "discrete-chain":
        try:
            return enumerate_exact(spec, g, decisions), 0.0, "enumerate_exact"
        except (ValueError, PathBudgetError):
            pass
    sample = simulate_counterfactual(
        spec, g, decisions, cfg.n * cfg.oracle_multiplier, cfg.seed + 777_000_001)
    return sample.mean, sample.se, "simulate_counterfactual"


@dataclass
class ReportBundle:
    """Replication-by-estimator table plus per-estimator aggregates."""

    per_rep: pd.DataFrame
    aggregates: dict
    passed: bool

    def write(self, out_dir: Union[str, Path]) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        table = out / "replications.csv"
        summary = out / "summary.json"
        self.per_rep.to_csv(table, index=False)
        _write_json(self.aggregates, summary)
        return [table, summary]


def run_experiment(cfg: ExperimentConfig) -> ReportBundle:
    """Replicated estimation runs compared against the oracle target.

    Each replication simulates one cohort and runs every configured
    estimator on it, with nuisances built per that estimator's mode.
    """
    _require(len(cfg.estimators) >= 1, "estimators", "needs at least one estimator")
    spec = spec_from_config(cfg.spec)
    g = regime_from_config(cfg.regime)
    decisions = make_partition(spec.horizon, cfg.decisions)
    oracle, oracle_se, oracle_method = _oracle_value(spec, g, decisions, cfg)

    rows = []
    for r in range(cfg.replications):
        seed_r = cfg.seed + r
        cohort = simulate_observed(spec, decisions, cfg.n, seed_r)
        nuis_cache: dict = {}
        for name in cfg.estimators:
            mode = cfg.nuisance_for(name)
            if mode not in nuis_cache:
                nuis_cache[mode] = build_nuisance(mode, spec, cohort, decisions)
            est = estimate_once(name, nuis_cache[mode], g, decisions, cohort,
                                cap=cfg.weight_cap)
            rows.append({"rep": r, "seed": seed_r, "estimator": name,
                         "nuisance": mode, "estimate": est.point, "se": est.se})
    per_rep = pd.DataFrame(rows)

    by_estimator: dict = {}
    all_passed = True
    for name in cfg.estimators:
        if name in by_estimator:
            continue
        sel = per_rep[per_rep["estimator"] == name]
        mean_est = float(sel["estimate"].mean())
        if len(sel) > 1:
            sd_est = float(sel["estimate"].std(ddof=1))
            se_of_mean = sd_est / float(np.sqrt(len(sel)))
        else:
            sd_est = float(sel["se"].iloc[0])
            se_of_mean = sd_est
        bias = mean_est - oracle
        tol = cfg.threshold * float(np.hypot(se_of_mean, oracle_se))
        passed = bool(abs(bias) <= tol) if tol > 0 else bool(abs(bias) <= 1e-10)
        all_passed = all_passed and passed
        by_estimator[name] = {
            "nuisance": cfg.nuisance_for(name),
            "mean_estimate": mean_est,
            "sd_estimate": sd_est,
            "se_of_mean": se_of_mean,
            "bias": bias,
            "threshold": tol,
            "passed": passed,
        }
    aggregates = {
        "regime": cfg.regime,
        "n": cfg.n,
        "K": cfg.decisions,
        "replications": cfg.replications,
        "oracle": oracle,
        "oracle_se": oracle_se,
        "oracle_method": oracle_method,
        "estimators": by_estimator,
        "passed": all_passed,
    }
    return ReportBundle(per_rep=per_rep, aggregates=aggregates, passed=all_passed)


@dataclass
class GridResult:
    """2x2 nuisance-misspecification grid for the doubly robust estimator."""

    cells: pd.DataFrame
    per_rep: pd.DataFrame
    oracle: float
    pattern_ok: bool

    def write(self, out_dir: Union[str, Path]) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        reps = out / "grid_replications.csv"
        cells = out / "grid_cells.csv"
        summary = out / "grid_summary.json"
        self.per_rep.to_csv(reps, index=False)
        self.cells.to_csv(cells, index=False)
        _write_json({
            "oracle": self.oracle,
            "pattern_ok": self.pattern_ok,
            "cells": self.cells.to_dict(orient="records"),
        }, summary)
        return [reps, cells, summary]


def dr_grid(cfg: ExperimentConfig) -> GridResult:
    """Bias pattern across {value process, weight process} x {exact, wrong}.

    Each replication simulates one cohort and evaluates all four cells on
    it. The expected pattern is unbiased everywhere except the cell where
    both nuisances are wrong.
    """
    spec = spec_from_config(cfg.spec)
    g = regime_from_config(cfg.regime)
    decisions = make_partition(spec.horizon, cfg.decisions)
    oracle, oracle_se, _ = _oracle_value(spec, g, decisions, cfg)
    knob_h, knob_q = cfg.knobs

    rows = []
    for r in range(cfg.replications):
        seed_r = cfg.seed + r
        cohort = simulate_observed(spec, decisions, cfg.n, seed_r)
        exact = NuisanceSet.exact(spec)
        wrong_h_nuis = NuisanceSet.misspecified(spec, knob_h)
        wrong_q_nuis = NuisanceSet.misspecified(spec, knob_q)
        h_by = {
            "exact": build_H(exact, g, decisions, cohort),
            "wrong": build_H(wrong_h_nuis, g, decisions, cohort),
        }
        q_by = {
            "exact": build_Q(exact, g, decisions, cohort, cap=cfg.weight_cap),
            "wrong": build_Q(wrong_q_nuis, g, decisions, cohort, cap=cfg.weight_cap),
        }
        for h_tag, H in h_by.items():
            for q_tag, Q in q_by.items():
                est = dr_estimate(H, Q, g, decisions, cohort)
                rows.append({
                    "rep": r, "seed": seed_r, "h": h_tag, "q": q_tag,
                    "estimate": est.point,
                })
    per_rep = pd.DataFrame(rows)

    cell_rows = []
    for h_tag in ("exact", "wrong"):
        for q_tag in ("exact", "wrong"):
            sel = per_rep[(per_rep["h"] == h_tag) & (per_rep["q"] == q_tag)]["estimate"]
            mean_est = float(sel.mean())
            se_of_mean = float(sel.std(ddof=1) / np.sqrt(len(sel))) if len(sel) > 1 else 0.0
            bias = mean_est - oracle
            tol = cfg.threshold * float(np.hypot(se_of_mean, oracle_se))
            cell_rows.append({
                "h": h_tag, "q": q_tag,
                "mean_estimate": mean_est, "bias": bias,
                "se_of_mean": se_of_mean, "threshold": tol,
                "unbiased": bool(abs(bias) <= tol),
            })
    cells = pd.DataFrame(cell_rows)
    flags = {(row["h"], row["q"]): row["unbiased"] for row in cell_rows}
    pattern_ok = (flags[("exact", "exact")] and flags[("wrong", "exact")]
                  and flags[("exact", "wrong")] and not flags[("wrong", "wrong")])
    return GridResult(cells=cells, per_rep=per_rep, oracle=oracle, pattern_ok=pattern_ok)


@dataclass
class ConvergenceResult:
    """Mesh-refinement table with tail-monotonicity flags."""

    table: pd.DataFrame
    passed: bool

    def write(self, out_dir: Union[str, Path]) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv = out / "converge.csv"
        summary = out / "converge.json"
        self.table[["K", "estimate", "se", "delta_prev"]].to_csv(csv, index=False)
        _write_json({
            "passed": self.passed,
            "rows": self.table.to_dict(orient="records"),
        }, summary)
        return [csv, summary]


def convergence_study(cfg: ExperimentConfig) -> ConvergenceResult:
    """mesh_convergence run from a config, flagged on tail monotonicity."""
    spec = spec_from_config(cfg.spec)
    g = regime_from_config(cfg.regime)
    table = mesh_convergence(spec, g, cfg.k_schedule, cfg.n, cfg.seed)
    passed = not bool(table["nonmonotone"].any())
    return ConvergenceResult(table=table, passed=passed)


@dataclass
class DiagnosticsResult:
    """Martingale means and estimating-equation battery outcomes."""

    table: pd.DataFrame
    passed: bool

    def write(self, out_dir: Union[str, Path]) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv = out / "diagnostics.csv"
        summary = out / "diagnostics.json"
        self.table.to_csv(csv, index=False)
        _write_json({
            "passed": self.passed,
            "rows": self.table.to_dict(orient="records"),
        }, summary)
        return [csv, summary]


def _regime_label(g: Regime) -> str:
    label = getattr(g, "label", None)
    if label:
        return str(label)
    return {"NullRegime": "null", "StochasticPrespecified": "stochastic"}.get(
        type(g).__name__, type(g).__name__.lower())


def diagnose(cfg: ExperimentConfig) -> DiagnosticsResult:
    """Martingale means and estimating-equation batteries from a config.

    Sections are selected by the configured estimator list: weight
    diagnostics (martingale means, the weighted-residual battery, and its
    detection probe) run when ipw or dr is listed; the value-process
    residual battery and its probe run when gcomp or dr is listed. An
    empty estimator list yields an empty report that passes vacuously.

    Both batteries carry their declared expectations even when the
    configured nuisance mode is misspecified, so the report shows which
    identities the supplied nuisances break.
    """
    columns = ["section", "case", "stage", "value", "se", "expect", "ok"]
    wants = set(cfg.estimators)
    if not wants:
        return DiagnosticsResult(table=pd.DataFrame(columns=columns), passed=True)
    want_weights = bool(wants & {"ipw", "dr"})
    want_values = bool(wants & {"gcomp", "dr"})

    mode = cfg.single_nuisance()
    spec = spec_from_config(cfg.spec)
    g = regime_from_config(cfg.regime)
    decisions = make_partition(spec.horizon, cfg.decisions)
    K = decisions.n_steps
    thr = cfg.threshold
    cohort = simulate_observed(spec, decisions, cfg.n, cfg.seed)
    nuis = build_nuisance(mode, spec, cohort, decisions)
    H = build_H(nuis, g, decisions, cohort)
    Q = build_Q(nuis, g, decisions, cohort, cap=cfg.weight_cap)
    case_label = f"{spec.name} {_regime_label(g)}"
    probe_stage = min(1, K - 1)

    rows: list[dict] = []

    def _residual_row(section: str, case: str, res, expect: str) -> dict:
        ok = (abs(res.mean) <= thr * res.se) if expect == "zero" else (abs(res.mean) > thr * res.se)
        return {"section": section, "case": case, "stage": -1,
                "value": res.mean, "se": res.se, "expect": expect, "ok": ok}

    if want_weights:
        means, ses = martingale_means(Q)
        for k, (m, s) in enumerate(zip(means, ses)):
            rows.append({
                "section": "martingale", "case": case_label, "stage": k,
                "value": float(m), "se": float(s), "expect": "one",
                "ok": bool(abs(m - 1.0) <= thr * s),
            })

    if want_values:
        q_battery = [
            ("unit Q", unit_weights(len(cohort), K)),
            ("built Q", Q),
            ("indicator Q", indicator_weights(cohort, decisions, probe_stage)),
        ]
        for q_label, q in q_battery:
            res = ee_residual_gcomp(H, q, g, decisions, cohort)
            rows.append(_residual_row("ee_gcomp", f"built H, {q_label}", res, "zero"))
        bumped = PerturbedH(H, probe_stage, 0.05)
        res = ee_residual_gcomp(bumped, indicator_weights(cohort, decisions, probe_stage),
                                g, decisions, cohort)
        rows.append(_residual_row(
            "detection", f"bumped H at stage {probe_stage}, indicator Q", res, "nonzero"))

    if want_weights:
        h_battery = [
            ("constant H", ConstantH(1.0, K)),
            ("covariate H", CovariateH(K)),
            ("built H", H),
        ]
        for h_label, h in h_battery:
            res = ee_residual_ipw(h, Q, g, decisions, cohort)
            rows.append(_residual_row("ee_ipw", f"{h_label}, built Q", res, "zero"))
        halved = scale_weights(Q, K - 1, 0.5)
        res = ee_residual_ipw(ConstantH(1.0, K), halved, g, decisions, cohort)
        rows.append(_residual_row(
            "detection", "constant H, built Q halved at last stage", res, "nonzero"))

    table = pd.DataFrame(rows, columns=columns)
    return DiagnosticsResult(table=table, passed=bool(table["ok"].all()))
