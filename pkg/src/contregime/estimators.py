"""Identification functionals on observed cohorts.

Three routes to the same target: a backward value recursion reported at
its head (g-computation), a cumulative weight process applied to the
terminal outcome (IPW with censoring correction), and their doubly
robust combination. Estimating-equation residuals test the population
identities behind each route on finite samples.

Conventions. Decisions happen at the first K partition points; the draw
at t_k sees the F-view (covariates through t_k, doses through t_{k-1})
and produces the G-view (dose at t_k in force). A value process H is
evaluated on G-views, H at the horizon is the terminal covariate, and
(GH)(k) denotes the integral of H(k; ., a) over the regime's dose
conditional at the F-view. Weight processes carry three snapshots per
stage: q_pre (after the censor check at t_k, before the draw), q_post
(after the draw), and q_term (at the horizon, zero for censored
subjects, deflated by full censoring survival).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .dgp import DgpSpec, censoring_survival_cohort, misspecify
from .regimes import (
    Regime,
    RegimeScopeError,
    NullRegime,
    PointMass,
    Shift,
    StochasticPrespecified,
    density_ratio_batch,
    discrete_action_pmf,
    regime_nodes,
)
from .timegrid import Cohort, Partition, fine_indices

__all__ = [
    "Estimate",
    "EEResidual",
    "NuisanceSet",
    "FittedPropensity",
    "ValueProcess",
    "ChainTableH",
    "AffineH",
    "FittedH",
    "ConstantH",
    "CovariateH",
    "PerturbedH",
    "WeightProcess",
    "build_H",
    "gcomp_estimate",
    "build_Q",
    "ipw_estimate",
    "dr_estimate",
    "ee_residual_gcomp",
    "ee_residual_ipw",
    "regime_integral",
    "unit_weights",
    "indicator_weights",
    "scale_weights",
    "martingale_means",
]


@dataclass(frozen=True)
class Estimate:
    point: float
    se: float
    n: int
    K: int
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.se < 0:
            raise ValueError("se must be nonnegative")


@dataclass(frozen=True)
class EEResidual:
    """Monte-Carlo mean of an estimating-equation residual."""

    mean: float
    se: float
    n: int


# --- nuisance components --------------------------------------------------

@dataclass(frozen=True)
class _StagePropensity:
    """One stage of a fitted treatment model, propensity interface."""

    kind: str
    table: Optional[np.ndarray] = None  # P(A=1) per (covariate, prior dose) cell
    coef: Optional[np.ndarray] = None   # dose mean on [1, covariate, prior dose]
    sd: float = 0.0

    def propensity_prob(self, f_summaries: np.ndarray) -> np.ndarray:
        key = _cell_key(f_summaries[:, 0], f_summaries[:, 1])
        return self.table[key]

    def propensity_gauss(self, f_summaries: np.ndarray) -> tuple[np.ndarray, float]:
        X = np.column_stack([np.ones(len(f_summaries)), f_summaries[:, :2]])
        return X @ self.coef, self.sd


def _cell_key(l_now: np.ndarray, a_prev: np.ndarray) -> np.ndarray:
    # binary state and dose, cell index in {0,1,2,3}
    return (2 * (l_now > 0.5) + (a_prev > 0.5)).astype(int)


class FittedPropensity:
    """Per-stage treatment models fit on at-risk subjects.

    Saturated cell frequencies for binary doses (unclipped, so the fitted
    conditional matches the empirical one exactly), least squares with a
    residual scale for continuous doses.
    """

    def __init__(self, spec: DgpSpec, cohort: Cohort, decisions: Partition) -> None:
        self.kind = spec.kind
        idx = fine_indices(decisions, cohort.grid)
        times = decisions.times
        self._stages: list[_StagePropensity] = []
        for k in range(decisions.n_steps):
            j = int(idx[k])
            risk = cohort.at_risk(float(times[k]))
            f = cohort.f_summaries(j)[risk]
            a = cohort.treatment[risk, j, 0]
            if self.kind == "discrete-chain":
                key = _cell_key(f[:, 0], f[:, 1])
                table = np.full(4, a.mean() if len(a) else 0.5)
                for c in range(4):
                    hit = key == c
                    if hit.any():
                        table[c] = a[hit].mean()
                self._stages.append(_StagePropensity(self.kind, table=table))
            else:
                X = np.column_stack([np.ones(len(f)), f[:, :2]])
                coef, *_ = np.linalg.lstsq(X, a, rcond=None)
                resid = a - X @ coef
                sd = float(np.sqrt(np.mean(resid ** 2)))
                self._stages.append(_StagePropensity(self.kind, coef=coef, sd=sd))

    def at_stage(self, k: int) -> _StagePropensity:
        return self._stages[k]


@dataclass(frozen=True)
class NuisanceSet:
    """Transition, propensity, and censoring components with provenance.

    transition_spec None marks fitted mode: the value recursion is fit by
    sequential regression on a cohort instead of composed from closed
    forms. The propensity is a DgpSpec or a FittedPropensity. A censoring
    spec whose hazard is None treats every subject as uncensored.
    """

    transition_spec: Optional[DgpSpec]
    propensity: object
    censoring_spec: DgpSpec
    provenance: dict

    @classmethod
    def exact(cls, spec: DgpSpec) -> "NuisanceSet":
        tags = {"transition": "exact", "propensity": "exact", "censoring": "exact"}
        return cls(spec, spec, spec, tags)

    @classmethod
    def misspecified(cls, spec: DgpSpec, knobs: Union[str, Sequence[str]]) -> "NuisanceSet":
        if isinstance(knobs, str):
            knobs = [knobs]
        transition, propensity, censoring = spec, spec, spec
        tags = {"transition": "exact", "propensity": "exact", "censoring": "exact"}
        for knob in knobs:
            wrong = misspecify(spec, knob)
            name = knob.split("(")[0].strip()
            if name == "transition_shift":
                transition, tags["transition"] = wrong, f"misspecified({knob})"
            elif name == "propensity_drop_covariate":
                propensity, tags["propensity"] = wrong, f"misspecified({knob})"
            elif name == "censoring_ignore":
                censoring, tags["censoring"] = wrong, f"misspecified({knob})"
            else:
                raise ValueError(f"unknown misspecification knob {knob!r}")
        return cls(transition, propensity, censoring, tags)

    @classmethod
    def fitted(cls, spec: DgpSpec, cohort: Cohort, decisions: Partition) -> "NuisanceSet":
        """Fit the treatment model; value recursion fit later by build_H.

        The censoring hazard stays exact from the spec: fitting it is out
        of scope here and its exact form is cheap to carry.
        """
        prop = FittedPropensity(spec, cohort, decisions)
        tags = {"transition": "fitted", "propensity": "fitted", "censoring": "exact"}
        return cls(None, prop, spec, tags)

    def propensity_at(self, k: int):
        if isinstance(self.propensity, FittedPropensity):
            return self.propensity.at_stage(k)
        return self.propensity

    @property
    def family(self) -> str:
        if isinstance(self.propensity, FittedPropensity):
            return self.propensity.kind
        return self.propensity.kind


# --- value processes ------------------------------------------------------

class ValueProcess:
    """Stage-indexed conditional value functions evaluated on G-views.

    eval(k, summaries) takes rows [covariate at t_k, dose at t_k] and
    returns H(t_k) per row, for k in 0..K-1. Processes built by build_H
    also carry a g-computation head; hand-built test processes do not.
    """

    K: int
    source: str = "user"
    action_model: Optional[NuisanceSet] = None

    def eval(self, k: int, summaries: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def head(self) -> tuple[float, float, int]:
        raise ValueError("this value process carries no g-computation head")


def _nearest_index(grid_vals: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.abs(np.asarray(x)[:, None] - grid_vals[None, :]).argmin(axis=1)


@dataclass(frozen=True)
class ChainTableH(ValueProcess):
    """Exact value recursion on a discrete chain, one table per stage."""

    tables: tuple
    head_table: np.ndarray
    head_point: float
    states: np.ndarray
    actions: np.ndarray
    K: int
    source: str = "exact"
    action_model: Optional[NuisanceSet] = None

    def eval(self, k: int, summaries: np.ndarray) -> np.ndarray:
        si = _nearest_index(self.states, summaries[:, 0])
        ai = _nearest_index(self.actions, summaries[:, 1])
        return self.tables[k][si, ai]

    def head(self) -> tuple[float, float, int]:
        return self.head_point, 0.0, 0


@dataclass(frozen=True)
class AffineH(ValueProcess):
    """Exact value recursion on a linear-Gaussian diffusion.

    Affine coefficients propagate in closed form, so each stage is
    H(k; l, a) = coefs[k] . [1, l, a] with no quadrature error.
    """

    coefs: np.ndarray
    head_coef: np.ndarray
    head_point: float
    K: int
    source: str = "exact"
    action_model: Optional[NuisanceSet] = None

    def eval(self, k: int, summaries: np.ndarray) -> np.ndarray:
        c = self.coefs[k]
        return c[0] + c[1] * summaries[:, 0] + c[2] * summaries[:, 1]

    def head(self) -> tuple[float, float, int]:
        return self.head_point, 0.0, 0


@dataclass(frozen=True)
class FittedH(ValueProcess):
    """Sequential-regression value process fit on a cohort."""

    stage_models: tuple
    pseudo0: np.ndarray
    K: int
    source: str = "fitted"
    action_model: Optional[NuisanceSet] = None

    def eval(self, k: int, summaries: np.ndarray) -> np.ndarray:
        kind, payload = self.stage_models[k]
        if kind == "table":
            return payload[_cell_key(summaries[:, 0], summaries[:, 1])]
        X = np.column_stack([np.ones(len(summaries)), summaries[:, :2]])
        return X @ payload

    def head(self) -> tuple[float, float, int]:
        n = len(self.pseudo0)
        se = float(self.pseudo0.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return float(self.pseudo0.mean()), se, n


@dataclass(frozen=True)
class ConstantH(ValueProcess):
    """H identically equal to one value at every stage."""

    value: float
    K: int

    def eval(self, k: int, summaries: np.ndarray) -> np.ndarray:
        return np.full(len(summaries), self.value)


@dataclass(frozen=True)
class CovariateH(ValueProcess):
    """H(t_k) = current covariate: adapted, terminal value is the outcome."""

    K: int

    def eval(self, k: int, summaries: np.ndarray) -> np.ndarray:
        return summaries[:, 0].copy()


@dataclass(frozen=True)
class PerturbedH(ValueProcess):
    """A base process plus a constant bump at one stage (detection probe)."""

    base: ValueProcess
    stage: int
    delta: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "K", self.base.K)
        object.__setattr__(self, "source", "perturbed")
        object.__setattr__(self, "action_model", self.base.action_model)

    def eval(self, k: int, summaries: np.ndarray) -> np.ndarray:
        out = self.base.eval(k, summaries)
        if k == self.stage:
            out = out + self.delta
        return out


def regime_integral(
    H: ValueProcess,
    k: int,
    g: Regime,
    stage_model,
    f_summaries: np.ndarray,
) -> np.ndarray:
    """(GH)(k): integrate H(k; covariate, .) over the regime's conditional.

    One term per node from regime_nodes: exact for discrete doses, order-21
    Gauss-Hermite for Gaussian conditionals.
    """
    values, weights = regime_nodes(g, stage_model, f_summaries)
    out = np.zeros(len(f_summaries))
    for c in range(values.shape[1]):
        g_rows = np.column_stack([f_summaries[:, 0], values[:, c]])
        out += weights[:, c] * H.eval(k, g_rows)
    return out


def _affine_dose_mean(g: Regime, spec: DgpSpec) -> tuple[float, float]:
    """Regime dose mean as (intercept, slope) in the current covariate."""
    if isinstance(g, PointMass):
        rule = g.rule
        if rule.kind == "const":
            return float(rule.const), 0.0
        if rule.kind == "affine":
            return float(rule.intercept), float(rule.coef_l)
        raise ValueError(
            "exact value recursion on a diffusion needs an affine treatment rule")
    if isinstance(g, (NullRegime, Shift)):
        delta = g.delta if isinstance(g, Shift) else 0.0
        return float(spec.params["prop_mean_intercept"] + delta), float(spec.params["prop_mean_l"])
    if isinstance(g, StochasticPrespecified) and g.dist == "gaussian":
        return float(g.intercept), float(g.coef_l)
    raise ValueError(
        f"{g.variant} regime has no affine dose mean; exact value recursion "
        "on a diffusion is unavailable (use the simulation oracle or fitted mode)")


def _exact_chain_H(nuis: NuisanceSet, g: Regime, decisions: Partition) -> ChainTableH:
    spec = nuis.transition_spec
    states = spec.chain_states()
    actions = spec.chain_actions()
    n_s, n_a = len(states), len(actions)
    K = decisions.n_steps
    tables: list[np.ndarray] = [None] * K
    h_next = None
    for k in range(K - 1, -1, -1):
        M = spec.chain_interval_matrix(decisions, k)
        if k == K - 1:
            # horizon value is the terminal covariate itself
            h = np.einsum("lam,m->la", M, states)
        else:
            cells = np.array([[lp, a] for lp in states for a in actions])
            pmf = discrete_action_pmf(g, spec, cells, actions).reshape(n_s, n_a, n_a)
            gh = np.einsum("mab,mb->ma", pmf, h_next)
            h = np.einsum("lam,ma->la", M, gh)
        tables[k] = h
        h_next = h
    cells0 = np.column_stack([states, np.zeros(n_s)])
    pmf0 = discrete_action_pmf(g, spec, cells0, actions)
    head_table = np.einsum("la,la->l", pmf0, tables[0])
    head_point = float(spec.baseline_probs() @ head_table)
    return ChainTableH(
        tables=tuple(tables), head_table=head_table, head_point=head_point,
        states=states, actions=actions, K=K, action_model=nuis)


def _exact_affine_H(nuis: NuisanceSet, g: Regime, decisions: Partition) -> AffineH:
    spec = nuis.transition_spec
    r0, rl = _affine_dose_mean(g, spec)
    K = decisions.n_steps
    coefs = np.empty((K, 3))
    a1, b1, g1 = 0.0, 1.0, 0.0
    for k in range(K - 1, -1, -1):
        phi, c0, ca, _ = spec.euler_interval_affine(decisions, k)
        head0 = a1 + g1 * r0
        slope = b1 + g1 * rl
        a1, b1, g1 = head0 + slope * c0, slope * phi, slope * ca
        coefs[k] = (a1, b1, g1)
    head_coef = np.array([a1 + g1 * r0, b1 + g1 * rl])
    head_point = float(head_coef[0] + head_coef[1] * spec.baseline_mean)
    return AffineH(
        coefs=coefs, head_coef=head_coef, head_point=head_point,
        K=K, action_model=nuis)


def _fit_H(nuis: NuisanceSet, g: Regime, decisions: Partition, cohort: Cohort) -> FittedH:
    idx = fine_indices(decisions, cohort.grid)
    times = decisions.times
    K = decisions.n_steps
    kind = nuis.family
    models: list = [None] * K
    target = cohort.outcome.copy()
    for k in range(K - 1, -1, -1):
        j = int(idx[k])
        # fit only where the target's measurement time was reached
        risk = cohort.at_risk(float(times[k + 1]))
        gs = cohort.g_summaries(j)[risk]
        y = target[risk]
        if kind == "discrete-chain":
            key = _cell_key(gs[:, 0], gs[:, 1])
            table = np.full(4, y.mean() if len(y) else 0.0)
            for c in range(4):
                hit = key == c
                if hit.any():
                    table[c] = y[hit].mean()
            models[k] = ("table", table)
        else:
            X = np.column_stack([np.ones(len(gs)), gs[:, :2]])
            coef, *_ = np.linalg.lstsq(X, y, rcond=None)
            models[k] = ("affine", coef)
        partial = FittedH(stage_models=tuple(
            m if m is not None else ("table", np.zeros(4)) for m in models),
            pseudo0=np.empty(0), K=K)
        target = regime_integral(
            partial, k, g, nuis.propensity_at(k), cohort.f_summaries(j))
    return FittedH(
        stage_models=tuple(models), pseudo0=target, K=K, action_model=nuis)


def build_H(
    nuis: NuisanceSet,
    g: Regime,
    decisions: Partition,
    cohort: Optional[Cohort] = None,
) -> ValueProcess:
    """Backward value recursion under the regime.

    Exact mode composes the nuisance set's closed-form conditionals;
    fitted mode regresses pseudo-outcomes on G-view summaries backward in
    time, restricted at each stage to subjects still at risk when the
    stage's target is measured.
    """
    if nuis.transition_spec is None:
        if cohort is None:
            raise ValueError("fitted value recursion needs a cohort")
        return _fit_H(nuis, g, decisions, cohort)
    if nuis.transition_spec.kind == "discrete-chain":
        return _exact_chain_H(nuis, g, decisions)
    return _exact_affine_H(nuis, g, decisions)


def gcomp_estimate(H: ValueProcess) -> Estimate:
    """Report the value recursion's head.

    Exact heads average over the spec's baseline law (se 0); fitted heads
    average per-subject baseline pseudo-outcomes, so the se reflects
    baseline sampling only.
    """
    point, se, n = H.head()
    return Estimate(point=point, se=se, n=n, K=H.K,
                    diagnostics={"value_source": H.source})


# --- weight processes -----------------------------------------------------

@dataclass(frozen=True)
class WeightProcess:
    """Cumulative dose-ratio and censoring-survival weights per subject.

    q_pre[:, k] holds the weight just after the censor check at t_k and
    before the dose draw; q_post[:, k] includes the stage-k density
    ratio; q_term is the weight at the horizon (zero once censored,
    deflated by survival through every check). With no censoring,
    q_pre[:, k] equals q_post[:, k-1] and q_term equals q_post[:, K-1].
    """

    q_pre: np.ndarray
    q_post: np.ndarray
    q_term: np.ndarray
    K: int
    action_model: Optional[NuisanceSet] = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if (self.q_pre < 0).any() or (self.q_post < 0).any() or (self.q_term < 0).any():
            raise ValueError("weights must be nonnegative")


def build_Q(
    nuis: NuisanceSet,
    g: Regime,
    decisions: Partition,
    cohort: Cohort,
    cap: Optional[float] = None,
) -> WeightProcess:
    """Cumulative weights Q(t_k) = prod of dose ratios over censor survival.

    A subject's weight is zero from its censoring stage on. The optional
    cap clips q_post and q_term from above and reports how many entries
    it touched; it is a diagnostic aid, never a silent default.
    """
    idx = fine_indices(decisions, cohort.grid)
    times = decisions.times
    K = decisions.n_steps
    n = len(cohort)
    cens = nuis.censoring_spec
    q_pre = np.empty((n, K))
    q_post = np.empty((n, K))
    cum_ratio = np.ones(n)
    for k in range(K):
        j = int(idx[k])
        risk = cohort.at_risk(float(times[k])).astype(float)
        surv = censoring_survival_cohort(cens, cohort, j)
        q_pre[:, k] = risk * cum_ratio / surv
        ratio = density_ratio_batch(
            g, nuis.propensity_at(k), cohort.f_summaries(j),
            cohort.treatment[:, j, 0])
        cum_ratio = cum_ratio * ratio
        q_post[:, k] = risk * cum_ratio / surv
    m = cohort.grid.n_steps
    surv_full = censoring_survival_cohort(cens, cohort, m)
    uncensored = cohort.at_risk(cohort.grid.horizon).astype(float)
    q_term = uncensored * cum_ratio / surv_full

    diagnostics: dict = {}
    if cap is not None:
        touched = int((q_post > cap).sum() + (q_term > cap).sum())
        q_post = np.minimum(q_post, cap)
        q_term = np.minimum(q_term, cap)
        diagnostics["weight_cap"] = float(cap)
        diagnostics["capped_entries"] = touched
    return WeightProcess(
        q_pre=q_pre, q_post=q_post, q_term=q_term, K=K,
        action_model=nuis, diagnostics=diagnostics)


def _weight_stats(w: np.ndarray) -> dict:
    total = w.sum()
    ssq = (w ** 2).sum()
    ess = float(total * total / ssq) if ssq > 0 else 0.0
    return {
        "ess": ess,
        "max_weight": float(w.max()) if len(w) else 0.0,
        "zero_weight_share": float((w == 0).mean()) if len(w) else 0.0,
    }


def ipw_estimate(Q: WeightProcess, cohort: Cohort) -> Estimate:
    """Mean of the horizon weight times the outcome."""
    n = len(cohort)
    v = Q.q_term * cohort.outcome
    se = float(v.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    diag = _weight_stats(Q.q_term)
    diag.update(Q.diagnostics)
    return Estimate(point=float(v.mean()), se=se, n=n, K=Q.K, diagnostics=diag)


def martingale_means(Q: WeightProcess) -> tuple[np.ndarray, np.ndarray]:
    """Per-stage mean and standard error of Q(t_k); both should sit at 1."""
    n = Q.q_post.shape[0]
    means = Q.q_post.mean(axis=0)
    ses = Q.q_post.std(axis=0, ddof=1) / math.sqrt(n)
    return means, ses


def _resolve_model(H: ValueProcess, Q: WeightProcess) -> NuisanceSet:
    if H.action_model is not None:
        return H.action_model
    if Q.action_model is not None:
        return Q.action_model
    raise ValueError(
        "regime integration needs a treatment model; build H or Q from a nuisance set")


def _check_shapes(H: ValueProcess, Q: WeightProcess, decisions: Partition) -> None:
    if H.K != decisions.n_steps or Q.K != decisions.n_steps:
        raise ValueError(
            f"stage counts disagree: H has {H.K}, Q has {Q.K}, "
            f"schedule has {decisions.n_steps}")


def dr_estimate(
    H: ValueProcess,
    Q: WeightProcess,
    g: Regime,
    decisions: Partition,
    cohort: Cohort,
) -> Estimate:
    """Doubly robust combination of the value and weight processes.

    Per subject: q_term nu - sum_k [q_post_k H(k) - q_pre_k (GH)(k)].
    Unbiased when either process is built from correct nuisances. Only
    prespecified regimes are in scope: a regime that depends on the
    actual mechanism changes the influence function itself.
    """
    if g.depends_on_actual:
        raise RegimeScopeError(
            f"doubly robust estimation covers prespecified regimes only; "
            f"{g.variant} modifies the actual treatment mechanism")
    _check_shapes(H, Q, decisions)
    model = _resolve_model(H, Q)
    idx = fine_indices(decisions, cohort.grid)
    xi = Q.q_term * cohort.outcome
    for k in range(Q.K):
        j = int(idx[k])
        h_here = H.eval(k, cohort.g_summaries(j))
        gh = regime_integral(H, k, g, model.propensity_at(k), cohort.f_summaries(j))
        xi = xi - (Q.q_post[:, k] * h_here - Q.q_pre[:, k] * gh)
    n = len(cohort)
    se = float(xi.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    diag = _weight_stats(Q.q_term)
    diag.update(Q.diagnostics)
    diag["value_source"] = H.source
    return Estimate(point=float(xi.mean()), se=se, n=n, K=Q.K, diagnostics=diag)


def ee_residual_gcomp(
    H: ValueProcess,
    Q: WeightProcess,
    g: Regime,
    decisions: Partition,
    cohort: Cohort,
) -> EEResidual:
    """Residual that is mean-zero exactly when H solves the value recursion.

    q_term (nu - ... ) form: the outcome term minus the last stage's H,
    plus per-stage increments q_pre_k (GH)(k) - q_post_{k-1} H(k-1),
    all against an arbitrary bounded adapted weight process Q.
    """
    _check_shapes(H, Q, decisions)
    model = _resolve_model(H, Q)
    idx = fine_indices(decisions, cohort.grid)
    K = decisions.n_steps
    j_last = int(idx[K - 1])
    resid = Q.q_term * cohort.outcome - Q.q_post[:, K - 1] * H.eval(K - 1, cohort.g_summaries(j_last))
    for k in range(1, K):
        j = int(idx[k])
        gh = regime_integral(H, k, g, model.propensity_at(k), cohort.f_summaries(j))
        h_prev = H.eval(k - 1, cohort.g_summaries(int(idx[k - 1])))
        resid = resid + Q.q_pre[:, k] * gh - Q.q_post[:, k - 1] * h_prev
    n = len(cohort)
    return EEResidual(
        mean=float(resid.mean()),
        se=float(resid.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0,
        n=n)


def ee_residual_ipw(
    H: ValueProcess,
    Q: WeightProcess,
    g: Regime,
    decisions: Partition,
    cohort: Cohort,
) -> EEResidual:
    """Residual that is mean-zero exactly when Q is the true weight process.

    Telescoping sum of q_post_k H(k) - q_pre_k (GH)(k) over stages, for an
    arbitrary bounded adapted value process H.
    """
    _check_shapes(H, Q, decisions)
    model = _resolve_model(H, Q)
    idx = fine_indices(decisions, cohort.grid)
    resid = np.zeros(len(cohort))
    for k in range(Q.K):
        j = int(idx[k])
        gh = regime_integral(H, k, g, model.propensity_at(k), cohort.f_summaries(j))
        resid = resid + Q.q_post[:, k] * H.eval(k, cohort.g_summaries(j)) - Q.q_pre[:, k] * gh
    n = len(cohort)
    return EEResidual(
        mean=float(resid.mean()),
        se=float(resid.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0,
        n=n)


# --- hand-built weight processes for identity batteries --------------------

def unit_weights(n: int, K: int) -> WeightProcess:
    """Q identically one (valid stand-in for an uncensored null regime)."""
    return WeightProcess(
        q_pre=np.ones((n, K)), q_post=np.ones((n, K)), q_term=np.ones(n), K=K)


def indicator_weights(cohort: Cohort, decisions: Partition, stage: int) -> WeightProcess:
    """Q that switches from 1 to 1(covariate at t_stage = 1) at the stage's draw."""
    idx = fine_indices(decisions, cohort.grid)
    K = decisions.n_steps
    n = len(cohort)
    ind = (cohort.covariate[:, int(idx[stage]), 0] > 0.5).astype(float)
    q_post = np.ones((n, K))
    q_post[:, stage:] = ind[:, None]
    q_pre = np.ones((n, K))
    q_pre[:, 1:] = q_post[:, :-1]
    return WeightProcess(q_pre=q_pre, q_post=q_post, q_term=q_post[:, K - 1].copy(), K=K)


def scale_weights(Q: WeightProcess, stage: int, factor: float) -> WeightProcess:
    """Copy of Q with every weight from the stage's draw on multiplied by factor."""
    q_post = Q.q_post.copy()
    q_pre = Q.q_pre.copy()
    q_post[:, stage:] *= factor
    q_pre[:, stage + 1:] *= factor
    return WeightProcess(
        q_pre=q_pre, q_post=q_post, q_term=Q.q_term * factor, K=Q.K,
        action_model=Q.action_model, diagnostics=dict(Q.diagnostics))
