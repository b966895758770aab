"""Intervention specifications.

A regime is a per-decision conditional treatment law. Prespecified
variants (null, point_mass, stochastic_prespecified) ignore the observed
treatment mechanism; dependent variants (shift, threshold, incremental)
are modified treatment policies that transform the natural draw, so their
conditionals are built on top of the propensity in force.

Everything that integrates a function against a regime goes through
regime_nodes, which returns per-subject node/weight pairs: exact sums for
discrete actions, Gauss-Hermite nodes for Gaussian conditionals, and
transformed natural nodes for dependent regimes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dgp import DgpSpec
from .timegrid import HistoryView

__all__ = [
    "PositivityError",
    "RegimeScopeError",
    "Rule",
    "NullRegime",
    "PointMass",
    "StochasticPrespecified",
    "Shift",
    "Threshold",
    "Incremental",
    "always_treat",
    "never_treat",
    "deterministic_dynamic",
    "sample_regime",
    "density_ratio",
    "regime_nodes",
    "density_ratio_batch",
    "discrete_action_pmf",
    "draw_actions",
    "regime_from_config",
]

GH_ORDER = 21
_GH_X, _GH_W = np.polynomial.hermite.hermgauss(GH_ORDER)
_GH_W = _GH_W / math.sqrt(math.pi)


class PositivityError(RuntimeError):
    """The regime is not absolutely continuous against the propensity."""


class RegimeScopeError(ValueError):
    """The requested functional is defined only for prespecified regimes."""


@dataclass(frozen=True)
class Rule:
    """Deterministic treatment rule evaluated on F-view summaries.

    kinds: "const" (always the same dose), "affine" (intercept +
    coef_l * current covariate), "covariate_above" (treat when the current
    covariate exceeds cutoff).
    """

    kind: str
    const: float = 0.0
    intercept: float = 0.0
    coef_l: float = 0.0
    cutoff: float = 0.0

    def values(self, summaries: np.ndarray) -> np.ndarray:
        l_now = summaries[:, 0]
        if self.kind == "const":
            return np.full(len(summaries), self.const)
        if self.kind == "affine":
            return self.intercept + self.coef_l * l_now
        if self.kind == "covariate_above":
            return (l_now > self.cutoff).astype(float)
        raise ValueError(f"unknown rule kind {self.kind!r}")


@dataclass(frozen=True)
class NullRegime:
    """G = the observed law: keep every natural draw."""

    variant = "null"
    depends_on_actual = False


@dataclass(frozen=True)
class PointMass:
    """All mass on a deterministic rule of the history."""

    rule: Rule
    label: str = "point_mass"
    variant = "point_mass"
    depends_on_actual = False


@dataclass(frozen=True)
class StochasticPrespecified:
    """A fully declared stochastic conditional, independent of the propensity.

    dist="bernoulli": P(A=1) = clip(intercept + coef_l * L, 0.01, 0.99).
    dist="gaussian": A ~ N(intercept + coef_l * L, sd^2).
    """

    dist: str
    intercept: float
    coef_l: float = 0.0
    sd: float = 0.0
    variant = "stochastic_prespecified"
    depends_on_actual = False

    def __post_init__(self) -> None:
        if self.dist not in ("bernoulli", "gaussian"):
            raise ValueError(f"unknown stochastic dist {self.dist!r}")
        if self.dist == "gaussian" and not self.sd > 0:
            raise ValueError("gaussian regime needs sd > 0")

    def prob1(self, summaries: np.ndarray) -> np.ndarray:
        return np.clip(self.intercept + self.coef_l * summaries[:, 0], 0.01, 0.99)

    def gauss(self, summaries: np.ndarray) -> tuple[np.ndarray, float]:
        return self.intercept + self.coef_l * summaries[:, 0], self.sd


@dataclass(frozen=True)
class Shift:
    """Add delta to the natural draw (continuous treatments only)."""

    delta: float
    variant = "shift"
    depends_on_actual = True


@dataclass(frozen=True)
class Threshold:
    """Raise the natural draw to theta when it falls below (continuous only)."""

    theta: float
    variant = "threshold"
    depends_on_actual = True


@dataclass(frozen=True)
class Incremental:
    """Multiply the odds of treatment by a positive factor (binary only)."""

    odds_multiplier: float
    variant = "incremental"
    depends_on_actual = True

    def __post_init__(self) -> None:
        if not self.odds_multiplier > 0:
            raise ValueError("odds_multiplier must be positive")

    def shifted(self, pi: np.ndarray) -> np.ndarray:
        r = self.odds_multiplier
        return r * pi / (r * pi + 1.0 - pi)


Regime = NullRegime | PointMass | StochasticPrespecified | Shift | Threshold | Incremental


def always_treat() -> PointMass:
    return PointMass(Rule("const", const=1.0))


def never_treat() -> PointMass:
    return PointMass(Rule("const", const=0.0))


def deterministic_dynamic(cutoff: float = 0.5) -> PointMass:
    """Treat exactly when the current covariate exceeds the cutoff."""
    return PointMass(Rule("covariate_above", cutoff=cutoff), label="deterministic_dynamic")


def _is_discrete(model) -> bool:
    return model.kind == "discrete-chain"


def _require_discrete(g: Regime, model) -> None:
    if not _is_discrete(model):
        raise ValueError(f"{g.variant} regime applies to discrete treatments only")


def _require_continuous(g: Regime, model) -> None:
    if _is_discrete(model):
        raise ValueError(f"{g.variant} regime applies to continuous treatments only")


# --- vectorized cores ----------------------------------------------------

def draw_actions(
    g: Regime,
    model,
    f_summaries: np.ndarray,
    natural: np.ndarray,
    noise: np.ndarray,
) -> np.ndarray:
    """Turn natural propensity draws into regime draws.

    noise is the underlying uniform (discrete) or standard normal
    (continuous) behind the natural draw, reused so prespecified
    stochastic regimes stay deterministic under the stream contract.
    """
    if isinstance(g, NullRegime):
        return natural
    if isinstance(g, PointMass):
        return g.rule.values(f_summaries)
    if isinstance(g, Shift):
        _require_continuous(g, model)
        return natural + g.delta
    if isinstance(g, Threshold):
        _require_continuous(g, model)
        return np.maximum(natural, g.theta)
    if isinstance(g, Incremental):
        _require_discrete(g, model)
        pi = model.propensity_prob(f_summaries)
        return (noise < g.shifted(pi)).astype(float)
    if isinstance(g, StochasticPrespecified):
        if g.dist == "bernoulli":
            _require_discrete(g, model)
            return (noise < g.prob1(f_summaries)).astype(float)
        _require_continuous(g, model)
        mean, sd = g.gauss(f_summaries)
        return mean + sd * noise
    raise TypeError(f"unknown regime {g!r}")


def density_ratio_batch(
    g: Regime,
    model,
    f_summaries: np.ndarray,
    observed_a: np.ndarray,
) -> np.ndarray:
    """Per-step dG/dP factors at the observed draws."""
    if isinstance(g, NullRegime):
        return np.ones(len(f_summaries))
    if isinstance(g, PointMass):
        if not _is_discrete(model):
            raise PositivityError(
                "point-mass regime on a continuous treatment has no density "
                "against the propensity")
        pi1 = model.propensity_prob(f_summaries)
        pi_obs = np.where(observed_a == 1.0, pi1, 1.0 - pi1)
        return (observed_a == g.rule.values(f_summaries)).astype(float) / pi_obs
    if isinstance(g, Threshold):
        _require_continuous(g, model)
        raise PositivityError(
            "threshold regime carries an atom at theta, so its density "
            "against a continuous propensity does not exist")
    if isinstance(g, Shift):
        _require_continuous(g, model)
        mean, sd = model.propensity_gauss(f_summaries)
        d = g.delta
        return np.exp((2.0 * (observed_a - mean) * d - d * d) / (2.0 * sd * sd))
    if isinstance(g, Incremental):
        _require_discrete(g, model)
        pi = model.propensity_prob(f_summaries)
        denom = g.odds_multiplier * pi + 1.0 - pi
        return np.where(observed_a == 1.0, g.odds_multiplier, 1.0) / denom
    if isinstance(g, StochasticPrespecified):
        if g.dist == "bernoulli":
            _require_discrete(g, model)
            p1 = g.prob1(f_summaries)
            pi1 = model.propensity_prob(f_summaries)
            num = np.where(observed_a == 1.0, p1, 1.0 - p1)
            den = np.where(observed_a == 1.0, pi1, 1.0 - pi1)
            return num / den
        _require_continuous(g, model)
        gm, gs = g.gauss(f_summaries)
        pm, ps = model.propensity_gauss(f_summaries)
        zg = (observed_a - gm) / gs
        zp = (observed_a - pm) / ps
        return (ps / gs) * np.exp(0.5 * (zp * zp - zg * zg))
    raise TypeError(f"unknown regime {g!r}")


def regime_nodes(
    g: Regime,
    model,
    f_summaries: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for E_G[f(A) | F-view] per subject.

    Returns (values, weights) with shape (n, m); sum_j weights[i, j]
    f(values[i, j]) integrates f against the regime's conditional at
    subject i. Exact for discrete actions; Gauss-Hermite order 21 for
    Gaussian conditionals; dependent regimes integrate through the
    transformed natural draw.
    """
    n = len(f_summaries)
    if _is_discrete(model):
        if isinstance(g, (Shift, Threshold)):
            raise ValueError(f"{g.variant} regime applies to continuous treatments only")
        if isinstance(g, PointMass):
            return g.rule.values(f_summaries)[:, None], np.ones((n, 1))
        if isinstance(g, NullRegime):
            p1 = model.propensity_prob(f_summaries)
        elif isinstance(g, Incremental):
            p1 = g.shifted(model.propensity_prob(f_summaries))
        elif isinstance(g, StochasticPrespecified):
            if g.dist != "bernoulli":
                raise ValueError("gaussian regime on a discrete treatment")
            p1 = g.prob1(f_summaries)
        else:
            raise TypeError(f"unknown regime {g!r}")
        values = np.broadcast_to(np.array([0.0, 1.0]), (n, 2))
        return values, np.column_stack([1.0 - p1, p1])
    # continuous treatment
    if isinstance(g, PointMass):
        return g.rule.values(f_summaries)[:, None], np.ones((n, 1))
    if isinstance(g, Incremental):
        raise ValueError("incremental regime applies to discrete treatments only")
    if isinstance(g, StochasticPrespecified):
        mean, sd = g.gauss(f_summaries)
    else:
        mean, sd = model.propensity_gauss(f_summaries)
    nodes = mean[:, None] + math.sqrt(2.0) * sd * _GH_X[None, :]
    if isinstance(g, Shift):
        nodes = nodes + g.delta
    elif isinstance(g, Threshold):
        nodes = np.maximum(nodes, g.theta)
    weights = np.broadcast_to(_GH_W, nodes.shape)
    return nodes, weights


def discrete_action_pmf(
    g: Regime,
    model,
    f_summaries: np.ndarray,
    actions: np.ndarray,
) -> np.ndarray:
    """Regime pmf over a finite action set per F-view row, shape (n, n_actions).

    Raises when the regime puts mass outside the given set, which is how
    an off-support deterministic rule surfaces on a discrete chain.
    """
    values, weights = regime_nodes(g, model, f_summaries)
    pmf = np.zeros((len(f_summaries), len(actions)))
    for col in range(values.shape[1]):
        for ai, a in enumerate(actions):
            match = np.isclose(values[:, col], a)
            pmf[match, ai] += weights[match, col]
    if not np.allclose(pmf.sum(axis=1), 1.0):
        raise ValueError("regime puts mass outside the chain's action set")
    return pmf


# --- single-view wrappers -------------------------------------------------

def sample_regime(g: Regime, h: HistoryView, spec: DgpSpec, rng: np.random.Generator) -> float:
    """One draw from the regime's conditional at an F-view."""
    if h.current_treatment is not None:
        raise ValueError("sample_regime needs a view without the current treatment")
    summ = h.summary[None, :]
    if spec.kind == "discrete-chain":
        noise = rng.random(1)
        natural = (noise < spec.propensity_prob(summ)).astype(float)
    else:
        noise = rng.standard_normal(1)
        mean, sd = spec.propensity_gauss(summ)
        natural = mean + sd * noise
    return float(draw_actions(g, spec, summ, natural, noise)[0])


def density_ratio(g: Regime, h: HistoryView, observed_a: float, spec: DgpSpec) -> float:
    """Radon-Nikodym factor dG/dP of one treatment draw at an F-view."""
    if h.current_treatment is not None:
        raise ValueError("density_ratio needs a view without the current treatment")
    summ = h.summary[None, :]
    return float(density_ratio_batch(g, spec, summ, np.asarray([observed_a]))[0])


# --- config ---------------------------------------------------------------

def regime_from_config(block: dict) -> Regime:
    """Build a regime from a config mapping: {variant: ..., params}."""
    if "variant" not in block:
        raise ValueError("regime.variant: missing")
    variant = block["variant"]
    params = {k: v for k, v in block.items() if k != "variant"}
    try:
        if variant == "null":
            return NullRegime()
        if variant == "point_mass":
            if "value" in params:
                return PointMass(Rule("const", const=float(params["value"])))
            rule = params["rule"]
            return PointMass(Rule(rule["kind"], **{k: float(v) for k, v in rule.items() if k != "kind"}))
        if variant == "deterministic_dynamic":
            return deterministic_dynamic(float(params.get("cutoff", 0.5)))
        if variant == "stochastic_prespecified":
            return StochasticPrespecified(
                dist=params["dist"],
                intercept=float(params["intercept"]),
                coef_l=float(params.get("coef_l", 0.0)),
                sd=float(params.get("sd", 0.0)),
            )
        if variant == "shift":
            return Shift(float(params["delta"]))
        if variant == "threshold":
            return Threshold(float(params["theta"]))
        if variant == "incremental":
            return Incremental(float(params["odds_multiplier"]))
    except KeyError as exc:
        raise ValueError(f"regime.{exc.args[0]}: missing for variant {variant!r}") from None
    raise ValueError(f"regime.variant: unknown {variant!r}")
