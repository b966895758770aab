"""Fully specified data-generating processes.

Two kinds are built in. A discrete-chain DGP has binary covariate and
treatment with logistic-free affine probabilities; an euler-diffusion DGP
moves a scalar covariate by Euler steps on the fine grid while treatments
are redrawn at decision times and held constant between. Both expose
their conditional transition, propensity, and censoring-hazard densities
in closed form, so estimators can run with exact nuisances, and both can
be perturbed through deliberate misspecification knobs.

Canonical desk instances:

- BIN3: tau=3, decisions at {0,1,2}; L(0) ~ Bernoulli(0.5);
  P(A=1|.) = 0.2 + 0.6 L(t); P(L'=1|.) = 0.2 + 0.3 A + 0.3 L; nu = L(3).
- OU1: tau=1, fine grid of 256 steps; dL = (-0.5 L + 0.8 A) dt + 0.2 dW;
  A ~ N(0.5 L, 0.3^2) at decision times; L(0) ~ N(0, 0.1^2); nu = L(1).
- CENS3: BIN3 plus a constant per-step censoring hazard of 0.1.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .rng import Role, World, substream
from .timegrid import Cohort, HistoryView, Partition, Trajectory, fine_indices, make_partition

__all__ = [
    "CensoringHazard",
    "DgpSpec",
    "bin3",
    "ou1",
    "cens3",
    "spec_from_config",
    "simulate_observed",
    "transition_density",
    "propensity_density",
    "censoring_survival",
    "censoring_survival_cohort",
    "misspecify",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class CensoringHazard:
    """Per-step hazard of leaving observation, a function of (history, time)."""

    kind: str = "constant"
    rate: float = 0.0

    def __post_init__(self) -> None:
        if self.kind != "constant":
            raise ValueError(f"unknown hazard kind {self.kind!r}")
        if not 0.0 <= self.rate < 1.0:
            raise ValueError("hazard rate must lie in [0, 1)")

    def value(self, summaries: np.ndarray, t: float) -> np.ndarray:
        n = summaries.shape[0] if summaries.ndim == 2 else 1
        return np.full(n, self.rate)


@dataclass(frozen=True)
class DgpSpec:
    """A fully known observed-data law.

    params (discrete-chain): baseline_p, prop_intercept, prop_l,
    trans_intercept, trans_a, trans_l, trans_shift.
    params (euler-diffusion): baseline_mean, baseline_sd, drift_intercept,
    drift_l, drift_a, noise, prop_mean_intercept, prop_mean_l, prop_sd.

    trans_shift and drift_intercept are the targets of the
    transition_shift misspecification knob. Probabilities are clipped to
    [clip_lo, clip_hi] after any shift so a perturbed nuisance stays
    inside positivity.
    """

    kind: str
    name: str
    horizon: float
    fine_grid: Partition
    params: dict
    censoring: Optional[CensoringHazard] = None
    terminal: Optional[CensoringHazard] = None
    summary_map: str = "last-state"
    propensity_margin: float = 0.0
    clip_lo: float = 0.01
    clip_hi: float = 0.99
    p: int = 1
    q: int = 1

    def __post_init__(self) -> None:
        if self.kind not in ("discrete-chain", "euler-diffusion"):
            raise ValueError(f"unknown dgp kind {self.kind!r}")
        if self.summary_map != "last-state":
            raise ValueError(f"unknown summary map {self.summary_map!r}")
        if self.fine_grid.horizon != self.horizon:
            raise ValueError("fine grid horizon must equal the spec horizon")
        gaps = np.diff(self.fine_grid.times)
        if not np.allclose(gaps, gaps[0], rtol=0.0, atol=1e-12):
            raise ValueError("fine grid must be uniform")

    @property
    def dt(self) -> float:
        return float(self.fine_grid.times[1] - self.fine_grid.times[0])

    # --- closed-form conditionals, vectorized over summary rows -------

    def baseline_sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "discrete-chain":
            return (rng.random(n) < self.params["baseline_p"]).astype(float)
        return self.params["baseline_mean"] + self.params["baseline_sd"] * rng.standard_normal(n)

    @property
    def baseline_mean(self) -> float:
        if self.kind == "discrete-chain":
            return float(self.params["baseline_p"])
        return float(self.params["baseline_mean"])

    def propensity_prob(self, summaries: np.ndarray) -> np.ndarray:
        """P(A=1 | F-view summary), discrete-chain only."""
        if self.kind != "discrete-chain":
            raise ValueError("propensity_prob applies to discrete-chain specs")
        l_now = summaries[:, 0]
        raw = self.params["prop_intercept"] + self.params["prop_l"] * l_now
        return np.clip(raw, self.clip_lo, self.clip_hi)

    def propensity_gauss(self, summaries: np.ndarray) -> tuple[np.ndarray, float]:
        """(mean, sd) of A | F-view summary, euler-diffusion only."""
        if self.kind != "euler-diffusion":
            raise ValueError("propensity_gauss applies to euler-diffusion specs")
        l_now = summaries[:, 0]
        mean = self.params["prop_mean_intercept"] + self.params["prop_mean_l"] * l_now
        return mean, float(self.params["prop_sd"])

    def transition_prob(self, summaries: np.ndarray) -> np.ndarray:
        """P(L'=1 | G-view summary), discrete-chain only."""
        if self.kind != "discrete-chain":
            raise ValueError("transition_prob applies to discrete-chain specs")
        l_now, a_now = summaries[:, 0], summaries[:, 1]
        raw = (self.params["trans_intercept"] + self.params["trans_a"] * a_now
               + self.params["trans_l"] * l_now + self.params.get("trans_shift", 0.0))
        return np.clip(raw, self.clip_lo, self.clip_hi)

    def euler_step(self, summaries: np.ndarray) -> tuple[np.ndarray, float]:
        """(mean, sd) of L(t+dt) | G-view summary, one fine step."""
        if self.kind != "euler-diffusion":
            raise ValueError("euler_step applies to euler-diffusion specs")
        l_now, a_now = summaries[:, 0], summaries[:, 1]
        drift = (self.params["drift_intercept"] + self.params["drift_l"] * l_now
                 + self.params["drift_a"] * a_now)
        return l_now + drift * self.dt, float(self.params["noise"] * math.sqrt(self.dt))

    # --- finite-state helpers used by exact recursions -----------------

    def chain_states(self) -> np.ndarray:
        return np.array([0.0, 1.0])

    def chain_actions(self) -> np.ndarray:
        return np.array([0.0, 1.0])

    def baseline_probs(self) -> np.ndarray:
        p0 = self.params["baseline_p"]
        return np.array([1.0 - p0, p0])

    def chain_step_matrix(self) -> np.ndarray:
        """K[l, a, l'] = P(L'=l' | L=l, A=a) for one fine step."""
        states, actions = self.chain_states(), self.chain_actions()
        grid = np.array([[l, a] for l in states for a in actions])
        p1 = self.transition_prob(grid).reshape(len(states), len(actions))
        out = np.empty((len(states), len(actions), len(states)))
        out[:, :, 1] = p1
        out[:, :, 0] = 1.0 - p1
        return out

    def chain_interval_matrix(self, decisions: Partition, k: int) -> np.ndarray:
        """Transition over decision interval k with the treatment held fixed."""
        idx = fine_indices(decisions, self.fine_grid)
        m_steps = idx[k + 1] - idx[k]
        step = self.chain_step_matrix()
        out = step
        for _ in range(int(m_steps) - 1):
            out = np.einsum("lam,man->lan", out, step)
        return out

    def propensity_table(self) -> np.ndarray:
        """pi[l, a] = P(A=a | L=l) for discrete-chain specs."""
        states = self.chain_states()
        f_summ = np.column_stack([states, np.zeros_like(states)])
        p1 = self.propensity_prob(f_summ)
        return np.column_stack([1.0 - p1, p1])

    def euler_interval_affine(self, decisions: Partition, k: int) -> tuple[float, float, float, float]:
        """(phi, c0, ca, var): L(t_{k+1}) = phi L(t_k) + c0 + ca a + N(0, var)."""
        idx = fine_indices(decisions, self.fine_grid)
        m_steps = int(idx[k + 1] - idx[k])
        dt = self.dt
        phi_step = 1.0 + self.params["drift_l"] * dt
        geom = sum(phi_step ** i for i in range(m_steps))
        geom2 = sum(phi_step ** (2 * i) for i in range(m_steps))
        phi = phi_step ** m_steps
        c0 = self.params["drift_intercept"] * dt * geom
        ca = self.params["drift_a"] * dt * geom
        var = (self.params["noise"] ** 2) * dt * geom2
        return phi, c0, ca, var


def _chain_params(baseline_p, prop_intercept, prop_l, trans_intercept, trans_a, trans_l):
    return {
        "baseline_p": baseline_p,
        "prop_intercept": prop_intercept,
        "prop_l": prop_l,
        "trans_intercept": trans_intercept,
        "trans_a": trans_a,
        "trans_l": trans_l,
        "trans_shift": 0.0,
    }


def bin3() -> DgpSpec:
    return DgpSpec(
        kind="discrete-chain",
        name="BIN3",
        horizon=3.0,
        fine_grid=make_partition(3.0, 3),
        params=_chain_params(0.5, 0.2, 0.6, 0.2, 0.3, 0.3),
        propensity_margin=0.2,
    )


def cens3() -> DgpSpec:
    return replace(bin3(), name="CENS3", censoring=CensoringHazard(rate=0.1))


def ou1(fine_steps: int = 256) -> DgpSpec:
    return DgpSpec(
        kind="euler-diffusion",
        name="OU1",
        horizon=1.0,
        fine_grid=make_partition(1.0, fine_steps),
        params={
            "baseline_mean": 0.0,
            "baseline_sd": 0.1,
            "drift_intercept": 0.0,
            "drift_l": -0.5,
            "drift_a": 0.8,
            "noise": 0.2,
            "prop_mean_intercept": 0.0,
            "prop_mean_l": 0.5,
            "prop_sd": 0.3,
        },
    )


_BUILTIN = {"BIN3": bin3, "OU1": ou1, "CENS3": cens3}


def spec_from_config(block: dict) -> DgpSpec:
    """Build a DgpSpec from a config mapping: {name: ...} or an inline spec."""
    if "name" in block and set(block) <= {"name", "fine_steps"}:
        name = str(block["name"]).upper()
        if name not in _BUILTIN:
            raise ValueError(f"dgp.name: unknown instance {block['name']!r}; choose from {sorted(_BUILTIN)}")
        if name == "OU1" and "fine_steps" in block:
            return ou1(int(block["fine_steps"]))
        return _BUILTIN[name]()
    required = {"kind", "horizon", "fine_steps", "params"}
    missing = required - set(block)
    if missing:
        raise ValueError(f"dgp: missing fields {sorted(missing)}")
    censoring = None
    if block.get("censoring"):
        censoring = CensoringHazard(rate=float(block["censoring"]["rate"]))
    return DgpSpec(
        kind=block["kind"],
        name=block.get("display_name", "custom"),
        horizon=float(block["horizon"]),
        fine_grid=make_partition(float(block["horizon"]), int(block["fine_steps"])),
        params=dict(block["params"]),
        censoring=censoring,
        propensity_margin=float(block.get("propensity_margin", 0.0)),
    )


# --- single-view densities (the per-factor conditionals) ---------------

def transition_density(spec: DgpSpec, h: HistoryView, l_new: float) -> float:
    """Mass or density of the next covariate value given a G-view."""
    if h.current_treatment is None:
        raise ValueError("transition_density needs a view carrying the current treatment")
    summ = h.summary[None, :]
    if spec.kind == "discrete-chain":
        if l_new not in (0.0, 1.0):
            raise ValueError(f"covariate value {l_new} outside the chain support")
        p1 = float(spec.transition_prob(summ)[0])
        return p1 if l_new == 1.0 else 1.0 - p1
    mean, sd = spec.euler_step(summ)
    z = (l_new - float(mean[0])) / sd
    return math.exp(-0.5 * z * z) / (sd * _SQRT_2PI)


def propensity_density(spec: DgpSpec, h: HistoryView, a_new: float) -> float:
    """Mass or density of the treatment draw given an F-view."""
    if h.current_treatment is not None:
        raise ValueError("propensity_density needs a view without the current treatment")
    summ = h.summary[None, :]
    if spec.kind == "discrete-chain":
        if a_new not in (0.0, 1.0):
            raise ValueError(f"treatment value {a_new} outside the chain support")
        p1 = float(spec.propensity_prob(summ)[0])
        return p1 if a_new == 1.0 else 1.0 - p1
    mean, sd = spec.propensity_gauss(summ)
    z = (a_new - float(mean[0])) / sd
    return math.exp(-0.5 * z * z) / (sd * _SQRT_2PI)


def censoring_survival(spec: DgpSpec, tr: Trajectory, j: int) -> float:
    """P(uncensored through grid time t_j) along the subject's own history.

    The hazard is checked at every fine time strictly before the horizon;
    the check at a time precedes that time's treatment draw.
    """
    if spec.censoring is None:
        return 1.0
    times = tr.grid.times
    out = 1.0
    for k in range(min(j, len(times) - 2) + 1):
        summ = np.concatenate([tr.covariate[k], tr.treatment[k - 1] if k else np.zeros(spec.p)])
        lam = float(spec.censoring.value(summ[None, :], float(times[k]))[0])
        out *= 1.0 - lam
    return out


def censoring_survival_cohort(spec: DgpSpec, cohort: Cohort, j: int) -> np.ndarray:
    """Vectorized censoring_survival at fine index j for every subject."""
    n = len(cohort)
    if spec.censoring is None:
        return np.ones(n)
    times = cohort.grid.times
    out = np.ones(n)
    for k in range(min(j, len(times) - 2) + 1):
        lam = spec.censoring.value(cohort.f_summaries(k), float(times[k]))
        out *= 1.0 - lam
    return out


# --- misspecification knobs --------------------------------------------

_KNOB_RE = re.compile(r"^(\w+)(?:\(([-+0-9.eE]+)\))?$")


def misspecify(spec: DgpSpec, knob: str) -> DgpSpec:
    """Perturbed copy of the spec, usable as a deliberately wrong nuisance.

    Knobs: "transition_shift(c)" shifts transition success probabilities
    (discrete-chain) or the drift intercept (euler-diffusion) by c;
    "propensity_drop_covariate" removes the covariate from the propensity,
    recentering the intercept at the baseline mean; "censoring_ignore"
    drops the censoring hazard from the model.
    """
    m = _KNOB_RE.match(knob.strip())
    if not m:
        raise ValueError(f"unparseable knob {knob!r}")
    name, arg = m.group(1), m.group(2)
    params = dict(spec.params)
    if name == "transition_shift":
        if arg is None:
            raise ValueError("transition_shift needs a numeric argument")
        c = float(arg)
        if spec.kind == "discrete-chain":
            params["trans_shift"] = params.get("trans_shift", 0.0) + c
        else:
            params["drift_intercept"] = params["drift_intercept"] + c
        return replace(spec, params=params)
    if name == "propensity_drop_covariate":
        if spec.kind == "discrete-chain":
            params["prop_intercept"] = params["prop_intercept"] + spec.baseline_mean * params["prop_l"]
            params["prop_l"] = 0.0
        else:
            params["prop_mean_intercept"] = (params["prop_mean_intercept"]
                                             + spec.baseline_mean * params["prop_mean_l"])
            params["prop_mean_l"] = 0.0
        return replace(spec, params=params)
    if name == "censoring_ignore":
        if spec.censoring is None:
            raise ValueError("censoring_ignore does not apply: spec has no censoring hazard")
        return replace(spec, censoring=None)
    raise ValueError(f"unknown misspecification knob {name!r}")


# --- forward simulation -------------------------------------------------

TreatmentDrawer = Callable[[int, np.ndarray, np.ndarray, np.ndarray], np.ndarray]
# args: decision step index within the schedule, F-view summaries (n, q+p),
# natural propensity draws (n,), underlying uniform/normal noise (n,).


def forward_simulate(
    spec: DgpSpec,
    decisions: Partition,
    n: int,
    seed: int,
    world: int,
    draw_treatment: Optional[TreatmentDrawer] = None,
    with_hazards: bool = True,
    store_paths: bool = True,
):
    """Sample the factorization left to right on the fine grid.

    Baseline covariate first, then per fine step: censoring and terminal
    hazard checks, a treatment draw when the step starts a decision
    interval, and the covariate transition. draw_treatment turns natural
    propensity draws into intervened ones; None keeps the natural draw.
    Returns a Cohort, or just the outcome array when store_paths=False.
    """
    d_idx = set(int(i) for i in fine_indices(decisions, spec.fine_grid)[:-1])
    times = spec.fine_grid.times
    m = len(times) - 1

    rng0 = substream(seed, world, 0, Role.BASELINE)
    L = spec.baseline_sample(n, rng0)
    A = np.zeros(n)
    alive = np.ones(n, dtype=bool)
    censor_time = np.full(n, np.inf)
    event_time = np.full(n, np.inf)

    if store_paths:
        cov_path = np.empty((n, m + 1))
        trt_path = np.empty((n, m + 1))
        cov_path[:, 0] = L

    decision_no = -1
    for i in range(m):
        t_i = float(times[i])
        f_summ = np.column_stack([L, A]) if i > 0 else np.column_stack([L, np.zeros(n)])
        if with_hazards and spec.censoring is not None:
            u = substream(seed, world, i, Role.CENSOR).random(n)
            hit = alive & (u < spec.censoring.value(f_summ, t_i))
            censor_time[hit] = t_i
            alive &= ~hit
        if with_hazards and spec.terminal is not None:
            u = substream(seed, world, i, Role.TERMINAL).random(n)
            hit = alive & (u < spec.terminal.value(f_summ, t_i))
            event_time[hit] = t_i
            alive &= ~hit
        if i in d_idx:
            decision_no += 1
            rng = substream(seed, world, i, Role.TREATMENT)
            if spec.kind == "discrete-chain":
                noise = rng.random(n)
                natural = (noise < spec.propensity_prob(f_summ)).astype(float)
            else:
                noise = rng.standard_normal(n)
                mean, sd = spec.propensity_gauss(f_summ)
                natural = mean + sd * noise
            drawn = natural if draw_treatment is None else draw_treatment(
                decision_no, f_summ, natural, noise)
            A = np.where(alive, drawn, A)
        if store_paths:
            trt_path[:, i] = A
        g_summ = np.column_stack([L, A])
        rng = substream(seed, world, i, Role.TRANSITION)
        if spec.kind == "discrete-chain":
            u = rng.random(n)
            L_new = (u < spec.transition_prob(g_summ)).astype(float)
        else:
            eps = rng.standard_normal(n)
            mean, sd = spec.euler_step(g_summ)
            L_new = mean + sd * eps
        L = np.where(alive, L_new, L)
        if store_paths:
            cov_path[:, i + 1] = L
    if store_paths:
        trt_path[:, m] = A

    outcome = L.copy()
    if not store_paths:
        return outcome
    return Cohort(
        grid=spec.fine_grid,
        treatment=trt_path[:, :, None],
        covariate=cov_path[:, :, None],
        event_time=event_time,
        censor_time=censor_time,
        outcome=outcome,
    )


def simulate_observed(spec: DgpSpec, decisions: Partition, n: int, seed: int) -> Cohort:
    """Cohort of n trajectories under the observed law.

    Treatments are redrawn from the propensity at decision times only;
    censoring and terminal hazards run on the fine grid and freeze a
    subject's values from its exit time on. Deterministic in
    (spec, decisions, n, seed) and independent of thread count.
    """
    if n < 1:
        raise ValueError("n must be positive")
    return forward_simulate(spec, decisions, n, seed, World.OBSERVED)
