"""Ground-truth targets.

Two independent routes to E_G[nu]: forward Monte Carlo in the intervened
world (censoring and terminal hazards switched off), and exact dynamic
programming over the finite summary state for discrete chains. A raw
path-sum expansion is kept as a cross-check for small instances, and
mesh_convergence tabulates the target across refinements of the decision
schedule.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Sequence

import numpy as np
import pandas as pd

from .dgp import DgpSpec, forward_simulate
from .regimes import Regime, discrete_action_pmf, draw_actions
from .rng import World
from .timegrid import Partition, make_partition

__all__ = [
    "PathBudgetError",
    "CounterfactualSample",
    "simulate_counterfactual",
    "enumerate_exact",
    "enumerate_paths",
    "mesh_convergence",
]

PATH_BUDGET = 10**9


class PathBudgetError(RuntimeError):
    """Exact enumeration would exceed the configured path budget."""


@dataclass(frozen=True)
class CounterfactualSample:
    """Monte-Carlo draws of the target functional under a regime."""

    values: np.ndarray
    mean: float
    se: float

    def __len__(self) -> int:
        return len(self.values)


def simulate_counterfactual(
    spec: DgpSpec,
    g: Regime,
    decisions: Partition,
    n: int,
    seed: int,
) -> CounterfactualSample:
    """Sample nu in the intervened world.

    Alternates regime draws and structural transitions forward in time on
    the fine grid, reusing the observed mechanism's noise streams. The
    intervened world has no censoring and no terminal events.
    """
    if n < 1:
        raise ValueError("n must be positive")

    def drawer(k: int, f_summ: np.ndarray, natural: np.ndarray, noise: np.ndarray) -> np.ndarray:
        return draw_actions(g, spec, f_summ, natural, noise)

    values = forward_simulate(
        spec, decisions, n, seed, World.COUNTERFACTUAL,
        draw_treatment=drawer, with_hazards=False, store_paths=False)
    se = float(values.std(ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
    return CounterfactualSample(values=values, mean=float(values.mean()), se=se)


def enumerate_exact(spec: DgpSpec, g: Regime, decisions: Partition, budget: int = PATH_BUDGET) -> float:
    """Exact target by backward induction over the summary state.

    Only defined for discrete chains with finite state and action sets.
    The recursion runs over (current state, treatment in force) cells, the
    exact information a regime's conditional can see.
    """
    if spec.kind != "discrete-chain":
        raise ValueError("enumerate_exact supports discrete-chain specs only")
    states = np.asarray(spec.chain_states(), dtype=float)
    actions = np.asarray(spec.chain_actions(), dtype=float)
    n_s, n_a = len(states), len(actions)
    K = decisions.n_steps
    if (n_s * n_a) ** K > budget:
        raise PathBudgetError(
            f"{(n_s * n_a) ** K} paths exceed the budget of {budget}")

    # summary rows for every (state, prior action) cell, prior action varying fastest
    cells = np.array([[l, a] for l in states for a in actions])
    # V[s, a_prev] after the remaining decisions, seeded with nu = terminal state
    V = np.tile(states[:, None], (1, n_a))
    for k in range(K - 1, -1, -1):
        M = spec.chain_interval_matrix(decisions, k)  # (n_s, n_a, n_s)
        pmf = discrete_action_pmf(g, spec, cells, actions).reshape(n_s, n_a, n_a)
        # continuation value of drawing action a in state l: sum_l' M[l,a,l'] V[l',a]
        cont = np.einsum("lam,ma->la", M, V)
        V = np.einsum("lba,la->lb", pmf, cont)
    p0 = spec.baseline_probs()
    # nothing is in force before the first decision
    return float(p0 @ V[:, 0])


def enumerate_paths(spec: DgpSpec, g: Regime, decisions: Partition, max_steps: int = 12) -> float:
    """Raw sum over every (action, state) path. Cross-check for enumerate_exact."""
    if spec.kind != "discrete-chain":
        raise ValueError("enumerate_paths supports discrete-chain specs only")
    states = [float(s) for s in spec.chain_states()]
    actions = [float(a) for a in spec.chain_actions()]
    K = decisions.n_steps
    if K > max_steps:
        raise PathBudgetError(f"{K} decision steps exceed the raw-expansion cap of {max_steps}")
    mats = [spec.chain_interval_matrix(decisions, k) for k in range(K)]
    s_idx = {s: i for i, s in enumerate(states)}
    a_idx = {a: i for i, a in enumerate(actions)}
    p0 = spec.baseline_probs()

    total = 0.0
    for path in product(*([states] + [actions, states] * K)):
        l_path = path[0::2]
        a_path = path[1::2]
        w = p0[s_idx[l_path[0]]]
        for k in range(K):
            a_prev = a_path[k - 1] if k > 0 else 0.0
            pmf = discrete_action_pmf(
                g, spec, np.array([[l_path[k], a_prev]]), np.asarray(actions))[0]
            w *= pmf[a_idx[a_path[k]]]
            w *= mats[k][s_idx[l_path[k]], a_idx[a_path[k]], s_idx[l_path[k + 1]]]
        total += w * l_path[-1]
    return total


def mesh_convergence(
    spec: DgpSpec,
    g: Regime,
    K_schedule: Sequence[int],
    n: int,
    seed: int,
) -> pd.DataFrame:
    """Target estimates across decision-schedule refinements.

    Every K reuses the same seed, so the per-subject noise streams are
    shared and successive differences are paired: delta_prev is
    |mean_K - mean_prev| and se_delta the paired standard error. The
    nonmonotone flag marks a successive difference that grew beyond the
    combined 3-SE band, which is tail behavior the refinement theory
    rules out up to Monte-Carlo noise.
    """
    ks = [int(k) for k in K_schedule]
    if any(b < a for a, b in zip(ks, ks[1:])):
        raise ValueError("K_schedule must be non-decreasing")
    rows = []
    prev_values = None
    prev_delta = None
    prev_se_delta = None
    for k in ks:
        decisions = make_partition(spec.horizon, k)
        sample = simulate_counterfactual(spec, g, decisions, n, seed)
        delta = se_delta = float("nan")
        nonmono = False
        if prev_values is not None:
            diff = sample.values - prev_values
            delta = abs(float(diff.mean()))
            se_delta = float(diff.std(ddof=1) / np.sqrt(n))
            if prev_delta is not None:
                band = 3.0 * float(np.hypot(se_delta, prev_se_delta))
                nonmono = delta > prev_delta + band
            prev_delta, prev_se_delta = delta, se_delta
        rows.append({
            "K": k,
            "estimate": sample.mean,
            "se": sample.se,
            "delta_prev": delta,
            "se_delta": se_delta,
            "nonmonotone": nonmono,
        })
        prev_values = sample.values
    return pd.DataFrame(rows)
