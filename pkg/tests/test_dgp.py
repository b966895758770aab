"""Observed-law generators and their closed-form conditionals."""

import math

import numpy as np
import pytest
from oracles import BIN3_NULL, bin3_forward, mc_se

from contregime import (
    CensoringHazard,
    Trajectory,
    bin3,
    cens3,
    censoring_survival,
    history_at,
    make_partition,
    misspecify,
    ou1,
    propensity_density,
    simulate_observed,
    spec_from_config,
    transition_density,
)
from contregime.dgp import censoring_survival_cohort

CHAIN_DECISIONS = make_partition(3.0, 3)


def test_observed_chain_hits_its_fixed_point():
    # p' = 0.26 + 0.48 p has fixed point 0.5, and p0 = 0.5 starts there
    assert bin3_forward(lambda l: 0.2 + 0.6 * l) == BIN3_NULL
    cohort = simulate_observed(bin3(), CHAIN_DECISIONS, 100_000, 7)
    se = mc_se(cohort.outcome)
    assert abs(float(cohort.outcome.mean()) - BIN3_NULL) <= 3 * se


def test_censored_fraction_matches_hazard_product():
    cohort = simulate_observed(cens3(), CHAIN_DECISIONS, 100_000, 7)
    censored = (cohort.censor_time < 3.0).astype(float)
    target = 1.0 - 0.9**3
    assert abs(float(censored.mean()) - target) <= 3 * mc_se(censored)


def test_diffusion_paths_have_the_full_grid():
    cohort = simulate_observed(ou1(), make_partition(1.0, 4), 1, 0)
    assert cohort.covariate.shape == (1, 257, 1)
    assert np.isfinite(cohort.covariate).all()
    assert np.isfinite(cohort.treatment).all()


def _chain_history(l, a=None):
    treatment = np.full(4, 0.0 if a is None else a)
    covariate = np.full(4, l)
    tr = Trajectory(grid=CHAIN_DECISIONS, treatment=treatment, covariate=covariate,
                    event_time=np.inf, censor_time=np.inf, outcome=l)
    return history_at(tr, 0, with_current=a is not None)


def test_chain_transition_mass():
    spec = bin3()
    assert transition_density(spec, _chain_history(1.0, 1.0), 1.0) == pytest.approx(0.8)
    assert transition_density(spec, _chain_history(0.0, 0.0), 1.0) == pytest.approx(0.2)
    assert transition_density(spec, _chain_history(0.0, 0.0), 0.0) == pytest.approx(0.8)
    with pytest.raises(ValueError):
        transition_density(spec, _chain_history(1.0), 1.0)  # needs the G-view
    with pytest.raises(ValueError):
        transition_density(spec, _chain_history(1.0, 1.0), 0.5)  # off support


def test_chain_propensity_mass():
    spec = bin3()
    assert propensity_density(spec, _chain_history(1.0), 1.0) == pytest.approx(0.8)
    assert propensity_density(spec, _chain_history(0.0), 1.0) == pytest.approx(0.2)
    with pytest.raises(ValueError):
        propensity_density(spec, _chain_history(1.0, 1.0), 1.0)  # needs the F-view


def _diffusion_history(l, a=None, fine_steps=256):
    grid = make_partition(1.0, fine_steps)
    treatment = np.full(fine_steps + 1, 0.0 if a is None else a)
    covariate = np.full(fine_steps + 1, l)
    tr = Trajectory(grid=grid, treatment=treatment, covariate=covariate,
                    event_time=np.inf, censor_time=np.inf, outcome=l)
    return history_at(tr, 0, with_current=a is not None)


def test_diffusion_densities_peak_at_their_means():
    spec = ou1()
    dt = spec.dt
    l, a = 0.4, 0.7
    step_mean = l + (-0.5 * l + 0.8 * a) * dt
    peak = 1.0 / (0.2 * math.sqrt(dt) * math.sqrt(2 * math.pi))
    assert transition_density(spec, _diffusion_history(l, a), step_mean) == pytest.approx(peak)
    prop_peak = 1.0 / (0.3 * math.sqrt(2 * math.pi))
    assert propensity_density(spec, _diffusion_history(l), 0.5 * l) == pytest.approx(prop_peak)
    assert prop_peak == pytest.approx(1.3298076013381091)


def test_censoring_survival_products():
    grid = CHAIN_DECISIONS
    tr = Trajectory(grid=grid, treatment=np.zeros(4), covariate=np.zeros(4),
                    event_time=np.inf, censor_time=np.inf, outcome=0.0)
    assert censoring_survival(bin3(), tr, 2) == 1.0
    spec = cens3()
    # constant hazard 0.1, checks at t = 0, 1, 2 only
    assert censoring_survival(spec, tr, 0) == pytest.approx(0.9)
    assert censoring_survival(spec, tr, 2) == pytest.approx(0.729)
    assert censoring_survival(spec, tr, 3) == pytest.approx(0.729)
    from dataclasses import replace
    zero = replace(spec, censoring=CensoringHazard(rate=0.0))
    assert censoring_survival(zero, tr, 2) == 1.0


def test_cohort_survival_matches_per_subject():
    spec = cens3()
    cohort = simulate_observed(spec, CHAIN_DECISIONS, 40, 13)
    for j in (0, 1, 2):
        vec = censoring_survival_cohort(spec, cohort, j)
        for i in (0, 17, 39):
            assert vec[i] == pytest.approx(censoring_survival(spec, cohort[i], j))


def test_transition_shift_knob_moves_success_probabilities():
    spec = bin3()
    shifted = misspecify(spec, "transition_shift(0.1)")
    for l in (0.0, 1.0):
        for a in (0.0, 1.0):
            base = 0.2 + 0.3 * a + 0.3 * l
            got = float(shifted.transition_prob(np.array([[l, a]]))[0])
            assert got == pytest.approx(min(base + 0.1, 0.99))
    # clipping keeps a large shift inside positivity
    big = misspecify(spec, "transition_shift(0.9)")
    assert float(big.transition_prob(np.array([[1.0, 1.0]]))[0]) == pytest.approx(0.99)
    # the propensity side is untouched
    assert float(shifted.propensity_prob(np.array([[1.0, 0.0]]))[0]) == pytest.approx(0.8)


def test_propensity_drop_covariate_knob_flattens_the_propensity():
    flat = misspecify(bin3(), "propensity_drop_covariate")
    for l in (0.0, 1.0):
        assert float(flat.propensity_prob(np.array([[l, 0.0]]))[0]) == pytest.approx(0.5)


def test_transition_shift_knob_moves_diffusion_drift():
    spec = ou1()
    shifted = misspecify(spec, "transition_shift(0.3)")
    summ = np.array([[0.4, 0.7]])
    base_mean, _ = spec.euler_step(summ)
    new_mean, _ = shifted.euler_step(summ)
    assert float(new_mean[0] - base_mean[0]) == pytest.approx(0.3 * spec.dt)


def test_censoring_ignore_knob():
    assert misspecify(cens3(), "censoring_ignore").censoring is None
    with pytest.raises(ValueError):
        misspecify(bin3(), "censoring_ignore")
    with pytest.raises(ValueError):
        misspecify(bin3(), "no_such_knob")
    with pytest.raises(ValueError):
        misspecify(bin3(), "transition_shift")  # needs an argument


def test_spec_from_config_lookup():
    assert spec_from_config({"name": "bin3"}).name == "BIN3"
    assert spec_from_config({"name": "OU1", "fine_steps": 64}).fine_grid.n_steps == 64
    with pytest.raises(ValueError, match="dgp.name"):
        spec_from_config({"name": "nope"})
    with pytest.raises(ValueError, match="missing fields"):
        spec_from_config({"kind": "discrete-chain"})


def test_simulation_is_seed_deterministic():
    a = simulate_observed(bin3(), CHAIN_DECISIONS, 200, 4)
    b = simulate_observed(bin3(), CHAIN_DECISIONS, 200, 4)
    c = simulate_observed(bin3(), CHAIN_DECISIONS, 200, 5)
    assert np.array_equal(a.treatment, b.treatment)
    assert np.array_equal(a.covariate, b.covariate)
    assert np.array_equal(a.censor_time, b.censor_time)
    assert not np.array_equal(a.treatment, c.treatment)


def test_baseline_laws():
    chain = simulate_observed(bin3(), CHAIN_DECISIONS, 50_000, 21)
    l0 = chain.covariate[:, 0, 0]
    assert abs(float(l0.mean()) - 0.5) <= 3 * mc_se(l0)
    diff = simulate_observed(ou1(), make_partition(1.0, 4), 20_000, 21)
    z0 = diff.covariate[:, 0, 0]
    assert abs(float(z0.mean())) <= 3 * mc_se(z0)
    assert float(z0.std(ddof=1)) == pytest.approx(0.1, rel=0.05)
