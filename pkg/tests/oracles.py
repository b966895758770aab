"""Independent reference values for the test suite.

Everything here recomputes targets from first principles, without going
through the package's own recursion or weighting code: the chain oracle
is a two-state forward propagation, the diffusion oracle propagates the
covariate mean through the Euler recursion, which is exact because every
map in that instance is linear.
"""

import numpy as np

# frozen targets for the 3-step chain (forward recursion from p0 = 0.5)
BIN3_ALWAYS = 0.7085
BIN3_NEVER = 0.2915
BIN3_NULL = 0.5


def bin3_forward(treat_prob, steps=3, p0=0.5):
    """P(L = 1) after `steps` decisions under P(A=1 | L) = treat_prob(L).

    The chain moves with P(L' = 1 | a, l) = 0.2 + 0.3 a + 0.3 l.
    """
    p = p0
    for _ in range(steps):
        p_new = 0.0
        for l, w_l in ((0.0, 1.0 - p), (1.0, p)):
            pa = treat_prob(l)
            for a, w_a in ((0.0, 1.0 - pa), (1.0, pa)):
                p_new += w_l * w_a * (0.2 + 0.3 * a + 0.3 * l)
        p = p_new
    return p


def bin3_propensity(l):
    return 0.2 + 0.6 * l


def bin3_incremental_prob(l, odds_multiplier):
    pi = bin3_propensity(l)
    return odds_multiplier * pi / (odds_multiplier * pi + 1.0 - pi)


def ou1_mean(K, fine_steps=256, delta=0.0, const_a=None):
    """Exact E[L(1)] for the linear diffusion under simple regimes.

    The treatment drawn at each of the K decision times is held for the
    following block of fine steps. Its conditional mean is linear in the
    covariate, so the covariate mean propagates in closed form:
    mu_{j+1} = mu_j + (-0.5 mu_j + 0.8 E[a]) dt with E[a] refreshed to
    0.5 mu + delta (shift) or a constant (point mass) at stage starts.
    """
    dt = 1.0 / fine_steps
    block = fine_steps // K
    mu, a_mean = 0.0, 0.0
    for j in range(fine_steps):
        if j % block == 0:
            a_mean = const_a if const_a is not None else 0.5 * mu + delta
        mu = mu + (-0.5 * mu + 0.8 * a_mean) * dt
    return mu


def chain_paths_value(treat_prob, steps=3, p0=0.5):
    """Brute-force path sum over all (l, a) sequences of the 3-step chain.

    Cross-checks bin3_forward through a completely different computation:
    enumerate every treatment/covariate path, multiply its probability
    factors, and accumulate the terminal covariate.
    """
    import itertools

    total = 0.0
    for l0 in (0.0, 1.0):
        p_l0 = p0 if l0 == 1.0 else 1.0 - p0
        for acts in itertools.product((0.0, 1.0), repeat=steps):
            for covs in itertools.product((0.0, 1.0), repeat=steps):
                prob = p_l0
                l = l0
                for k in range(steps):
                    pa = treat_prob(l)
                    prob *= pa if acts[k] == 1.0 else 1.0 - pa
                    p_next = 0.2 + 0.3 * acts[k] + 0.3 * l
                    prob *= p_next if covs[k] == 1.0 else 1.0 - p_next
                    l = covs[k]
                total += prob * l
    return total


def within(value, target, se, factor=3.0):
    return abs(value - target) <= factor * se


def mc_se(values):
    values = np.asarray(values, dtype=float)
    return float(values.std(ddof=1) / np.sqrt(len(values)))
