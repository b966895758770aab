"""Time partitions, trajectories, and filtration views.

Paths are piecewise constant on a fine simulation grid. A decision
partition must be a sub-grid of that fine grid, so "history at t_j" is a
prefix of stored values rather than an interpolation. Views come in two
flavors: an F-view holds everything strictly before the treatment drawn
at its index, a G-view additionally holds that treatment.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

__all__ = [
    "Partition",
    "Trajectory",
    "HistoryView",
    "Cohort",
    "make_partition",
    "refine",
    "history_at",
    "fine_indices",
]


@dataclass(frozen=True)
class Partition:
    """Ordered decision times 0 = t_0 < ... < t_K = horizon."""

    times: np.ndarray
    horizon: float = field(init=False)
    mesh: float = field(init=False)

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise ValueError("partition needs at least two time points")
        if times[0] != 0.0:
            raise ValueError("partition must start at 0")
        gaps = np.diff(times)
        if np.any(gaps <= 0):
            raise ValueError("partition times must be strictly increasing")
        times.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "horizon", float(times[-1]))
        object.__setattr__(self, "mesh", float(gaps.max()))

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    def __len__(self) -> int:
        return len(self.times)


def make_partition(horizon: float, K: int, scheme: str = "uniform") -> Partition:
    """Build a K-step partition of [0, horizon].

    Parameters
    ----------
    horizon : positive right endpoint tau.
    K : number of steps; the partition has K+1 points.
    scheme : only "uniform" is supported.
    """
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    if K < 1:
        raise ValueError(f"K must be a positive integer, got {K}")
    if scheme != "uniform":
        raise ValueError(f"unknown partition scheme {scheme!r}")
    return Partition(np.linspace(0.0, float(horizon), K + 1))


def refine(p: Partition) -> Partition:
    """Insert the midpoint of every gap; halves the mesh of a uniform partition."""
    t = p.times
    mids = (t[:-1] + t[1:]) / 2.0
    out = np.empty(2 * len(t) - 1)
    out[0::2] = t
    out[1::2] = mids
    return Partition(out)


def fine_indices(decisions: Partition, fine: Partition) -> np.ndarray:
    """Indices of the decision times inside the fine grid.

    Raises ValueError when `decisions` is not a sub-grid of `fine`
    (every decision time must coincide with a fine-grid time).
    """
    idx = np.searchsorted(fine.times, decisions.times)
    ok = (idx < len(fine.times)) & np.isclose(
        fine.times[np.minimum(idx, len(fine.times) - 1)], decisions.times,
        rtol=0.0, atol=1e-12,
    )
    if not ok.all():
        bad = decisions.times[~ok]
        raise ValueError(f"decision times {bad} are not fine-grid times")
    return idx


@dataclass(frozen=True)
class Trajectory:
    """One subject's path on the fine grid.

    treatment/covariate hold one row per grid time (piecewise-constant
    interpretation). Values at indices after X = min(T, C) are frozen at
    their value at X. C is +inf whenever T <= C.
    """

    grid: Partition
    treatment: np.ndarray   # (T, p)
    covariate: np.ndarray   # (T, q)
    event_time: float
    censor_time: float
    outcome: float

    def __post_init__(self) -> None:
        for name in ("treatment", "covariate"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.ndim == 1:
                arr = arr[:, None]
            if arr.shape[0] != len(self.grid.times):
                raise ValueError(f"{name} must have one row per grid time")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def x_time(self) -> float:
        """X = min(T, C), the time at which information freezes."""
        return min(self.event_time, self.censor_time)


@dataclass(frozen=True)
class HistoryView:
    """Prefix of a trajectory up to a grid index.

    current_treatment present means the view represents the one-step
    treatment aware filtration (G-view); absent means the F-view. The
    summary is the declared finite-dimensional state: current covariate
    concatenated with the treatment in force (zeros before any draw).
    """

    upto_index: int
    past_treatments: np.ndarray
    past_covariates: np.ndarray
    current_treatment: Optional[np.ndarray]
    summary: np.ndarray

    def recompute_summary(self) -> np.ndarray:
        return _summary(
            self.past_covariates, self.past_treatments,
            self.upto_index, self.current_treatment,
        )


def _summary(
    past_cov: np.ndarray,
    past_trt: np.ndarray,
    j: int,
    current: Optional[np.ndarray],
) -> np.ndarray:
    cov = past_cov[j]
    if current is not None:
        trt = np.asarray(current, dtype=float)
    elif j > 0:
        trt = past_trt[j - 1]
    else:
        trt = np.zeros(past_trt.shape[1] if past_trt.ndim == 2 else 1)
    return np.concatenate([np.atleast_1d(cov), np.atleast_1d(trt)])


def history_at(tr: Trajectory, j: int, with_current: bool) -> HistoryView:
    """View of the history at grid index j.

    with_current=True includes the treatment in force at index j (the
    G-view); otherwise the view exposes covariates through j and
    treatments strictly before j.
    """
    if not 0 <= j < len(tr.grid.times):
        raise IndexError(f"grid index {j} out of range")
    past_trt = tr.treatment[: j + 1] if with_current else tr.treatment[:j]
    past_cov = tr.covariate[: j + 1]
    current = tr.treatment[j].copy() if with_current else None
    # past_treatments excludes the current draw; _summary indexes relative
    # to the full sequence, so hand it the prefix through j-1 either way.
    summary = _summary(past_cov, tr.treatment[:j] if j > 0 else tr.treatment[:0], j, current)
    return HistoryView(
        upto_index=j,
        past_treatments=past_trt,
        past_covariates=past_cov,
        current_treatment=current,
        summary=summary,
    )


@dataclass(frozen=True)
class Cohort:
    """Struct-of-arrays container for n trajectories on a shared grid."""

    grid: Partition
    treatment: np.ndarray    # (n, T, p)
    covariate: np.ndarray    # (n, T, q)
    event_time: np.ndarray   # (n,)
    censor_time: np.ndarray  # (n,)
    outcome: np.ndarray      # (n,)

    def __post_init__(self) -> None:
        n = self.treatment.shape[0]
        T = len(self.grid.times)
        if self.treatment.shape[1] != T or self.covariate.shape[1] != T:
            raise ValueError("path arrays must have one column per grid time")
        for name in ("event_time", "censor_time", "outcome"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} must have shape (n,)")
        for name in ("treatment", "covariate", "event_time", "censor_time", "outcome"):
            getattr(self, name).setflags(write=False)

    def __len__(self) -> int:
        return self.treatment.shape[0]

    def __getitem__(self, i: int) -> Trajectory:
        return Trajectory(
            grid=self.grid,
            treatment=self.treatment[i].copy(),
            covariate=self.covariate[i].copy(),
            event_time=float(self.event_time[i]),
            censor_time=float(self.censor_time[i]),
            outcome=float(self.outcome[i]),
        )

    # Vectorized view builders used by the estimation layer. Index j is a
    # fine-grid index; semantics match history_at's summaries.
    def f_summaries(self, j: int) -> np.ndarray:
        cov = self.covariate[:, j, :]
        trt = self.treatment[:, j - 1, :] if j > 0 else np.zeros_like(self.treatment[:, 0, :])
        return np.concatenate([cov, trt], axis=1)

    def g_summaries(self, j: int) -> np.ndarray:
        return np.concatenate([self.covariate[:, j, :], self.treatment[:, j, :]], axis=1)

    def at_risk(self, t: float) -> np.ndarray:
        """Subjects still under observation just after the check at time t.

        A censor check at a decision time fires before that time's
        treatment draw, so a subject whose censor time equals t is
        already off study at t.
        """
        return np.minimum(self.event_time, self.censor_time) > t + 1e-12

    def to_csv(self, path: str) -> None:
        """One row per subject per grid time: subject_id, t, a_*, l_*, event_time, censor_time, outcome."""
        n, T, p = self.treatment.shape
        q = self.covariate.shape[2]
        frame = pd.DataFrame({
            "subject_id": np.repeat(np.arange(n), T),
            "t": np.tile(self.grid.times, n),
        })
        for k in range(p):
            frame[f"a_{k + 1}"] = self.treatment[:, :, k].ravel()
        for k in range(q):
            frame[f"l_{k + 1}"] = self.covariate[:, :, k].ravel()
        frame["event_time"] = np.repeat(self.event_time, T)
        frame["censor_time"] = np.repeat(self.censor_time, T)
        frame["outcome"] = np.repeat(self.outcome, T)
        frame.to_csv(path, index=False)

    @classmethod
    def from_csv(cls, path: str) -> "Cohort":
        frame = pd.read_csv(path)
        times = np.array(sorted(frame.loc[frame["subject_id"] == frame["subject_id"].iloc[0], "t"]))
        grid = Partition(times)
        T = len(times)
        n = frame["subject_id"].nunique()
        if len(frame) != n * T:
            raise ValueError("cohort csv must have one row per subject per grid time")
        frame = frame.sort_values(["subject_id", "t"], kind="stable")
        a_cols = sorted(c for c in frame.columns if c.startswith("a_"))
        l_cols = sorted(c for c in frame.columns if c.startswith("l_"))
        treatment = frame[a_cols].to_numpy().reshape(n, T, len(a_cols))
        covariate = frame[l_cols].to_numpy().reshape(n, T, len(l_cols))
        per_subject = frame.iloc[::T]
        return cls(
            grid=grid,
            treatment=treatment,
            covariate=covariate,
            event_time=per_subject["event_time"].to_numpy(),
            censor_time=per_subject["censor_time"].to_numpy(),
            outcome=per_subject["outcome"].to_numpy(),
        )
