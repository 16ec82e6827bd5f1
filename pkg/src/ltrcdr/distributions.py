"""Conditional step-function distributions for the event, truncation, and
residual-censoring nuisances.

Every distribution is a right-continuous step function with an enumerable
jump set shared across subjects; only the values at the jumps depend on the
conditioning variables. Evaluation beyond the last jump returns the last
value (flat extrapolation); below the first jump it returns the base value
(0 for a fitted event CDF, 1 for a survival function, and the fitted mass
below the smallest observed entry time for the truncation CDF).
"""

from __future__ import annotations

import numpy as np

from .cox import CoxModel

__all__ = [
    "StepFunctionValues",
    "ConditionalDistribution",
    "CoxConditionalDistribution",
    "GridConditionalDistribution",
    "step_eval",
]

KINDS = ("cdf_F", "cdf_G", "survival_SD")


def step_eval(times: np.ndarray, vals: np.ndarray, base: float, t) -> np.ndarray:
    """Right-continuous step evaluation with flat extrapolation."""
    idx = np.searchsorted(times, np.asarray(t, dtype=np.float64), side="right")
    padded = np.concatenate([[base], vals])
    return padded[idx]


class StepFunctionValues:
    """One subject's realized step function: jump times plus post-jump values."""

    __slots__ = ("times", "vals", "base")

    def __init__(self, times, vals, base):
        self.times = np.asarray(times, dtype=np.float64)
        self.vals = np.asarray(vals, dtype=np.float64)
        self.base = float(base)

    def __call__(self, t):
        return step_eval(self.times, self.vals, self.base, t)

    def left_limit(self, t):
        idx = np.searchsorted(self.times, np.asarray(t, dtype=np.float64), side="left")
        padded = np.concatenate([[self.base], self.vals])
        return padded[idx]

    def increments(self) -> np.ndarray:
        return np.diff(np.concatenate([[self.base], self.vals]))

    @property
    def final(self) -> float:
        return float(self.vals[-1]) if self.vals.size else self.base


class ConditionalDistribution:
    """Common interface: shared jump set, per-subject values.

    Conditioning signatures: ``(t | a, z)`` for the event CDF F and the
    truncation CDF G, ``(t | q, a, z)`` for the residual-censoring survival.
    """

    kind: str

    def jump_times(self) -> np.ndarray:
        raise NotImplementedError

    def values_matrix(self, a, z, q=None, arm_override=None):
        """Per-subject post-jump values: returns ``(vals [n, m], base [n])``."""
        raise NotImplementedError

    def curve(self, a, z, q=None, arm_override=None) -> StepFunctionValues:
        a = np.atleast_1d(np.asarray(a))
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        qq = None if q is None else np.atleast_1d(np.asarray(q, dtype=np.float64))
        vals, base = self.values_matrix(a, z, qq, arm_override=arm_override)
        return StepFunctionValues(self.jump_times(), vals[0], base[0])

    def value(self, t, a, z, q=None, arm_override=None):
        return self.curve(a, z, q, arm_override=arm_override)(t)


class CoxConditionalDistribution(ConditionalDistribution):
    """Cox-backed conditional distribution.

    kind cdf_F:       F(t|a,z)   = 1 - exp(-L0(t) r(a,z))
    kind survival_SD: S(u|q,a,z) = exp(-L0(u) r(q,a,z))
    kind cdf_G:       G(t|a,z)   = Srev(t1 - t -) for a model fitted on the
                      reversed time scale with pivot t1; values increase in t.
    """

    def __init__(self, kind: str, model: CoxModel, feature_map, pivot_t1: float | None = None):
        if kind not in KINDS:
            raise ValueError(f"unknown distribution kind {kind!r}")
        self.kind = kind
        self.model = model
        self.feature_map = feature_map  # (a, z, q) -> feature matrix
        self.pivot_t1 = pivot_t1
        if kind == "cdf_G":
            if pivot_t1 is None:
                raise ValueError("cdf_G needs the reversed-time pivot t1")
            s_times = model.baseline_times
            cum = np.concatenate([[0.0], np.cumsum(model.baseline_hazard_increments)])
            # forward jumps ascending; load j is the reversed cumhaz just
            # before the matching reversed jump, so the last forward value is
            # exactly exp(0) = 1 and the base carries the fitted leftover mass
            self._times = (pivot_t1 - s_times)[::-1].copy()
            self._loads = cum[:-1][::-1].copy()
            self._base_load = float(cum[-1])
        else:
            self._times = model.baseline_times.copy()
            self._loads = np.cumsum(model.baseline_hazard_increments)
            self._base_load = 0.0

    def jump_times(self) -> np.ndarray:
        return self._times

    def _risks(self, a, z, q, arm_override):
        a = np.atleast_1d(np.asarray(a, dtype=np.float64))
        if arm_override is not None:
            a = np.full_like(a, float(arm_override))
        feats = self.feature_map(a, np.atleast_2d(z), q)
        return self.model.risk_score(feats)

    def values_matrix(self, a, z, q=None, arm_override=None):
        r = self._risks(a, z, q, arm_override)
        lam = r[:, None] * self._loads[None, :]
        if self.kind == "cdf_F":
            vals = 1.0 - np.exp(-lam)
            base = np.zeros(r.shape[0])
        elif self.kind == "survival_SD":
            vals = np.exp(-lam)
            base = np.ones(r.shape[0])
        else:
            vals = np.exp(-lam)
            base = np.exp(-r * self._base_load)
        return vals, base


class GridConditionalDistribution(ConditionalDistribution):
    """Closed-form distribution discretized on a fixed grid.

    ``fn(t_grid, a, z, q)`` must broadcast to shape ``(n, m)`` and return the
    exact distribution values at the grid points; used to inject known truths
    into the operators and learners.
    """

    def __init__(self, kind: str, times: np.ndarray, fn, force_total_mass: bool = False):
        if kind not in KINDS:
            raise ValueError(f"unknown distribution kind {kind!r}")
        self.kind = kind
        self._times = np.asarray(times, dtype=np.float64)
        if np.any(np.diff(self._times) <= 0):
            raise ValueError("grid times must be strictly increasing")
        self.fn = fn
        self.force_total_mass = force_total_mass

    def jump_times(self) -> np.ndarray:
        return self._times

    def values_matrix(self, a, z, q=None, arm_override=None):
        a = np.atleast_1d(np.asarray(a, dtype=np.float64))
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        if arm_override is not None:
            a = np.full_like(a, float(arm_override))
        vals = np.asarray(self.fn(self._times[None, :], a[:, None],
                                  z, None if q is None else np.asarray(q)[:, None]),
                          dtype=np.float64)
        if vals.shape != (a.shape[0], self._times.shape[0]):
            vals = np.broadcast_to(vals, (a.shape[0], self._times.shape[0])).copy()
        if self.kind == "survival_SD":
            base = np.ones(a.shape[0])
        elif self.kind == "cdf_F":
            base = np.zeros(a.shape[0])
            if self.force_total_mass:
                vals = vals.copy()
                vals[:, -1] = 1.0
        else:
            base = np.clip(vals[:, 0] - (vals[:, 1] - vals[:, 0]), 0.0, None) * 0.0
            if self.force_total_mass:
                vals = vals.copy()
                vals[:, -1] = 1.0
        return vals, base
