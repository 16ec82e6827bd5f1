"""Covariate-to-feature maps for the nuisance regressions.

Two families: small parametric maps (identity, the deliberately misspecified
interaction/square map) and the flexible basis used by the penalized Cox fits,
which expands each continuous variable in a natural cubic spline basis with 7
degrees of freedom and then adds squares and all pairwise products. With two
continuous variables plus one binary this yields 134 regressors; with three
continuous plus one binary, 274.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["BasisSpec", "NaturalSplineBasis", "FlexibleExpansion", "expand_features"]


@dataclass(frozen=True)
class BasisSpec:
    """Declarative description of a feature expansion.

    kind "identity": returns the inputs as-is (binary columns first).
    kind "flexible": natural splines with ``df`` per continuous column,
    plus squares of all basis columns, all pairwise basis interactions,
    basis-by-binary interactions, and binary-by-binary interactions.
    """

    kind: str = "identity"
    df: int = 7
    with_squares: bool = True
    with_interactions: bool = True

    def __post_init__(self):
        if self.kind not in ("identity", "flexible"):
            raise ValueError(f"unknown basis kind {self.kind!r}")
        if self.kind == "flexible" and self.df < 3:
            raise ValueError(f"spline df={self.df} must be at least 3")


class NaturalSplineBasis:
    """Natural cubic spline basis with df columns for one variable.

    Interior knots sit at the df-1 evenly spaced quantiles of the training
    values; boundary knots at the observed min and max. The basis is the
    truncated-power natural-spline construction (linear tails), spanning the
    same function space as the usual B-spline parameterization.
    """

    def __init__(self, values: np.ndarray, df: int = 7):
        values = np.asarray(values, dtype=np.float64)
        lo, hi = float(np.min(values)), float(np.max(values))
        if hi <= lo:
            hi = lo + 1.0
        probs = np.arange(1, df) / df
        interior = np.quantile(values, probs)
        knots = np.unique(np.concatenate([[lo], interior, [hi]]))
        if knots.size < 3:
            knots = np.linspace(lo, hi, 3)
        self.knots = knots
        self.df = knots.size - 1

    def transform(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        k = self.knots
        K = k.size

        def d(j):
            num = np.maximum(x - k[j], 0.0) ** 3 - np.maximum(x - k[-1], 0.0) ** 3
            return num / (k[-1] - k[j])

        cols = [x]
        d_last = d(K - 2)
        for j in range(K - 2):
            cols.append(d(j) - d_last)
        return np.column_stack(cols)


class FlexibleExpansion:
    """Fitted flexible basis: spline columns, squares, pairwise products.

    The expansion is frozen at fit time (knots from the training data) so that
    train and evaluation rows map through identical features.
    """

    def __init__(self, continuous: np.ndarray, n_binary: int, spec: BasisSpec):
        continuous = np.atleast_2d(np.asarray(continuous, dtype=np.float64))
        self.spec = spec
        self.n_binary = n_binary
        self.bases = [NaturalSplineBasis(continuous[:, j], df=spec.df)
                      for j in range(continuous.shape[1])]

    def transform(self, continuous: np.ndarray, binary: np.ndarray) -> np.ndarray:
        continuous = np.atleast_2d(np.asarray(continuous, dtype=np.float64))
        binary = np.atleast_2d(np.asarray(binary, dtype=np.float64))
        if binary.shape[1] != self.n_binary:
            binary = binary.reshape(continuous.shape[0], self.n_binary)
        spline = np.column_stack([b.transform(continuous[:, j])
                                  for j, b in enumerate(self.bases)]) \
            if self.bases else np.empty((continuous.shape[0], 0))
        m = spline.shape[1]
        blocks = [spline]
        if self.spec.with_squares:
            blocks.append(spline**2)
        if self.spec.with_interactions and m > 1:
            pair = [spline[:, i] * spline[:, j] for i in range(m) for j in range(i + 1, m)]
            blocks.append(np.column_stack(pair))
        for b in range(self.n_binary):
            col = binary[:, b]
            if m:
                blocks.append(col[:, None] * spline)
            blocks.append(col[:, None])
        for b1 in range(self.n_binary):
            for b2 in range(b1 + 1, self.n_binary):
                blocks.append((binary[:, b1] * binary[:, b2])[:, None])
        blocks = [blk for blk in blocks if blk.shape[1] > 0]
        if not blocks:
            raise ValueError("flexible expansion produced no columns")
        return np.column_stack(blocks)


def expand_features(z: np.ndarray, spec: BasisSpec, a: np.ndarray | None = None,
                    fitted: FlexibleExpansion | None = None):
    """Expand covariates (and optionally treatment) into model features.

    Identity spec returns ``(a, z...)`` when a treatment column is supplied,
    otherwise ``z`` itself. Flexible spec fits or applies a FlexibleExpansion
    treating ``a`` as the binary variable and all ``z`` columns as continuous.
    Returns ``(features, fitted_expansion_or_None)``.
    """
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    if spec.kind == "identity":
        if a is None:
            return z.copy(), None
        a = np.asarray(a, dtype=np.float64).reshape(-1, 1)
        return np.column_stack([a, z]), None
    n_binary = 0 if a is None else 1
    binary = np.empty((z.shape[0], 0)) if a is None \
        else np.asarray(a, dtype=np.float64).reshape(-1, 1)
    if fitted is None:
        fitted = FlexibleExpansion(z, n_binary, spec)
    return fitted.transform(z, binary), fitted
