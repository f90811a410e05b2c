"""Observation containers for the two supported problem types."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import SchemaError


def _as_2d(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise SchemaError(f"covariates must be a 2-D array, got shape {x.shape}")
    return x


@dataclass
class PolicyData:
    """Rows ``(x, a, y)`` with 1-based action labels ``a`` in ``1..n_actions``."""

    x: np.ndarray
    a: np.ndarray
    y: np.ndarray
    n_actions: int | None = None
    bound: float | None = None
    bound_violations: int = field(default=0, init=False)

    def __post_init__(self):
        self.x = _as_2d(self.x)
        self.a = np.asarray(self.a)
        if self.a.dtype.kind == "f":
            if not np.all(self.a == np.round(self.a)):
                raise SchemaError("action labels must be integers")
        self.a = self.a.astype(int)
        self.y = np.asarray(self.y, dtype=float)
        n = len(self.x)
        if self.a.shape != (n,) or self.y.shape != (n,):
            raise SchemaError("x, a and y must have the same number of rows")
        if self.n_actions is None:
            self.n_actions = int(self.a.max()) if n else 0
        if n and (self.a.min() < 1 or self.a.max() > self.n_actions):
            bad = int(np.flatnonzero((self.a < 1) | (self.a > self.n_actions))[0])
            raise SchemaError(f"row {bad}: action label {self.a[bad]} outside 1..{self.n_actions}")
        if not np.all(np.isfinite(self.y)) or not np.all(np.isfinite(self.x)):
            raise SchemaError("non-finite covariate or outcome values")
        if self.bound is not None:
            self.bound_violations = int(np.sum(np.abs(self.y) > self.bound))
            if self.bound_violations:
                warnings.warn(
                    f"{self.bound_violations} outcomes exceed the declared bound {self.bound}",
                    stacklevel=2,
                )

    def __len__(self):
        return len(self.y)

    @property
    def action_index(self) -> np.ndarray:
        """0-based action indices for array lookups."""
        return self.a - 1

    def subset(self, idx) -> "PolicyData":
        out = PolicyData(self.x[idx], self.a[idx], self.y[idx], n_actions=self.n_actions)
        out.bound = self.bound
        return out


@dataclass
class IvData:
    """Rows ``(x, a, v, y)`` with binary treatment, instrument and outcome."""

    x: np.ndarray
    a: np.ndarray
    v: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = _as_2d(self.x)
        n = len(self.x)
        for name in ("a", "v", "y"):
            col = np.asarray(getattr(self, name))
            if col.shape != (n,):
                raise SchemaError(f"column {name} must have {n} entries")
            if not np.all((col == 0) | (col == 1)):
                bad = int(np.flatnonzero((col != 0) & (col != 1))[0])
                raise SchemaError(f"row {bad}: {name} must be 0 or 1, got {col[bad]}")
            setattr(self, name, col.astype(int))
        if not np.all(np.isfinite(self.x)):
            raise SchemaError("non-finite covariate values")

    def __len__(self):
        return len(self.y)

    def subset(self, idx) -> "IvData":
        return IvData(self.x[idx], self.a[idx], self.v[idx], self.y[idx])

    def flip_outcome(self) -> "IvData":
        """Same rows with ``y -> 1 - y`` (used for upper bounds)."""
        return IvData(self.x, self.a, self.v, 1 - self.y)
