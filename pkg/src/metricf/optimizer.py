"""Adagrad with sparse (row-subset) updates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError


@dataclass
class AdagradState:
    accum: np.ndarray
    eta: float = 0.05
    eps: float = 1e-8
    name: str = "param"

    def __post_init__(self):
        if self.eta <= 0 or self.eps <= 0:
            raise ConfigError(f"eta and eps must be > 0, got {self.eta}, {self.eps}")

    @classmethod
    def like(cls, param: np.ndarray, eta: float = 0.05, eps: float = 1e-8, name: str = "param"):
        return cls(np.zeros_like(param, dtype=float), eta, eps, name)


def adagrad_update(param: np.ndarray, grad: np.ndarray, state: AdagradState, rows=None) -> np.ndarray:
    """Apply one Adagrad step to ``param`` in place and return it.

    With ``rows`` given, ``grad`` holds the gradient for ``param[rows]`` only
    and just those rows (and their accumulators) change. ``rows`` must not
    contain duplicates; sum per-row contributions before calling.
    """
    grad = np.asarray(grad, dtype=float)
    if not np.all(np.isfinite(grad)):
        raise NumericError(f"non-finite gradient for {state.name}")
    if rows is None:
        if grad.shape != param.shape or state.accum.shape != param.shape:
            raise ValueError(f"shape mismatch for {state.name}: {param.shape}, {grad.shape}, {state.accum.shape}")
        state.accum += grad * grad
        param -= state.eta * grad / (np.sqrt(state.accum) + state.eps)
        return param
    acc = state.accum[rows] + grad * grad
    state.accum[rows] = acc
    param[rows] -= state.eta * grad / (np.sqrt(acc) + state.eps)
    return param


def sum_by_row(rows: np.ndarray, values: np.ndarray):
    """Collapse per-pair gradients onto unique rows: (unique_rows, summed_values)."""
    order = np.argsort(rows, kind="stable")
    srows = rows[order]
    starts = np.flatnonzero(np.r_[True, srows[1:] != srows[:-1]])
    return srows[starts], np.add.reduceat(values[order], starts, axis=0)
