"""Masking-based subtree attribution.

A subtree's importance is the change in structure loss / physics residual
loss when it is replaced by the neutral constant 1.  The combined score
drives a softmax over subtrees that biases genetic operators toward the
least critical regions while keeping full support.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .expr import Expr, Handle, coeffs_cache, masked_root_coeffs, subtrees
from .prior import TaylorPrior, taylor_loss_from_coeffs
from .problems import PdeProblem, phys_loss_from_coeffs


@dataclass
class SensitivityReport:
    """Per-subtree loss deltas for one expression, plus the softmax bookkeeping."""

    handles: list[Handle]
    d_struct: np.ndarray
    d_res: np.ndarray
    d_total: np.ndarray
    beta: float
    shift: Optional[float] = None  # standardization applied before the softmax
    scale: Optional[float] = None

    def __len__(self) -> int:
        return len(self.handles)


def sensitivities(
    f: Expr,
    prior: Optional[TaylorPrior],
    problem: PdeProblem,
    points: np.ndarray,
    beta: float,
) -> SensitivityReport:
    """Masking deltas for every subtree of ``f``; base losses computed once.

    Per-node coefficient arrays from a single walk are cached, so masking a
    subtree only recomputes its ancestors (O(depth) per mask, not a full
    re-walk).
    """
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    handles = subtrees(f)
    dim = problem.dim
    with np.errstate(all="ignore"):
        res_pts = np.tile(points, (dim, 1))
        res_axes = np.repeat(np.arange(dim), points.shape[0])
        res_cache = coeffs_cache(f, res_pts, res_axes, 2)
        if prior is not None:
            pri_pts = np.tile(prior.anchors, (dim, 1))
            pri_axes = np.repeat(np.arange(dim), prior.n_anchors)
            pri_cache = coeffs_cache(f, pri_pts, pri_axes, prior.order)

        def struct_of(cf) -> float:
            return taylor_loss_from_coeffs(cf, prior) if prior is not None else 0.0

        def res_of(cf) -> float:
            return phys_loss_from_coeffs(
                cf.reshape(3, dim, points.shape[0]), problem, points
            )

        base_struct = struct_of(pri_cache[()]) if prior is not None else 0.0
        base_res = res_of(res_cache[()])
        d_struct = np.empty(len(handles))
        d_res = np.empty(len(handles))
        for j, h in enumerate(handles):
            if prior is not None:
                cf = masked_root_coeffs(f, pri_cache, h, pri_pts, pri_axes, prior.order)
                d_struct[j] = struct_of(cf) - base_struct
            else:
                d_struct[j] = 0.0
            cf = masked_root_coeffs(f, res_cache, h, res_pts, res_axes, 2)
            d_res[j] = res_of(cf) - base_res
    d_total = beta * d_res + (1.0 - beta) * d_struct
    return SensitivityReport(handles, d_struct, d_res, d_total, beta)


def sampling_distribution(report: SensitivityReport, temperature: float = 1.0) -> np.ndarray:
    """Softmax over subtrees: lower combined sensitivity, higher probability.

    Scores are standardized (shift/scale recorded on the report) so the
    distribution is invariant to the wildly different loss scales across
    problems; a degenerate spread yields the uniform distribution.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if len(report) == 0:
        raise ValueError("empty sensitivity report")
    d = report.d_total
    with np.errstate(all="ignore"):
        mean = float(np.mean(d))
        std = float(np.std(d))
    if not np.isfinite(std):  # penalty-scale deltas can overflow the variance
        d = np.clip(d, -1e15, 1e15) / 1e15
        mean = float(np.mean(d))
        std = float(np.std(d))
    if std < 1e-12:
        report.shift, report.scale = mean, 1.0
        return np.full(len(d), 1.0 / len(d))
    report.shift, report.scale = mean, std
    z = -(d - mean) / (std * temperature)
    z -= z.max()
    p = np.exp(z)
    return p / p.sum()
