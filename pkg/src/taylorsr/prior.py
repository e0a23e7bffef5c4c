"""Taylor structural prior: anchor selection, extraction from any
jet-evaluable source (trained network or analytic oracle), and the
coefficient-mismatch structure loss."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .jets import INVALID_PENALTY, coeffs_valid

#: fraction of each side length kept clear of the domain boundary
ANCHOR_MARGIN = 0.05


@dataclass(frozen=True)
class TaylorPrior:
    """Per-anchor, per-axis Taylor coefficient vectors used as structural truth."""

    anchors: np.ndarray  # (A, d)
    order: int
    coeffs: np.ndarray  # (A, d, K+1)
    source: str  # "analytic-oracle" | "pinn"
    dropped: int = 0  # anchors discarded for invalid jets during extraction

    def __post_init__(self):
        if self.coeffs.shape != (self.anchors.shape[0], self.anchors.shape[1], self.order + 1):
            raise ValueError("coefficient array shape does not match anchors/order")
        if not np.isfinite(self.coeffs).all():
            raise ValueError("prior coefficients must be finite")

    @property
    def n_anchors(self) -> int:
        return self.anchors.shape[0]

    def save(self, path: str | Path) -> None:
        payload = {
            "anchors": self.anchors.tolist(),
            "order": self.order,
            "coeffs": self.coeffs.tolist(),
            "source": self.source,
            "dropped": self.dropped,
        }
        Path(path).write_text(json.dumps(payload))

    @staticmethod
    def load(path: str | Path) -> "TaylorPrior":
        payload = json.loads(Path(path).read_text())
        return TaylorPrior(
            anchors=np.asarray(payload["anchors"], dtype=float),
            order=int(payload["order"]),
            coeffs=np.asarray(payload["coeffs"], dtype=float),
            source=payload["source"],
            dropped=int(payload.get("dropped", 0)),
        )


def select_anchors(problem, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform interior anchors, offset from every boundary by 5% of side length."""
    if n < 1:
        raise ValueError("need at least one anchor")
    lo = np.array([b[0] for b in problem.box])
    hi = np.array([b[1] for b in problem.box])
    margin = ANCHOR_MARGIN * (hi - lo)
    return rng.uniform(lo + margin, hi - margin, size=(n, len(problem.box)))


def extract_prior(source, anchors: np.ndarray, order: int, source_tag: str) -> TaylorPrior:
    """Fill the coefficient array one jet pass per axis; drops invalid anchors."""
    anchors = np.asarray(anchors, dtype=float)
    n, dim = anchors.shape
    coeffs = np.empty((n, dim, order + 1))
    for axis in range(dim):
        coeffs[:, axis, :] = source.eval_coeffs(anchors, axis, order).T
    valid = np.isfinite(coeffs).all(axis=(1, 2))
    dropped = int(n - valid.sum())
    if valid.sum() == 0:
        raise ValueError("all anchors produced invalid jets")
    return TaylorPrior(anchors[valid], order, coeffs[valid], source_tag, dropped)


def taylor_loss(f, prior: TaylorPrior) -> float:
    """Mean over (anchor, axis) of the summed squared coefficient mismatch.

    Invalid candidate jets at any anchor map to a large finite penalty so the
    loss totally orders a population.
    """
    n, dim = prior.anchors.shape
    # one walk for all axes: each anchor replicated once per active axis
    pts = np.tile(prior.anchors, (dim, 1))
    axes = np.repeat(np.arange(dim), n)
    with np.errstate(all="ignore"):
        cf = f.eval_coeffs(pts, axes, prior.order)  # (K+1, dim*A)
    return taylor_loss_from_coeffs(cf, prior)


def taylor_loss_from_coeffs(cf: np.ndarray, prior: TaylorPrior) -> float:
    """Structure loss from pre-computed coefficients in the tiled-anchor
    layout of :func:`taylor_loss` (shape (K+1, dim * n_anchors), axis-major)."""
    n, dim = prior.anchors.shape
    with np.errstate(all="ignore"):
        if not np.isfinite(cf).all():
            return INVALID_PENALTY
        ref = prior.coeffs.transpose(2, 1, 0).reshape(prior.order + 1, dim * n)
        diff = cf - ref
        loss = float(np.sum(diff * diff)) / (n * dim)
    return loss if math.isfinite(loss) else INVALID_PENALTY
