"""The benchmark PDE suite: differential operators, domains, deterministic
conditions, candidate ground-truth solutions, collocation sampling, the
physics residual loss, and grid MAE scoring.

Each problem's operator is written against a small "field" protocol
(values + per-axis derivatives), so the same operator definition serves
jet-based symbolic candidates and autograd-based network training.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .expr import Expr
from .jets import INVALID_PENALTY


class JetField:
    """Field view of a jet-evaluable bound to a fixed batch of points.

    One order-2 jet pass per axis covers values and derivatives up to
    second order, cached across operator terms.
    """

    def __init__(self, f, pts: np.ndarray):
        self.f = f
        self.pts = pts
        self._coeffs: Optional[np.ndarray] = None  # (3, dim, N), filled on demand

    def _all_axes(self) -> np.ndarray:
        if self._coeffs is None:
            n, dim = self.pts.shape
            tiled = np.tile(self.pts, (dim, 1))
            axes = np.repeat(np.arange(dim), n)
            self._coeffs = self.f.eval_coeffs(tiled, axes, 2).reshape(3, dim, n)
        return self._coeffs

    def values(self) -> np.ndarray:
        return self._all_axes()[0, 0]

    def d(self, axis: int, order: int) -> np.ndarray:
        return self._all_axes()[order, axis] * math.factorial(order)


class CoeffsField:
    """Field view over pre-computed order-2 coefficients, shape (3, dim, N).

    Same layout as :class:`JetField` builds internally; lets callers who
    already hold the coefficient block (e.g. incremental masking) reuse the
    operator definitions without another tree walk.
    """

    def __init__(self, coeffs: np.ndarray):
        self._coeffs = coeffs

    def values(self) -> np.ndarray:
        return self._coeffs[0, 0]

    def d(self, axis: int, order: int) -> np.ndarray:
        return self._coeffs[order, axis] * math.factorial(order)


@dataclass(frozen=True)
class Condition:
    """Boundary/initial data: a point sampler plus target values."""

    label: str
    sample: Callable[[int, np.random.Generator], np.ndarray]
    target: Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class PdeProblem:
    name: str
    box: tuple[tuple[float, float], ...]  # per-axis bounds, time last when present
    has_time: bool
    lhs: Callable[[JetField], np.ndarray]  # derivative/value terms of the operator
    forcing: Optional[Callable[[np.ndarray], np.ndarray]]  # pure function of the points
    conditions: tuple[Condition, ...]
    truth: Optional[Expr] = None
    truth_verified: bool = False

    @property
    def dim(self) -> int:
        return len(self.box)

    @property
    def time_axis(self) -> Optional[int]:
        return self.dim - 1 if self.has_time else None

    def residual(self, f, pts: np.ndarray) -> np.ndarray:
        """Pointwise operator residual N[f] at ``pts``; non-finite propagates."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        with np.errstate(all="ignore"):
            r = self.lhs(JetField(f, pts))
            if self.forcing is not None:
                r = r - self.forcing(pts)
        return np.broadcast_to(np.asarray(r, dtype=float), (pts.shape[0],))

    def to_dict(self) -> dict:
        from .expr import serialize

        return {
            "name": self.name,
            "dim": self.dim,
            "has_time": self.has_time,
            "box": [list(b) for b in self.box],
            "conditions": [c.label for c in self.conditions],
            "truth": None if self.truth is None else serialize(self.truth, self.time_axis),
            "truth_verified": self.truth_verified,
        }


def sample_collocation(problem: PdeProblem, n: int, rng: np.random.Generator) -> np.ndarray:
    """n uniform points in the domain-by-time box."""
    if n < 1:
        raise ValueError("need at least one collocation point")
    lo = np.array([b[0] for b in problem.box])
    hi = np.array([b[1] for b in problem.box])
    return rng.uniform(lo, hi, size=(n, problem.dim))


def phys_loss(f, problem: PdeProblem, pts: np.ndarray) -> float:
    """Mean squared operator residual; non-finite points contribute the penalty."""
    r = problem.residual(f, pts)
    return _mean_sq_residual(r)


def phys_loss_from_coeffs(coeffs: np.ndarray, problem: PdeProblem, pts: np.ndarray) -> float:
    """Physics loss from pre-computed order-2 coefficients, shape (3, dim, N)."""
    with np.errstate(all="ignore"):
        r = problem.lhs(CoeffsField(coeffs))
        if problem.forcing is not None:
            r = r - problem.forcing(pts)
        r = np.broadcast_to(np.asarray(r, dtype=float), (pts.shape[0],))
    return _mean_sq_residual(r)


def _mean_sq_residual(r: np.ndarray) -> float:
    with np.errstate(all="ignore"):
        sq = np.where(np.isfinite(r), r * r, INVALID_PENALTY)
        sq = np.where(np.isfinite(sq), sq, INVALID_PENALTY)  # r*r may overflow
    return float(np.mean(sq))


def mae(f, problem: PdeProblem, points_per_axis: int = 32, max_points: int = 20000) -> float:
    """Mean absolute error against the registered truth on a uniform grid."""
    if problem.truth is None:
        raise ValueError(f"{problem.name} has no ground-truth solution")
    n = min(points_per_axis, max(2, int(max_points ** (1.0 / problem.dim))))
    axes = [np.linspace(b[0], b[1], n) for b in problem.box]
    grid = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=-1)
    diff = np.asarray(f.eval(grid)) - problem.truth.eval(grid)
    return float(np.mean(np.abs(diff)))


# -- registry -------------------------------------------------------------------


def _box_interior(box, n, rng):
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    return rng.uniform(lo, hi, size=(n, len(box)))


def _initial_sampler(box):
    """Points with the time coordinate (last axis) pinned to its lower bound."""

    def sample(n, rng):
        pts = _box_interior(box, n, rng)
        pts[:, -1] = box[-1][0]
        return pts

    return sample


def _boundary_sampler(box, spatial_axes):
    """Points on a random face of the spatial box; time (if any) stays uniform."""

    def sample(n, rng):
        pts = _box_interior(box, n, rng)
        faces = rng.integers(len(spatial_axes) * 2, size=n)
        for i in range(n):
            axis = spatial_axes[faces[i] // 2]
            pts[i, axis] = box[axis][faces[i] % 2]
        return pts

    return sample


def _expr_target(truth: Expr):
    return lambda pts: truth.eval(pts)


def _x(i):
    return Expr.var(i)


def _c(v):
    return Expr.const(v)


def _mul(a, b):
    return Expr.binary("mul", a, b)


def _add(*terms):
    out = terms[0]
    for t in terms[1:]:
        out = Expr.binary("add", out, t)
    return out


def _sub(a, b):
    return Expr.binary("sub", a, b)


def _pow(e, n):
    return Expr.powi(e, n)


def _advection() -> PdeProblem:
    # phi_t + phi_x = 0 on [0,1] x [0,1], u(x,0) = sin(x); wave speed 1.
    box = ((0.0, 1.0), (0.0, 1.0))
    truth = Expr.unary("sin", _sub(_x(0), _x(1)))
    return PdeProblem(
        name="Advection",
        box=box,
        has_time=True,
        lhs=lambda u: u.d(1, 1) + u.d(0, 1),
        forcing=None,
        conditions=(
            Condition("initial u(x,0)=sin(x)", _initial_sampler(box), lambda p: np.sin(p[:, 0])),
        ),
        truth=truth,
    )


def _diffusion() -> PdeProblem:
    # u_t = u_xx - e^{-t} sin(pi x)(1 - pi^2) on [-1,1] x [0,1].
    box = ((-1.0, 1.0), (0.0, 1.0))
    truth = _mul(
        Expr.unary("exp", Expr.unary("neg", _x(1))),
        Expr.unary("sin", _mul(_c(math.pi), _x(0))),
    )
    return PdeProblem(
        name="Diffusion",
        box=box,
        has_time=True,
        lhs=lambda u: u.d(1, 1) - u.d(0, 2),
        forcing=lambda p: -np.exp(-p[:, 1]) * np.sin(np.pi * p[:, 0]) * (1.0 - np.pi**2),
        conditions=(
            Condition(
                "initial u(x,0)=sin(pi x)",
                _initial_sampler(box),
                lambda p: np.sin(np.pi * p[:, 0]),
            ),
            Condition(
                "boundary u(+-1,t)=0",
                _boundary_sampler(box, spatial_axes=(0,)),
                lambda p: np.zeros(p.shape[0]),
            ),
        ),
        truth=truth,
    )


def _poisson2d() -> PdeProblem:
    # u_x1x1 + u_x2x2 = 30 x1^2 - 7.8 x1 + 1 on [-1,1]^2, Dirichlet data = truth.
    box = ((-1.0, 1.0), (-1.0, 1.0))
    truth = _add(
        _mul(_c(2.5), _pow(_x(0), 4)),
        Expr.unary("neg", _mul(_c(1.3), _pow(_x(0), 3))),
        _mul(_c(0.5), _pow(_x(1), 2)),
        Expr.unary("neg", _mul(_c(1.7), _x(1))),
    )
    return PdeProblem(
        name="Poisson2D",
        box=box,
        has_time=False,
        lhs=lambda u: u.d(0, 2) + u.d(1, 2),
        forcing=lambda p: 30 * p[:, 0] ** 2 - 7.8 * p[:, 0] + 1.0,
        conditions=(
            Condition(
                "boundary u=truth", _boundary_sampler(box, (0, 1)), _expr_target(truth)
            ),
        ),
        truth=truth,
    )


def _poisson3d() -> PdeProblem:
    box = ((-1.0, 1.0),) * 3
    truth = _add(
        _mul(_c(2.5), _pow(_x(0), 4)),
        Expr.unary("neg", _mul(_c(1.3), _pow(_x(1), 3))),
        _mul(_c(0.5), _pow(_x(2), 2)),
    )
    return PdeProblem(
        name="Poisson3D",
        box=box,
        has_time=False,
        lhs=lambda u: u.d(0, 2) + u.d(1, 2) + u.d(2, 2),
        forcing=lambda p: 30 * p[:, 0] ** 2 - 7.8 * p[:, 1] + 1.0,
        conditions=(
            Condition(
                "boundary u=truth", _boundary_sampler(box, (0, 1, 2)), _expr_target(truth)
            ),
        ),
        truth=truth,
    )


def _heat2d() -> PdeProblem:
    # u_t - (u_x1x1 + u_x2x2) = -30 x1^2 + 7.8 x2 + t, truth 2.5x1^4 - 1.3x2^3 + 0.5t^2.
    box = ((-1.0, 1.0), (-1.0, 1.0), (0.0, 1.0))
    truth = _add(
        _mul(_c(2.5), _pow(_x(0), 4)),
        Expr.unary("neg", _mul(_c(1.3), _pow(_x(1), 3))),
        _mul(_c(0.5), _pow(_x(2), 2)),
    )
    return PdeProblem(
        name="Heat2D",
        box=box,
        has_time=True,
        lhs=lambda u: u.d(2, 1) - (u.d(0, 2) + u.d(1, 2)),
        forcing=lambda p: -30 * p[:, 0] ** 2 + 7.8 * p[:, 1] + p[:, 2],
        conditions=(
            Condition(
                "boundary u=truth", _boundary_sampler(box, (0, 1)), _expr_target(truth)
            ),
            Condition("initial u(x,0)", _initial_sampler(box), _expr_target(truth)),
        ),
        truth=truth,
    )


def _heat3d() -> PdeProblem:
    box = ((-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0), (0.0, 1.0))
    truth = _add(
        Expr.unary("neg", _mul(_c(1.7), _x(3))),
        _mul(_c(2.5), _pow(_x(0), 4)),
        Expr.unary("neg", _mul(_c(1.3), _pow(_x(1), 3))),
        _mul(_c(0.5), _pow(_x(2), 2)),
    )
    return PdeProblem(
        name="Heat3D",
        box=box,
        has_time=True,
        lhs=lambda u: u.d(3, 1) - (u.d(0, 2) + u.d(1, 2) + u.d(2, 2)),
        forcing=lambda p: -30 * p[:, 0] ** 2 + 7.8 * p[:, 1] - 2.7,
        conditions=(
            Condition(
                "boundary u=truth", _boundary_sampler(box, (0, 1, 2)), _expr_target(truth)
            ),
            Condition("initial u(x,0)", _initial_sampler(box), _expr_target(truth)),
        ),
        truth=truth,
    )


def _wave2d() -> PdeProblem:
    # u_tt - (u_x1x1 + u_x2x2) = -u^3 + (0.25 - 4 x1^2); printed data exp(x1^2) sin(x2) e^{-0.5t}.
    box = ((-1.0, 1.0), (-1.0, 1.0), (0.0, 1.0))
    truth = _mul(
        _mul(Expr.unary("exp", _pow(_x(0), 2)), Expr.unary("sin", _x(1))),
        Expr.unary("exp", Expr.unary("neg", _mul(_c(0.5), _x(2)))),
    )
    return PdeProblem(
        name="Wave2D",
        box=box,
        has_time=True,
        lhs=lambda u: u.d(2, 2) - (u.d(0, 2) + u.d(1, 2)) + u.values() ** 3,
        forcing=lambda p: 0.25 - 4.0 * p[:, 0] ** 2,
        conditions=(
            Condition("initial u(x,0)", _initial_sampler(box), _expr_target(truth)),
            Condition(
                "boundary u=data", _boundary_sampler(box, (0, 1)), _expr_target(truth)
            ),
        ),
        truth=truth,
    )


def _wave3d() -> PdeProblem:
    # u_tt - lap(u) = u^2 - (4x1^2 + 4x3^2 + 2.75); printed data exp(x1^2+x3^2) cos(x2) e^{-0.5t}.
    box = ((-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0), (0.0, 1.0))
    truth = _mul(
        _mul(
            Expr.unary("exp", _add(_pow(_x(0), 2), _pow(_x(2), 2))),
            Expr.unary("cos", _x(1)),
        ),
        Expr.unary("exp", Expr.unary("neg", _mul(_c(0.5), _x(3)))),
    )
    return PdeProblem(
        name="Wave3D",
        box=box,
        has_time=True,
        lhs=lambda u: u.d(3, 2) - (u.d(0, 2) + u.d(1, 2) + u.d(2, 2)) - u.values() ** 2,
        forcing=lambda p: -(4.0 * p[:, 0] ** 2 + 4.0 * p[:, 2] ** 2 + 2.75),
        conditions=(
            Condition("initial u(x,0)", _initial_sampler(box), _expr_target(truth)),
            Condition(
                "boundary u=data", _boundary_sampler(box, (0, 1, 2)), _expr_target(truth)
            ),
        ),
        truth=truth,
    )


def _self_check(problem: PdeProblem, n: int = 100, tol: float = 1e-6) -> bool:
    """Does the registered truth actually satisfy the operator?"""
    rng = np.random.default_rng(12345)
    pts = sample_collocation(problem, n, rng)
    r = problem.residual(problem.truth, pts)
    return bool(np.isfinite(r).all() and np.max(np.abs(r)) < tol)


def registry() -> list[PdeProblem]:
    """The eight benchmark problems; candidate truths that fail the operator
    self-check are kept but flagged unverified (and excluded from MAE-based
    acceptance)."""
    problems = [
        _advection(),
        _diffusion(),
        _poisson2d(),
        _poisson3d(),
        _heat2d(),
        _heat3d(),
        _wave2d(),
        _wave3d(),
    ]
    out = []
    for p in problems:
        verified = _self_check(p)
        out.append(
            PdeProblem(
                p.name, p.box, p.has_time, p.lhs, p.forcing, p.conditions, p.truth, verified
            )
        )
    return out


def get_problem(name: str) -> PdeProblem:
    for p in registry():
        if p.name.lower() == name.lower():
            return p
    raise KeyError(f"unknown problem {name!r}; known: {[p.name for p in registry()]}")


def registry_json() -> str:
    return json.dumps([p.to_dict() for p in registry()], indent=2)
