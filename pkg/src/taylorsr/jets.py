"""Order-K truncated Taylor (jet) arithmetic along one scalar direction.

A jet stores the coefficients c_0..c_K with c_k = f^(k)(x0)/k! along the
active axis.  All arithmetic below operates on raw coefficient arrays of
shape (K+1, ...) — the leading axis is the Taylor order, trailing axes are
free (typically a batch of evaluation points), so a whole collocation set
is differentiated in one tree walk.

Non-finite coefficients are never raised on: they propagate through the
recurrences and are detected at the end (``coeffs_valid``).  Callers map
invalid jets to a large finite penalty so fitness stays totally ordered.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MIN_ORDER = 2
MAX_ORDER = 8

#: Penalty substituted for losses computed from invalid (non-finite) jets.
INVALID_PENALTY = 1e12


def _check_order(k: int) -> None:
    if not MIN_ORDER <= k <= MAX_ORDER:
        raise ValueError(f"jet order must be in [{MIN_ORDER}, {MAX_ORDER}], got {k}")


def const_coeffs(value, order: int, shape=()) -> np.ndarray:
    """Coefficients of a constant: (value, 0, ..., 0)."""
    c = np.zeros((order + 1,) + tuple(shape))
    c[0] = value
    return c


def var_coeffs(value, active, order: int) -> np.ndarray:
    """Coefficients of a coordinate: identity along the active axis, frozen otherwise.

    ``active`` may be a scalar bool or a boolean array matching ``value``,
    letting a single walk differentiate different points along different axes.
    """
    value = np.asarray(value, dtype=float)
    c = np.zeros((order + 1,) + value.shape)
    c[0] = value
    c[1] = np.asarray(active, dtype=float)
    return c


def add_coeffs(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a + b


def sub_coeffs(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a - b


def neg_coeffs(a: np.ndarray) -> np.ndarray:
    return -a


def mul_coeffs(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cauchy product, truncated at the common order."""
    n = a.shape[0]
    a, b = np.broadcast_arrays(a, b)
    out = np.empty(a.shape)
    with np.errstate(all="ignore"):
        for k in range(n):
            out[k] = (a[: k + 1] * b[k::-1]).sum(axis=0)
    return out


def div_coeffs(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Back-substitution for a/b; b with zero constant term yields NaN coefficients."""
    n = a.shape[0]
    a, b = np.broadcast_arrays(a, b)
    out = np.empty(a.shape)
    with np.errstate(all="ignore"):
        out[0] = a[0] / b[0]
        for k in range(1, n):
            acc = a[k] - (b[1 : k + 1] * out[k - 1 :: -1]).sum(axis=0)
            out[k] = acc / b[0]
    return out


def pow_int_coeffs(a: np.ndarray, exponent: int) -> np.ndarray:
    """Integer power by repeated Cauchy products (exact, domain-safe)."""
    if exponent < 1:
        raise ValueError("integer exponent must be >= 1")
    out = a
    for _ in range(exponent - 1):
        out = mul_coeffs(out, a)
    return out


def _scaled_orders(a: np.ndarray) -> np.ndarray:
    """j * a[j] for all orders, the shared driver of the ODE-style recurrences."""
    n = a.shape[0]
    return a * np.arange(n).reshape((n,) + (1,) * (a.ndim - 1))


def sin_cos_coeffs(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Jointly propagated sine and cosine of a jet (shared recurrence)."""
    n = a.shape[0]
    s = np.empty(a.shape)
    c = np.empty(a.shape)
    with np.errstate(all="ignore"):
        ja = _scaled_orders(a)
        s[0] = np.sin(a[0])
        c[0] = np.cos(a[0])
        for k in range(1, n):
            s[k] = (ja[1 : k + 1] * c[k - 1 :: -1]).sum(axis=0) / k
            c[k] = -(ja[1 : k + 1] * s[k - 1 :: -1]).sum(axis=0) / k
    return s, c


def exp_coeffs(a: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    e = np.empty(a.shape)
    with np.errstate(all="ignore"):
        ja = _scaled_orders(a)
        e[0] = np.exp(a[0])
        for k in range(1, n):
            e[k] = (ja[1 : k + 1] * e[k - 1 :: -1]).sum(axis=0) / k
    return e


def tanh_coeffs(a: np.ndarray) -> np.ndarray:
    """tanh of a jet via the recurrence driven by tanh' = 1 - tanh^2."""
    n = a.shape[0]
    t = np.empty(a.shape)
    w = np.empty(a.shape)  # w = 1 - t^2, built alongside t
    with np.errstate(all="ignore"):
        ja = _scaled_orders(a)
        t[0] = np.tanh(a[0])
        w[0] = 1.0 - t[0] * t[0]
        for k in range(1, n):
            t[k] = (ja[1 : k + 1] * w[k - 1 :: -1]).sum(axis=0) / k
            w[k] = -(t[: k + 1] * t[k::-1]).sum(axis=0)
    return t


def coeffs_valid(c: np.ndarray) -> np.ndarray:
    """Per-trailing-element validity: True where all orders are finite."""
    return np.isfinite(c).all(axis=0)


@dataclass(frozen=True)
class Jet:
    """Value plus K ordered Taylor coefficients along one scalar direction."""

    coeffs: np.ndarray  # shape (K+1,)

    def __post_init__(self):
        _check_order(self.order)

    @property
    def order(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def value(self) -> float:
        return float(self.coeffs[0])

    @property
    def is_valid(self) -> bool:
        return bool(np.isfinite(self.coeffs).all())

    def _lift(self, other) -> np.ndarray:
        if isinstance(other, Jet):
            if other.order != self.order:
                raise ValueError("jet orders do not match")
            return other.coeffs
        return const_coeffs(float(other), self.order)

    def __add__(self, other):
        return Jet(add_coeffs(self.coeffs, self._lift(other)))

    __radd__ = __add__

    def __sub__(self, other):
        return Jet(sub_coeffs(self.coeffs, self._lift(other)))

    def __rsub__(self, other):
        return Jet(sub_coeffs(self._lift(other), self.coeffs))

    def __mul__(self, other):
        return Jet(mul_coeffs(self.coeffs, self._lift(other)))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return Jet(div_coeffs(self.coeffs, self._lift(other)))

    def __rtruediv__(self, other):
        return Jet(div_coeffs(self._lift(other), self.coeffs))

    def __neg__(self):
        return Jet(neg_coeffs(self.coeffs))

    def pow_int(self, exponent: int) -> "Jet":
        return Jet(pow_int_coeffs(self.coeffs, exponent))

    def sin(self) -> "Jet":
        return Jet(sin_cos_coeffs(self.coeffs)[0])

    def cos(self) -> "Jet":
        return Jet(sin_cos_coeffs(self.coeffs)[1])

    def exp(self) -> "Jet":
        return Jet(exp_coeffs(self.coeffs))

    def tanh(self) -> "Jet":
        return Jet(tanh_coeffs(self.coeffs))


def jet_var(value: float, active: bool, order: int) -> Jet:
    """Seed jet for one coordinate of the expansion point."""
    _check_order(order)
    return Jet(var_coeffs(float(value), active, order))


def taylor_coeffs(f, anchor, axis: int, order: int) -> np.ndarray:
    """Normalized Taylor coefficients (f, f'/1!, ..., f^(K)/K!) of ``f`` at ``anchor``.

    ``f`` is any jet-evaluable: an object exposing
    ``eval_coeffs(points, axis, order) -> (K+1, N) array``.
    """
    _check_order(order)
    anchor = np.atleast_2d(np.asarray(anchor, dtype=float))
    return f.eval_coeffs(anchor, axis, order)[:, 0]


def derivative(f, point, axis: int, order: int):
    """k-th raw derivative of ``f`` along ``axis``; batched over points.

    Returns a scalar for a single point, an array for a batch.  Invalid jets
    yield NaN.
    """
    pts = np.asarray(point, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    k = max(order, MIN_ORDER)
    coeffs = f.eval_coeffs(pts, axis, k)
    out = coeffs[order] * math.factorial(order)
    return float(out[0]) if single else out
