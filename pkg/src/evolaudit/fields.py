"""Scalar test fields on R^d with value, gradient and Hessian access.

All evaluators take a point array of shape (n, d) and return arrays of
shape (n,), (n, d) and (n, d, d) respectively.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np


def as_points(x, dimension: int) -> np.ndarray:
    """Coerce a point or a list of points to a float array of shape (n, d)."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1) if dimension == 1 else arr.reshape(1, -1)
    if arr.shape[1] != dimension:
        raise ValueError(f"expected points of dimension {dimension}, got shape {arr.shape}")
    return arr


def _fd_gradient(fn, x, step):
    n, d = x.shape
    out = np.empty((n, d))
    for k in range(d):
        e = np.zeros(d)
        e[k] = 1.0
        h = step * (1.0 + np.abs(x[:, k]))
        out[:, k] = (fn(x + h[:, None] * e) - fn(x - h[:, None] * e)) / (2 * h)
    return out


def _fd_hessian(grad_fn, x, step):
    n, d = x.shape
    out = np.empty((n, d, d))
    for k in range(d):
        e = np.zeros(d)
        e[k] = 1.0
        h = step * (1.0 + np.abs(x[:, k]))
        out[:, :, k] = (grad_fn(x + h[:, None] * e) - grad_fn(x - h[:, None] * e)) / (2 * h[:, None])
    return 0.5 * (out + out.transpose(0, 2, 1))


@dataclass(frozen=True)
class Field:
    """A twice differentiable scalar field.

    ``grad`` and ``hess`` fall back to central differences when omitted.
    ``sup_norm`` is the known supremum of |f| on R^d (``inf`` if unbounded).
    """

    dimension: int
    value: Callable[[np.ndarray], np.ndarray]
    grad_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    hess_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "field"
    sup_norm: float = np.inf

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.value(as_points(x, self.dimension)), dtype=float)

    def grad(self, x) -> np.ndarray:
        pts = as_points(x, self.dimension)
        if self.grad_fn is not None:
            return np.asarray(self.grad_fn(pts), dtype=float).reshape(pts.shape)
        return _fd_gradient(self.value, pts, 1e-5)

    def hess(self, x) -> np.ndarray:
        pts = as_points(x, self.dimension)
        d = self.dimension
        if self.hess_fn is not None:
            return np.asarray(self.hess_fn(pts), dtype=float).reshape(len(pts), d, d)
        return _fd_hessian(self.grad, pts, 1e-4)

    def power_abs(self, p: float) -> "Field":
        """|f|^p as a value-only field (used for Jensen and gradient audits)."""
        return Field(self.dimension, lambda x: np.abs(self.value(x)) ** p, name=f"|{self.name}|^{p:g}",
                     sup_norm=self.sup_norm ** p)

    def grad_norm_power(self, p: float) -> "Field":
        """|grad f|^p as a value-only field."""
        return Field(self.dimension, lambda x: np.linalg.norm(self.grad(x), axis=1) ** p,
                     name=f"|grad {self.name}|^{p:g}")


def _coord(x, axis):
    return x[:, axis]


def constant(c: float, dimension: int = 1) -> Field:
    d = dimension
    return Field(d, lambda x: np.full(len(x), float(c)), lambda x: np.zeros((len(x), d)),
                 lambda x: np.zeros((len(x), d, d)), name=f"const({c:g})", sup_norm=abs(c))


def coordinate(axis: int = 0, dimension: int = 1) -> Field:
    d = dimension

    def grad(x):
        g = np.zeros((len(x), d))
        g[:, axis] = 1.0
        return g

    return Field(d, lambda x: _coord(x, axis).copy(), grad, lambda x: np.zeros((len(x), d, d)),
                 name=f"x{axis}")


def square_norm(dimension: int = 1) -> Field:
    d = dimension
    return Field(d, lambda x: np.sum(x * x, axis=1), lambda x: 2 * x,
                 lambda x: np.broadcast_to(2 * np.eye(d), (len(x), d, d)).copy(), name="|x|^2")


def one_plus_square(dimension: int = 1) -> Field:
    sq = square_norm(dimension)
    return Field(dimension, lambda x: 1.0 + sq.value(x), sq.grad_fn, sq.hess_fn, name="1+|x|^2")


def exp_quadratic(lam: float, dimension: int = 1) -> Field:
    """exp(lam |x|^2)."""
    d = dimension

    def val(x):
        return np.exp(lam * np.sum(x * x, axis=1))

    def grad(x):
        return 2 * lam * x * val(x)[:, None]

    def hess(x):
        v = val(x)
        h = 4 * lam**2 * x[:, :, None] * x[:, None, :] + 2 * lam * np.eye(d)
        return h * v[:, None, None]

    return Field(d, val, grad, hess, name=f"exp({lam:g}|x|^2)")


def sine(axis: int = 0, freq: float = 1.0, amplitude: float = 1.0, offset: float = 0.0,
         dimension: int = 1) -> Field:
    """offset + amplitude * sin(freq * x_axis)."""
    d = dimension

    def grad(x):
        g = np.zeros((len(x), d))
        g[:, axis] = amplitude * freq * np.cos(freq * x[:, axis])
        return g

    def hess(x):
        h = np.zeros((len(x), d, d))
        h[:, axis, axis] = -amplitude * freq**2 * np.sin(freq * x[:, axis])
        return h

    name = "sin" if (freq, amplitude, offset) == (1.0, 1.0, 0.0) else f"{offset:g}+{amplitude:g}sin({freq:g}x)"
    return Field(d, lambda x: offset + amplitude * np.sin(freq * x[:, axis]), grad, hess, name=name,
                 sup_norm=abs(offset) + abs(amplitude))


def cosine(axis: int = 0, freq: float = 1.0, amplitude: float = 1.0, offset: float = 0.0,
           dimension: int = 1) -> Field:
    d = dimension

    def grad(x):
        g = np.zeros((len(x), d))
        g[:, axis] = -amplitude * freq * np.sin(freq * x[:, axis])
        return g

    def hess(x):
        h = np.zeros((len(x), d, d))
        h[:, axis, axis] = -amplitude * freq**2 * np.cos(freq * x[:, axis])
        return h

    return Field(d, lambda x: offset + amplitude * np.cos(freq * x[:, axis]), grad, hess,
                 name=f"{offset:g}+{amplitude:g}cos({freq:g}x)", sup_norm=abs(offset) + abs(amplitude))


def hyperbolic_tangent(axis: int = 0, slope: float = 1.0, dimension: int = 1) -> Field:
    d = dimension

    def grad(x):
        g = np.zeros((len(x), d))
        g[:, axis] = slope / np.cosh(slope * x[:, axis]) ** 2
        return g

    def hess(x):
        h = np.zeros((len(x), d, d))
        y = slope * x[:, axis]
        h[:, axis, axis] = -2 * slope**2 * np.tanh(y) / np.cosh(y) ** 2
        return h

    return Field(d, lambda x: np.tanh(slope * x[:, axis]), grad, hess, name=f"tanh({slope:g}x)", sup_norm=1.0)


def gaussian_bump(width: float = 1.0, center=None, dimension: int = 1) -> Field:
    """exp(-|x - center|^2 / width^2)."""
    d = dimension
    c = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    a = 1.0 / width**2

    def val(x):
        y = x - c
        return np.exp(-a * np.sum(y * y, axis=1))

    def grad(x):
        return -2 * a * (x - c) * val(x)[:, None]

    def hess(x):
        y = x - c
        h = 4 * a**2 * y[:, :, None] * y[:, None, :] - 2 * a * np.eye(d)
        return h * val(x)[:, None, None]

    return Field(d, val, grad, hess, name=f"bump({width:g})", sup_norm=1.0)


def exp_linear(direction, dimension: int = 1) -> Field:
    """exp(<a, x>)."""
    d = dimension
    a = np.broadcast_to(np.asarray(direction, dtype=float), (d,)).copy()

    def val(x):
        return np.exp(x @ a)

    return Field(d, val, lambda x: val(x)[:, None] * a,
                 lambda x: val(x)[:, None, None] * np.outer(a, a), name=f"exp({a.tolist()}.x)")


def affine(base: Field, offset: float, scale: float) -> Field:
    """offset + scale * base."""
    d = base.dimension
    return Field(d, lambda x: offset + scale * base.value(x), lambda x: scale * base.grad(x),
                 lambda x: scale * base.hess(x), name=f"{offset:g}+{scale:g}*{base.name}",
                 sup_norm=abs(offset) + abs(scale) * base.sup_norm)


def product(first: Field, second: Field) -> Field:
    d = first.dimension

    def grad(x):
        return first.grad(x) * second.value(x)[:, None] + second.grad(x) * first.value(x)[:, None]

    def hess(x):
        g1, g2 = first.grad(x), second.grad(x)
        cross = g1[:, :, None] * g2[:, None, :]
        return (first.hess(x) * second.value(x)[:, None, None] + second.hess(x) * first.value(x)[:, None, None]
                + cross + cross.transpose(0, 2, 1))

    return Field(d, lambda x: first.value(x) * second.value(x), grad, hess,
                 name=f"{first.name}*{second.name}", sup_norm=first.sup_norm * second.sup_norm)


def numeric(fn: Callable[[np.ndarray], np.ndarray], dimension: int = 1, name: str = "numeric",
            sup_norm: float = np.inf) -> Field:
    """Wrap a plain vectorized callable; derivatives by central differences."""
    return Field(dimension, fn, name=name, sup_norm=sup_norm)


def library(dimension: int = 1) -> dict[str, Field]:
    """Named test fields, addressable from configuration files."""
    d = dimension
    fields = {
        "one": constant(1.0, d),
        "zero": constant(0.0, d),
        "x": coordinate(0, d),
        "x2": square_norm(d),
        "sin": sine(0, dimension=d),
        "cos": cosine(0, dimension=d),
        "tanh": hyperbolic_tangent(0, dimension=d),
        "bump": gaussian_bump(1.0, dimension=d),
        "wave": affine(cosine(0, freq=2.0, dimension=d), 0.3, 0.5),
        "sin-perturbed": affine(sine(0, dimension=d), 1.0, 0.1),
    }
    return fields


BOUNDED_TEST_FIELDS = ("one", "sin", "tanh", "bump", "wave")
