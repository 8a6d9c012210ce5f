"""
Truncated formal power series.

A PowerSeries holds the coefficients of z^0 .. z^(order-1). Every operation
returns a series of the same order as its operands and never reads past
index order-1. Coefficients are float64.
"""

from dataclasses import dataclass
from typing import Iterable, Union

import numpy as np

from .errors import DomainError, OrderMismatchError, SeriesError, ZeroConstantTermError

Number = Union[int, float]


@dataclass(frozen=True, eq=False)
class PowerSeries:
    coeffs: np.ndarray

    def __post_init__(self):
        arr = np.array(self.coeffs, dtype=np.float64, copy=True).reshape(-1)
        if arr.size < 1:
            raise SeriesError("a power series needs order >= 1")
        arr.setflags(write=False)
        object.__setattr__(self, "coeffs", arr)

    @property
    def order(self) -> int:
        return int(self.coeffs.size)

    def __len__(self) -> int:
        return self.order

    def __getitem__(self, k):
        return self.coeffs[k]

    def __iter__(self):
        return iter(self.coeffs)

    def __repr__(self) -> str:
        head = ", ".join(f"{c:.6g}" for c in self.coeffs[:6])
        tail = ", ..." if self.order > 6 else ""
        return f"PowerSeries([{head}{tail}], order={self.order})"

    # construction

    @classmethod
    def zeros(cls, order: int) -> 'PowerSeries':
        return cls(np.zeros(order))

    @classmethod
    def constant(cls, value: Number, order: int) -> 'PowerSeries':
        c = np.zeros(order)
        c[0] = value
        return cls(c)

    @classmethod
    def variable(cls, order: int) -> 'PowerSeries':
        """The series z."""
        c = np.zeros(order)
        if order > 1:
            c[1] = 1.0
        return cls(c)

    @classmethod
    def from_coeffs(cls, coeffs: Iterable[Number], order: int) -> 'PowerSeries':
        """Pad with zeros or truncate to ``order`` entries."""
        arr = np.asarray(list(coeffs) if not isinstance(coeffs, np.ndarray) else coeffs, dtype=np.float64)
        out = np.zeros(order)
        n = min(order, arr.size)
        out[:n] = arr[:n]
        return cls(out)

    def truncate(self, order: int) -> 'PowerSeries':
        return PowerSeries.from_coeffs(self.coeffs, order)

    # evaluation

    def evaluate(self, x):
        """Value of the truncated polynomial at x (Horner)."""
        return np.polynomial.polynomial.polyval(x, self.coeffs)

    def sum(self) -> float:
        return float(self.coeffs.sum())

    def deriv(self) -> 'PowerSeries':
        return ps_deriv(self)

    # arithmetic

    def _coerce(self, other) -> 'PowerSeries':
        if isinstance(other, PowerSeries):
            _check_orders(self, other)
            return other
        if np.isscalar(other):
            return PowerSeries.constant(float(other), self.order)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return PowerSeries(self.coeffs + other.coeffs)

    __radd__ = __add__

    def __neg__(self):
        return PowerSeries(-self.coeffs)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return PowerSeries(self.coeffs - other.coeffs)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return PowerSeries(other.coeffs - self.coeffs)

    def __mul__(self, other):
        if np.isscalar(other):
            return PowerSeries(self.coeffs * float(other))
        if isinstance(other, PowerSeries):
            return ps_mul(self, other)
        return NotImplemented

    def __rmul__(self, other):
        if np.isscalar(other):
            return PowerSeries(self.coeffs * float(other))
        return NotImplemented

    def __truediv__(self, other):
        if np.isscalar(other):
            return PowerSeries(self.coeffs / float(other))
        if isinstance(other, PowerSeries):
            return ps_div(self, other)
        return NotImplemented

    def __rtruediv__(self, other):
        if np.isscalar(other):
            return ps_div(PowerSeries.constant(float(other), self.order), self)
        return NotImplemented

    def allclose(self, other: 'PowerSeries', atol: float = 1e-12) -> bool:
        _check_orders(self, other)
        return bool(np.max(np.abs(self.coeffs - other.coeffs)) <= atol)


def _check_orders(a: PowerSeries, b: PowerSeries) -> None:
    if a.order != b.order:
        raise OrderMismatchError(f"series orders differ: {a.order} vs {b.order}")


def ps_mul(a: PowerSeries, b: PowerSeries) -> PowerSeries:
    """Cauchy product truncated to the common order."""
    _check_orders(a, b)
    n = a.order
    return PowerSeries(np.convolve(a.coeffs, b.coeffs)[:n])


def ps_div(a: PowerSeries, b: PowerSeries) -> PowerSeries:
    _check_orders(a, b)
    b0 = b.coeffs[0]
    if b0 == 0.0:
        raise ZeroConstantTermError("division by a series with zero constant term")

    n = a.order
    x, y = a.coeffs, b.coeffs
    out = np.zeros(n)
    for k in range(n):
        acc = x[k]
        if k:
            acc -= np.dot(y[1:k + 1], out[k - 1::-1])
        out[k] = acc / b0
    return PowerSeries(out)


def ps_deriv(a: PowerSeries) -> PowerSeries:
    """Formal derivative. The top coefficient is unknown after truncation and set to 0."""
    n = a.order
    out = np.zeros(n)
    if n > 1:
        out[:-1] = a.coeffs[1:] * np.arange(1, n)
    return PowerSeries(out)


def ps_antideriv(a: PowerSeries) -> PowerSeries:
    """Antiderivative with zero constant term; a_{order-1} falls off the end."""
    n = a.order
    out = np.zeros(n)
    if n > 1:
        out[1:] = a.coeffs[:-1] / np.arange(1, n)
    return PowerSeries(out)


def ps_exp(a: PowerSeries) -> PowerSeries:
    n = a.order
    x = a.coeffs
    out = np.zeros(n)
    out[0] = np.exp(x[0])
    # k f_k = sum_{j=1..k} j a_j f_{k-j}
    ja = x * np.arange(n)
    for k in range(1, n):
        out[k] = np.dot(ja[1:k + 1], out[k - 1::-1]) / k
    return PowerSeries(out)


def ps_log(a: PowerSeries) -> PowerSeries:
    x = a.coeffs
    if not x[0] > 0.0:
        raise DomainError(f"log of a series needs a positive constant term, got {x[0]!r}")

    n = a.order
    out = np.zeros(n)
    out[0] = np.log(x[0])
    # k a_0 g_k = k a_k - sum_{j=1..k-1} j g_j a_{k-j}
    jg = np.zeros(n)
    for k in range(1, n):
        acc = k * x[k]
        if k > 1:
            acc -= np.dot(jg[1:k], x[k - 1:0:-1])
        out[k] = acc / (k * x[0])
        jg[k] = k * out[k]
    return PowerSeries(out)


def ps_pow_scalar(a: PowerSeries, s: float) -> PowerSeries:
    """a(z)**s for a series with positive constant term."""
    return ps_exp(ps_log(a) * s)


def ps_compose(outer: PowerSeries, inner: PowerSeries, recenter: bool = False) -> PowerSeries:
    """
    outer(inner(z)) truncated to the common order.

    inner must have a zero constant term. With ``recenter=True`` a nonzero
    constant term is accepted and ``outer`` is treated as the exact
    polynomial given by its truncated coefficients.
    """
    _check_orders(outer, inner)
    c0 = inner.coeffs[0]
    if c0 != 0.0 and not recenter:
        raise SeriesError(
            f"composition needs an inner series with zero constant term (got {c0!r}); "
            "rewrite through ps_exp/ps_log or pass recenter=True"
        )

    n = outer.order
    acc = np.zeros(n)
    acc[0] = outer.coeffs[-1]
    for k in range(n - 2, -1, -1):
        acc = np.convolve(acc, inner.coeffs)[:n]
        acc[0] += outer.coeffs[k]
    return PowerSeries(acc)
