"""Third-order Taylor expansions in three variables.

A :class:`Jet3` carries, for a batch of evaluation points, the Taylor
coefficients of a scalar field up to total degree three.  Arithmetic on
jets mirrors arithmetic on the underlying fields, so writing down a
closed-form expression yields its exact derivatives as a side effect.
The manufactured-solution machinery uses this to turn a velocity and
pressure pair into body forces and boundary tractions without any
hand-differentiation.

Coefficient ``coef[k, p]`` multiplies the monomial with exponent triple
``MULTI_INDICES[k]`` in the expansion around point ``p``; it equals the
corresponding mixed partial derivative divided by the factorial of the
multi-index.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ShapeMismatch

__all__ = ["Jet3", "MULTI_INDICES", "NUM_COEFFS", "atan2"]


def _graded_indices():
    out = []
    for total in range(4):
        for a in range(total, -1, -1):
            for b in range(total - a, -1, -1):
                out.append((a, b, total - a - b))
    return tuple(out)


MULTI_INDICES = _graded_indices()
NUM_COEFFS = len(MULTI_INDICES)
_INDEX = {alpha: k for k, alpha in enumerate(MULTI_INDICES)}


def _product_triples():
    # sorted by output index so products can be summed with add.reduceat;
    # every output index occurs (take j = 0), so no segment is empty
    ks, ii, jj = [], [], []
    for i, a in enumerate(MULTI_INDICES):
        for j, b in enumerate(MULTI_INDICES):
            k = _INDEX.get((a[0] + b[0], a[1] + b[1], a[2] + b[2]))
            if k is not None:
                ks.append(k)
                ii.append(i)
                jj.append(j)
    order = np.argsort(np.array(ks), kind="stable")
    ks = np.array(ks)[order]
    starts = np.searchsorted(ks, np.arange(NUM_COEFFS))
    return starts, np.array(ii)[order], np.array(jj)[order]


_PROD_STARTS, _PROD_I, _PROD_J = _product_triples()


def _partial_tables():
    # result coefficient at beta is (beta[axis] + 1) * coef[beta + e_axis]
    tables = []
    for axis in range(3):
        dst, src, fac = [], [], []
        for k, alpha in enumerate(MULTI_INDICES):
            if sum(alpha) >= 3:
                continue
            up = list(alpha)
            up[axis] += 1
            dst.append(k)
            src.append(_INDEX[tuple(up)])
            fac.append(alpha[axis] + 1)
        tables.append((np.array(dst), np.array(src), np.array(fac, dtype=float)))
    return tables


_PARTIAL = _partial_tables()


class Jet3:
    """Batched degree-3 Taylor expansion of a scalar field.

    ``order`` records up to which total degree the coefficients are
    trustworthy; it drops by one with every :meth:`partial`.
    """

    __slots__ = ("coef", "order")

    def __init__(self, coef: np.ndarray, order: int = 3):
        coef = np.asarray(coef, dtype=float)
        if coef.ndim != 2 or coef.shape[0] != NUM_COEFFS:
            raise ShapeMismatch(
                f"jet coefficients must have shape ({NUM_COEFFS}, n), got {coef.shape}"
            )
        self.coef = coef
        self.order = order

    @classmethod
    def constant(cls, values) -> "Jet3":
        values = np.atleast_1d(np.asarray(values, dtype=float))
        coef = np.zeros((NUM_COEFFS, values.shape[0]))
        coef[0] = values
        return cls(coef)

    @classmethod
    def variable(cls, values, axis: int) -> "Jet3":
        """The coordinate function x_axis sampled at the given values."""
        values = np.atleast_1d(np.asarray(values, dtype=float))
        coef = np.zeros((NUM_COEFFS, values.shape[0]))
        coef[0] = values
        coef[1 + axis] = 1.0
        return cls(coef)

    @classmethod
    def variables(cls, points) -> tuple["Jet3", "Jet3", "Jet3"]:
        """Coordinate jets for an (n, 3) array of points."""
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        return tuple(cls.variable(points[:, i], i) for i in range(3))

    @property
    def value(self) -> np.ndarray:
        return self.coef[0]

    @property
    def num_points(self) -> int:
        return self.coef.shape[1]

    def derivative(self, alpha) -> np.ndarray:
        """Value of the mixed partial derivative with multi-index alpha."""
        alpha = tuple(int(a) for a in alpha)
        if sum(alpha) > self.order:
            raise ValueError(
                f"jet is only valid to order {self.order}, requested {alpha}"
            )
        fac = math.factorial(alpha[0]) * math.factorial(alpha[1]) * math.factorial(alpha[2])
        return fac * self.coef[_INDEX[alpha]]

    @property
    def gradient(self) -> np.ndarray:
        """First derivatives, shape (3, n)."""
        if self.order < 1:
            raise ValueError("jet no longer carries first derivatives")
        return self.coef[1:4]

    def partial(self, axis: int) -> "Jet3":
        """Jet of the partial derivative along one axis, one order lower."""
        if self.order < 1:
            raise ValueError("jet no longer carries derivative information")
        dst, src, fac = _PARTIAL[axis]
        out = np.zeros_like(self.coef)
        out[dst] = fac[:, None] * self.coef[src]
        return Jet3(out, self.order - 1)

    def _lift(self, other) -> "Jet3":
        if isinstance(other, Jet3):
            return other
        arr = np.asarray(other, dtype=float)
        coef = np.zeros((NUM_COEFFS, self.num_points))
        coef[0] = arr
        return Jet3(coef)

    def _scaled(self, factor) -> "Jet3":
        # multiply by a per-point number (a locally constant field)
        return Jet3(self.coef * np.asarray(factor, dtype=float), self.order)

    def __add__(self, other):
        o = self._lift(other)
        return Jet3(self.coef + o.coef, min(self.order, o.order))

    __radd__ = __add__

    def __sub__(self, other):
        o = self._lift(other)
        return Jet3(self.coef - o.coef, min(self.order, o.order))

    def __rsub__(self, other):
        o = self._lift(other)
        return Jet3(o.coef - self.coef, min(self.order, o.order))

    def __neg__(self):
        return Jet3(-self.coef, self.order)

    def __mul__(self, other):
        o = self._lift(other)
        a, b = self.coef, o.coef
        out = np.add.reduceat(a[_PROD_I] * b[_PROD_J], _PROD_STARTS, axis=0)
        return Jet3(out, min(self.order, o.order))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * self._lift(other).reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, exponent):
        if isinstance(exponent, (int, np.integer)) and exponent >= 0:
            result = Jet3.constant(np.ones(self.num_points))
            for _ in range(int(exponent)):
                result = result * self
            return result
        return self.power(float(exponent))

    def _compose(self, c0, c1, c2, c3) -> "Jet3":
        """Truncated series of a univariate function along this jet.

        ``c_k`` must be the k-th derivative of the function at the jet's
        value, divided by k factorial.
        """
        delta_coef = self.coef.copy()
        delta_coef[0] = 0.0
        delta = Jet3(delta_coef, self.order)
        head = np.zeros_like(self.coef)
        head[0] = c0
        acc = Jet3(head, self.order) + delta._scaled(c1)
        term = delta * delta
        acc = acc + term._scaled(c2)
        term = term * delta
        return acc + term._scaled(c3)

    def reciprocal(self) -> "Jet3":
        v = self.coef[0]
        with np.errstate(divide="ignore", invalid="ignore"):
            r = 1.0 / v
        r2 = r * r
        return self._compose(r, -r2, r2 * r, -r2 * r2)

    def sin(self) -> "Jet3":
        v = self.coef[0]
        s, c = np.sin(v), np.cos(v)
        return self._compose(s, c, -0.5 * s, -c / 6.0)

    def cos(self) -> "Jet3":
        v = self.coef[0]
        s, c = np.sin(v), np.cos(v)
        return self._compose(c, -s, -0.5 * c, s / 6.0)

    def power(self, exponent: float) -> "Jet3":
        """self raised to a real exponent; the base must stay positive."""
        v = self.coef[0]
        p = float(exponent)
        with np.errstate(divide="ignore", invalid="ignore"):
            c0 = np.power(v, p)
            c1 = p * np.power(v, p - 1.0)
            c2 = 0.5 * p * (p - 1.0) * np.power(v, p - 2.0)
            c3 = p * (p - 1.0) * (p - 2.0) / 6.0 * np.power(v, p - 3.0)
        return self._compose(c0, c1, c2, c3)

    def sqrt(self) -> "Jet3":
        return self.power(0.5)

    def atan(self) -> "Jet3":
        v = self.coef[0]
        den = 1.0 + v * v
        c1 = 1.0 / den
        c2 = -v / (den * den)
        c3 = (3.0 * v * v - 1.0) / (3.0 * den**3)
        return self._compose(np.arctan(v), c1, c2, c3)

    def __repr__(self):  # pragma: no cover
        return f"Jet3(n={self.num_points}, order={self.order}, value={self.coef[0]!r})"


def atan2(y, x) -> Jet3:
    """Polar angle of (x, y) as a jet, safe on every branch.

    The angle is expanded through the rotation identity
    ``atan2(y, x) = atan2(y0, x0) + atan((y x0 - x y0) / (x x0 + y y0))``,
    which has the same derivatives at the expansion point as the angle
    itself but never crosses a branch cut.  Where both arguments vanish
    the result is zero with zero derivatives instead of NaN.
    """
    ref = y if isinstance(y, Jet3) else x
    if not isinstance(ref, Jet3):
        raise TypeError("at least one argument must be a Jet3")
    yj = ref._lift(y)
    xj = ref._lift(x)
    x0 = xj.coef[0]
    y0 = yj.coef[0]
    r2 = x0 * x0 + y0 * y0
    num = yj._scaled(x0) - xj._scaled(y0)
    den = xj._scaled(x0) + yj._scaled(y0)
    with np.errstate(divide="ignore", invalid="ignore"):
        theta = (num / den).atan()
    coef = theta.coef
    coef[:, r2 <= 0.0] = 0.0
    coef[0] = np.arctan2(y0, x0)
    return Jet3(coef, min(xj.order, yj.order))
