"""Dense polynomials with arbitrary-precision rational coefficients.

Two variable tags are used throughout the package:

* ``"z"``   -- ordinary polynomial in z, coefficient k multiplies z**k.
  In the radial setting z = 2*alpha*y**2, so a z-polynomial is an even
  polynomial in y once a dimension (hence alpha) is fixed.
* ``"y"``   -- even polynomial in y, coefficient k multiplies y**(2k).

All arithmetic is exact; floats are refused as coefficients.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np


class ExactnessError(TypeError):
    """A float tried to sneak into exact arithmetic."""


def as_rational(x) -> Fraction:
    """Coerce ints, strings and Fractions; reject floats outright."""
    if isinstance(x, float):
        raise ExactnessError(f"refusing float {x!r}: exact coefficients only")
    return Fraction(x)


class ExactPoly:
    """Immutable dense polynomial over Fraction with a variable tag."""

    __slots__ = ("var", "coeffs")

    def __init__(self, coeffs, var: str = "z"):
        if var not in ("z", "y"):
            raise ValueError(f"unknown variable tag {var!r}")
        cs = [as_rational(c) for c in coeffs]
        while cs and cs[-1] == 0:
            cs.pop()
        object.__setattr__(self, "var", var)
        object.__setattr__(self, "coeffs", tuple(cs))

    def __setattr__(self, name, value):  # pragma: no cover - guard
        raise AttributeError("ExactPoly is immutable")

    # -- basic protocol -------------------------------------------------
    @property
    def degree(self) -> int:
        """Degree in the tagged variable (z-degree or half the y-degree); -1 for 0."""
        return len(self.coeffs) - 1

    def is_zero(self) -> bool:
        return not self.coeffs

    def __bool__(self) -> bool:
        return bool(self.coeffs)

    def __eq__(self, other) -> bool:
        if isinstance(other, ExactPoly):
            return self.var == other.var and self.coeffs == other.coeffs
        return NotImplemented

    def __hash__(self):
        return hash((self.var, self.coeffs))

    def __repr__(self):
        return f"ExactPoly({self.pretty()!r}, var={self.var!r})"

    def coefficient(self, k: int) -> Fraction:
        return self.coeffs[k] if 0 <= k < len(self.coeffs) else Fraction(0)

    # -- ring operations -------------------------------------------------
    def _check_var(self, other: "ExactPoly"):
        if self.var != other.var:
            raise ValueError(f"variable mismatch: {self.var} vs {other.var}")

    def __add__(self, other):
        if isinstance(other, ExactPoly):
            self._check_var(other)
            n = max(len(self.coeffs), len(other.coeffs))
            return ExactPoly(
                [self.coefficient(i) + other.coefficient(i) for i in range(n)],
                self.var,
            )
        return ExactPoly(
            [self.coefficient(0) + as_rational(other), *self.coeffs[1:]], self.var
        )

    __radd__ = __add__

    def __neg__(self):
        return ExactPoly([-c for c in self.coeffs], self.var)

    def __sub__(self, other):
        return self + (-other if isinstance(other, ExactPoly) else -as_rational(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, ExactPoly):
            self._check_var(other)
            if self.is_zero() or other.is_zero():
                return ExactPoly([], self.var)
            out = [Fraction(0)] * (len(self.coeffs) + len(other.coeffs) - 1)
            for i, a in enumerate(self.coeffs):
                for j, b in enumerate(other.coeffs):
                    out[i + j] += a * b
            return ExactPoly(out, self.var)
        r = as_rational(other)
        return ExactPoly([c * r for c in self.coeffs], self.var)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        if n < 0:
            raise ValueError("negative powers are not polynomials")
        out = ExactPoly([1], self.var)
        for _ in range(n):
            out = out * self
        return out

    def shift(self, k: int) -> "ExactPoly":
        """Multiply by the tagged variable to the k-th power (k >= 0)."""
        if k < 0:
            raise ValueError("shift exponent must be nonnegative")
        return ExactPoly([Fraction(0)] * k + list(self.coeffs), self.var)

    # -- calculus in the tagged variable ----------------------------------
    def derivative(self) -> "ExactPoly":
        """d/dz for z-polynomials.  Not defined on the y tag (odd result)."""
        if self.var != "z":
            raise ValueError("derivative() only for z-polynomials; use euler()")
        return ExactPoly(
            [k * c for k, c in enumerate(self.coeffs)][1:] or [], "z"
        )

    def euler(self) -> "ExactPoly":
        """Apply y*d/dy.  On both tags this maps coefficient k to 2k*c_k."""
        return ExactPoly([2 * k * c for k, c in enumerate(self.coeffs)], self.var)

    def laplacian(self, dim: int) -> "ExactPoly":
        """Radial Laplacian in `dim` dimensions on an even y-polynomial:
        y**(2k) -> 2k(2k + dim - 2) y**(2k-2)."""
        if self.var != "y":
            raise ValueError("laplacian() needs the y tag; convert with to_y()")
        out = [
            2 * k * (2 * k + dim - 2) * c for k, c in enumerate(self.coeffs)
        ][1:]
        return ExactPoly(out or [], "y")

    # -- variable conversion ----------------------------------------------
    def to_y(self, two_alpha: Fraction) -> "ExactPoly":
        """z-poly -> even y-poly using z = (2 alpha) y^2."""
        if self.var == "y":
            return self
        ta = as_rational(two_alpha)
        return ExactPoly([c * ta**k for k, c in enumerate(self.coeffs)], "y")

    def to_z(self, two_alpha: Fraction) -> "ExactPoly":
        """Even y-poly -> z-poly using y^2 = z / (2 alpha)."""
        if self.var == "z":
            return self
        ta = as_rational(two_alpha)
        return ExactPoly([c / ta**k for k, c in enumerate(self.coeffs)], "z")

    # -- evaluation ---------------------------------------------------------
    def __call__(self, x):
        """Exact evaluation at a rational point (y tag: x is y itself)."""
        x = as_rational(x)
        arg = x * x if self.var == "y" else x
        acc = Fraction(0)
        for c in reversed(self.coeffs):
            acc = acc * arg + c
        return acc

    def evalf(self, x):
        """Float evaluation at a float/ndarray point (y tag: x is y itself)."""
        x = np.asarray(x, dtype=float)
        arg = x * x if self.var == "y" else x
        acc = np.zeros_like(arg)
        for c in reversed(self.coeffs):
            acc = acc * arg + float(c)
        return acc

    def float_coeffs(self) -> np.ndarray:
        """Coefficients as floats, ascending in the tagged power basis."""
        return np.array([float(c) for c in self.coeffs], dtype=float)

    # -- presentation ---------------------------------------------------------
    def pretty(self) -> str:
        if self.is_zero():
            return "0"
        parts = []
        for k in range(self.degree, -1, -1):
            c = self.coeffs[k]
            if c == 0:
                continue
            mono = (
                "1"
                if k == 0
                else (f"{self.var}" if self.var == "z" else "y^2")
                if k == 1
                else (f"{self.var}^{k}" if self.var == "z" else f"y^{2 * k}")
            )
            if k == 0:
                term = str(abs(c))
            elif abs(c) == 1:
                term = mono
            else:
                term = f"{abs(c)}*{mono}"
            parts.append(("- " if c < 0 else "+ " if parts else "") + term)
        if parts and not parts[0].startswith("- ") and parts[0].startswith("+ "):
            parts[0] = parts[0][2:]
        return " ".join(parts)

    def serialize(self) -> list[str]:
        """Coefficients ascending, as "p/q" strings ("p" when q == 1)."""
        return [rational_str(c) for c in self.coeffs]


def rational_str(x: Fraction) -> str:
    x = Fraction(x)
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"
