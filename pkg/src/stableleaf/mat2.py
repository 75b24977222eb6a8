"""Small fixed-size linear algebra on 2x2 matrices stored as plain floats."""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np


class Mat2(NamedTuple):
    """Row-major 2x2 matrix ``[[a, b], [c, d]]``."""

    a: float
    b: float
    c: float
    d: float

    @classmethod
    def identity(cls) -> Mat2:
        return cls(1.0, 0.0, 0.0, 1.0)

    @classmethod
    def from_array(cls, m) -> Mat2:
        m = np.asarray(m, dtype=float)
        return cls(float(m[0, 0]), float(m[0, 1]), float(m[1, 0]), float(m[1, 1]))

    def __matmul__(self, other: Mat2) -> Mat2:  # type: ignore[override]
        a, b, c, d = self
        p, q, r, s = other
        return Mat2(a * p + b * r, a * q + b * s, c * p + d * r, c * q + d * s)

    def apply(self, v) -> tuple[float, float]:
        return (self.a * v[0] + self.b * v[1], self.c * v[0] + self.d * v[1])

    def scale(self, s: float) -> Mat2:
        return Mat2(self.a * s, self.b * s, self.c * s, self.d * s)

    @property
    def T(self) -> Mat2:
        return Mat2(self.a, self.c, self.b, self.d)

    def det(self) -> float:
        return self.a * self.d - self.b * self.c

    def max_abs(self) -> float:
        return max(abs(self.a), abs(self.b), abs(self.c), abs(self.d))

    def singular_values(self) -> tuple[float, float]:
        """Return ``(E, F)``, smallest and largest singular value.

        The small one comes from ``|det| / F`` so it keeps full relative
        accuracy even when ``E / F`` is far below machine epsilon.
        """
        s = self.max_abs()
        if s == 0.0:
            return 0.0, 0.0
        a, b, c, d = self.a / s, self.b / s, self.c / s, self.d / s
        big = 0.5 * (math.hypot(a + d, b - c) + math.hypot(a - d, b + c))
        small = abs(a * d - b * c) / big
        return small * s, big * s

    def norm(self) -> float:
        return self.singular_values()[1]

    def as_array(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]])

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in self)


def rescale_pow2(m: Mat2) -> tuple[Mat2, int]:
    """Split ``m`` into ``(unit-scale matrix, exponent)`` with ``m = u * 2**e``."""
    s = m.max_abs()
    if s == 0.0 or not math.isfinite(s):
        return m, 0
    e = math.frexp(s)[1]
    return Mat2(*(math.ldexp(v, -e) for v in m)), e
