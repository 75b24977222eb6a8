"""Planar diffeomorphisms with analytic derivatives, and fixed-point location.

A map is described by three evaluators taking the two chart coordinates as
separate arguments:

* ``eval(x, y) -> (x', y')``
* ``jacobian(x, y) -> (a, b, c, d)`` for ``[[a, b], [c, d]]``
* ``hessian(x, y) -> 8-tuple`` with entry ``4*i + 2*u + v`` holding
  ``d^2 phi_i / du dv``

The catalog evaluators only use ``+``, ``-`` and ``*``, so they accept floats,
numpy arrays and ``gmpy2.mpfr`` values alike.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import ConfigError, NoConvergence, NotHyperbolic
from .mat2 import Mat2

__all__ = [
    "Point",
    "MapSpec",
    "FixedPointData",
    "builtin_catalog",
    "make_map",
    "parse_map",
    "find_fixed_point",
    "evaluate_jet",
    "eigendata",
]

FIXED_POINT_TOL = 1e-12
NEWTON_MAX_STEPS = 50
UNIT_CIRCLE_TOL = 1e-9


class Point(NamedTuple):
    x: float
    y: float


def as_point(z) -> Point:
    x, y = float(z[0]), float(z[1])
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ValueError(f"non-finite point ({x}, {y})")
    return Point(x, y)


@dataclass(frozen=True)
class FixedPointData:
    point: Point
    jacobian: Mat2
    eigenvalues: tuple[float, float]  # (stable, unstable)
    eigenvectors: tuple[tuple[float, float], tuple[float, float]]
    residual: float
    iterations: int = 0


@dataclass(frozen=True, eq=False)
class MapSpec:
    name: str
    params: dict[str, float]
    eval: Callable
    jacobian: Callable
    hessian: Callable
    inverse: Callable | None
    fixed_point: Point
    eig_s: float
    eig_u: float
    stable_dir: tuple[float, float]
    unstable_dir: tuple[float, float]
    fixed: FixedPointData = field(repr=False, default=None)

    @property
    def label(self) -> str:
        if not self.params:
            return self.name
        return self.name + ":" + ",".join(repr(v) for v in self.params.values())

    def det_gradient(self, x: float, y: float) -> tuple[float, float]:
        """Gradient of ``det D phi`` from the Jacobian and Hessian."""
        a, b, c, d = self.jacobian(x, y)
        h = self.hessian(x, y)
        # d(ad - bc)/du = a_u d + a d_u - b_u c - b c_u
        gx = h[0] * d + a * h[6] - h[2] * c - b * h[4]
        gy = h[1] * d + a * h[7] - h[3] * c - b * h[5]
        return gx, gy


def _orient(vx: float, vy: float) -> tuple[float, float]:
    n = math.hypot(vx, vy)
    vx, vy = vx / n, vy / n
    if vx < 0 or (vx == 0 and vy < 0):
        vx, vy = -vx, -vy
    return vx, vy


def _eigvec(m: Mat2, lam: float) -> tuple[float, float]:
    a, b, c, d = m
    v1 = (b, lam - a)
    v2 = (lam - d, c)
    v = v1 if math.hypot(*v1) >= math.hypot(*v2) else v2
    if math.hypot(*v) == 0.0:
        # m is a multiple of the identity in this block; any axis works
        v = (1.0, 0.0) if abs(a - lam) <= abs(d - lam) else (0.0, 1.0)
    return _orient(*v)


def eigendata(m: Mat2) -> tuple[tuple[float, float], tuple[tuple[float, float], tuple[float, float]]]:
    """Saddle eigen-decomposition of a 2x2 Jacobian.

    Returns ``((lam_s, lam_u), (v_s, v_u))``. Raises :class:`NotHyperbolic`
    unless the eigenvalues are real with ``0 < |lam_s| < 1 < |lam_u|``.
    """
    tr = m.a + m.d
    det = m.det()
    disc = 0.25 * tr * tr - det
    if disc < 0:
        raise NotHyperbolic(f"complex eigenvalues (trace {tr}, det {det})")
    q = 0.5 * tr + math.copysign(math.sqrt(disc), tr)
    if q == 0.0:
        l1, l2 = math.sqrt(disc), -math.sqrt(disc)
    else:
        l1, l2 = q, det / q
    ls, lu = sorted((l1, l2), key=abs)
    for lam in (ls, lu):
        if abs(abs(lam) - 1.0) <= UNIT_CIRCLE_TOL:
            raise NotHyperbolic(f"eigenvalue {lam} on the unit circle")
    if not (0.0 < abs(ls) < 1.0 < abs(lu)):
        raise NotHyperbolic(f"eigenvalues {ls}, {lu} do not form a saddle")
    return (ls, lu), (_eigvec(m, ls), _eigvec(m, lu))


def find_fixed_point(fmap, guess, *, tol: float = FIXED_POINT_TOL,
                     max_steps: int = NEWTON_MAX_STEPS) -> FixedPointData:
    """Newton iteration on ``phi(z) - z`` using the analytic Jacobian.

    ``fmap`` only needs ``eval`` and ``jacobian`` attributes.
    """
    x, y = as_point(guess)
    residual = math.inf
    for it in range(max_steps + 1):
        fx, fy = fmap.eval(x, y)
        gx, gy = fx - x, fy - y
        residual = math.hypot(gx, gy)
        if not math.isfinite(residual):
            break
        if residual <= tol:
            jac = Mat2(*(float(v) for v in fmap.jacobian(x, y)))
            (ls, lu), vecs = eigendata(jac)
            return FixedPointData(Point(x, y), jac, (ls, lu), vecs, residual, it)
        if it == max_steps:
            break
        a, b, c, d = fmap.jacobian(x, y)
        a, d = a - 1.0, d - 1.0
        det = a * d - b * c
        if det == 0.0:
            break
        x -= (d * gx - b * gy) / det
        y -= (-c * gx + a * gy) / det
    raise NoConvergence(f"Newton stalled at residual {residual:.3e} from guess {tuple(guess)}")


def evaluate_jet(fmap: MapSpec, z) -> tuple[Point, Mat2, tuple[float, ...]]:
    x, y = as_point(z)
    return (Point(*fmap.eval(x, y)), Mat2(*fmap.jacobian(x, y)),
            tuple(float(v) for v in fmap.hessian(x, y)))


class _Raw(NamedTuple):
    eval: Callable
    jacobian: Callable


def _build(name, params, ev, jac, hess, inv, guess) -> MapSpec:
    fp = find_fixed_point(_Raw(ev, jac), guess)
    (ls, lu), (vs, vu) = fp.eigenvalues, fp.eigenvectors
    return MapSpec(name, dict(params), ev, jac, hess, inv, fp.point, ls, lu, vs, vu, fp)


def diag(ls: float = 0.5, lu: float = 2.0) -> MapSpec:
    ev = lambda x, y: (ls * x, lu * y)
    jac = lambda x, y: (ls, 0.0, 0.0, lu)
    hess = lambda x, y: (0.0,) * 8
    inv = lambda x, y: (x / ls, y / lu)
    return _build("diag", {"ls": ls, "lu": lu}, ev, jac, hess, inv, (0.0, 0.0))


def shear() -> MapSpec:
    ev = lambda x, y: (0.5 * x + y, 2.0 * y)
    jac = lambda x, y: (0.5, 1.0, 0.0, 2.0)
    hess = lambda x, y: (0.0,) * 8
    inv = lambda x, y: (2.0 * x - y, 0.5 * y)
    return _build("shear", {}, ev, jac, hess, inv, (0.0, 0.0))


def quad(lam: float = 0.5, mu: float = 2.0) -> MapSpec:
    ev = lambda x, y: (lam * x, mu * y + x * x)
    jac = lambda x, y: (lam, 0.0, 2.0 * x, mu)
    hess = lambda x, y: (0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0)

    def inv(x, y):
        u = x / lam
        return u, (y - u * u) / mu

    return _build("quad", {"lam": lam, "mu": mu}, ev, jac, hess, inv, (0.0, 0.0))


def henon(a: float = 1.4, b: float = 0.3) -> MapSpec:
    ev = lambda x, y: (1.0 - a * x * x + y, b * x)
    jac = lambda x, y: (-2.0 * a * x, 1.0, b, 0.0)
    hess = lambda x, y: (-2.0 * a, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)

    def inv(x, y):
        u = y / b
        return u, x - 1.0 + a * u * u

    guess = (0.6, 0.2)
    if a > 0:
        r = (-(1.0 - b) + math.sqrt((1.0 - b) ** 2 + 4.0 * a)) / (2.0 * a)
        guess = (r, b * r)
    return _build("henon", {"a": a, "b": b}, ev, jac, hess, inv, guess)


def detvar(lam: float = 0.5, mu: float = 2.0, c: float = 1.0) -> MapSpec:
    """``(x, y) -> (lam x (1 + c y), mu y + x^2)``: a saddle with non-constant determinant."""
    ev = lambda x, y: (lam * x * (1.0 + c * y), mu * y + x * x)
    jac = lambda x, y: (lam * (1.0 + c * y), lam * c * x, 2.0 * x, mu)
    hess = lambda x, y: (0.0, lam * c, lam * c, 0.0, 2.0, 0.0, 0.0, 0.0)
    return _build("detvar", {"lam": lam, "mu": mu, "c": c}, ev, jac, hess, None, (0.0, 0.0))


_FACTORIES: dict[str, tuple[Callable, int]] = {
    "diag": (diag, 2),
    "shear": (shear, 0),
    "quad": (quad, 2),
    "henon": (henon, 2),
    "detvar": (detvar, 3),
}


def make_map(name: str, *params: float) -> MapSpec:
    try:
        factory, n = _FACTORIES[name.lower()]
    except KeyError:
        raise ConfigError(f"unknown map {name!r}; choose from {sorted(_FACTORIES)}") from None
    if params and len(params) != n:
        raise ConfigError(f"map {name!r} takes {n} parameters, got {len(params)}")
    return factory(*params)


def parse_map(text: str) -> MapSpec:
    """Parse ``name`` or ``name:p1,p2,...`` into a catalog map."""
    name, _, rest = text.strip().partition(":")
    try:
        values = [float(v) for v in rest.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"bad parameter list in {text!r}") from None
    if any(not math.isfinite(v) for v in values):
        raise ConfigError(f"non-finite parameter in {text!r}")
    return make_map(name, *values)


def builtin_catalog() -> list[MapSpec]:
    return [diag(0.5, 2.0), shear(), quad(0.5, 2.0), henon(1.4, 0.3), detvar(0.5, 2.0, 1.0)]


def sample_box(fmap: MapSpec, n: int, radius: float = 0.5, seed: int = 0x5EED) -> np.ndarray:
    """``n`` uniform points in the square of half-width ``radius`` around the fixed point."""
    rng = np.random.default_rng(seed)
    return np.asarray(fmap.fixed_point) + rng.uniform(-radius, radius, size=(n, 2))
