"""Orbits, Jacobian cocycle products and their singular structure.

Products ``D phi^j_z = A_{j-1} ... A_0`` are tracked two ways:

* as power-of-two rescaled matrices ``m_j * 2**s_j`` (``CocycleTrace.products``);
* as an incremental singular value decomposition.  The right and left
  singular frames are carried as angles and the singular values as
  logarithms.  Each new factor only rotates the right frame by a small angle
  ``zeta``, which is found from a column-graded 2x2 problem and therefore has
  full relative accuracy even when ``E_j / F_j`` is far below machine epsilon.
  The smaller singular value always comes from ``|det| / F``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .dynsys import MapSpec, Point, as_point
from .errors import OverflowHorizon, SingularJacobian
from .mat2 import Mat2, rescale_pow2

__all__ = [
    "Mat2",
    "CocycleTrace",
    "NeighborhoodSpec",
    "Walk",
    "walk",
    "build_trace",
    "membership_horizon",
    "second_derivative_cocycle",
    "det_derivative_cocycle",
    "fold_line_angle",
]

LOG2_F_LIMIT = 16000.0
_HALF_PI = 0.5 * math.pi
_LN2 = math.log(2.0)


def fold_line_angle(a: float) -> float:
    """Reduce an angle between lines to ``(-pi/2, pi/2]``."""
    a = math.fmod(a, math.pi)
    if a > _HALF_PI:
        a -= math.pi
    elif a <= -_HALF_PI:
        a += math.pi
    return a


def _frame_step(a, b, c, d, ce, se, sig, H):
    """One right-multiplication of the singular frame by a new Jacobian.

    ``(ce, se)`` is the image direction of the contracted vector, ``sig`` the
    orientation sign of the product and ``H = E / F`` before the step.
    Returns the right-frame rotation ``zeta``, the (unnormalised) new expanded
    image column and its norm relative to the old ``F``.
    """
    aex = a * ce + b * se
    aey = c * ce + d * se
    afx = sig * (b * ce - a * se)
    afy = sig * (d * ce - c * se)
    n1x = H * aex
    n1y = H * aey
    al = n1x * n1x + n1y * n1y
    be = afx * afx + afy * afy
    ga = n1x * afx + n1y * afy
    diff = al - be
    if diff < 0.0:
        z = 0.5 * math.atan(2.0 * ga / diff)
    elif diff > 0.0:
        z = 0.5 * math.atan(2.0 * ga / diff)
        z = z - _HALF_PI if z > 0.0 else z + _HALF_PI
    elif ga != 0.0:
        z = -math.copysign(0.25 * math.pi, ga)
    else:
        z = 0.0
    cz = math.cos(z)
    sz = math.sin(z)
    c2x = cz * afx - sz * n1x
    c2y = cz * afy - sz * n1y
    return z, c2x, c2y, math.sqrt(c2x * c2x + c2y * c2y)


@dataclass(frozen=True)
class Walk:
    """Final state of a frame walk of length ``k``.

    ``theta`` is the accumulated (continuous) angle of ``e^(k)``,
    ``zeta`` the last right-frame rotation (so ``theta - zeta`` is the angle of
    ``e^(k-1)``), ``max_dist`` the largest distance of ``phi^j(z)`` from the
    reference point over ``0 <= j <= k-1``.
    """

    k: int
    theta: float
    zeta: float
    log_E: float
    log_F: float
    img_cos: float
    img_sin: float
    sign: float
    max_dist: float
    end: tuple[float, float]

    @property
    def H(self) -> float:
        return math.exp(self.log_E - self.log_F)

    @property
    def e(self) -> tuple[float, float]:
        return math.cos(self.theta), math.sin(self.theta)

    @property
    def theta_img(self) -> float:
        return math.atan2(self.img_sin, self.img_cos)


def walk(fmap: MapSpec, x: float, y: float, k: int, ref=None) -> Walk:
    """Walk the singular frame of ``D phi^k`` at ``(x, y)``."""
    jac = fmap.jacobian
    ev = fmap.eval
    px, py = fmap.fixed_point if ref is None else ref
    th = zeta = lE = lF = 0.0
    ce, se, sig, H = 1.0, 0.0, 1.0, 1.0
    md2 = 0.0
    for _ in range(k):
        dx = x - px
        dy = y - py
        d2 = dx * dx + dy * dy
        if d2 > md2:
            md2 = d2
        a, b, c, d = jac(x, y)
        zeta, c2x, c2y, nF = _frame_step(a, b, c, d, ce, se, sig, H)
        det = a * d - b * c
        if det == 0.0 or nF == 0.0:
            raise SingularJacobian(f"singular Jacobian at ({x}, {y})")
        lFn = lF + math.log(nF)
        lE += lF + math.log(abs(det)) - lFn
        lF = lFn
        if det < 0.0:
            sig = -sig
        se = -sig * c2x / nF
        ce = sig * c2y / nF
        th += zeta
        H = math.exp(lE - lF)
        x, y = ev(x, y)
    if lF > LOG2_F_LIMIT * _LN2:
        raise OverflowHorizon(f"log2 F_{k} exceeds {LOG2_F_LIMIT}")
    return Walk(k, th, zeta, lE, lF, ce, se, sig, math.sqrt(md2), (x, y))


@dataclass
class CocycleTrace:
    base: Point
    k_max: int
    orbit: list[Point]
    jacobians: list[Mat2]
    products: list[tuple[Mat2, int]]
    F: list[float]
    E: list[float]
    H: list[float]
    log_F: list[float]
    log_E: list[float]
    thetas: list[float]
    image_angles: list[float]
    zetas: list[float] = field(default_factory=list)

    def product(self, j: int) -> Mat2:
        m, s = self.products[j]
        return m.scale(2.0 ** s)

    def F_hat(self, j: int, k: int) -> float:
        """``|| D phi^{k-j-1} at phi^{j+1}(z) ||`` for ``0 <= j <= k-1``."""
        m = Mat2.identity()
        s = 0
        for i in range(j + 1, k):
            m, e = rescale_pow2(self.jacobians[i] @ m)
            s += e
        return m.norm() * 2.0 ** s

    def gap(self, j: int) -> float:
        """Unsigned angle between ``e^(j)`` and ``e^(j+1)``."""
        return abs(fold_line_angle(self.zetas[j + 1]))


def _ldexp(m: float, e: int) -> float:
    try:
        return math.ldexp(m, e)
    except OverflowError:
        return math.inf


def build_trace(fmap: MapSpec, z, k_max: int) -> CocycleTrace:
    """Orbit, step Jacobians, rescaled products and frames up to ``k_max``.

    ``F``, ``E`` and ``H`` come from the power-of-two scaled products and a
    separately tracked determinant; they saturate to ``inf`` or ``0`` where
    doubles cannot hold them, while ``log_F`` and ``log_E`` stay finite.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    x, y = as_point(z)
    orbit = [Point(x, y)]
    jacobians: list[Mat2] = []
    products = [(Mat2.identity(), 0)]
    log_F, log_E = [0.0], [0.0]
    thetas, image_angles, zetas = [0.0], [0.0], [0.0]
    th = lE = lF = 0.0
    ce, se, sig, H = 1.0, 0.0, 1.0, 1.0
    m, s = Mat2.identity(), 0
    dets = [(1.0, 0)]
    for _ in range(k_max):
        A = Mat2(*(float(v) for v in fmap.jacobian(x, y)))
        jacobians.append(A)
        zeta, c2x, c2y, nF = _frame_step(*A, ce, se, sig, H)
        det = A.det()
        if abs(det) < 1e-300 or nF == 0.0:
            raise SingularJacobian(f"singular Jacobian at ({x}, {y})")
        lFn = lF + math.log(nF)
        lE += lF + math.log(abs(det)) - lFn
        lF = lFn
        if det < 0.0:
            sig = -sig
        se = -sig * c2x / nF
        ce = sig * c2y / nF
        th += zeta
        H = math.exp(lE - lF)
        m, e = rescale_pow2(A @ m)
        s += e
        products.append((m, s))
        dm, de = math.frexp(dets[-1][0] * det)
        dets.append((dm, dets[-1][1] + de))
        log_F.append(lF)
        log_E.append(lE)
        thetas.append(th)
        image_angles.append(math.atan2(se, ce))
        zetas.append(zeta)
        x, y = (float(v) for v in fmap.eval(x, y))
        orbit.append(Point(x, y))
        if not (math.isfinite(x) and math.isfinite(y)):
            raise OverflowHorizon(f"orbit left double range at step {len(jacobians)}")
        if lF > LOG2_F_LIMIT * _LN2:
            raise OverflowHorizon(f"log2 F exceeds {LOG2_F_LIMIT} at step {len(jacobians)}")
    F, E, H_list = [], [], []
    for (pm, ps), (dm, ds) in zip(products, dets):
        fm = pm.norm()
        F.append(_ldexp(fm, ps))
        E.append(_ldexp(abs(dm) / fm, ds - ps))
        H_list.append(_ldexp(abs(dm) / (fm * fm), ds - 2 * ps))
    return CocycleTrace(Point(*orbit[0]), k_max, orbit, jacobians, products, F, E, H_list,
                        log_F, log_E, thetas, image_angles, zetas)


@dataclass(frozen=True)
class NeighborhoodSpec:
    center: Point
    eta: float
    epsilon: float

    def __post_init__(self):
        if not (0.0 < self.eta <= self.epsilon):
            raise ValueError("need 0 < eta <= epsilon")


def membership_horizon(fmap: MapSpec, x, nb: NeighborhoodSpec | float, k_cap: int,
                       *, center=None) -> int:
    """Largest ``k <= k_cap`` with ``|phi^j(x) - p| <= eta`` for ``0 <= j < k``.

    ``nb`` may be a :class:`NeighborhoodSpec` or a bare radius (centred on the
    fixed point unless ``center`` is given).
    """
    if isinstance(nb, NeighborhoodSpec):
        (px, py), r = nb.center, nb.eta
    else:
        (px, py), r = (fmap.fixed_point if center is None else center), float(nb)
    u, v = float(x[0]), float(x[1])
    ev = fmap.eval
    for j in range(k_cap):
        if math.hypot(u - px, v - py) > r:
            return j
        u, v = ev(u, v)
    return k_cap


def second_derivative_cocycle(fmap: MapSpec, z, k: int) -> tuple[float, ...]:
    """``D^2 phi^k_z`` as an 8-tuple (index ``4*i + 2*u + v``).

    Accumulates the product-rule expansion one factor at a time:
    ``T_{j+1} = D^2 phi(z_j)[M_j, M_j] + A_j T_j`` with ``M_j = D phi^j_z``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    x, y = as_point(z)
    T = [0.0] * 8
    m = (1.0, 0.0, 0.0, 1.0)
    for _ in range(k):
        a, b, c, d = fmap.jacobian(x, y)
        h = fmap.hessian(x, y)
        T = _second_step(a, b, c, d, h, m, T)
        m = (a * m[0] + b * m[2], a * m[1] + b * m[3], c * m[0] + d * m[2], c * m[1] + d * m[3])
        x, y = fmap.eval(x, y)
    if not all(math.isfinite(t) for t in T):
        raise OverflowHorizon(f"second derivative of phi^{k} overflowed")
    return tuple(T)


def _second_step(a, b, c, d, h, m, T):
    m00, m01, m10, m11 = m
    out = [0.0] * 8
    for i in range(2):
        h00, h01, h10, h11 = h[4 * i], h[4 * i + 1], h[4 * i + 2], h[4 * i + 3]
        # H_i applied to columns u, v of m:  sum_pq h_pq m_pu m_qv
        for u in range(2):
            mpu0 = m00 if u == 0 else m01
            mpu1 = m10 if u == 0 else m11
            r0 = h00 * mpu0 + h10 * mpu1
            r1 = h01 * mpu0 + h11 * mpu1
            out[4 * i + 2 * u] = r0 * m00 + r1 * m10
            out[4 * i + 2 * u + 1] = r0 * m01 + r1 * m11
    for u in range(4):
        t0, t1 = T[u], T[4 + u]
        out[u] += a * t0 + b * t1
        out[4 + u] += c * t0 + d * t1
    return out


def det_derivative_cocycle(fmap: MapSpec, z, k: int) -> tuple[float, float]:
    """Gradient of ``det D phi^k_z`` via the multiplicative determinant identity."""
    if k < 1:
        raise ValueError("k must be >= 1")
    x, y = as_point(z)
    dets, grads, prods = [], [], []
    m = (1.0, 0.0, 0.0, 1.0)
    for _ in range(k):
        a, b, c, d = fmap.jacobian(x, y)
        det = a * d - b * c
        if abs(det) < 1e-300:
            raise SingularJacobian(f"|det D phi| < 1e-300 at ({x}, {y})")
        dets.append(det)
        grads.append(fmap.det_gradient(x, y))
        prods.append(m)
        m = (a * m[0] + b * m[2], a * m[1] + b * m[3], c * m[0] + d * m[2], c * m[1] + d * m[3])
        x, y = fmap.eval(x, y)
    det_k = math.prod(dets)
    gx = gy = 0.0
    for det, (g0, g1), (m00, m01, m10, m11) in zip(dets, grads, prods):
        w = det_k / det
        gx += w * (g0 * m00 + g1 * m10)
        gy += w * (g0 * m01 + g1 * m11)
    return gx, gy
