"""Most contracted / most expanded directions of Jacobian cocycles.

Directions are lines, so every reported angle between directions lives in
``[0, pi/2]``.  Unit vectors are oriented with a nonnegative x component (a
positive y component breaks the tie).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .cocycle import Walk, build_trace, fold_line_angle, walk, _second_step
from .dynsys import MapSpec, Point, as_point
from .errors import DegenerateSingularValues, StencilLeavesDomain
from .mat2 import Mat2

__all__ = [
    "SingularFrame",
    "AngleSeries",
    "singular_frame",
    "contracted_direction",
    "angle_gap",
    "signed_gap",
    "image_gap",
    "angle_series",
    "pushforward_norm",
    "angle_gradients",
    "angle_derivative_closed_form",
    "theta_gradient_capped",
    "field_derivative",
]

DEGENERATE_RTOL = 1e-12


@dataclass(frozen=True)
class SingularFrame:
    e: tuple[float, float]
    f: tuple[float, float]
    E: float
    F: float
    theta: float
    theta_img: float
    quads: tuple[float, float, float, float]


@dataclass(frozen=True)
class AngleSeries:
    base: Point
    thetas: list[float]  # accumulated angle of e^(k), k = 1..k_max
    gaps: list[float]  # |phi^(k)|, k = 1..k_max-1
    signed_gaps: list[float]
    H: list[float]


def _normalize_angle(theta: float) -> float:
    t = fold_line_angle(theta)
    if t == -0.5 * math.pi:
        t = 0.5 * math.pi
    return t


def _quads(m: Mat2) -> tuple[float, float, float, float]:
    A, B, C, D = m
    return (A * B + C * D, A * A + C * C - B * B - D * D,
            A * C + B * D, A * A + B * B - C * C - D * D)


def singular_frame(M) -> SingularFrame:
    """Closed-form singular frame of a 2x2 matrix.

    The expanded direction is the principal axis ``0.5*atan2(2 A, B)`` of
    ``M^T M``; the contracted one is perpendicular to it.  ``E`` is taken from
    ``|det| / F``.
    """
    m = M if isinstance(M, Mat2) else Mat2.from_array(M)
    E, F = m.singular_values()
    if F == 0.0 or abs(F - E) <= DEGENERATE_RTOL * F:
        raise DegenerateSingularValues(f"singular values {E}, {F} coincide")
    # power-of-two rescaling is exact and avoids 1/s overflowing for subnormal s
    e2 = -math.frexp(m.max_abs())[1]
    ms = Mat2(*(math.ldexp(v, e2) for v in (m.a, m.b, m.c, m.d)))
    qa, qb, _, _ = _quads(ms)
    phi = 0.5 * math.atan2(2.0 * qa, qb)
    # of the two critical directions keep the one with the smaller image
    c, sn = math.cos(phi), math.sin(phi)
    u = ms.apply((c, sn))
    v = ms.apply((-sn, c))
    if math.hypot(*u) < math.hypot(*v):
        phi += 0.5 * math.pi
    theta = _normalize_angle(phi + 0.5 * math.pi)
    e = (math.cos(theta), math.sin(theta))
    f = (-e[1], e[0])
    img = m.apply(e)
    return SingularFrame(e, f, E, F, theta, math.atan2(img[1], img[0]), _quads(m))


def _frame_from_walk(w: Walk, quads) -> SingularFrame:
    if w.log_E - w.log_F >= math.log1p(-DEGENERATE_RTOL):
        raise DegenerateSingularValues(f"H_{w.k} = {w.H} (conformal product)")
    theta = _normalize_angle(w.theta)
    img = w.theta_img
    # flipping e for the orientation convention flips its image as well
    if abs(fold_line_angle(w.theta - theta)) < 1e-300 and math.cos(w.theta - theta) < 0:
        img = math.atan2(-math.sin(img), -math.cos(img))
    e = (math.cos(theta), math.sin(theta))
    return SingularFrame(e, (-e[1], e[0]), math.exp(w.log_E), math.exp(w.log_F), theta, img, quads)


def contracted_direction(fmap: MapSpec, z, k: int) -> SingularFrame:
    """Singular frame of ``D phi^k_z`` from the incremental cocycle walk."""
    x, y = as_point(z)
    if k < 1:
        raise ValueError("k must be >= 1")
    tr = build_trace(fmap, (x, y), k)
    m, s = tr.products[k]
    q = tuple(v * 4.0 ** s if abs(s) < 500 else v * math.inf for v in _quads(m))
    w = Walk(k, tr.thetas[k], tr.zetas[k], tr.log_E[k], tr.log_F[k],
             math.cos(tr.image_angles[k]), math.sin(tr.image_angles[k]), 1.0, 0.0, tr.orbit[k])
    frame = _frame_from_walk(w, q)
    if math.isfinite(tr.F[k]) and tr.E[k] > 0.0:
        frame = dataclasses.replace(frame, E=tr.E[k], F=tr.F[k])
    return frame


def signed_gap(fmap: MapSpec, z, k: int) -> float:
    """Signed rotation from ``e^(k)`` to ``e^(k+1)`` folded to ``(-pi/2, pi/2]``."""
    x, y = as_point(z)
    if k < 1:
        raise ValueError("k must be >= 1")
    w = walk(fmap, x, y, k + 1)
    if w.log_E - w.log_F >= math.log1p(-DEGENERATE_RTOL):
        raise DegenerateSingularValues(f"H_{k + 1} = {w.H}")
    return fold_line_angle(w.zeta)


def angle_gap(fmap: MapSpec, z, k: int) -> float:
    """``|phi^(k)|``, the angle between the lines ``e^(k)`` and ``e^(k+1)``."""
    return abs(signed_gap(fmap, z, k))


def image_gap(fmap: MapSpec, z, k: int) -> float:
    """Angle between ``D phi^{k+1} e^(k)`` and ``D phi^{k+1} e^(k+1)``.

    Both image directions are propagated explicitly: the first as
    ``A_k`` applied to the image frame of ``D phi^k``, the second from the
    frame of ``D phi^{k+1}``.
    """
    tr = build_trace(fmap, z, k + 1)
    t = tr.image_angles[k]
    u = tr.jacobians[k].apply((math.cos(t), math.sin(t)))
    t2 = tr.image_angles[k + 1]
    v = (math.cos(t2), math.sin(t2))
    cross = u[0] * v[1] - u[1] * v[0]
    dot = u[0] * v[0] + u[1] * v[1]
    return math.atan2(abs(cross), abs(dot))


def angle_series(fmap: MapSpec, z, k_max: int) -> AngleSeries:
    tr = build_trace(fmap, z, k_max)
    signed = [fold_line_angle(tr.zetas[j + 1]) for j in range(1, k_max)]
    return AngleSeries(tr.base, tr.thetas[1:], [abs(g) for g in signed], signed, tr.H[1:])


def pushforward_norm(fmap: MapSpec, z, j: int, k: int) -> float:
    """``|| D phi^j_z e^(k)(z) ||`` without forming the (ill-conditioned) product.

    ``e^(k)`` is written in the singular frame of ``D phi^j`` as a rotation of
    ``e^(j)`` by the summed frame rotations ``zeta_{j+1..k}``.
    """
    if not 0 <= j <= k:
        raise ValueError("need 0 <= j <= k")
    if j == 0:
        return 1.0
    tr = build_trace(fmap, z, k)
    alpha = math.fsum(tr.zetas[j + 1:k + 1])
    hj = math.exp(tr.log_E[j] - tr.log_F[j])
    return math.exp(tr.log_F[j]) * math.hypot(math.cos(alpha) * hj, math.sin(alpha))


def _angle_grads_from(m, T, scale_log2):
    A, B, C, D = m
    qa = A * B + C * D
    qb = A * A + C * C - B * B - D * D
    qc = A * C + B * D
    qd = A * A + B * B - C * C - D * D
    den1 = 4.0 * qa * qa + qb * qb
    den2 = 4.0 * qc * qc + qd * qd
    c = 2.0 ** scale_log2
    g1, g2 = [0.0, 0.0], [0.0, 0.0]
    for w in range(2):
        dA, dB, dC, dD = T[w], T[2 + w], T[4 + w], T[6 + w]
        dqa = dA * B + A * dB + dC * D + C * dD
        dqb = 2.0 * (A * dA + C * dC - B * dB - D * dD)
        dqc = dA * C + A * dC + dB * D + B * dD
        dqd = 2.0 * (A * dA + B * dB - C * dC - D * dD)
        g1[w] = c * (dqa * qb - qa * dqb) / den1
        g2[w] = c * (qd * dqc - dqd * qc) / den2
    return tuple(g1), tuple(g2)


def _grad_walk(fmap: MapSpec, x: float, y: float, k: int, f_cap: float | None = None):
    """Walk ``D phi^j`` and ``D^2 phi^j`` jointly, rescaled so that the
    stored pair is ``(M / c, T / c^2)`` with ``c = 2**s``.

    Returns ``(m, T, s, j)`` at ``j = k`` or, with ``f_cap``, at the last
    ``j`` whose ``||D phi^j||`` stays below the cap.
    """
    m = (1.0, 0.0, 0.0, 1.0)
    T = [0.0] * 8
    s = 0
    log2_cap = math.log2(f_cap) if f_cap else math.inf
    for j in range(k):
        a, b, c, d = fmap.jacobian(x, y)
        h = fmap.hessian(x, y)
        T2 = _second_step(a, b, c, d, h, m, T)
        m2 = (a * m[0] + b * m[2], a * m[1] + b * m[3], c * m[0] + d * m[2], c * m[1] + d * m[3])
        big = max(abs(v) for v in m2)
        if j > 0 and math.log2(big) + s > log2_cap:
            return m, T, s, j
        m, T = m2, T2
        e = math.frexp(big)[1]
        if e:
            m = tuple(math.ldexp(v, -e) for v in m)
            T = [math.ldexp(v, -2 * e) for v in T]
            s += e
        x, y = fmap.eval(x, y)
    return m, T, s, k


def angle_gradients(fmap: MapSpec, z, k: int):
    """Gradients of ``theta^(k)`` and of the image angle ``theta^(k)_k``."""
    x, y = as_point(z)
    if k < 1:
        raise ValueError("k must be >= 1")
    m, T, s, _ = _grad_walk(fmap, x, y, k)
    E, F = Mat2(*m).singular_values()
    if abs(F - E) <= DEGENERATE_RTOL * F:
        raise DegenerateSingularValues("conformal product")
    return _angle_grads_from(m, T, s)


def angle_derivative_closed_form(fmap: MapSpec, z, k: int) -> tuple[float, float]:
    """``(||D theta^(k)||, ||D theta^(k)_k||)`` from the quotient-rule formulas."""
    g1, g2 = angle_gradients(fmap, z, k)
    return math.hypot(*g1), math.hypot(*g2)


def theta_gradient_capped(fmap: MapSpec, x: float, y: float, k: int,
                          f_cap: float = 1e8) -> tuple[float, float]:
    """Gradient of ``theta^(j)`` at the largest ``j <= k`` with ``F_j <= f_cap``.

    The closed form cancels roughly ``log10 F_j`` digits, while the gradients
    themselves converge in ``j`` at the rate ``E_j``; capping keeps the result
    accurate for any ``k``.
    """
    m, T, s, j = _grad_walk(fmap, x, y, k, f_cap)
    E, F = Mat2(*m).singular_values()
    if j == 0 or abs(F - E) <= DEGENERATE_RTOL * F:
        return 0.0, 0.0
    return _angle_grads_from(m, T, s)[0]


def field_derivative(fmap: MapSpec, z, k: int, *, eps: float = 0.5,
                     step: float | None = None) -> tuple[float, float]:
    """Central-difference estimates of ``(||D e^(k)||, ||D phi^(k)||)``.

    Every stencil point must lie in ``N^(k+1)_eps``.
    """
    x, y = as_point(z)
    h = step if step is not None else 1e-6 * max(1.0, math.hypot(x, y))
    walks = {}
    for dx, dy in ((0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)):
        w = walk(fmap, x + dx * h, y + dy * h, k + 1)
        if w.max_dist > eps:
            raise StencilLeavesDomain(f"stencil point {(x + dx * h, y + dy * h)} leaves N^({k + 1})")
        walks[dx, dy] = w
    # theta^(k) = theta^(k+1) - zeta_{k+1}
    th = {key: w.theta - w.zeta for key, w in walks.items()}
    gap = {key: fold_line_angle(w.zeta) for key, w in walks.items()}
    de = np.hypot(fold_line_angle(th[1, 0] - th[-1, 0]), fold_line_angle(th[0, 1] - th[0, -1])) / (2 * h)
    dphi = np.hypot(gap[1, 0] - gap[-1, 0], gap[0, 1] - gap[0, -1]) / (2 * h)
    return float(de), float(dphi)
