"""Finite-time local stable manifolds as integral curves of ``e^(k)``.

A leaf of order ``k`` is obtained by integrating ``z' = +-e^(k)(z)`` from the
fixed point with classical RK4 at a fixed arclength step, so leaves of
different order share one arclength grid and can be compared sample by
sample.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.special import lambertw

from .cocycle import fold_line_angle, membership_horizon, walk
from .directions import DEGENERATE_RTOL, theta_gradient_capped
from .dynsys import MapSpec, Point
from .errors import (
    DegenerateField,
    GridMismatch,
    InsufficientDecay,
    NoConvergenceAtCap,
    NoInverse,
    TangencyFailure,
)
from .reports import ConvergenceReport, fit_log_rate

__all__ = [
    "LeafCurve",
    "TubeSpec",
    "SuccessiveDistance",
    "InductiveVerdict",
    "integrate_leaf",
    "leaf_distance",
    "successive_distance",
    "gronwall_constant",
    "inductive_check",
    "limit_leaf",
    "global_extend",
    "DEFAULT_ETA",
    "DEFAULT_EPS",
]

DEFAULT_ETA = 0.1
DEFAULT_EPS = 0.5
K_CAP = 200
N_TUBE = 500
SEED = 0x5EED
# below this the direct difference of two leaves is dominated by rounding
DIRECT_FLOOR = 1e-8
_LOG_DEGEN = math.log1p(-DEGENERATE_RTOL)


@dataclass
class LeafCurve:
    """Two-branch arclength-parametrised polyline through the fixed point.

    ``k`` is ``math.inf`` for the limit leaf.  ``stopped`` maps each branch to
    ``None`` or the reason integration ended early.
    """

    k: float
    map_name: str
    h: float
    plus: np.ndarray
    minus: np.ndarray
    eta: float
    tangents_plus: np.ndarray | None = None
    tangents_minus: np.ndarray | None = None
    stopped: dict = field(default_factory=lambda: {"plus": None, "minus": None})
    H_max: float = math.nan
    gap_max: float = math.nan

    @property
    def lengths(self) -> tuple[float, float]:
        return (len(self.minus) - 1) * self.h, (len(self.plus) - 1) * self.h

    @property
    def complete(self) -> bool:
        return min(self.lengths) >= self.eta - 0.5 * self.h

    @property
    def label(self) -> str:
        return "inf" if math.isinf(self.k) else str(int(self.k))

    def params(self) -> np.ndarray:
        """Signed arclength of every sample, ordered from the minus end."""
        n_m, n_p = len(self.minus), len(self.plus)
        return np.concatenate([-np.arange(n_m - 1, 0, -1) * self.h, np.arange(n_p) * self.h])

    def points(self) -> np.ndarray:
        return np.concatenate([self.minus[:0:-1], self.plus])

    def tangents(self) -> np.ndarray:
        """Unit tangents oriented along increasing arclength."""
        if self.tangents_plus is None:
            pts = self.points()
            d = np.gradient(pts, axis=0)
            return d / np.linalg.norm(d, axis=1)[:, None]
        return np.concatenate([-self.tangents_minus[:0:-1], self.tangents_plus])

    def at(self, t) -> np.ndarray:
        """Curve point at signed arclength ``t``.

        Cubic Hermite through the samples and their tangents when tangents
        are known (error ``O(h^4)``), linear otherwise.
        """
        ts, pts = self.params(), self.points()
        if len(ts) < 2:
            return np.broadcast_to(pts[0], np.shape(t) + (2,)).copy()
        if self.tangents_plus is None:
            return np.stack([np.interp(t, ts, pts[:, 0]), np.interp(t, ts, pts[:, 1])], axis=-1)
        spline = CubicHermiteSpline(ts, pts, self.tangents(), axis=0)
        return spline(np.clip(t, ts[0], ts[-1]))

    def to_csv(self, path) -> None:
        """Write ``t,x,y,k`` rows; 17 significant digits round-trip exactly."""
        ts, pts = self.params(), self.points()
        with open(path, "w", newline="") as fh:
            fh.write("t,x,y,k\n")
            for t, (x, y) in zip(ts, pts):
                fh.write(f"{_fmt(t)},{_fmt(x)},{_fmt(y)},{self.label}\n")

    @classmethod
    def from_csv(cls, path, map_name: str = "") -> LeafCurve:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ValueError(f"{path}: no samples")
        t = np.array([float(r["t"]) for r in rows])
        xy = np.array([[float(r["x"]), float(r["y"])] for r in rows])
        k = math.inf if rows[0]["k"] == "inf" else int(rows[0]["k"])
        i0 = int(np.flatnonzero(t == 0.0)[0])
        plus = xy[i0:]
        minus = xy[i0::-1]
        h = float(t[i0 + 1]) if len(plus) > 1 else float(-t[i0 - 1])
        return cls(k, map_name, h, plus, minus, float(max(-t[0], t[-1])))


@dataclass(frozen=True)
class TubeSpec:
    omega: float
    K_emp: float
    eta: float

    @classmethod
    def build(cls, K_emp: float, eta: float, H_bar: float) -> TubeSpec:
        return cls(K_emp * math.exp(eta * K_emp) * eta * H_bar, K_emp, eta)


def _fmt(v: float) -> str:
    return "%.17g" % v


class _Field:
    """Sign-aligned evaluation of ``e^(k)`` with domain and degeneracy checks."""

    def __init__(self, fmap: MapSpec, k: int, eps: float):
        self.fmap, self.k, self.eps = fmap, k, eps
        self.H_max = 0.0
        self.gap_max = 0.0

    def __call__(self, x, y, dx, dy, sample=True):
        w = walk(self.fmap, x, y, self.k)
        # RK4 stage points sit O(h^2) off the curve, which at large k is wider
        # than N^(k) itself, so only accepted samples are held to the domain
        if sample and w.max_dist > self.eps:
            return None, "domain_exit"
        if w.log_E - w.log_F >= _LOG_DEGEN:
            return None, "degenerate"
        c, s = math.cos(w.theta), math.sin(w.theta)
        if c * dx + s * dy < 0.0:
            c, s = -c, -s
        return (c, s, w), None


def _rk4_branch(fld: _Field, x, y, dx, dy, n: int, h: float):
    pts = [(x, y)]
    tans = [(dx, dy)]
    reason = None
    for _ in range(n):
        r1 = (dx, dy)
        out, reason = fld(x + 0.5 * h * r1[0], y + 0.5 * h * r1[1], dx, dy, False)
        if out is None:
            break
        r2 = out[:2]
        out, reason = fld(x + 0.5 * h * r2[0], y + 0.5 * h * r2[1], dx, dy, False)
        if out is None:
            break
        r3 = out[:2]
        out, reason = fld(x + h * r3[0], y + h * r3[1], dx, dy, False)
        if out is None:
            break
        r4 = out[:2]
        nx = x + h / 6.0 * (r1[0] + 2.0 * r2[0] + 2.0 * r3[0] + r4[0])
        ny = y + h / 6.0 * (r1[1] + 2.0 * r2[1] + 2.0 * r3[1] + r4[1])
        out, reason = fld(nx, ny, dx, dy)
        if out is None:
            break
        x, y = nx, ny
        dx, dy, w = out
        w_h = w.H
        if w_h > fld.H_max:
            fld.H_max = w_h
        g = abs(fold_line_angle(w.zeta)) if fld.k > 1 else 0.0
        if g > fld.gap_max:
            fld.gap_max = g
        pts.append((x, y))
        tans.append((dx, dy))
    return np.array(pts), np.array(tans), reason


def _steps(eta: float, h: float) -> int:
    if not h > 0.0:
        raise ValueError("h must be positive")
    if h > eta / 100.0 * (1 + 1e-12):
        raise ValueError(f"h={h} exceeds eta/100")
    return int(round(eta / h))


def _start(fmap: MapSpec, k: int, eps: float):
    px, py = fmap.fixed_point
    fld = _Field(fmap, k, eps)
    sx, sy = fmap.stable_dir
    out, reason = fld(px, py, sx, sy)
    if out is None:
        raise DegenerateField(f"e^({k}) undefined at the fixed point ({reason})")
    c, s, w = out
    fld.H_max = w.H
    fld.gap_max = abs(fold_line_angle(w.zeta)) if k > 1 else 0.0
    return fld, px, py, c, s


def integrate_leaf(fmap: MapSpec, k: int, eta: float = DEFAULT_ETA, h: float | None = None,
                   *, eps: float = DEFAULT_EPS) -> LeafCurve:
    """Integrate the order-``k`` leaf through the fixed point.

    Each branch stops at arclength ``eta``, or earlier when a sample leaves
    ``N^(k)_eps`` or the frame degenerates; the reason is kept in
    ``stopped``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    h = eta / 1000.0 if h is None else h
    n = _steps(eta, h)
    fld, px, py, c, s = _start(fmap, k, eps)
    plus, tp, rp = _rk4_branch(fld, px, py, c, s, n, h)
    minus, tm, rm = _rk4_branch(fld, px, py, -c, -s, n, h)
    return LeafCurve(k, fmap.label, h, plus, minus, eta, tp, tm,
                     {"plus": rp, "minus": rm}, fld.H_max, fld.gap_max)


def leaf_distance(A: LeafCurve, B: LeafCurve) -> float:
    """Sup distance between two leaves over their common arclength grid."""
    if A.h != B.h or A.eta != B.eta or (A.map_name and B.map_name and A.map_name != B.map_name):
        raise GridMismatch(f"grids differ: (h={A.h}, eta={A.eta}) vs (h={B.h}, eta={B.eta})")
    d = 0.0
    for a, b in ((A.plus, B.plus), (A.minus, B.minus)):
        n = min(len(a), len(b))
        if n:
            d = max(d, float(np.max(np.hypot(*(a[:n] - b[:n]).T))))
    return d


@dataclass
class SuccessiveDistance:
    k: int
    distance: float
    H_bar: float
    direct: float
    variational: float
    profile_t: np.ndarray
    profile_d: np.ndarray


class _VarField:
    """Fields ``e^(k)``, ``e^(k+1) - e^(k)`` and ``D e^(k+1)`` from one walk."""

    def __init__(self, fmap: MapSpec, k: int, eps: float, grad_cap: int):
        self.fmap, self.k, self.eps, self.grad_cap = fmap, k, eps, grad_cap

    def __call__(self, x, y, dx, dy):
        w = walk(self.fmap, x, y, self.k + 1)
        if w.max_dist > self.eps or w.log_E - w.log_F >= _LOG_DEGEN:
            return None
        z = w.zeta
        th = w.theta - z
        c, s = math.cos(th), math.sin(th)
        sgn = 1.0
        if c * dx + s * dy < 0.0:
            sgn = -1.0
        c1, s1 = math.cos(w.theta), math.sin(w.theta)
        # e^(k+1) - e^(k) = -2 sin^2(z/2) e^(k) + sin(z) f^(k), exact for tiny z
        a = -2.0 * math.sin(0.5 * z) ** 2
        b = math.sin(z)
        gx = sgn * (a * c - b * s)
        gy = sgn * (a * s + b * c)
        return sgn * c, sgn * s, gx, gy, -sgn * s1, sgn * c1

    def grad(self, x, y):
        return theta_gradient_capped(self.fmap, x, y, min(self.k + 1, self.grad_cap))


def _variational_branch(vf: _VarField, x, y, dx, dy, n: int, h: float):
    """RK4 on ``(z, Delta)`` with ``Delta' = g + f (grad theta . Delta)``.

    ``Delta`` approximates the separation of the leaves of order ``k+1``
    and ``k`` at equal arclength.  The gradient is frozen over each step.
    """
    D = [0.0]
    ux = uy = 0.0
    for _ in range(n):
        gr = vf.grad(x, y)
        vals = []
        ok = True
        stage = (0.0, 0.0, 0.0, 0.0)
        for frac in (0.0, 0.5, 0.5, 1.0):
            sx = x + frac * h * stage[0]
            sy = y + frac * h * stage[1]
            vx = ux + frac * h * stage[2]
            vy = uy + frac * h * stage[3]
            out = vf(sx, sy, dx, dy)
            if out is None:
                ok = False
                break
            ex, ey, gx, gy, fx, fy = out
            lin = gr[0] * vx + gr[1] * vy
            stage = (ex, ey, gx + fx * lin, gy + fy * lin)
            vals.append(stage)
        if not ok:
            break
        k1, k2, k3, k4 = vals
        x += h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        y += h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        ux += h / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        uy += h / 6.0 * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])
        dx, dy = k4[0], k4[1]
        D.append(math.hypot(ux, uy))
    return np.array(D)


def successive_distance(fmap: MapSpec, k: int, eta: float = DEFAULT_ETA, h: float | None = None,
                        *, eps: float = DEFAULT_EPS, leaves: dict | None = None,
                        grad_cap: int = 12) -> SuccessiveDistance:
    """Sup distance between the leaves of order ``k`` and ``k+1``.

    Direct subtraction of two integrated leaves bottoms out near ``1e-16``,
    while the true distance decays like ``H_k``.  Alongside the leaf of
    order ``k`` the linearised separation is integrated, driven by the exact
    difference of the two fields; it is used wherever the direct difference
    is below ``DIRECT_FLOOR``.  ``leaves`` is an optional cache keyed by order.
    """
    h = eta / 1000.0 if h is None else h
    n = _steps(eta, h)
    cache = {} if leaves is None else leaves
    for j in (k, k + 1):
        if j not in cache:
            cache[j] = integrate_leaf(fmap, j, eta, h, eps=eps)
    A, B = cache[k], cache[k + 1]
    vf = _VarField(fmap, k, eps, grad_cap)
    px, py = fmap.fixed_point
    c, s = A.tangents_plus[0]
    prof_t, prof_d, direct_max, var_max, best = [], [], 0.0, 0.0, 0.0
    for sign, a, b in ((1.0, A.plus, B.plus), (-1.0, A.minus, B.minus)):
        var = _variational_branch(vf, px, py, sign * c, sign * s, n, h)
        m = min(len(a), len(b), len(var))
        direct = np.hypot(*(a[:m] - b[:m]).T)
        use = np.where(direct > DIRECT_FLOOR, direct, var[:m])
        prof_t.append(sign * np.arange(m) * h)
        prof_d.append(use)
        direct_max = max(direct_max, float(direct.max(initial=0.0)))
        var_max = max(var_max, float(var[:m].max(initial=0.0)))
        best = max(best, float(use.max(initial=0.0)))
    return SuccessiveDistance(k, best, A.H_max, direct_max, var_max,
                              np.concatenate(prof_t), np.concatenate(prof_d))


def gronwall_constant(fmap: MapSpec, eta: float = DEFAULT_ETA, h: float | None = None,
                      *, eps: float = DEFAULT_EPS, k_fit: int = 5, leaves: dict | None = None) -> float:
    """Empirical ``K`` with ``K exp(eta K) = max_{k <= k_fit} d_k / (eta H-bar_k)``."""
    r = 0.0
    cache = {} if leaves is None else leaves
    for k in range(1, k_fit + 1):
        sd = successive_distance(fmap, k, eta, h, eps=eps, leaves=cache)
        if sd.H_bar > 0.0:
            r = max(r, sd.distance / (eta * sd.H_bar))
    return float(lambertw(eta * r).real / eta) if r > 0.0 else 0.0


@dataclass
class InductiveVerdict:
    k: int
    passed: bool
    length_ok: bool
    lengths: tuple[float, float]
    tube: TubeSpec
    H_bar: float
    n_tube: int
    n_inside: int
    witness: tuple[float, float] | None = None
    reason: str = ""


def inductive_check(fmap: MapSpec, k: int, eta: float = DEFAULT_ETA, eps: float = DEFAULT_EPS,
                    *, h: float | None = None, leaf: LeafCurve | None = None,
                    K_emp: float | None = None, n_tube: int = N_TUBE,
                    seed: int = SEED) -> InductiveVerdict:
    """Check the inductive condition at order ``k``.

    Both branches of the leaf must reach ``eta`` and every point of a random
    cloud in the ``omega_k``-tube around the leaf must lie in ``N^(k+1)_eps``.
    """
    h = eta / 1000.0 if h is None else h
    leaf = integrate_leaf(fmap, k, eta, h, eps=eps) if leaf is None else leaf
    if K_emp is None:
        K_emp = gronwall_constant(fmap, eta, h, eps=eps)
    lengths = leaf.lengths
    if not leaf.complete:
        tube = TubeSpec.build(K_emp, eta, leaf.H_max)
        bad = leaf.plus[-1] if leaf.stopped["plus"] else leaf.minus[-1]
        reason = leaf.stopped["plus"] or leaf.stopped["minus"] or "short"
        return InductiveVerdict(k, False, False, lengths, tube, leaf.H_max, n_tube, 0,
                                (float(bad[0]), float(bad[1])), f"leaf stopped short: {reason}")
    rng = np.random.default_rng(seed)
    ts = rng.uniform(-lengths[0], lengths[1], n_tube)
    rad = np.sqrt(rng.uniform(0.0, 1.0, n_tube))
    ang = rng.uniform(0.0, 2.0 * math.pi, n_tube)
    H_bar = leaf.H_max
    # H-bar over the tube needs omega, which needs H-bar: use the leaf value
    # for the radius and report the sup over both
    tube = TubeSpec.build(K_emp, eta, H_bar)
    base = leaf.at(ts)
    cloud = base + (tube.omega * rad)[:, None] * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    inside = 0
    witness = None
    for x, y in cloud:
        if membership_horizon(fmap, (x, y), eps, k + 1) >= k + 1:
            inside += 1
            H_bar = max(H_bar, walk(fmap, x, y, k).H)
        elif witness is None:
            witness = (float(x), float(y))
    passed = witness is None
    return InductiveVerdict(k, passed, True, lengths, tube, H_bar, n_tube, inside, witness,
                            "" if passed else "tube point leaves N^(k+1)")


def _gap_at_p(fmap: MapSpec, k: int) -> float:
    w = walk(fmap, *fmap.fixed_point, k + 1)
    return abs(fold_line_angle(w.zeta))


def _angle(u, v) -> float:
    cross = u[0] * v[1] - u[1] * v[0]
    dot = u[0] * v[0] + u[1] * v[1]
    return math.atan2(abs(cross), abs(dot))


def limit_leaf(fmap: MapSpec, eta: float = DEFAULT_ETA, tol: float = 1e-9, h: float | None = None,
               *, eps: float = DEFAULT_EPS, k_cap: int = K_CAP,
               collect: list | None = None) -> tuple[LeafCurve, ConvergenceReport]:
    """Integrate leaves of increasing order until successive leaves agree.

    Stops at the first ``k`` with ``d(E^(k), E^(k+1)) < tol`` and either
    ``H-bar_k < tol`` or no angle gap at all along the newer leaf (fields that
    are already exact, such as a diagonal linear map).  The newer leaf is
    returned with ``k = inf``; ``collect``, if given, receives every finite
    leaf integrated on the way.
    """
    if not tol > 0.0:
        raise ValueError("tol must be positive")
    h = eta / 1000.0 if h is None else h
    prev = integrate_leaf(fmap, 1, eta, h, eps=eps)
    if collect is not None:
        collect.append(prev)
    ks, gaps, Hs, dists = [], [], [], []
    for k in range(1, k_cap + 1):
        nxt = integrate_leaf(fmap, k + 1, eta, h, eps=eps)
        d = leaf_distance(prev, nxt)
        if collect is not None:
            collect.append(nxt)
        ks.append(k)
        gaps.append(_gap_at_p(fmap, k))
        Hs.append(prev.H_max)
        dists.append(d)
        exact = nxt.gap_max == 0.0
        if d < tol and (prev.H_max < tol or exact):
            break
        prev = nxt
    else:
        raise NoConvergenceAtCap(f"leaves still {d:.3e} apart at k={k_cap}")
    angle = _angle(nxt.tangents_plus[0], fmap.stable_dir)
    if angle > 10.0 * tol:
        raise TangencyFailure(f"limit leaf meets E^s_p at angle {angle:.3e}")
    nxt = dataclasses.replace(nxt, k=math.inf)
    report = ConvergenceReport(fmap.label, ks, gaps, Hs, dists, math.nan,
                               {"tangency_angle": angle}, converged_k=ks[-1])
    series = gaps if any(g > 0.0 for g in gaps) else dists
    report.fit_source = "gaps" if series is gaps else "leaf_dists"
    report.exact_convergence = not any(g > 0.0 for g in gaps) and nxt.gap_max == 0.0
    try:
        report.fitted_rate = fit_log_rate(ks, series)[0]
    except InsufficientDecay:
        pass
    return nxt, report


def _inverse_n(fmap: MapSpec, pts: np.ndarray, n: int) -> np.ndarray:
    x, y = pts[:, 0], pts[:, 1]
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(n):
            x, y = fmap.inverse(x, y)
    return np.stack([x, y], axis=1)


def global_extend_generations(fmap: MapSpec, local: LeafCurve, n: int, *,
                              max_spacing: float | None = None, window: float = 10.0,
                              max_points: int = 500_000) -> list[np.ndarray]:
    """Preimages ``phi^-j`` of the local leaf for ``j = 0..n``, one array per ``j``.

    Gaps wider than ``max_spacing`` are filled with preimages of midpoints
    (in arclength of the local leaf).  Points farther than ``window`` from
    the fixed point are dropped.
    """
    if fmap.inverse is None:
        raise NoInverse(f"map {fmap.label} has no inverse")
    if n < 0:
        raise ValueError("n must be >= 0")
    spacing = local.eta / 50.0 if max_spacing is None else max_spacing
    p = np.asarray(fmap.fixed_point)
    ts = local.params()
    gens = [local.points()]
    min_dt = 1e-13 * max(1.0, float(np.max(np.abs(ts))))
    for j in range(1, n + 1):
        pts = _inverse_n(fmap, gens[0], j)  # recomputed from the local leaf
        cur_t = ts
        for _ in range(60):
            keep = np.all(np.isfinite(pts), axis=1) & (np.hypot(*(pts - p).T) <= window)
            seg = np.hypot(*np.diff(pts, axis=0).T)
            wide = (seg > spacing) & keep[:-1] & keep[1:] & (np.diff(cur_t) > min_dt)
            if not wide.any() or len(cur_t) > max_points:
                break
            idx = np.flatnonzero(wide)
            mid_t = 0.5 * (cur_t[idx] + cur_t[idx + 1])
            mid = _inverse_n(fmap, local.at(mid_t), j)
            cur_t = np.insert(cur_t, idx + 1, mid_t)
            pts = np.insert(pts, idx + 1, mid, axis=0)
        keep = np.all(np.isfinite(pts), axis=1) & (np.hypot(*(pts - p).T) <= window)
        gens.append(pts[keep])
    return gens


def global_extend(fmap: MapSpec, local: LeafCurve, n: int, **kwargs) -> np.ndarray:
    """Union of ``phi^-j(local)`` for ``0 <= j <= n`` as an ``(N, 2)`` array."""
    return np.concatenate(global_extend_generations(fmap, local, n, **kwargs))
