"""Quantitative checks on finite-time leaves and their limit.

Every lemma-level property is measured, not assumed: each check reports an
empirical constant and a pass flag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import gmpy2
import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.spatial import cKDTree

from .cocycle import NeighborhoodSpec, build_trace, fold_line_angle, membership_horizon, walk
from .directions import field_derivative, pushforward_norm
from .dynsys import MapSpec
from .errors import InsufficientDecay, StableLeafError, StencilLeavesDomain
from .leaf import (
    DEFAULT_EPS,
    DEFAULT_ETA,
    SEED,
    LeafCurve,
    gronwall_constant,
    inductive_check,
    integrate_leaf,
    limit_leaf,
    successive_distance,
)
from .mat2 import Mat2
from .reports import (
    SCHEMA_VERSION,
    ContractionReport,
    ConvergenceReport,
    EscapeReport,
    fit_log_rate,
)

__all__ = [
    "ConvergenceReport",
    "ContractionReport",
    "EscapeReport",
    "ConeVerdict",
    "LemmaResult",
    "convergence_report",
    "lipschitz_estimate",
    "contraction_report",
    "escape_experiment",
    "cone_check",
    "cone_radius",
    "sample_cloud",
    "growth_profile",
    "verify_map",
]


# ---------------------------------------------------------------- convergence

def convergence_report(fmap: MapSpec, eta: float = DEFAULT_ETA, k_max: int = 25,
                       h: float | None = None, *, eps: float = DEFAULT_EPS,
                       leaves: dict | None = None) -> ConvergenceReport:
    """Gaps at ``p``, ``H-bar_k``, successive leaf distances and a decay-rate fit.

    The rate is fitted to the gaps at ``p`` when they are nonzero; otherwise
    to the sup of the gaps along the leaf.  If both vanish identically the
    report flags exact convergence and the rate is ``-inf``.
    """
    cache = {} if leaves is None else leaves
    px, py = fmap.fixed_point
    tr = build_trace(fmap, (px, py), k_max + 1)
    ks = list(range(1, k_max + 1))
    gaps = [tr.gap(k) for k in ks]
    H_p = [tr.H[k] for k in ks]
    dists, H_bar, leaf_gaps = [], [], []
    for k in ks:
        sd = successive_distance(fmap, k, eta, h, eps=eps, leaves=cache)
        dists.append(sd.distance)
        H_bar.append(sd.H_bar)
        leaf_gaps.append(cache[k + 1].gap_max)
    report = ConvergenceReport(fmap.label, ks, gaps, H_bar, dists, math.nan)
    report.K_emp["angle_convergence"] = max(
        (g / hk for g, hk in zip(gaps, H_p) if hk > 0), default=0.0)
    report.K_emp["angle_convergence_leaf"] = max(
        (g / hb for g, hb in zip(leaf_gaps, H_bar) if hb > 0), default=0.0)
    report.K_emp["leaf_contraction"] = max(
        (d / (eta * hb) for d, hb in zip(dists, H_bar) if hb > 0), default=0.0)
    if any(g > 0 for g in gaps):
        series, report.fit_source = gaps, "gaps"
    elif any(g > 0 for g in leaf_gaps):
        series, report.fit_source = leaf_gaps, "leaf_gaps"
    else:
        report.fit_source = "none"
        report.exact_convergence = True
        report.fitted_rate = -math.inf
        return report
    report.fitted_rate = fit_log_rate(ks, series)[0]
    return report


def lipschitz_estimate(curve: LeafCurve, window: float | None = None) -> float:
    """Max of ``angle(T_i, T_j) / |z_i - z_j|`` over pairs within arclength ``window``."""
    w = curve.eta / 10.0 if window is None else window
    pts, tan = curve.points(), curve.tangents()
    lag_max = max(1, int(round(w / curve.h)))
    best = 0.0
    for lag in range(1, min(lag_max, len(pts) - 1) + 1):
        a, b = tan[:-lag], tan[lag:]
        cross = np.abs(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])
        dot = np.abs(np.sum(a * b, axis=1))
        ang = np.arctan2(cross, dot)
        dist = np.hypot(*(pts[lag:] - pts[:-lag]).T)
        best = max(best, float(np.max(ang / dist)))
    return best


# ---------------------------------------------------------------- contraction

def _as_arrays(v, n):
    return [np.broadcast_to(np.asarray(c, dtype=float), (n,)) for c in v]


def _tangent_growth(fmap: MapSpec, curve: LeafCurve, idx: np.ndarray, k_max: int):
    """``||D phi^k e(z)||`` for curve samples ``idx`` and ``k = 0..k_max``.

    Orbits are shadowed on the curve: each image is projected back to the
    leaf before the next step, and the factor ``||A_j tau_j||`` uses the leaf
    tangent at the projected point.  This removes the growth of the transverse
    error, which would otherwise swamp the separations after ~15 steps.
    """
    ts, pts, tan = curve.params(), curve.points(), curve.tangents()
    tree = cKDTree(pts)
    z = pts[idx].copy()
    tau = tan[idx].copy()
    n = len(idx)
    logs = np.zeros((k_max + 1, n))
    for k in range(1, k_max + 1):
        a, b, c, d = _as_arrays(fmap.jacobian(z[:, 0], z[:, 1]), n)
        vx = a * tau[:, 0] + b * tau[:, 1]
        vy = c * tau[:, 0] + d * tau[:, 1]
        logs[k] = logs[k - 1] + np.log(np.hypot(vx, vy))
        fx, fy = fmap.eval(z[:, 0], z[:, 1])
        img = np.stack(_as_arrays((fx, fy), n), axis=1)
        _, i = tree.query(img)
        t = ts[i] + np.sum((img - pts[i]) * tan[i], axis=1)
        t = np.clip(t, ts[0], ts[-1])
        z = curve.at(t)
        tau = np.stack([np.interp(t, ts, tan[:, 0]), np.interp(t, ts, tan[:, 1])], axis=1)
        tau /= np.linalg.norm(tau, axis=1)[:, None]
    return np.exp(logs)


def contraction_report(fmap: MapSpec, curve: LeafCurve, k_max: int = 30, *, n_pairs: int = 50,
                       seed: int = SEED, delta_frac: float = 0.05,
                       n_nodes: int = 401) -> ContractionReport:
    """Sup over sample pairs of ``|phi^k(z_t1) - phi^k(z_t2)| / |t1 - t2|``.

    The separation is measured along the image of the leaf, as the integral
    of the tangent growth between ``t1`` and ``t2``; direct double precision
    iteration is also reported (``direct_ratios``) but it is only meaningful
    while rounding amplified by ``lambda_u^k`` stays below the separation.
    """
    ts_all = curve.params()
    stride = max(1, (len(ts_all) - 1) // (n_nodes - 1))
    idx = np.arange(0, len(ts_all), stride)
    i0 = int(np.flatnonzero(ts_all == 0.0)[0])
    idx = np.unique(np.append(idx, [i0, len(ts_all) - 1]))
    ts = ts_all[idx]
    growth = _tangent_growth(fmap, curve, idx, k_max)
    rng = np.random.default_rng(seed)
    pairs = [(int(np.searchsorted(ts, 0.0)), len(ts) - 1)]
    while len(pairs) < n_pairs:
        i, j = sorted(rng.choice(len(ts), 2, replace=False).tolist())
        pairs.append((i, j))
    pts = curve.points()[idx]
    ratios, direct = [], []
    lam_s = abs(fmap.eig_s)
    bound = lam_s + delta_frac * (1.0 - lam_s)
    ks = list(range(1, k_max + 1))
    za = np.array([pts[i] for i, _ in pairs])
    zb = np.array([pts[j] for _, j in pairs])
    dt = np.array([ts[j] - ts[i] for i, j in pairs])
    for k in ks:
        cum = cumulative_trapezoid(growth[k], ts, initial=0.0)
        r = max((cum[j] - cum[i]) / (ts[j] - ts[i]) for i, j in pairs)
        ratios.append(float(r))
        with np.errstate(over="ignore", invalid="ignore"):
            za = np.stack(_as_arrays(fmap.eval(za[:, 0], za[:, 1]), len(pairs)), axis=1)
            zb = np.stack(_as_arrays(fmap.eval(zb[:, 0], zb[:, 1]), len(pairs)), axis=1)
            direct.append(float(np.max(np.hypot(*(za - zb).T) / np.abs(dt))))
    K = max(r / bound ** k for k, r in zip(ks, ratios))
    return ContractionReport(fmap.label, ks, ratios, bound, K, direct, n_pairs, seed)


# ---------------------------------------------------------------- escape

def _eig_inverse(fmap: MapSpec):
    """Rows mapping a displacement to (unstable, stable) eigen-coordinates."""
    (ux, uy), (sx, sy) = fmap.unstable_dir, fmap.stable_dir
    det = ux * sy - sx * uy
    return (sy / det, -sx / det), (-uy / det, ux / det)


def _exit_time(fmap: MapSpec, x, y, center, radius: float, cap: int) -> int | None:
    px, py = center
    r2 = radius * radius
    for j in range(cap + 1):
        dx, dy = x - px, y - py
        if dx * dx + dy * dy > r2:
            return j
        if j < cap:
            x, y = fmap.eval(x, y)
    return None


def _mp_side(fmap: MapSpec, x, y, center, radius, n_steps, row_u, lam_u):
    """Exit step and unstable-side sign of an mpfr orbit, or ``None`` if it stays."""
    px, py = center
    r2 = radius * radius
    sgn = 1
    for j in range(n_steps + 1):
        dx, dy = x - px, y - py
        if dx * dx + dy * dy > r2:
            a = row_u[0] * dx + row_u[1] * dy
            return j, (1 if a > 0 else -1) * sgn
        x, y = fmap.eval(x, y)
        if lam_u < 0:
            sgn = -sgn
    return None


def _refine_control(fmap, base, normal, eta_tilde, width, n_steps, bits):
    """Bisect along ``normal`` for the point whose orbit never leaves the ball.

    Off the stable manifold an orbit exits along the unstable direction on a
    side that flips across the manifold, so the exit side brackets it.
    """
    row_u, _ = _eig_inverse(fmap)
    with gmpy2.context(gmpy2.get_context(), precision=bits):
        bx, by = gmpy2.mpfr(base[0]), gmpy2.mpfr(base[1])
        nx, ny = gmpy2.mpfr(normal[0]), gmpy2.mpfr(normal[1])
        center = (gmpy2.mpfr(fmap.fixed_point[0]), gmpy2.mpfr(fmap.fixed_point[1]))
        R = gmpy2.mpfr(eta_tilde)

        def side(s):
            return _mp_side(fmap, bx + s * nx, by + s * ny, center, R, n_steps, row_u, fmap.eig_u)

        lo, hi = gmpy2.mpfr(-width), gmpy2.mpfr(width)
        r_lo, r_hi = side(lo), side(hi)
        while r_lo and r_hi and r_lo[1] == r_hi[1] and hi < eta_tilde / 4:
            lo, hi = lo * 4, hi * 4
            r_lo, r_hi = side(lo), side(hi)
        if r_lo is None:
            s = lo
        elif r_hi is None:
            s = hi
        else:
            s = None
            for _ in range(bits + 64):
                mid = (lo + hi) / 2
                r = side(mid)
                if r is None:
                    s = mid
                    break
                if r[1] == r_lo[1]:
                    lo = mid
                else:
                    hi = mid
            if s is None:
                s = (lo + hi) / 2
        cx, cy = bx + s * nx, by + s * ny
        stays = _mp_side(fmap, cx, cy, center, R, n_steps - 30, row_u, fmap.eig_u) is None
        return (float(cx), float(cy)), float(abs(s)), stays


def escape_experiment(fmap: MapSpec, curve: LeafCurve, eta_tilde: float = 0.05,
                      n_samples: int = 5, cap: int = 200, *,
                      offsets=(1e-2, 1e-4, 1e-6), refine_controls: bool = True) -> EscapeReport:
    """Exit times from ``B_eta~(p)`` of points pushed off the leaf along its normal.

    Base points sit at arclength ``t`` in ``[-eta~/2, eta~/2]`` (always
    including ``t = 0``).  Each is also used as an on-curve control: it is
    moved onto the stable manifold by a high-precision bisection and then
    iterated ``cap`` times, which double precision cannot do since rounding
    grows like ``lambda_u^j``.
    """
    if eta_tilde > curve.eta:
        raise ValueError("eta_tilde must not exceed the leaf half-length")
    p = fmap.fixed_point
    half = min(0.5 * eta_tilde, *curve.lengths)
    ts = np.linspace(-half, half, n_samples)
    ts[np.argmin(np.abs(ts))] = 0.0
    base = curve.at(ts)
    tan = curve.tangents()
    tp = curve.params()
    samples, stayers, offs = [], [], []
    normals = []
    for t, (bx, by) in zip(ts, base):
        tx, ty = np.interp(t, tp, tan[:, 0]), np.interp(t, tp, tan[:, 1])
        nrm = math.hypot(tx, ty)
        nx, ny = -ty / nrm, tx / nrm
        normals.append((nx, ny))
        for d in offsets:
            for sgn in (1.0, -1.0):
                q = (float(bx + sgn * d * eta_tilde * nx), float(by + sgn * d * eta_tilde * ny))
                j = _exit_time(fmap, q[0], q[1], p, eta_tilde, cap)
                offs.append(d * eta_tilde)
                if j is None:
                    stayers.append(q)
                    samples.append((q, -1))
                else:
                    samples.append((q, j))
    controls, shifts, stay_all = [], [], True
    if refine_controls:
        lam = abs(fmap.eig_u)
        n_steps = cap + 30
        bits = int(n_steps * math.log2(lam)) + 60
        width = max(1e-6 * eta_tilde, 4.0 * curve.h)
        for (bx, by), nrm in zip(base, normals):
            c, shift, stays = _refine_control(fmap, (bx, by), nrm, eta_tilde, width, n_steps, bits)
            controls.append(c)
            shifts.append(shift)
            stay_all = stay_all and stays
    # exit time against log(1/d) at the base point t = 0
    i0 = int(np.flatnonzero(ts == 0.0)[0])
    per = 2 * len(offsets)
    sub = samples[i0 * per:(i0 + 1) * per]
    xs = [math.log(1.0 / offs[i0 * per + i]) for i in range(per) if sub[i][1] >= 0]
    ys = [sub[i][1] for i in range(per) if sub[i][1] >= 0]
    slope = float(np.polyfit(xs, ys, 1)[0]) if len(set(xs)) >= 2 else math.nan
    return EscapeReport(fmap.label, eta_tilde, cap, samples, offs, stayers, controls, shifts,
                        stay_all, slope, 1.0 / math.log(abs(fmap.eig_u)))


# ---------------------------------------------------------------- cone field

@dataclass
class ConeVerdict:
    passed: bool
    slope: float
    radius: float
    min_expansion: float
    required_expansion: float
    n_points: int
    witnesses: list = field(default_factory=list)


def cone_check(fmap: MapSpec, region: NeighborhoodSpec | float, slope: float, *,
               n_grid: int = 30, n_dirs: int = 36, max_witnesses: int = 5) -> ConeVerdict:
    """Invariance and expansion of the unstable cone ``|b| <= slope |a|``.

    ``(a, b)`` are coordinates in the eigenbasis of ``D phi_p`` (unstable,
    stable).  Expansion is measured in the adapted norm ``|a|``, for which
    the linearisation expands cone vectors by exactly ``|lambda_u|``.
    """
    if not slope > 0:
        raise ValueError("slope must be positive")
    if isinstance(region, NeighborhoodSpec):
        (px, py), r = region.center, region.eta
    else:
        (px, py), r = fmap.fixed_point, float(region)
    lam_u = abs(fmap.eig_u)
    need = lam_u - 0.1 * (lam_u - 1.0)
    row_u, row_s = _eig_inverse(fmap)
    (ux, uy), (sx, sy) = fmap.unstable_dir, fmap.stable_dir
    g = np.linspace(-r, r, n_grid)
    X, Y = np.meshgrid(px + g, py + g)
    keep = np.hypot(X - px, Y - py) <= r
    xs, ys = X[keep], Y[keep]
    n = len(xs)
    a_, b_, c_, d_ = _as_arrays(fmap.jacobian(xs, ys), n)
    worst = math.inf
    witnesses = []
    for q in np.linspace(-slope, slope, n_dirs):
        vx, vy = ux + q * sx, uy + q * sy  # a = 1, b = q
        wx = a_ * vx + b_ * vy
        wy = c_ * vx + d_ * vy
        a2 = row_u[0] * wx + row_u[1] * wy
        b2 = row_s[0] * wx + row_s[1] * wy
        exp_ = np.abs(a2)
        worst = min(worst, float(exp_.min()))
        bad = (np.abs(b2) > slope * np.abs(a2)) | (exp_ < need)
        for i in np.flatnonzero(bad)[: max(0, max_witnesses - len(witnesses))]:
            witnesses.append({"point": (float(xs[i]), float(ys[i])), "direction": float(q),
                              "expansion": float(exp_[i]),
                              "cone_ratio": float(abs(b2[i]) / abs(a2[i])) if a2[i] else math.inf})
    return ConeVerdict(not witnesses, slope, r, worst, need, n, witnesses)


def cone_radius(fmap: MapSpec, eta_tilde: float, slope: float, *, max_halvings: int = 4,
                **kwargs) -> ConeVerdict:
    """Largest ``eta_tilde / 2^i`` (``i <= max_halvings``) on which :func:`cone_check` passes.

    Returns the last verdict tried, so a failure carries its witnesses.
    """
    r = eta_tilde
    for _ in range(max_halvings + 1):
        verdict = cone_check(fmap, r, slope, **kwargs)
        if verdict.passed:
            break
        r *= 0.5
    return verdict


# ---------------------------------------------------------------- growth / distortion

def sample_cloud(fmap: MapSpec, eps: float = DEFAULT_EPS, k_max: int = 40, *,
                 leaf: LeafCurve | None = None, n_base: int = 11) -> tuple[np.ndarray, np.ndarray]:
    """Points of ``N^(k)_eps`` for a range of ``k``, with their membership horizons.

    Base points lie on a leaf; each is pushed along the unstable direction by
    ``eps |lambda_u|^-m`` so that it stays about ``m`` steps.
    """
    if leaf is None:
        leaf = integrate_leaf(fmap, 10, min(DEFAULT_ETA, eps), h=min(DEFAULT_ETA, eps) / 100, eps=eps)
    ts = leaf.params()
    base = leaf.at(np.linspace(ts[0], ts[-1], n_base))
    lam = abs(fmap.eig_u)
    ux, uy = fmap.unstable_dir
    pts = [tuple(fmap.fixed_point)]
    for bx, by in base:
        pts.append((bx, by))
        for m in range(1, k_max + 6):
            off = eps * lam ** (-m)
            pts.append((bx + off * ux, by + off * uy))
            pts.append((bx - off * ux, by - off * uy))
    pts = np.array(pts)
    horizon = np.array([membership_horizon(fmap, z, eps, k_max) for z in pts])
    return pts, horizon


def growth_profile(fmap: MapSpec, z, k: int) -> dict[str, np.ndarray]:
    """Per-step ``F_j``, ``E_j``, ``||D^2 phi^j||`` and ``||D det D phi^j||``, ``j = 0..k``."""
    from .cocycle import _second_step

    x, y = float(z[0]), float(z[1])
    m = (1.0, 0.0, 0.0, 1.0)
    T = [0.0] * 8
    det = 1.0
    gdet = (0.0, 0.0)
    F, E, D2, DD = [1.0], [1.0], [0.0], [0.0]
    for _ in range(k):
        a, b, c, d = fmap.jacobian(x, y)
        hx = fmap.hessian(x, y)
        dA = a * d - b * c
        gx, gy = fmap.det_gradient(x, y)
        # grad(det A(phi^j) * det_j) = (grad det A . M_j) det_j + det A grad det_j
        gdet = ((gx * m[0] + gy * m[2]) * det + dA * gdet[0],
                (gx * m[1] + gy * m[3]) * det + dA * gdet[1])
        det *= dA
        T = _second_step(a, b, c, d, hx, m, T)
        m = (a * m[0] + b * m[2], a * m[1] + b * m[3], c * m[0] + d * m[2], c * m[1] + d * m[3])
        f_ = Mat2(*m).norm()
        F.append(f_)
        # |det| of the product cancels catastrophically once H < 1e-16
        E.append(abs(det) / f_)
        D2.append(math.sqrt(sum(t * t for t in T)))
        DD.append(math.hypot(*gdet))
        x, y = fmap.eval(x, y)
    return {"F": np.array(F), "E": np.array(E), "D2": np.array(D2), "Ddet": np.array(DD)}


@dataclass
class GrowthSummary:
    ks: list[int]
    upper: list[float]  # sup F_j / (|lam_u| + delta)^j
    lower: list[float]  # sup (|lam_s| - delta)^j / E_j
    sum_F: list[float]  # sup sum_{j<k} F_j / F_k
    tail_H: list[float]  # sup sum_{i>=j} H_i / H_j
    d2: list[float]  # sup ||D^2 phi^k|| / F_k^2
    ddet: list[float]  # sup ||D det D phi^k|| / (E_k F_k^2)


def growth_summary(fmap: MapSpec, *, k_max: int = 40, delta: float = 0.1,
                   eps: float = DEFAULT_EPS, cloud=None) -> GrowthSummary:
    """Suprema, per ``k``, over cloud points whose orbit stays ``k`` steps in the ball."""
    pts, hor = sample_cloud(fmap, eps, k_max) if cloud is None else cloud
    lu, ls = abs(fmap.eig_u) + delta, max(abs(fmap.eig_s) - delta, 1e-300)
    ks = list(range(1, k_max + 1))
    up, lo, sf, th, d2, dd = (np.zeros(k_max + 1) for _ in range(6))
    for z, m in zip(pts, hor):
        if m < 1:
            continue
        g = growth_profile(fmap, z, int(m))
        F, E = g["F"], g["E"]
        H = E / F
        j = np.arange(len(F))
        cumF = np.concatenate([[0.0], np.cumsum(F)[:-1]])
        tail = np.cumsum(H[::-1])[::-1]
        for arr, vals in ((up, F / lu ** j), (lo, ls ** j / E), (sf, cumF / F),
                          (th, tail / H), (d2, g["D2"] / F ** 2), (dd, g["Ddet"] / (E * F ** 2))):
            n = len(vals)
            np.maximum(arr[:n], vals, out=arr[:n])
    return GrowthSummary(ks, *(a[1:].tolist() for a in (up, lo, sf, th, d2, dd)))


# ---------------------------------------------------------------- lemma suite

@dataclass
class LemmaResult:
    name: str
    empirical_K: float
    passed: bool
    note: str = ""


def _bounded(values, k_ref, factor=3.0, *, tail_sup=False) -> bool:
    """Finite, and no growth past ``k_ref``.

    Compares the value at the last ``k`` (or the sup over ``k > k_ref`` with
    ``tail_sup``) to ``factor`` times the value at ``k_ref`` (resp. the sup up
    to ``k_ref``).  Decay is allowed: the lemmas bound these ratios from
    above only.
    """
    v = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(v)):
        return False
    if tail_sup:
        return float(v[k_ref:].max()) <= factor * float(v[:k_ref].max())
    return float(v[-1]) <= factor * float(v[k_ref - 1])


def _ratio_spread(values) -> float:
    v = [x for x in values if x > 0]
    return max(v) / min(v) if v else 1.0


def verify_map(fmap: MapSpec, *, eta: float = DEFAULT_ETA, eps: float = DEFAULT_EPS,
               h: float | None = None, tol: float = 1e-9, k_max: int = 25,
               eta_tilde: float = 0.05, seed: int = SEED) -> list[LemmaResult]:
    """Run every lemma-level check for one map."""
    h = eta / 1000.0 if h is None else h
    out: list[LemmaResult] = []
    leaves: dict[int, LeafCurve] = {}

    def guarded(name, fn):
        try:
            out.append(fn())
        except StableLeafError as exc:
            out.append(LemmaResult(name, math.nan, False, f"{type(exc).__name__}: {exc}"))

    # growth and distortion
    gs = growth_summary(fmap, eps=eps)

    def regular_growth():
        series = [gs.upper, gs.lower, gs.sum_F, gs.tail_H]
        K = max(max(s) for s in series)
        ok = all(_bounded(s, 20, tail_sup=True) for s in series)
        return LemmaResult("regular_growth", K, ok)

    def distortion():
        K = max(max(gs.d2), max(gs.ddet))
        ok = _bounded(gs.d2, 10) and _bounded(gs.ddet, 10)
        return LemmaResult("distortion", K, ok)

    guarded("regular_growth", regular_growth)
    guarded("distortion", distortion)

    k_top = max(1, min(k_max, 25))

    def angle_convergence():
        tr = build_trace(fmap, fmap.fixed_point, k_top + 1)
        ratios = [tr.gap(k) / tr.H[k] for k in range(1, k_top + 1)]
        K = max(ratios)
        window = ratios[9:] if k_top >= 10 else ratios
        return LemmaResult("angle_convergence", K, math.isfinite(K) and _ratio_spread(window) < 2.0)

    def angle_contraction():
        k = min(12, k_top)
        tr = build_trace(fmap, fmap.fixed_point, k)
        K = max(pushforward_norm(fmap, fmap.fixed_point, j, k) / tr.E[j] for j in range(1, k + 1))
        return LemmaResult("angle_contraction", K, math.isfinite(K))

    def derivative_convergence():
        leaf = leaves.get(10) or integrate_leaf(fmap, 10, eta, h, eps=eps)
        z = leaf.at(0.5 * leaf.lengths[1])
        de, dphi_e = [], []
        for k in range(1, min(12, k_top) + 1):
            try:
                a, b = field_derivative(fmap, z, k, eps=eps)
            except StencilLeavesDomain:
                break
            E = build_trace(fmap, z, k).E[k]
            de.append(a)
            dphi_e.append(b / E)
        if len(de) < 2:
            raise InsufficientDecay("stencil left the domain too early")
        K = max(max(de), max(dphi_e))
        return LemmaResult("derivative_convergence", K, bool(np.isfinite(K)))

    guarded("angle_convergence", angle_convergence)
    guarded("angle_contraction", angle_contraction)
    guarded("derivative_convergence", derivative_convergence)

    k_leaf = min(k_max, 20)

    def leaf_contraction():
        r = []
        for k in range(1, k_leaf + 1):
            sd = successive_distance(fmap, k, eta, h, eps=eps, leaves=leaves)
            r.append(sd.distance / (eta * sd.H_bar) if sd.H_bar > 0 else 0.0)
        K = max(r)
        return LemmaResult("leaf_contraction", K, K <= 100.0)

    guarded("leaf_contraction", leaf_contraction)

    def inductive_step():
        K = gronwall_constant(fmap, eta, h, eps=eps, leaves=leaves)
        verdicts = []
        for k in range(1, k_top + 1):
            leaf = leaves.get(k) or integrate_leaf(fmap, k, eta, h, eps=eps)
            leaves[k] = leaf
            verdicts.append(inductive_check(fmap, k, eta, eps, h=h, leaf=leaf, K_emp=K,
                                            seed=seed).passed)
        monotone = all(b or not a for a, b in zip(verdicts, verdicts[1:]))
        return LemmaResult("inductive_step", K, all(verdicts) and monotone)

    guarded("inductive_step", inductive_step)

    limit: dict[str, LeafCurve] = {}

    def convergence():
        rep = convergence_report(fmap, eta, k_max, h, eps=eps, leaves=leaves)
        ok = rep.exact_convergence or rep.fitted_rate < 0
        return LemmaResult("convergence_rate", rep.fitted_rate, ok, rep.fit_source)

    guarded("convergence_rate", convergence)

    def smoothness():
        curve, _ = limit_leaf(fmap, eta, tol, h, eps=eps)
        limit["curve"] = curve
        L = lipschitz_estimate(curve)
        return LemmaResult("smoothness", L, math.isfinite(L))

    guarded("smoothness", smoothness)

    def contraction():
        rep = contraction_report(fmap, limit["curve"], 30, seed=seed)
        return LemmaResult("contraction", rep.K_emp, rep.K_emp <= 2.0)

    def uniqueness():
        et = min(eta_tilde, eta)
        esc = escape_experiment(fmap, limit["curve"], et, 5, 200)
        cone = cone_radius(fmap, et, 0.5)
        ok = not esc.stayers and esc.controls_stay and cone.passed
        note = f"cone radius {cone.radius!r}"
        if not ok:
            note += f"; stayers={len(esc.stayers)} controls_stay={esc.controls_stay} cone={cone.passed}"
        return LemmaResult("uniqueness", cone.min_expansion, ok, note)

    if "curve" in limit:
        guarded("contraction", contraction)
        guarded("uniqueness", uniqueness)
    else:
        out.append(LemmaResult("contraction", math.nan, False, "no limit leaf"))
        out.append(LemmaResult("uniqueness", math.nan, False, "no limit leaf"))
    return out


def verify_payload(maps, **kwargs) -> dict:
    """JSON-ready verification record for a list of maps (no timings)."""
    entries = []
    all_pass = True
    for fmap in maps:
        results = verify_map(fmap, **kwargs)
        for r in results:
            all_pass = all_pass and r.passed
            entries.append({"map": fmap.label, "name": r.name, "empirical_K": r.empirical_K,
                            "pass": r.passed, "note": r.note})
    return {"schema": SCHEMA_VERSION, "config": dict(kwargs), "lemmas": entries,
            "all_pass": all_pass}
