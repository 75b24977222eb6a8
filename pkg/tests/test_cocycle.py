from __future__ import annotations

import math

import numpy as np
import pytest

from stableleaf.cocycle import (
    NeighborhoodSpec,
    build_trace,
    det_derivative_cocycle,
    membership_horizon,
    second_derivative_cocycle,
    walk,
)
from stableleaf.dynsys import make_map, sample_box
from stableleaf.errors import OverflowHorizon


def jac_power(fmap, z, k):
    """Direct product of step Jacobians, as a numpy array."""
    x, y = z
    m = np.eye(2)
    for _ in range(k):
        m = np.reshape(fmap.jacobian(x, y), (2, 2)) @ m
        x, y = fmap.eval(x, y)
    return m


def test_diag_powers_exact():
    t = build_trace(make_map("diag"), (0.0, 0.0), 25)
    for j in range(26):
        assert t.F[j] == 2.0 ** j
        assert t.E[j] == 2.0 ** -j
        assert t.H[j] == 4.0 ** -j
        assert tuple(t.product(j)) == (0.5 ** j, 0.0, 0.0, 2.0 ** j)


def test_shear_first_singular_values():
    # singular values of [[0.5, 1], [0, 2]] are sqrt((5.25 +- sqrt(23.5625)) / 2)
    F1 = math.sqrt((5.25 + math.sqrt(23.5625)) / 2)
    E1 = math.sqrt((5.25 - math.sqrt(23.5625)) / 2)
    t = build_trace(make_map("shear"), (0.3, -0.1), 1)
    assert t.F[1] == pytest.approx(F1, rel=1e-14)
    assert t.E[1] == pytest.approx(E1, rel=1e-12)
    assert F1 == pytest.approx(2.2476790, abs=1e-7)
    assert t.E[1] * t.F[1] == pytest.approx(1.0, rel=1e-14)


def test_henon_hyperbolicity_ratio_at_p_is_eigenvalue_ratio():
    m = make_map("henon")
    # the float orbit of p drifts off p like |lambda_u|^k, so stay at k <= 20
    t = build_trace(m, m.fixed_point, 20)
    ratio = np.array(t.H[10:20]) / np.array(t.H[11:21])
    assert ratio == pytest.approx(abs(m.eig_u / m.eig_s), rel=1e-9)
    for k in (5, 12):
        s = np.linalg.svd(jac_power(m, m.fixed_point, k), compute_uv=False)
        assert t.F[k] == pytest.approx(s[0], rel=1e-12)
        assert t.E[k] == pytest.approx(s[1], rel=1e-9)


def test_henon_frames_match_numpy_svd():
    m = make_map("henon")
    z = (0.55, 0.2)
    t = build_trace(m, z, 8)
    for k in range(1, 9):
        _, s, vt = np.linalg.svd(jac_power(m, z, k))
        e = vt[1]
        th = t.thetas[k]
        assert abs(abs(math.cos(th) * e[0] + math.sin(th) * e[1]) - 1.0) < 1e-12


def test_walk_agrees_with_trace():
    m = make_map("shear")
    t = build_trace(m, (0.1, 0.1), 12)
    w = walk(m, 0.1, 0.1, 12)
    assert math.exp(w.log_F) == pytest.approx(t.F[12], rel=1e-12)
    assert w.H == pytest.approx(t.H[12], rel=1e-10)


def test_membership_horizon_examples():
    d = make_map("diag")
    assert membership_horizon(d, (0.05, 0.0), 0.1, 60) == 60
    assert membership_horizon(d, (0.0, 0.05), 0.1, 60) == 2
    assert membership_horizon(d, (0.2, 0.0), 0.1, 60) == 0
    # brute force: number of leading iterates that stay within eta
    for z in sample_box(make_map("henon"), 20, radius=0.1, seed=1):
        m = make_map("henon")
        x, y = z
        n = 0
        while n < 40 and math.hypot(x - m.fixed_point[0], y - m.fixed_point[1]) <= 0.1:
            x, y = m.eval(x, y)
            n += 1
        nb = NeighborhoodSpec(m.fixed_point, 0.1, 0.5)
        assert membership_horizon(m, z, nb, 40) == n


def test_second_derivative_examples():
    assert not any(second_derivative_cocycle(make_map("diag"), (0.2, 0.3), 7))
    assert second_derivative_cocycle(make_map("quad"), (0.0, 0.0), 1) == (0, 0, 0, 0, 2.0, 0, 0, 0)


@pytest.mark.parametrize("name,z,k", [("quad", (0.1, 0.1), 3), ("henon", (0.5, 0.15), 4),
                                      ("detvar", (0.1, 0.05), 3)])
def test_second_derivative_matches_finite_differences(name, z, k):
    m = make_map(name)
    step = 1e-5
    x, y = z
    dx = (jac_power(m, (x + step, y), k) - jac_power(m, (x - step, y), k)) / (2 * step)
    dy = (jac_power(m, (x, y + step), k) - jac_power(m, (x, y - step), k)) / (2 * step)
    fd = np.empty(8)
    fd[0::2], fd[1::2] = dx.ravel(), dy.ravel()
    got = np.array(second_derivative_cocycle(m, z, k))
    assert np.linalg.norm(got - fd) <= 1e-5 * np.linalg.norm(fd)


def test_det_derivative_examples():
    assert det_derivative_cocycle(make_map("diag"), (0.1, 0.2), 5) == (0.0, 0.0)
    assert det_derivative_cocycle(make_map("henon"), (0.1, 0.2), 5) == pytest.approx((0.0, 0.0), abs=1e-15)


def test_det_derivative_matches_finite_differences():
    m = make_map("detvar")
    z = (0.1, 0.05)
    step = 1e-6
    det = lambda u, v: np.linalg.det(jac_power(m, (u, v), 2))
    fd = ((det(z[0] + step, z[1]) - det(z[0] - step, z[1])) / (2 * step),
          (det(z[0], z[1] + step) - det(z[0], z[1] - step)) / (2 * step))
    assert det_derivative_cocycle(m, z, 2) == pytest.approx(fd, rel=1e-6)


@pytest.mark.parametrize("name", ["diag", "shear", "quad", "detvar"])
def test_products_do_not_overflow(name):
    # p = (0, 0) is exact for these maps, so the orbit stays put
    fmap = make_map(name)
    t = build_trace(fmap, fmap.fixed_point, 1200)
    assert t.log_F[-1] == pytest.approx(1200 * math.log(2.0), rel=1e-3)
    assert t.F[-1] == math.inf and t.H[-1] == 0.0
    m, s = t.products[1200]
    assert m.is_finite() and s > 1000


def test_diverging_orbit_raises():
    m = make_map("henon")
    with pytest.raises(OverflowHorizon):
        build_trace(m, (3.0, 0.0), 400)
