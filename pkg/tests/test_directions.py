from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stableleaf.cocycle import build_trace
from stableleaf.directions import (
    angle_derivative_closed_form,
    angle_gap,
    angle_series,
    contracted_direction,
    field_derivative,
    image_gap,
    pushforward_norm,
    singular_frame,
)
from stableleaf.dynsys import builtin_catalog, make_map
from stableleaf.errors import DegenerateSingularValues

GRID = np.linspace(0.0, math.pi, 3600, endpoint=False)
GRID_V = np.stack([np.cos(GRID), np.sin(GRID)])


def jac_power(fmap, z, k):
    x, y = z
    m = np.eye(2)
    for _ in range(k):
        m = np.reshape(fmap.jacobian(x, y), (2, 2)) @ m
        x, y = fmap.eval(x, y)
    return m


def grid_min(m):
    """Brute-force minimiser of ||M v|| over 3600 unit directions."""
    n = np.linalg.norm(m @ GRID_V, axis=0)
    i = int(np.argmin(n))
    return GRID[i], n[i]


def line_angle(u, v):
    return math.atan2(abs(u[0] * v[1] - u[1] * v[0]), abs(u[0] * v[0] + u[1] * v[1]))


def fold(a):
    return (a + math.pi / 2) % math.pi - math.pi / 2


def fd_angle_grad(fmap, z, k, image=False, step=1e-6):
    def ang(x, y):
        u, _, vt = np.linalg.svd(jac_power(fmap, (x, y), k))
        v = u[:, 1] if image else vt[1]
        return math.atan2(v[1], v[0])

    x, y = z
    gx = fold(ang(x + step, y) - ang(x - step, y)) / (2 * step)
    gy = fold(ang(x, y + step) - ang(x, y - step)) / (2 * step)
    return math.hypot(gx, gy)


def test_singular_frame_examples():
    fr = singular_frame(np.diag([0.5, 2.0]))
    assert fr.e == pytest.approx((1.0, 0.0))
    assert abs(fr.f[1]) == pytest.approx(1.0)
    assert (fr.E, fr.F) == (0.5, 2.0)
    with pytest.raises(DegenerateSingularValues):
        singular_frame(np.eye(2))
    m = np.array([[0.5, 1.0], [0.0, 2.0]])
    fr = singular_frame(m)
    assert fr.F == pytest.approx(math.sqrt((5.25 + math.sqrt(23.5625)) / 2), rel=1e-14)
    assert fr.E == pytest.approx(math.sqrt((5.25 - math.sqrt(23.5625)) / 2), rel=1e-12)
    th, _ = grid_min(m)
    assert line_angle(fr.e, (math.cos(th), math.sin(th))) <= math.pi / 3600


def test_singular_frame_grid_oracle_random_matrices():
    rng = np.random.default_rng(0x5EED)
    for _ in range(1000):
        cond = 10.0 ** rng.uniform(math.log10(1.1), 8.0)
        q1, _ = np.linalg.qr(rng.normal(size=(2, 2)))
        q2, _ = np.linalg.qr(rng.normal(size=(2, 2)))
        scale = 10.0 ** rng.uniform(-3, 3)
        m = q1 @ np.diag([scale * cond, scale]) @ q2
        fr = singular_frame(m)
        _, best = grid_min(m)
        me = np.linalg.norm(m @ np.array(fr.e))
        assert me <= best * (1 + 1e-9) + 4e-16 * fr.F
        assert fr.F == pytest.approx(scale * cond, rel=1e-12)
        assert fr.E == pytest.approx(scale, rel=1e-8)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=4, max_size=4))
def test_singular_frame_invariants(entries):
    m = np.reshape(entries, (2, 2))
    s = np.linalg.svd(m, compute_uv=False)
    if s[0] == 0.0 or s[0] - s[1] <= 1e-9 * s[0] or s[1] < 1e-5 * s[0]:
        return
    fr = singular_frame(m)
    assert fr.E == pytest.approx(s[1], rel=1e-9, abs=1e-12 * s[0])
    assert fr.F == pytest.approx(s[0], rel=1e-12)
    assert np.dot(fr.e, fr.f) == pytest.approx(0.0, abs=1e-15)
    # hypot, not numpy norm: the latter squares and underflows for tiny entries
    assert math.hypot(*(m @ np.array(fr.e))) == pytest.approx(fr.E, rel=1e-8, abs=1e-12 * fr.F)
    assert math.hypot(*(m @ np.array(fr.f))) == pytest.approx(fr.F, rel=1e-12)


def test_contracted_direction_examples():
    d = make_map("diag")
    for k in (1, 5, 20):
        fr = contracted_direction(d, (0.03, -0.02), k)
        assert fr.e == (1.0, 0.0)
        assert fr.E == 0.5 ** k and fr.F == 2.0 ** k
    q = make_map("quad")
    fr = contracted_direction(q, (0.05, -0.001), 5)
    th, _ = grid_min(jac_power(q, (0.05, -0.001), 5))
    assert line_angle(fr.e, (math.cos(th), math.sin(th))) <= math.pi / 3600


def test_shear_directions_converge_to_x_axis_with_matching_gaps():
    s = make_map("shear")
    z = (0.1, 0.1)
    m = np.array([[0.5, 1.0], [0.0, 2.0]])
    prev = None
    for k in range(1, 11):
        e = np.linalg.svd(np.linalg.matrix_power(m, k))[2][1]
        fr = contracted_direction(s, z, k)
        assert line_angle(fr.e, e) <= 1e-12
        if prev is not None:
            assert angle_gap(s, z, k - 1) == pytest.approx(line_angle(prev, e), rel=1e-6, abs=1e-15)
        prev = e
    assert line_angle(contracted_direction(s, z, 30).e, (1.0, 0.0)) < 1e-8


def test_gap_ratio_follows_hyperbolicity_ratio():
    # ratio of successive gaps equals H_{k+1}/H_k = |lambda_s/lambda_u| = 1/4 for the shear
    g = np.array(angle_series(make_map("shear"), (0.1, 0.1), 12).gaps)
    assert g[5:] / g[4:-1] == pytest.approx(0.25, abs=2e-3)
    assert not any(angle_series(make_map("diag"), (0.05, 0.02), 12).gaps)


@pytest.mark.parametrize("fmap", builtin_catalog(), ids=lambda m: m.name)
def test_image_gap_identity(fmap):
    # tan(gap_k) = H_{k+1} tan(image gap)
    z = (fmap.fixed_point[0] + 0.01 * fmap.stable_dir[0] + 1e-4,
         fmap.fixed_point[1] + 0.01 * fmap.stable_dir[1])
    tr = build_trace(fmap, z, 21)
    for k in range(1, 21):
        lhs = math.tan(angle_gap(fmap, z, k))
        rhs = tr.H[k + 1] * math.tan(image_gap(fmap, z, k))
        assert lhs == pytest.approx(rhs, rel=1e-8, abs=1e-300)


def test_gap_bounded_by_hyperbolicity_at_p():
    h = make_map("henon")
    tr = build_trace(h, h.fixed_point, 16)
    r = [angle_gap(h, h.fixed_point, k) / tr.H[k] for k in range(1, 16)]
    assert max(r) < 1.0
    assert max(r[5:]) / min(r[5:]) < 1.01


def test_pushforward_norm():
    h = make_map("henon")
    p = h.fixed_point
    tr = build_trace(h, p, 12)
    assert pushforward_norm(h, p, 0, 12) == 1.0
    assert pushforward_norm(h, p, 12, 12) == pytest.approx(tr.E[12], rel=1e-10)
    e = np.linalg.svd(jac_power(h, p, 12))[2][1]
    ks = []
    for j in range(1, 12):
        direct = np.linalg.norm(jac_power(h, p, j) @ e)
        got = pushforward_norm(h, p, j, 12)
        assert abs(got - direct) <= 1e-14 * tr.F[j] + 1e-9 * direct
        ks.append(got / tr.E[j])
    assert max(ks) < 2.0


def test_angle_derivative_examples():
    assert angle_derivative_closed_form(make_map("diag"), (0.05, 0.01), 6) == (0.0, 0.0)
    q = make_map("quad")
    d_theta, d_img = angle_derivative_closed_form(q, (0.05, 0.0), 4)
    assert d_theta == pytest.approx(fd_angle_grad(q, (0.05, 0.0), 4), rel=1e-4)
    assert d_img == pytest.approx(fd_angle_grad(q, (0.05, 0.0), 4, image=True), rel=1e-4)
    h = make_map("henon")
    _, d_img = angle_derivative_closed_form(h, h.fixed_point, 8)
    assert d_img / build_trace(h, h.fixed_point, 8).F[8] < 1.0


def test_angle_derivative_matches_finite_differences_random():
    rng = np.random.default_rng(11)
    maps = [make_map(n) for n in ("shear", "quad", "henon", "detvar")]
    checked = 0
    while checked < 30:
        fmap = maps[rng.integers(len(maps))]
        k = int(rng.integers(1, 8))
        z = (fmap.fixed_point[0] + rng.uniform(-0.1, 0.1), fmap.fixed_point[1] + rng.uniform(-0.1, 0.1))
        if build_trace(fmap, z, k).H[k] <= 1e-10:
            continue
        d_theta, _ = angle_derivative_closed_form(fmap, z, k)
        assert d_theta == pytest.approx(fd_angle_grad(fmap, z, k), rel=1e-4, abs=1e-8)
        checked += 1


def test_field_derivative_bounded_on_quad_graph():
    q = make_map("quad")
    z = (0.05, -4.0 / 7.0 * 0.05 ** 2)
    tr = build_trace(q, z, 13)
    de, dphi = zip(*(field_derivative(q, z, k) for k in range(1, 13)))
    assert max(de) < 1.2
    assert max(de[6:]) - min(de[6:]) < 1e-5
    assert max(dp / tr.E[k] for k, dp in enumerate(dphi, start=1)) < 1.0
    assert field_derivative(make_map("diag"), (0.05, 0.0), 5) == (0.0, 0.0)
