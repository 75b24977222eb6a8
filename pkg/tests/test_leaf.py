from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.spatial import cKDTree

from stableleaf.cocycle import membership_horizon
from stableleaf.dynsys import make_map
from stableleaf.errors import GridMismatch, NoInverse
from stableleaf.leaf import (
    LeafCurve,
    global_extend,
    global_extend_generations,
    gronwall_constant,
    inductive_check,
    integrate_leaf,
    leaf_distance,
    limit_leaf,
    successive_distance,
)

QUAD_C = -4.0 / 7.0  # c = 1 / (lambda^2 - mu) for lambda = 0.5, mu = 2


def angle_between_lines(u, v):
    return math.atan2(abs(u[0] * v[1] - u[1] * v[0]), abs(u[0] * v[0] + u[1] * v[1]))


def endpoint_ratio(fmap, k, eta):
    ends = []
    for i in range(3):
        leaf = integrate_leaf(fmap, k, eta, eta / 100 / 2 ** i)
        ends.append(np.concatenate([leaf.plus[-1], leaf.minus[-1]]))
    return np.linalg.norm(ends[0] - ends[1]) / np.linalg.norm(ends[1] - ends[2])


def test_diag_leaf_is_x_axis():
    leaf = integrate_leaf(make_map("diag"), 3, 0.1)
    pts = leaf.points()
    assert np.abs(pts[:, 1]).max() <= 1e-12
    assert leaf.complete and leaf.lengths == pytest.approx((0.1, 0.1))
    assert pts[0, 0] == pytest.approx(-0.1) and pts[-1, 0] == pytest.approx(0.1)


def test_quad_leaf_matches_graph():
    leaf = integrate_leaf(make_map("quad"), 25, 0.1, 1e-4)
    pts = leaf.points()
    assert np.abs(pts[:, 1] - QUAD_C * pts[:, 0] ** 2).max() <= 1e-6


def test_henon_leaf_tangent_at_p():
    h = make_map("henon")
    leaf = integrate_leaf(h, 20, 0.05)
    assert tuple(leaf.plus[0]) == h.fixed_point
    assert angle_between_lines(leaf.tangents_plus[0], h.stable_dir) <= 1e-5


def test_step_validation():
    q = make_map("quad")
    with pytest.raises(ValueError, match="positive"):
        integrate_leaf(q, 3, 0.1, 0.0)
    with pytest.raises(ValueError, match="eta/100"):
        integrate_leaf(q, 3, 0.1, 0.01)


def test_csv_round_trip(tmp_path):
    leaf = integrate_leaf(make_map("henon"), 6, 0.05)
    path = tmp_path / "leaf_k6.csv"
    leaf.to_csv(path)
    back = LeafCurve.from_csv(path)
    assert back.k == 6 and back.h == leaf.h
    assert np.array_equal(back.points(), leaf.points())
    assert np.array_equal(back.params(), leaf.params())
    header = path.read_text().splitlines()[0]
    assert header == "t,x,y,k"


def test_leaf_distance_examples():
    d = make_map("diag")
    a, b = integrate_leaf(d, 4, 0.1), integrate_leaf(d, 5, 0.1)
    assert leaf_distance(a, a) == 0.0
    assert leaf_distance(a, b) <= 1e-13
    with pytest.raises(GridMismatch):
        leaf_distance(a, integrate_leaf(d, 5, 0.1, 5e-5))


def test_quad_successive_distance_bounded_by_hyperbolicity():
    q = make_map("quad")
    ratios = []
    for k in (4, 5, 6, 7):
        sd = successive_distance(q, k, 0.1)
        ratios.append(sd.distance / (0.1 * sd.H_bar))
    assert max(ratios) < 1.0
    # the direct grid distance agrees where it is above the rounding floor
    sd = successive_distance(q, 3, 0.1)
    direct = leaf_distance(integrate_leaf(q, 3, 0.1), integrate_leaf(q, 4, 0.1))
    assert sd.distance == pytest.approx(direct, rel=1e-6)


@pytest.mark.parametrize("name,k,eta", [("quad", 10, 0.5), ("henon", 10, 0.5)])
def test_integrator_is_fourth_order(name, k, eta):
    # at eta = 0.1 the RK4 error already sits at rounding level, so use a longer leaf
    assert 8.0 <= endpoint_ratio(make_map(name), k, eta) <= 32.0


def test_inductive_check_passes_on_diag():
    d = make_map("diag")
    K = gronwall_constant(d, 0.05)
    for k in range(1, 21):
        assert inductive_check(d, k, 0.05, 0.5, K_emp=K).passed


def test_inductive_check_base_case():
    assert inductive_check(make_map("henon"), 1, 0.02, 0.5).passed


def test_inductive_check_fails_with_witness_when_eta_too_large():
    h = make_map("henon")
    v = inductive_check(h, 1, 0.5, 0.5)
    assert not v.passed and v.witness is not None
    # confirm by direct iteration: the witness leaves the eps-ball within k+1 steps
    assert membership_horizon(h, v.witness, 0.5, 2, center=h.fixed_point) < 2


def test_limit_leaf_diag_converges_immediately():
    curve, rep = limit_leaf(make_map("diag"), 0.1, 1e-10)
    assert rep.converged_k == 1
    assert math.isinf(curve.k)
    assert np.abs(curve.points()[:, 1]).max() == 0.0


def test_limit_leaf_quad(limit_of):
    _, curve, rep = limit_of("quad")
    pts = curve.points()
    assert np.abs(pts[:, 1] - QUAD_C * pts[:, 0] ** 2).max() <= 1e-6
    # successive leaves approach at lambda^2/mu = 1/8 per step
    assert rep.converged_k == pytest.approx(math.log(1e-9) / math.log(1 / 8), abs=6)


def test_limit_leaf_henon_samples_converge_to_p(limit_of):
    h, curve, _ = limit_of("henon", 0.05)
    pts = curve.points()
    # a float orbit eventually drifts off at |lambda_u|^n, so look at its closest approach
    step = len(pts) // 10
    for x, y in pts[step // 2::step][:10]:
        dists = []
        for _ in range(30):
            x, y = h.eval(x, y)
            dists.append(math.hypot(x - h.fixed_point[0], y - h.fixed_point[1]))
        assert min(dists) < 1e-6
        assert all(b < a for a, b in zip(dists[:6], dists[1:6]))


@pytest.mark.parametrize("name,eta", [("quad", 0.1), ("henon", 0.05)])
def test_limit_leaf_is_invariant(limit_of, name, eta):
    fmap, curve, _ = limit_of(name, eta)
    pts = curve.points()
    tree = cKDTree(pts)
    img = np.array([fmap.eval(x, y) for x, y in pts])
    dist, _ = tree.query(img)
    assert dist.max() <= 5 * curve.h


def test_global_extend_diag_and_n0():
    d = make_map("diag")
    local = integrate_leaf(d, 1, 0.1)
    assert np.array_equal(global_extend(d, local, 0), local.points())
    cloud = global_extend(d, local, 3)
    assert np.abs(cloud[:, 1]).max() == 0.0
    assert cloud[:, 0].min() == pytest.approx(-0.8) and cloud[:, 0].max() == pytest.approx(0.8)


def test_global_extend_henon_returns_to_local_leaf(limit_of):
    h, curve, _ = limit_of("henon", 0.05)
    gens = global_extend_generations(h, curve, 6)
    p = np.array(h.fixed_point)
    rng = np.random.default_rng(1)
    for j, g in enumerate(gens):
        for x, y in g[rng.choice(len(g), size=min(len(g), 20), replace=False)]:
            for _ in range(j):
                x, y = h.eval(x, y)
            assert math.hypot(x - p[0], y - p[1]) <= 0.05 * (1 + 1e-6)
            for _ in range(30):
                x, y = h.eval(x, y)
                assert math.hypot(x - p[0], y - p[1]) <= 0.05 * (1 + 1e-6)


def test_global_extend_needs_inverse():
    m = make_map("detvar")
    with pytest.raises(NoInverse):
        global_extend(m, integrate_leaf(m, 2, 0.1), 2)
