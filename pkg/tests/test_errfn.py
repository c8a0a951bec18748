import numpy as np
import pytest

import chainrec as cr
from chainrec.errfn import radius_ladder, snap_floor, check_snap_bound


def rescan_ratio(space, eps, delta):
    """Exhaustive audit of the ratio-band guarantee for a calibrated delta."""
    d = space.distance_matrix()
    e, dl = eps.values, delta.values
    for x in range(space.n):
        near = np.nonzero(d[x] < dl[x])[0]
        assert np.all(e[near] > 0.5 * e[x]), x
        assert np.all(e[near] < 1.5 * e[x]), x


def test_make_error_constant_formula_and_rejections():
    space = cr.build_grid_space([(1.0, 2.0)], [10])
    const = cr.make_error(space, 0.1)
    assert np.all(const.values == 0.1)
    form = cr.make_error(space, "x")
    assert np.allclose(form.values, space.coords[:, 0])
    with pytest.raises(ValueError, match="> 0"):
        cr.make_error(space, 0.0)
    with pytest.raises(ValueError, match="> 0"):
        cr.make_error(space, [0.1, -0.2] * 5)


def test_calibrate_ratio_constant_gives_cap():
    space = cr.build_grid_space([(0.0, 1.0)], [10])
    eps = cr.make_error(space, 0.3)
    delta = cr.calibrate_ratio(space, eps)
    cap = radius_ladder(space)[-1]
    assert np.all(delta.values == cap)


def test_calibrate_ratio_coordinate_field_rescan():
    space = cr.build_grid_space([(1.0, 2.0)], [100])
    eps = cr.make_error(space, "x")
    delta = cr.calibrate_ratio(space, eps)
    assert np.all(delta.values > 0)
    rescan_ratio(space, eps, delta)


def test_calibrate_ratio_two_point_band_violation():
    space = cr.build_finite_space("ab", [[0, 1], [1, 0]])
    eps = cr.make_error(space, [1.0, 10.0])
    delta = cr.calibrate_ratio(space, eps)
    # the partner violates the band at distance 1, so delta stays below it
    assert delta.values[0] < 1.0
    assert delta.values[1] < 1.0
    rescan_ratio(space, eps, delta)


def test_calibrate_pushforward_identity_cap():
    space = cr.build_grid_space([(0.0, 1.0)], [10])
    ident = cr.tabulated_system(np.arange(10))
    eps = cr.make_error(space, space.diameter() + 1.0)
    delta = cr.calibrate_pushforward(space, ident, eps)
    assert np.all(delta.values == radius_ladder(space)[-1])


def test_calibrate_pushforward_doubling_map_band():
    space = cr.build_grid_space([(0.0, 1.0)], [64])
    # exact tabulated doubling: image cell of 2x (clamped into the window)
    img = [space.nearest(np.minimum(2.0 * space.coords[i], 1.0))[0]
           for i in range(64)]
    doubling = cr.tabulated_system(img)
    eps = cr.make_error(space, 0.1)
    delta = cr.calibrate_pushforward(space, doubling, eps)
    # genuine doubling cells (images away from the clamp) need delta <= eps/2
    doubling_zone = space.coords[:, 0] < 0.45
    assert np.all(delta.values[doubling_zone] <= 0.05 + 1e-9)
    d = space.distance_matrix()
    for x in range(64):
        near = np.nonzero(d[x] < delta.values[x])[0]
        fx = doubling.img[x]
        assert np.all(d[fx, doubling.img[near]] < eps.values[fx])


def test_calibrate_pushforward_flow_audit():
    space = cr.build_grid_space([(0.0, 1.0)], [60])
    flow = cr.builtin_flow("logistic-flow")
    eps = cr.make_error(space, 0.05)
    delta = cr.calibrate_pushforward(space, flow, eps, T=1.0)
    assert np.all(delta.values > 0)
    times = delta.meta["ladder_times"]
    assert delta.meta["ladder_step"] <= 1.0 / 20 + 1e-12
    rng = np.random.default_rng(42)
    # Monte-Carlo audit of the pushforward inequality at every ladder time
    for _ in range(10_000):
        i, j = rng.integers(0, 60, 2)
        if space.distance(i, j) >= delta.values[i]:
            continue
        for t in times:
            a = cr.evaluate(flow, float(t), space.coords[i])
            b = cr.evaluate(flow, float(t), space.coords[j])
            ia, _ = space.nearest(a)
            assert space.metric_at(a, b) < eps.values[ia]


def test_trapping_error_logistic_ball_property(logistic_grid):
    space, flow, tab = logistic_grid
    region = cr.PointSet(space.coords[:, 0] > 0.5)
    te = cr.trapping_error(space, flow, region, T=1.0)
    assert te.provenance == "trap-derived"
    assert np.all(te.values > 0) and np.all(te.values <= 1.0)
    # exhaustive re-check: eps-ball around every swept image stays inside
    check = cr.is_trapping(space, flow, region, T=1.0)
    d = space.distance_matrix()
    for w in check.trap.swept.indices():
        ball = np.nonzero(d[w] < te.values[w])[0]
        assert all(region.mask[b] for b in ball)


def test_trapping_error_whole_space_convention(path_map):
    space, system = path_map
    whole = cr.PointSet.full(3)
    te = cr.trapping_error(space, system, whole, T=1, kind="strong")
    # empty complement: the distance-to-empty-set convention keeps eps finite
    assert np.all(te.values > 0) and np.all(te.values <= 1.0)


def test_trapping_error_rejects_non_trapping():
    space = cr.build_grid_space([(0.0, 1.0)], [64])
    img = [space.nearest(np.minimum(2.0 * space.coords[i], 1.0))[0]
           for i in range(64)]
    doubling = cr.tabulated_system(img)
    low = cr.PointSet(space.coords[:, 0] < 0.3)
    with pytest.raises(ValueError, match="not (strong|trapping)"):
        cr.trapping_error(space, doubling, low, T=1, kind="strong")


def test_snap_bound_enforcement(logistic_grid):
    space, flow, tab = logistic_grid
    floor = snap_floor(space, tab)
    assert floor == 2 * (tab.max_snap + space.h)
    with pytest.raises(ValueError, match="snap bound"):
        check_snap_bound(space, tab, cr.make_error(space, floor / 2))
    check_snap_bound(space, tab, cr.make_error(space, floor * 1.01))
    # trap-derived tolerances are exempt (verified post hoc instead)
    region = cr.PointSet(space.coords[:, 0] > 0.5)
    te = cr.trapping_error(space, flow, region, T=1.0)
    check_snap_bound(space, tab, te)


def test_exact_tabulation_has_no_snap_floor():
    space = cr.build_grid_space([(0.0, 10.0)], [10])
    plus_one = cr.tabulate(
        cr.discretize(cr.builtin_flow("translation"), 1.0), space)
    assert plus_one.max_snap == 0.0
    assert snap_floor(space, plus_one) == 0.0
    check_snap_bound(space, plus_one, cr.make_error(space, 1e-6))


def test_calibrated_deltas_positive_everywhere():
    rng = np.random.default_rng(9)
    space = cr.build_point_cloud(rng.uniform(0, 1, size=(25, 2)))
    eps = cr.make_error(space, rng.uniform(0.01, 2.0, 25))
    for delta in (cr.calibrate_ratio(space, eps),
                  cr.calibrate_pushforward(
                      space, cr.tabulated_system(rng.integers(0, 25, 25)),
                      eps)):
        assert np.all(delta.values > 0)
