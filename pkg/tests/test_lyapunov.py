import numpy as np
import pytest

import chainrec as cr
from chainrec.lyapunov import verify_global_lyapunov, RegionFamily
from oracles import effort_bounded, effort_recursive, periodic_points, SINK


def right_well_trap(space, system):
    region = cr.PointSet((space.coords[:, 0] > 0.6) & (space.coords[:, 0] < 1.2))
    return cr.is_trapping(space, system, region, T=1, kind="strong").trap


# -- effort field --------------------------------------------------------------

def test_effort_zero_on_sources():
    rng = np.random.default_rng(2)
    space = cr.build_point_cloud(rng.uniform(0, 1, (20, 2)))
    system = cr.tabulated_system(rng.integers(0, 20, 20))
    eps = cr.make_error(space, 0.3)
    C = cr.PointSet.from_indices(20, [3, 11, 17])
    E = cr.effort_field(space, system, eps, C)
    assert np.all(E.values[C.mask] == 0.0)
    assert np.all(E.values >= 0)


def test_effort_two_point_identity():
    space = cr.build_point_cloud([[0.0], [1.0]])
    ident = cr.tabulated_system([0, 1])
    eps = cr.make_error(space, 0.5)
    E = cr.effort_field(space, ident, eps, cr.PointSet.from_indices(2, [0]))
    assert E.values[0] == 0.0
    assert E.values[1] == pytest.approx(2.0)


def test_effort_matches_bounded_enumeration_five_points():
    rng = np.random.default_rng(5)
    space = cr.build_point_cloud(rng.uniform(0, 1, (5, 2)))
    img = rng.integers(0, 5, 5)
    system = cr.tabulated_system(img)
    eps = cr.make_error(space, np.full(5, 1.0))
    C = cr.PointSet.from_indices(5, [0])
    E = cr.effort_field(space, system, eps, C)
    want = effort_bounded(space.distance_matrix(), img, eps.values,
                          C.mask, max_len=6)
    assert np.allclose(E.values, want, atol=1e-12)


def test_bounded_enumeration_agrees_with_recursive_oracle():
    # oracle-of-the-oracle: min-plus vs plain recursion on a tiny space
    rng = np.random.default_rng(6)
    space = cr.build_point_cloud(rng.uniform(0, 1, (4, 2)))
    img = rng.integers(0, 4, 4)
    eps = rng.uniform(0.2, 1.0, 4)
    src = np.array([True, False, False, True])
    a = effort_bounded(space.distance_matrix(), img, eps, src, max_len=4)
    b = effort_recursive(space.distance_matrix(), img, eps, src, max_len=4)
    assert np.allclose(a, b, atol=1e-12)


def test_effort_monotone_under_map():
    # E(C; phi(x)) <= E(C; x), exact on tabulated systems
    rng = np.random.default_rng(7)
    for _ in range(5):
        n = int(rng.integers(10, 60))
        space = cr.build_point_cloud(rng.uniform(0, 1, (n, 2)))
        img = rng.integers(0, n, n)
        system = cr.tabulated_system(img)
        eps = cr.make_error(space, rng.uniform(0.1, 1.0, n))
        C = cr.PointSet.from_indices(
            n, rng.choice(n, max(1, n // 6), replace=False))
        E = cr.effort_field(space, system, eps, C).values
        assert np.all(E[img] <= E + 1e-12)


def test_effort_triangle_optimality():
    rng = np.random.default_rng(8)
    space = cr.build_point_cloud(rng.uniform(0, 1, (8, 2)))
    img = rng.integers(0, 8, 8)
    system = cr.tabulated_system(img)
    eps = cr.make_error(space, np.full(8, 0.7))
    C = cr.PointSet.from_indices(8, [2])
    E = cr.effort_field(space, system, eps, C).values
    d = space.distance_matrix()
    from chainrec._kernels import effort_occupancy

    dist = effort_occupancy(d, eps.values, img, C.mask)
    for x in range(8):
        best = np.inf
        for z in range(8):
            if np.isfinite(dist[z]):
                best = min(best, dist[z] + d[z, x] / eps.values[z])
        assert E[x] == pytest.approx(best)
    assert np.all(E <= np.where(np.isfinite(dist), dist, np.inf) + 1e-12)


def test_effort_rejects_empty_sources():
    space = cr.build_point_cloud([[0.0], [1.0]])
    ident = cr.tabulated_system([0, 1])
    with pytest.raises(ValueError, match="nonempty"):
        cr.effort_field(space, ident, cr.make_error(space, 1.0),
                        cr.PointSet.empty(2))


# -- effort_k / averaged -------------------------------------------------------

def test_effort_k_zero_set_and_off_region_bound(double_well):
    space, system = double_well
    trap = right_well_trap(space, system)
    te = cr.trapping_error(space, system, trap, T=1, kind="strong")
    for k in (1, 2, 4):
        ek = cr.effort_k(space, system, te, trap, k)
        imgk = cr.power(system, k).img
        C = set()
        for i in trap.region.indices():
            if imgk[i] != SINK:
                C.add(int(imgk[i]))
        closed = space.closure(cr.PointSet.from_indices(space.n, C))
        zero = np.nonzero(ek.values <= 1e-14)[0]
        assert sorted(zero) == sorted(closed.indices())
        off = ~trap.region.mask
        assert np.all(ek.values[off] >= 1.0)


def test_effort_k_monotone_under_power_map(double_well):
    space, system = double_well
    trap = right_well_trap(space, system)
    te = cr.trapping_error(space, system, trap, T=1, kind="strong")
    rng = np.random.default_rng(12)
    for k in (1, 3):
        ek = cr.effort_k(space, system, te, trap, k).values
        imgk = cr.power(system, k).img
        for x in rng.integers(0, space.n, 200):
            assert ek[imgk[x]] <= ek[x] + 1e-12


def test_averaged_effort_k1_and_zero_orbit(double_well):
    space, system = double_well
    trap = right_well_trap(space, system)
    te = cr.trapping_error(space, system, trap, T=1, kind="strong")
    e1 = cr.effort_k(space, system, te, trap, 1)
    a1 = cr.averaged_effort(space, system, te, trap, 1)
    assert np.allclose(a1.values, e1.values)
    a3 = cr.averaged_effort(space, system, te, trap, 3)
    sink_cell = space.nearest([0.99])[0]
    assert a3.values[sink_cell] == 0.0


def test_averaged_effort_monotone_under_map(double_well):
    space, system = double_well
    trap = right_well_trap(space, system)
    te = cr.trapping_error(space, system, trap, T=1, kind="strong")
    for k in (2, 5):
        a = cr.averaged_effort(space, system, te, trap, k).values
        assert np.all(a[system.img] <= a + 1e-12)


# -- region energy / region Lyapunov -------------------------------------------

def test_region_energy_zero_on_attractor_saturated_outside(double_well):
    space, system = double_well
    trap = right_well_trap(space, system)
    te = cr.trapping_error(space, system, trap, T=1, kind="strong")
    K = 12
    et = cr.region_energy(space, system, te, trap, K_max=K)
    att = cr.attracting_set(space, system, trap)
    assert np.all(et.values[att.mask] == 0.0)
    bas = cr.basin(space, system, trap)
    outside = ~bas.mask
    assert outside.any()
    assert np.all(et.values[outside] == 1.0 - 2.0 ** -K)
    assert np.all(et.values[system.img] <= et.values + 1e-12)
    assert np.all((0 <= et.values) & (et.values <= 1))


def test_region_lyapunov_suite_double_well(double_well):
    space, system = double_well
    trap = right_well_trap(space, system)
    te = cr.trapping_error(space, system, trap, T=1, kind="strong")
    K = J = 18
    lt = cr.region_lyapunov(space, system, te, trap, K_max=K, J_max=J)
    tol = lt.meta["tolerance"]
    assert tol == 2.0 ** -(min(K, J) - 2)
    vals = lt.values
    assert np.all((0 <= vals) & (vals <= 1))
    att = cr.attracting_set(space, system, trap)
    bas = cr.basin(space, system, trap)
    assert np.all(vals[att.mask] <= tol)
    assert np.all(vals[att.mask] == 0.0)  # exact on tabulated systems
    outside = ~bas.mask
    assert np.all(np.abs(vals[outside] - lt.meta["one_value"]) <= tol)
    assert np.all(np.abs(vals[outside] - 1.0) <= tol)
    transient = bas.mask & ~att.mask
    assert np.all(vals[system.img[transient]] < vals[transient])
    # zero set is exactly the attracting set
    assert np.array_equal(vals == 0.0, att.mask)


def test_region_lyapunov_path_map_hand_computation(path_map):
    space, system = path_map
    region = cr.PointSet.from_indices(3, [1, 2])
    trap = cr.is_trapping(space, system, region, T=1, kind="strong").trap
    te = cr.trapping_error(space, system, trap, T=1, kind="strong")
    assert np.allclose(te.values, [1.0, 1.0, 1.0])
    K = J = 20
    lt = cr.region_lyapunov(space, system, te, trap, K_max=K, J_max=J)
    # hand computation from the definitions (E_k via the brute oracle)
    d = space.distance_matrix()
    imgs = {1: np.array([1, 2, 2]), 2: np.array([2, 2, 2])}
    E_k = {}
    for k in range(1, K + 1):
        imgk = imgs[min(k, 2)]
        C = np.zeros(3, dtype=bool)
        C[np.unique(imgk[[1, 2]])] = True
        E_k[k] = effort_bounded(d, imgk, te.values, C, max_len=3)
    orbit = {0: [0, 1, 2] + [2] * (J + K), 1: [1, 2] + [2] * (J + K),
             2: [2] * (J + K + 2)}
    def Ebar(k, x):
        return np.mean([E_k[k][orbit[x][j]] for j in range(k)])
    def ET(x):
        return sum(min(Ebar(k, x), 1.0) / 2 ** k for k in range(1, K + 1))
    def LT(x):
        return 0.5 * sum(ET(orbit[x][j]) / 2 ** j for j in range(J))
    for x in range(3):
        assert lt.values[x] == pytest.approx(LT(x), abs=1e-12)
    assert lt.values[2] == 0.0
    assert lt.values[0] > lt.values[1] > lt.values[2]


# -- global --------------------------------------------------------------------

def test_global_identity_three_points_three_values():
    space = cr.build_point_cloud([[0.0], [1.0], [2.5]])
    ident = cr.tabulated_system([0, 1, 2])
    res = cr.global_lyapunov(space, ident)
    assert res.verification.all_passed
    assert len(res.components) == 3
    vals = sorted(v for _, v in res.components)
    assert len(set(vals)) == 3
    assert np.all(res.field.values >= 0) and np.all(res.field.values <= 1)


def test_global_path_map_bundle(path_map):
    space, system = path_map
    res = cr.global_lyapunov(space, system)
    assert res.verification.all_passed
    L = res.field.values
    assert L[1] < L[0]  # L(phi(a)) < L(a)
    assert L[2] < L[1]  # L(phi(b)) < L(b)
    assert len(res.components) == 1


def test_global_random_maps_verify_bundle():
    rng = np.random.default_rng(100)
    for _ in range(4):
        n = int(rng.integers(30, 120))
        space = cr.build_point_cloud(rng.uniform(0, 1, (n, 2)))
        img = rng.integers(0, n, n)
        system = cr.tabulated_system(img)
        res = cr.global_lyapunov(space, system)
        assert res.verification.all_passed, str(res.verification)
        # components are exactly the cycles of the map
        comp_union = np.zeros(n, dtype=bool)
        for c, _ in res.components:
            comp_union |= c.mask
        assert np.array_equal(comp_union, periodic_points(img))


def test_global_ternary_digit_structure():
    rng = np.random.default_rng(200)
    n = 60
    space = cr.build_point_cloud(rng.uniform(0, 1, (n, 2)))
    img = rng.integers(0, n, n)
    system = cr.tabulated_system(img)
    res = cr.global_lyapunov(space, system)
    chrec = res.ladder.estimate
    tol = res.family.records[0].lyap.meta["tolerance"]
    one = res.family.records[0].lyap.meta["one_value"]
    for rec in res.family.records:
        lv = rec.lyap.values[chrec.mask]
        assert np.all((lv <= tol) | (np.abs(lv - one) <= tol))


def test_verify_bundle_condensation_order_check():
    # two self-looping fixed points with a one-way chain edge between them:
    # the verifier must demand L(upstream) > L(downstream)
    space = cr.build_point_cloud([[0.0], [10.0]])
    ident = cr.tabulated_system([0, 1])
    eps = cr.ErrorFunction([11.0, 1.0])
    graph = cr.build_chain_graph(space, ident, eps)
    comps = cr.chain_components(graph)
    chrec = cr.chain_recurrent_set(graph)
    assert len(comps) == 2 and chrec.size() == 2
    fam = RegionFamily([], [], [])
    good = cr.ScalarField(np.array([0.9, 0.1]), "[0,1]", "loaded")
    rep = verify_global_lyapunov(space, ident, good, fam, graph, chrec, comps)
    assert all(c.passed for c in rep.checks
               if c.name.startswith("condensation"))
    bad = cr.ScalarField(np.array([0.1, 0.9]), "[0,1]", "loaded")
    rep2 = verify_global_lyapunov(space, ident, bad, fam, graph, chrec, comps)
    orderings = [c for c in rep2.checks if c.name.startswith("condensation")]
    assert orderings and not orderings[0].passed


# -- flow lift -----------------------------------------------------------------

def test_flow_lift_constant_field_is_constant():
    space = cr.build_grid_space([(0.0, 1.0)], [50])
    flow = cr.builtin_flow("logistic-flow")
    ell = cr.ScalarField(np.full(50, 0.37), "[0,1]", "loaded")
    lift = cr.flow_lyapunov(space, flow, ell)
    assert np.allclose(lift.field.values, 0.37, atol=1e-12)


def test_flow_lift_fixed_points_equal_ell(logistic_grid):
    space, flow, tab = logistic_grid
    res = cr.global_lyapunov(space, tab, region_cap=16)
    lift = cr.flow_lyapunov(space, flow, res.field)
    for fp in (0.0, 1.0):
        i = space.nearest([fp])[0]
        # Phi(s, x) = x under the integral at a fixed point
        assert lift.evaluate(np.array([fp])) == pytest.approx(
            res.field.values[i], abs=1e-9)


def test_flow_lift_strict_decrease_from_interior(logistic_grid):
    space, flow, tab = logistic_grid
    res = cr.global_lyapunov(space, tab, region_cap=16)
    lift = cr.flow_lyapunov(space, flow, res.field,
                            chrec=res.ladder.estimate)
    sink_L = lift.evaluate(np.array([1.0]))
    vals = [lift.evaluate(cr.evaluate(flow, t, np.array([0.9])))
            for t in np.arange(0.0, 5.01, 0.1)]
    tol = 1e-6
    for a, b in zip(vals, vals[1:]):
        if abs(a - sink_L) <= tol:
            assert abs(b - sink_L) <= tol
        else:
            assert b < a
    assert abs(vals[-1] - sink_L) <= tol


def test_flow_lift_quadrature_node_validation(logistic_grid):
    space, flow, tab = logistic_grid
    ell = cr.ScalarField(np.linspace(1, 0, space.n), "[0,1]", "loaded")
    with pytest.raises(ValueError, match="even"):
        cr.flow_lyapunov(space, flow, ell, quad_nodes=9)
    with pytest.raises(ValueError, match=">= 8"):
        cr.flow_lyapunov(space, flow, ell, quad_nodes=4)
