"""Effort fields, region Lyapunov functions, the global complete Lyapunov
function for maps, and the integral lift to flows.

The minimum jump-then-map cost from a set C (the effort field) is a dense
shortest-path problem; everything downstream is truncated geometric summation
over map iterates, regions, and a ternary-weighted region series.
"""

from dataclasses import dataclass, field

import numpy as np

from ._kernels import SINK, effort_occupancy
from .space import PointSet
from .errfn import ErrorFunction, trapping_error
from . import systems as _systems
from .conley import TrappingRegion, attracting_set, trapping_from_chain
from .chains import build_chain_graph, chain_components, chain_recurrent_limit


@dataclass
class ScalarField:
    """A real value per sample point."""

    values: np.ndarray
    range_tag: str = "[0,inf)"
    provenance: str = "effort"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("scalar fields must be finite everywhere")


def effort_field(space, system, eps, C):
    """Minimum sigma-chain cost from C to every point.

    Computed as a dense shortest-path relaxation over occupancy states plus
    one final jump; finite everywhere on a finite sample.
    """
    if C.size() == 0:
        raise ValueError("effort needs a nonempty source set")
    tab = system if system.is_tabulated else _systems.tabulate(system, space)
    dmat = space.distance_matrix()
    dist = effort_occupancy(dmat, eps.values, tab.img, C.mask)
    finite = np.isfinite(dist)
    inv = 1.0 / eps.values[finite]
    combined = dist[finite][:, None] + dmat[finite] * inv[:, None]
    values = combined.min(axis=0)
    if not np.all(np.isfinite(values)):
        raise AssertionError("effort field produced a non-finite value")
    return ScalarField(values, "[0,inf)", "effort",
                       {"sources": int(C.size())})


def _image_closure(space, img, region_mask):
    out = img[region_mask]
    out = out[out != SINK]
    mask = np.zeros(region_mask.shape[0], dtype=bool)
    mask[out] = True
    return space.closure(PointSet(mask))


def effort_k(space, system, eps, trap, k):
    """Effort toward closure(phi^k(region)) under the k-th power map."""
    if k < 1:
        raise ValueError("need k >= 1")
    if np.any(eps.values > 1.0):
        raise ValueError("effort_k expects a trap-derived tolerance in (0, 1]")
    tab = system if system.is_tabulated else _systems.tabulate(system, space)
    sysk = _systems.power(tab, k)
    C = _image_closure(space, sysk.img, trap.region.mask)
    f = effort_field(space, sysk, eps, C)
    f.meta["k"] = k
    return f


def _orbit_table(img, n_steps):
    """pos[j][i] = phi^j(i) with sink propagation (SINK stays SINK)."""
    n = img.shape[0]
    pos = [np.arange(n, dtype=np.int64)]
    for _ in range(n_steps):
        prev = pos[-1]
        nxt = np.where(prev == SINK, SINK, img[np.maximum(prev, 0)])
        pos.append(nxt)
    return pos


def _lookup(values, idx, sink_value):
    out = np.where(idx == SINK, sink_value, values[np.maximum(idx, 0)])
    return out


def averaged_effort(space, system, eps, trap, k):
    """Average of the k-power effort along the first k iterates of the map.

    Orbits that escape the window saturate at 1 (they are outside every
    trapping region, where the effort is at least 1).
    """
    tab = system if system.is_tabulated else _systems.tabulate(system, space)
    ek = effort_k(space, tab, eps, trap, k)
    pos = _orbit_table(tab.img, k - 1)
    acc = np.zeros(space.n)
    for j in range(k):
        acc += _lookup(ek.values, pos[j], 1.0)
    return ScalarField(acc / k, "[0,inf)", "averaged", {"k": k})


def region_energy(space, system, eps, trap, K_max=20):
    """Truncated sum over k of min(averaged effort, 1) / 2^k; values in [0,1]."""
    if K_max < 1:
        raise ValueError("need K_max >= 1")
    tab = system if system.is_tabulated else _systems.tabulate(system, space)
    acc = np.zeros(space.n)
    for k in range(1, K_max + 1):
        ek = averaged_effort(space, tab, eps, trap, k)
        acc += np.minimum(ek.values, 1.0) / 2.0 ** k
    return ScalarField(acc, "[0,1]", "region-energy",
                       {"K_max": K_max, "truncation": 2.0 ** -K_max,
                        "saturated": 1.0 - 2.0 ** -K_max})


def region_lyapunov(space, system, eps, trap, K_max=20, J_max=20):
    """Region weak Lyapunov function, normalized to [0, 1].

    The orbit-weighted sum of the region energy carries total weight 2; the
    result is halved so the zero set is the attracting set and the one set is
    the complement of the basin, both within 2^-(min(K,J)-2).
    """
    if J_max < 1:
        raise ValueError("need J_max >= 1")
    tab = system if system.is_tabulated else _systems.tabulate(system, space)
    et = region_energy(space, tab, eps, trap, K_max)
    sat = et.meta["saturated"]
    pos = _orbit_table(tab.img, J_max - 1)
    acc = np.zeros(space.n)
    for j in range(J_max):
        acc += _lookup(et.values, pos[j], sat) / 2.0 ** j
    tol = 2.0 ** -(min(K_max, J_max) - 2)
    one_value = sat * (1.0 - 2.0 ** -J_max)
    return ScalarField(acc / 2.0, "[0,1]", "region-lyapunov",
                       {"K_max": K_max, "J_max": J_max, "tolerance": tol,
                        "one_value": one_value})


@dataclass
class RegionRecord:
    trap: TrappingRegion
    seed: int
    eps_level: float
    trap_eps: ErrorFunction
    lyap: ScalarField


@dataclass
class RegionFamily:
    """Deduplicated, size-ordered strong trapping regions with their fields."""

    records: list
    eps_levels: list
    seeds: list
    dropped: int = 0

    def __len__(self):
        return len(self.records)


@dataclass
class CheckResult:
    name: str
    passed: bool
    witnesses: list = field(default_factory=list)

    def __str__(self):
        tag = "pass" if self.passed else "FAIL"
        extra = f" witnesses={self.witnesses[:5]}" if self.witnesses else ""
        return f"[{tag}] {self.name}{extra}"


@dataclass
class VerificationReport:
    checks: list

    @property
    def all_passed(self):
        return all(c.passed for c in self.checks)

    def __str__(self):
        return "\n".join(str(c) for c in self.checks)


@dataclass
class GlobalLyapunovResult:
    field: ScalarField
    family: RegionFamily
    components: list  # (PointSet, L value) per chain component
    ladder: object
    verification: VerificationReport


def _build_region_family(space, tab, seeds, eps_levels, region_cap, m=2):
    seen = {}
    for lev, eps_v in enumerate(eps_levels):
        eps = ErrorFunction(np.full(space.n, eps_v), "constant")
        graph = build_chain_graph(space, tab, eps)
        for seed in seeds:
            try:
                trap = trapping_from_chain(graph, int(seed), m=m)
            except ValueError:
                continue
            key = trap.region.mask.tobytes()
            if key not in seen:
                seen[key] = (trap, int(seed), eps_v)
    ordered = sorted(
        seen.values(),
        key=lambda t: (t[0].region.size(), tuple(t[0].region.indices())))
    dropped = max(0, len(ordered) - region_cap)
    return ordered[:region_cap], dropped


def global_lyapunov(space, system, D_budget=None, K_max=20, J_max=20,
                    region_cap=32, eps0=None, max_levels=25):
    """Complete Lyapunov function for a map over the sample.

    Builds strong trapping regions from chain targets of deterministic seeds
    crossed with a halving tolerance ladder, dedups and size-orders them,
    and sums the per-region Lyapunov functions with ternary weights.
    """
    tab = system if system.is_tabulated else _systems.tabulate(system, space)
    n = space.n
    if D_budget is None:
        D_budget = n
    if D_budget < 1 or K_max < 1 or J_max < 1 or region_cap < 1:
        raise ValueError("budgets must be >= 1")
    stride = int(np.ceil(n / D_budget))
    seeds = list(range(0, n, stride))
    diam = space.diameter()
    if eps0 is None:
        eps0 = diam / 4.0
    from .errfn import snap_floor
    bound = snap_floor(space, tab)
    minpd = space.min_positive_distance()
    eps_levels = []
    for m_ in range(max_levels):
        v = eps0 / 2.0 ** m_
        if bound > 0 and v < bound:
            break
        eps_levels.append(v)
        if v < minpd:
            break
    records_raw, dropped = _build_region_family(space, tab, seeds, eps_levels,
                                                region_cap)
    records = []
    for trap, seed, lev in records_raw:
        te = trapping_error(space, tab, trap, T=1, kind="strong")
        lj = region_lyapunov(space, tab, te, trap, K_max, J_max)
        records.append(RegionRecord(trap, seed, lev, te, lj))
    family = RegionFamily(records, eps_levels, seeds, dropped)
    acc = np.zeros(n)
    for j, rec in enumerate(records, start=1):
        acc += 2.0 * rec.lyap.values / 3.0 ** j
    L = ScalarField(acc, "[0,1]", "global",
                    {"regions": len(records), "K_max": K_max, "J_max": J_max})
    # recurrence structure at the ladder floor
    floor_eps = eps_levels[-1] if eps_levels else eps0
    ladder = chain_recurrent_limit(space, tab, eps0, max(1, len(eps_levels)))
    graph = ladder.final_graph
    comps = chain_components(graph)
    components = [(c, float(L.values[c.indices()[0]])) for c in comps]
    verification = verify_global_lyapunov(space, tab, L, family, graph,
                                          ladder.estimate, comps)
    return GlobalLyapunovResult(L, family, components, ladder, verification)


def verify_global_lyapunov(space, tab, L, family, graph, chrec, comps,
                           tol=1e-12):
    """The complete-Lyapunov verification bundle for a map."""
    img = tab.img
    vals = L.values
    checks = []
    ok_idx = np.nonzero(img != SINK)[0]
    diff = vals[img[ok_idx]] - vals[ok_idx]
    bad = ok_idx[diff > tol]
    checks.append(CheckResult("monotone: L(phi(x)) <= L(x) everywhere",
                              bad.size == 0, bad.tolist()))
    trans = ok_idx[~chrec.mask[ok_idx]]
    # L(phi(x)) < L(x) iff some region field strictly drops (all region
    # weights are positive); checking per region avoids losing deep-orbit
    # drops to the ternary attenuation of the summed field
    strict_ok = vals[img[trans]] < vals[trans]
    for rec in family.records:
        lj = rec.lyap.values
        strict_ok |= lj[img[trans]] < lj[trans]
    strict_bad = trans[~strict_ok]
    checks.append(CheckResult(
        "strict decrease off the chain recurrent set",
        strict_bad.size == 0, strict_bad.tolist()))
    const_bad = []
    for c in comps:
        cv = vals[c.indices()]
        if cv.max() - cv.min() > tol:
            const_bad.append(int(c.indices()[0]))
    checks.append(CheckResult("constant on each chain component",
                              not const_bad, const_bad))
    values = [vals[c.indices()[0]] for c in comps]
    inj_bad = []
    for a in range(len(values)):
        for b in range(a + 1, len(values)):
            if abs(values[a] - values[b]) <= tol:
                inj_bad.append((int(comps[a].indices()[0]),
                                int(comps[b].indices()[0])))
    checks.append(CheckResult("distinct values across components",
                              not inj_bad, inj_bad))
    # condensation order: a chain path C -> C' forces L(C) > L(C')
    reach_bad = []
    adj = {}
    for a, b in graph.comp_edges:
        adj.setdefault(a, set()).add(b)
    comp_label = [int(graph.labels[c.indices()[0]]) for c in comps]
    for a_i, la in enumerate(comp_label):
        seen = set()
        stack = [la]
        while stack:
            u = stack.pop()
            for v in adj.get(u, ()):
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        for b_i, lb in enumerate(comp_label):
            if a_i != b_i and lb in seen and not values[a_i] > values[b_i]:
                reach_bad.append((a_i, b_i))
    checks.append(CheckResult("condensation order respected by L",
                              not reach_bad, reach_bad))
    # ternary digits: on the recurrent estimate each region field is 0 or 1
    digit_bad = []
    if family.records:
        dig_tol = family.records[0].lyap.meta["tolerance"]
        one_val = family.records[0].lyap.meta["one_value"]
        for rec in family.records:
            lv = rec.lyap.values[chrec.mask]
            near0 = lv <= dig_tol
            near1 = np.abs(lv - one_val) <= dig_tol
            if not np.all(near0 | near1):
                digit_bad.append(rec.seed)
        checks.append(CheckResult(
            "ternary digits in {0,2} on the recurrent set",
            not digit_bad, digit_bad))
    return VerificationReport(checks)


# ---------------------------------------------------------------------------
# integral lift to continuous time
# ---------------------------------------------------------------------------

@dataclass
class FlowLiftResult:
    field: ScalarField
    evaluate: object  # callable on raw coordinates
    verification: VerificationReport
    quad_nodes: int


def flow_lyapunov(space, flow, ell, quad_nodes=32, chrec=None, comps=None,
                  decrease_ladder=None, quad_tol=1e-6):
    """Complete Lyapunov function for a flow: L(x) = integral over one time
    unit of ell along the trajectory, by composite Simpson quadrature.

    ell is a ScalarField for the time-1 discretization, extended off-sample
    by nearest-sample lookup.  The verification bundle checks monotonicity
    and strict decrease along sampled trajectories and constancy on chain
    components within the quadrature tolerance.
    """
    if flow.time_kind != "continuous":
        raise ValueError("the integral lift applies to continuous systems")
    if quad_nodes < 8 or quad_nodes % 2:
        raise ValueError("quadrature nodes must be even and >= 8")
    ell_vals = ell.values if isinstance(ell, ScalarField) else np.asarray(ell)

    def ell_at(p):
        i, _ = space.nearest(np.atleast_1d(p))
        return ell_vals[i]

    hstep = 1.0 / quad_nodes
    weights = np.ones(quad_nodes + 1)
    weights[1:-1:2] = 4.0
    weights[2:-1:2] = 2.0
    weights *= hstep / 3.0

    def L_at(p):
        p = np.atleast_1d(np.asarray(p, float))
        total = 0.0
        for i in range(quad_nodes + 1):
            q = np.atleast_1d(_systems.evaluate(flow, i * hstep, p))
            total += weights[i] * ell_at(q)
        return total

    values = np.array([L_at(space.coords[i]) for i in range(space.n)])
    fieldv = ScalarField(values, "[0,1]", "flow-lift",
                         {"quad_nodes": quad_nodes})
    checks = []
    if decrease_ladder is None:
        decrease_ladder = np.arange(1, 21) * 0.1  # t in (0, 2]
    mono_bad, strict_bad = [], []
    for i in range(space.n):
        Lx = values[i]
        for t in decrease_ladder:
            q = np.atleast_1d(_systems.evaluate(flow, float(t), space.coords[i]))
            Lq = L_at(q)
            if Lq > Lx + quad_tol:
                mono_bad.append((i, float(t)))
                break
        if chrec is not None and not chrec.mask[i]:
            q = np.atleast_1d(_systems.evaluate(flow, float(decrease_ladder[0]),
                                                space.coords[i]))
            if not L_at(q) < Lx:
                strict_bad.append(i)
    checks.append(CheckResult("monotone along sampled trajectories",
                              not mono_bad, mono_bad))
    if chrec is not None:
        checks.append(CheckResult("strict decrease off the recurrent estimate",
                                  not strict_bad, strict_bad))
    if comps is not None:
        const_bad = []
        for c in comps:
            cv = values[c.indices()]
            if cv.max() - cv.min() > quad_tol:
                const_bad.append(int(c.indices()[0]))
        checks.append(CheckResult("constant on chain components "
                                  "(quadrature tolerance)",
                                  not const_bad, const_bad))
    return FlowLiftResult(fieldv, L_at, VerificationReport(checks), quad_nodes)
