"""Chains, chain graphs, chain recurrence, components, and rectification.

The discrete engine is the chain graph: edge x -> y iff the jump from the
mapped image phi(x) to y is below tolerance.  Chain recurrence at a fixed
tolerance is then cycle membership, components are strongly connected
components, and the tolerance ladder produces the chain-recurrent-set
estimate.  Continuous-time variable-step chains are handled by validation
against exact flow evaluation and by rectification to exact-T0 steps.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph

from ._kernels import SINK, chain_graph_edges
from .space import PointSet
from .errfn import ErrorFunction, check_snap_bound, snap_floor
from . import systems as _systems


@dataclass
class Chain:
    """An (eps, T)-chain: points x_0..x_k and times t_0..t_{k-1} (each >= T).

    Points are sample indices (discrete systems) or coordinate vectors
    (continuous flows).
    """

    points: list
    times: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if len(self.points) != self.times.shape[0] + 1:
            raise ValueError("a chain needs exactly one more point than times")

    @property
    def length(self):
        return self.times.shape[0]

    def total_time(self):
        return float(self.times.sum())


@dataclass
class SigmaChain:
    """Jump-then-map pairs (x_j, y_j) with x_{j+1} = phi(y_j) exactly."""

    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        self.xs = np.asarray(self.xs, dtype=np.int64)
        self.ys = np.asarray(self.ys, dtype=np.int64)
        if self.xs.shape != self.ys.shape or self.xs.ndim != 1 or not self.xs.size:
            raise ValueError("sigma chain needs matching nonempty index arrays")

    @property
    def length(self):
        return self.xs.shape[0] - 1


@dataclass
class ChainGraph:
    """One-jump chain graph over a sample, with its SCC condensation.

    Node space.n is the escape sink (present in the adjacency, excluded from
    every reported set).
    """

    space: object
    system: object
    eps: ErrorFunction
    indptr: np.ndarray
    indices: np.ndarray
    labels: np.ndarray
    n_components: int
    recurrent: PointSet
    comp_edges: list = field(default_factory=list)
    _comp_reach: np.ndarray = None

    @property
    def n(self):
        return self.space.n

    def successors(self, i):
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def has_edge(self, i, j):
        return int(j) in set(self.successors(int(i)).tolist())

    def comp_reach(self):
        """Reflexive-transitive reachability over condensation components."""
        if self._comp_reach is None:
            nc = int(self.labels.max()) + 1
            reach = np.eye(nc, dtype=bool)
            children = {}
            for a, b in self.comp_edges:
                children.setdefault(a, []).append(b)
            # condensation is a DAG: resolve in reverse topological order,
            # obtained by DFS postorder over component edges
            state = np.zeros(nc, dtype=np.int8)
            order = []
            for root in range(nc):
                if state[root]:
                    continue
                stack = [(root, iter(children.get(root, ())))]
                state[root] = 1
                while stack:
                    node, it = stack[-1]
                    advanced = False
                    for child in it:
                        if not state[child]:
                            state[child] = 1
                            stack.append((child, iter(children.get(child, ()))))
                            advanced = True
                            break
                    if not advanced:
                        order.append(node)
                        state[node] = 2
                        stack.pop()
            for node in order:
                for child in children.get(node, ()):
                    reach[node] |= reach[child]
            self._comp_reach = reach
        return self._comp_reach


def _resolve_point(space, p):
    """Chain point -> coordinates (accepts sample indices and raw vectors)."""
    if isinstance(p, (int, np.integer)):
        if space.coords is None:
            return int(p)
        return space.coords[int(p)]
    return np.atleast_1d(np.asarray(p, dtype=float))


def validate_chain(space, system, eps, T, chain):
    """Check every jump inequality; None on pass, else first failing index.

    Structural problems (times below T, length mismatch) raise.
    """
    times = chain.times
    if np.any(times < T - 1e-9):
        bad = int(np.argmax(times < T - 1e-9))
        raise ValueError(f"chain time t_{bad}={times[bad]:g} is below T={T:g}")
    if system.time_kind == "discrete":
        if not system.is_tabulated:
            raise ValueError("discrete chain validation needs a tabulated system")
        dmat = space.distance_matrix()
        for j in range(chain.length):
            z = _systems.evaluate(system, int(round(times[j])), int(chain.points[j]))
            if z == SINK:
                return j
            nxt = int(chain.points[j + 1])
            if not dmat[z, nxt] < eps.values[z]:
                return j
        return None
    # continuous: exact evaluation, tolerance looked up at the nearest sample
    for j in range(chain.length):
        x = _resolve_point(space, chain.points[j])
        z = np.atleast_1d(_systems.evaluate(system, float(times[j]), x))
        nxt = _resolve_point(space, chain.points[j + 1])
        iz, _ = space.nearest(z)
        if not space.metric_at(z, nxt) < eps.values[iz]:
            return j
    return None


def normalize_unit_steps(system, chain):
    """Rewrite a discrete variable-time chain as a unit-step chain.

    Each link of duration t walks the exact orbit for t-1 steps (zero jumps)
    before the original jump, so validity at a tolerance is preserved.
    """
    if system.time_kind != "discrete" or not system.is_tabulated:
        raise ValueError("unit-step normalization needs a tabulated system")
    pts = [int(chain.points[0])]
    for j in range(chain.length):
        t = int(round(chain.times[j]))
        cur = int(chain.points[j])
        for _ in range(t - 1):
            cur = int(system.img[cur])
            if cur == SINK:
                raise ValueError("orbit escapes during normalization")
            pts.append(cur)
        pts.append(int(chain.points[j + 1]))
    return Chain(pts, np.ones(len(pts) - 1))


def build_chain_graph(space, system, eps):
    """Chain graph + SCC condensation for a discrete system over the sample."""
    if system.time_kind != "discrete":
        raise ValueError("chain graphs need a discrete system (discretize first)")
    tab = system if system.is_tabulated else _systems.tabulate(system, space)
    check_snap_bound(space, tab, eps)
    dmat = space.distance_matrix()
    indptr, indices = chain_graph_edges(dmat, tab.img, eps.values)
    n_all = space.n + 1
    adj = sp.csr_matrix(
        (np.ones(indices.shape[0], dtype=np.int8), indices, indptr),
        shape=(n_all, n_all))
    n_comps, raw = csgraph.connected_components(adj, directed=True,
                                                connection="strong")
    # deterministic labels: components numbered by smallest member index
    order = {}
    labels = np.empty_like(raw)
    for i, r in enumerate(raw):
        if r not in order:
            order[r] = len(order)
        labels[i] = order[r]
    # a node is on a cycle iff its component has >= 2 nodes or a self-loop
    sizes = np.bincount(labels, minlength=len(order))
    has_loop = np.zeros(len(order), dtype=bool)
    for i in range(n_all):
        row = indices[indptr[i]:indptr[i + 1]]
        for j in row:
            if j == i:
                has_loop[labels[i]] = True
                break
    rec_mask = (sizes[labels] >= 2) | has_loop[labels]
    rec_mask[space.n] = False  # the sink never counts as recurrent
    comp_edges = set()
    for i in range(n_all):
        li = labels[i]
        for j in indices[indptr[i]:indptr[i + 1]]:
            lj = labels[j]
            if li != lj:
                comp_edges.add((int(li), int(lj)))
    return ChainGraph(space=space, system=tab, eps=eps, indptr=indptr,
                      indices=indices, labels=labels, n_components=n_comps,
                      recurrent=PointSet(rec_mask[:space.n]),
                      comp_edges=sorted(comp_edges))


def chain_recurrent_set(graph):
    """Points lying on a directed cycle of the chain graph."""
    return graph.recurrent


def chain_components(graph):
    """Recurrent points grouped by SCC, ordered by smallest member index."""
    comps = {}
    for i in graph.recurrent.indices():
        comps.setdefault(int(graph.labels[i]), []).append(int(i))
    out = []
    for _, members in sorted(comps.items(), key=lambda kv: kv[1][0]):
        out.append(PointSet.from_indices(graph.n, members))
    return out


@dataclass
class LadderResult:
    """Chain recurrence along a halving tolerance ladder."""

    eps_values: list
    sets: list
    graphs: list
    monotone: bool
    violations: list

    @property
    def estimate(self):
        return self.sets[-1]

    @property
    def final_graph(self):
        return self.graphs[-1]


def chain_recurrent_limit(space, system, eps0, levels, keep_graphs=True):
    """Nested chain-recurrent sets at eps0, eps0/2, ..., eps0/2^(levels-1).

    The final level is the chain-recurrent-set estimate.  Monotonicity of the
    nesting is verified; violations are reported as resolution artifacts, not
    errors.
    """
    if levels < 1:
        raise ValueError("need at least one ladder level")
    if isinstance(eps0, (int, float)):
        eps0 = ErrorFunction(np.full(space.n, float(eps0)), "constant")
    if system.time_kind != "discrete":
        raise ValueError("the recurrence ladder needs a discrete system")
    tab = system if system.is_tabulated else _systems.tabulate(system, space)
    floor = eps0.values.min() / 2 ** (levels - 1)
    bound = snap_floor(space, tab)
    if bound > 0 and floor < bound:
        raise ValueError(
            f"ladder floor {floor:g} is below the snap bound {bound:g}")
    eps_list, sets, graphs, violations = [], [], [], []
    for m in range(levels):
        eps_m = eps0.scaled(0.5 ** m) if m else eps0
        g = build_chain_graph(space, tab, eps_m)
        s = chain_recurrent_set(g)
        if sets and not s.issubset(sets[-1]):
            extra = s.difference(sets[-1]).indices()
            violations.append((m, extra.tolist()))
        eps_list.append(float(eps_m.values.min()))
        sets.append(s)
        graphs.append(g if keep_graphs else None)
    return LadderResult(eps_list, sets, graphs, not violations, violations)


def nonwandering_set(space, system, eps, horizon):
    """Points whose sampled eps-ball returns to meet itself within horizon."""
    if horizon < 1:
        raise ValueError("nonwandering needs horizon >= 1")
    tab = system if system.is_tabulated else _systems.tabulate(system, space)
    dmat = space.distance_matrix()
    img = tab.img
    out = np.zeros(space.n, dtype=bool)
    for x in range(space.n):
        ball = np.nonzero(dmat[x] < eps.values[x])[0]
        cur = ball
        ball_mask = np.zeros(space.n, dtype=bool)
        ball_mask[ball] = True
        for _ in range(horizon):
            cur = img[cur]
            cur = np.unique(cur[cur != SINK])
            if cur.size == 0:
                break
            if np.any(ball_mask[cur]):
                out[x] = True
                break
    return PointSet(out)


def sigma_cost(space, system, eps, schain):
    """Cost of a sigma chain: sum of jump/tolerance ratios."""
    tab = system if system.is_tabulated else _systems.tabulate(system, space)
    xs, ys = schain.xs, schain.ys
    for j in range(xs.shape[0] - 1):
        if tab.img[ys[j]] != xs[j + 1]:
            raise ValueError(
                f"sigma chain breaks at pair {j}: x_{j + 1} is not phi(y_{j})")
    dmat = space.distance_matrix()
    return float(np.sum(dmat[xs, ys] / eps.values[xs]))


@dataclass
class RectifyResult:
    chain: Chain
    n_steps: int
    endpoint_shift: float
    padded: bool


def rectify_chain(space, flow, chain, eps, T0):
    """Convert a variable-time chain (times in [T0, 2T0)) into an exact-T0
    chain between the same endpoints.

    Follows the chain's piecewise trajectory in T0 increments, jumping where
    the input chain jumps.  The input must validate at the internally
    calibrated tolerance min(eps/8, delta2); when the total duration is not a
    multiple of T0, a zero-jump padding link is appended first (the endpoint
    then advances along its own trajectory by the padding time, reported as
    endpoint_shift).
    """
    from .errfn import calibrate_ratio, calibrate_pushforward

    if flow.time_kind != "continuous":
        raise ValueError("rectification applies to continuous-time systems")
    if T0 <= 0:
        raise ValueError("T0 must be positive")
    times = chain.times.astype(float).copy()
    if np.any(times < T0 - 1e-12) or np.any(times >= 2 * T0):
        raise ValueError("rectification needs all times in [T0, 2*T0)")
    pts = [np.atleast_1d(np.asarray(_resolve_point(space, p), float))
           for p in chain.points]

    delta1 = calibrate_ratio(space, eps)
    target = ErrorFunction(
        np.minimum(eps.values / 4.0, delta1.values / 2.0), "calibrated")
    delta2 = calibrate_pushforward(space, flow, target, T=3 * T0)
    eps_in = ErrorFunction(np.minimum(eps.values / 8.0, delta2.values),
                           "calibrated")
    bad = validate_chain(space, flow, eps_in, T0, Chain(pts, times))
    if bad is not None:
        raise ValueError(
            f"input chain jump {bad} exceeds the calibrated tolerance "
            "min(eps/8, delta2); cannot certify rectification")

    total = float(times.sum())
    ratio = total / T0
    n_steps = int(round(ratio))
    padded = False
    endpoint_shift = 0.0
    if abs(ratio - n_steps) > 1e-9:
        residue = total - np.floor(ratio) * T0
        pad = 2 * T0 - residue
        old_end = pts[-1]
        new_end = np.atleast_1d(_systems.evaluate(flow, pad, old_end))
        pts.append(new_end)
        times = np.append(times, pad)
        total += pad
        n_steps = int(round(total / T0))
        endpoint_shift = space.metric_at(old_end, new_end)
        padded = True

    # walk the chain's piecewise trajectory in exact T0 increments
    out = [pts[0]]
    link = 0
    s = 0.0  # elapsed time within the current link
    for step in range(n_steps):
        rem = T0
        while rem > 1e-12 and link < times.shape[0]:
            room = times[link] - s
            if room > rem + 1e-12:
                s += rem
                rem = 0.0
            else:
                rem -= room
                link += 1
                s = 0.0
        if step == n_steps - 1:
            out.append(pts[-1])  # close exactly on the (padded) endpoint
        else:
            out.append(np.atleast_1d(_systems.evaluate(flow, s, pts[link])))
    rectified = Chain(out, np.full(n_steps, float(T0)))
    bad = validate_chain(space, flow, eps, T0, rectified)
    if bad is not None:
        raise ValueError(
            f"rectified chain fails validation at step {bad}; endpoint "
            "mismatch from ladder/integrator coarseness")
    return RectifyResult(rectified, n_steps, endpoint_shift, padded)
