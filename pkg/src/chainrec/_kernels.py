"""Hot numeric kernels: chain-graph edge enumeration and effort shortest paths.

Both kernels exist twice: a numba ``@njit`` version and a pure-numpy fallback.
The fallback is selected when numba is unavailable or when the environment
variable ``CHAINREC_NO_NUMBA`` is set to a non-empty value, so results can be
reproduced (and benchmarked, see benchmarks/bench_kernels.py) on either path.
"""

import os

import numpy as np

SINK = -1

_FORCE_NUMPY = bool(os.environ.get("CHAINREC_NO_NUMBA", ""))

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap

USE_NUMBA = HAS_NUMBA and not _FORCE_NUMPY


# ---------------------------------------------------------------------------
# chain-graph edges: edge x -> y iff d(img[x], y) < eps[img[x]]
# ---------------------------------------------------------------------------

def _edge_counts_py(dmat, img, eps, n):
    counts = np.zeros(n + 1, dtype=np.int64)
    for x in range(n):
        fx = img[x]
        if fx == SINK:
            counts[x] = 1  # single edge into the sink node
        else:
            counts[x] = int(np.count_nonzero(dmat[fx] < eps[fx]))
    counts[n] = 1  # sink self-loop
    return counts


def _edges_py(dmat, img, eps):
    """Pure-numpy edge builder.  Returns CSR (indptr, indices) over n+1 nodes.

    Node n is the escape sink: it only self-loops, and any point mapping to
    the sink has that single outgoing edge.
    """
    n = img.shape[0]
    counts = _edge_counts_py(dmat, img, eps, n)
    indptr = np.zeros(n + 2, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    indices = np.empty(indptr[-1], dtype=np.int64)
    for x in range(n):
        fx = img[x]
        if fx == SINK:
            indices[indptr[x]] = n
        else:
            row = np.nonzero(dmat[fx] < eps[fx])[0]
            indices[indptr[x]:indptr[x + 1]] = row
    indices[indptr[n]] = n
    return indptr, indices


@njit(cache=True)
def _edges_jit(dmat, img, eps):  # pragma: no cover - exercised via dispatcher
    n = img.shape[0]
    counts = np.zeros(n + 2, dtype=np.int64)
    for x in range(n):
        fx = img[x]
        if fx == SINK:
            counts[x + 1] = 1
        else:
            c = 0
            ex = eps[fx]
            for y in range(n):
                if dmat[fx, y] < ex:
                    c += 1
            counts[x + 1] = c
    counts[n + 1] = 1
    indptr = np.cumsum(counts)
    indices = np.empty(indptr[n + 1], dtype=np.int64)
    for x in range(n):
        fx = img[x]
        pos = indptr[x]
        if fx == SINK:
            indices[pos] = n
        else:
            ex = eps[fx]
            for y in range(n):
                if dmat[fx, y] < ex:
                    indices[pos] = y
                    pos += 1
    indices[indptr[n]] = n
    return indptr, indices


def chain_graph_edges(dmat, img, eps):
    """CSR adjacency of the one-step chain graph, sink node appended last."""
    dmat = np.ascontiguousarray(dmat, dtype=np.float64)
    img = np.ascontiguousarray(img, dtype=np.int64)
    eps = np.ascontiguousarray(eps, dtype=np.float64)
    if USE_NUMBA:
        return _edges_jit(dmat, img, eps)
    return _edges_py(dmat, img, eps)


# ---------------------------------------------------------------------------
# effort shortest paths (dense Dijkstra over occupancy states)
# ---------------------------------------------------------------------------
#
# State z = "a jump-then-map chain currently sits at z".  Source states are
# the points of C at cost 0.  From z one may jump to any y at cost
# d(z, y)/eps(z) and land in state img[y].  dist[] below is the cheapest cost
# of occupying each state; the caller combines it with one final jump.

def _effort_dijkstra_py(dmat, inv_eps, img, source_mask):
    n = dmat.shape[0]
    dist = np.full(n, np.inf)
    dist[source_mask] = 0.0
    done = np.zeros(n, dtype=bool)
    valid = img >= 0
    targets = img[valid]
    for _ in range(n):
        cand = np.where(~done, dist, np.inf)
        z = int(np.argmin(cand))
        if not np.isfinite(cand[z]):
            break
        done[z] = True
        relax = dist[z] + dmat[z, valid] * inv_eps[z]
        np.minimum.at(dist, targets, relax)
    return dist


@njit(cache=True)
def _effort_dijkstra_jit(dmat, inv_eps, img, source_mask):  # pragma: no cover
    n = dmat.shape[0]
    dist = np.full(n, np.inf)
    for z in range(n):
        if source_mask[z]:
            dist[z] = 0.0
    done = np.zeros(n, dtype=np.bool_)
    for _ in range(n):
        best = np.inf
        z = -1
        for i in range(n):
            if not done[i] and dist[i] < best:
                best = dist[i]
                z = i
        if z < 0:
            break
        done[z] = True
        dz = dist[z]
        iz = inv_eps[z]
        for y in range(n):
            t = img[y]
            if t >= 0:
                nd = dz + dmat[z, y] * iz
                if nd < dist[t]:
                    dist[t] = nd
    return dist


def effort_occupancy(dmat, eps, img, source_mask):
    """Cheapest cost of occupying each point as a chain's current state."""
    dmat = np.ascontiguousarray(dmat, dtype=np.float64)
    inv_eps = 1.0 / np.ascontiguousarray(eps, dtype=np.float64)
    img = np.ascontiguousarray(img, dtype=np.int64)
    source_mask = np.ascontiguousarray(source_mask, dtype=bool)
    if USE_NUMBA:
        return _effort_dijkstra_jit(dmat, inv_eps, img, source_mask)
    return _effort_dijkstra_py(dmat, inv_eps, img, source_mask)


def warmup():
    """Trigger JIT compilation of both kernels on toy inputs."""
    if not USE_NUMBA:
        return
    d = np.array([[0.0, 1.0], [1.0, 0.0]])
    img = np.array([1, 0], dtype=np.int64)
    eps = np.array([0.5, 0.5])
    _edges_jit(d, img, eps)
    _effort_dijkstra_jit(d, 1.0 / eps, img, np.array([True, False]))
