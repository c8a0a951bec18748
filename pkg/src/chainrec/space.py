"""Finite metric spaces and grid discretizations of boxes in R^n.

A MetricSample is the universe every other module computes over: an indexed
finite set of states with a metric, given either as an explicit dense matrix
or as a named formula ("euclidean", "hyperbolic-half-plane") over coordinates.
Grid samples additionally carry combinatorial cell structure, which realizes
closure/interior as one-cell dilation/erosion.
"""

import itertools
import math

import numpy as np

MAX_DENSE = 10_000
METRIC_NAMES = ("euclidean", "hyperbolic-half-plane")
TRIANGLE_EXHAUSTIVE_LIMIT = 1000
TRIANGLE_SAMPLES = 200_000


class PointSet:
    """Immutable subset of a sample's point indices, stored as a bool mask."""

    __slots__ = ("mask",)

    def __init__(self, mask):
        mask = np.asarray(mask, dtype=bool).copy()
        mask.setflags(write=False)
        self.mask = mask

    @classmethod
    def from_indices(cls, n, indices):
        idx = np.asarray(list(indices), dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise ValueError("point index out of range")
        mask = np.zeros(n, dtype=bool)
        mask[idx] = True
        return cls(mask)

    @classmethod
    def empty(cls, n):
        return cls(np.zeros(n, dtype=bool))

    @classmethod
    def full(cls, n):
        return cls(np.ones(n, dtype=bool))

    @property
    def n(self):
        return self.mask.shape[0]

    def indices(self):
        return np.nonzero(self.mask)[0]

    def size(self):
        return int(np.count_nonzero(self.mask))

    def union(self, other):
        return PointSet(self.mask | other.mask)

    def intersect(self, other):
        return PointSet(self.mask & other.mask)

    def difference(self, other):
        return PointSet(self.mask & ~other.mask)

    def complement(self):
        return PointSet(~self.mask)

    def issubset(self, other):
        return bool(np.all(~self.mask | other.mask))

    def __contains__(self, i):
        return bool(self.mask[int(i)])

    def __eq__(self, other):
        return isinstance(other, PointSet) and np.array_equal(self.mask, other.mask)

    def __hash__(self):
        return hash(self.mask.tobytes())

    def __len__(self):
        return self.size()

    def __repr__(self):
        return f"PointSet({self.size()}/{self.n})"


def _euclidean(p, q):
    return float(np.linalg.norm(np.asarray(p, float) - np.asarray(q, float)))


def _hyperbolic_half_plane(p, q):
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    y1, y2 = p[1], q[1]
    if y1 <= 0 or y2 <= 0:
        raise ValueError("hyperbolic-half-plane metric needs positive heights")
    sq = (p[0] - q[0]) ** 2 + (y1 - y2) ** 2
    return math.acosh(1.0 + sq / (2.0 * y1 * y2))


_FORMULAS = {
    "euclidean": _euclidean,
    "hyperbolic-half-plane": _hyperbolic_half_plane,
}


class MetricSample:
    """Finite set of states with a metric; immutable after construction."""

    def __init__(self, coords, metric, dmat=None, h=0.0, grid_shape=None,
                 box=None, labels=None):
        self.coords = None if coords is None else np.asarray(coords, dtype=float)
        if self.coords is not None:
            self.coords.setflags(write=False)
        self.metric = metric
        self._dmat = dmat
        if dmat is not None:
            self._dmat.setflags(write=False)
        self.h = float(h)
        self.grid_shape = None if grid_shape is None else tuple(grid_shape)
        self.box = box
        self.labels = labels
        self.n = self.coords.shape[0] if self.coords is not None else dmat.shape[0]
        self._diameter = None
        self._min_positive = None
        self._neighbor_cache = None

    # -- distances ---------------------------------------------------------

    def metric_at(self, p, q):
        """Metric between raw coordinate vectors (formula spaces only)."""
        if self.metric == "matrix":
            raise ValueError("explicit-matrix space has no off-sample metric")
        return _FORMULAS[self.metric](p, q)

    def _rows_from_formula(self, idx):
        pts = self.coords
        if self.metric == "euclidean":
            diff = pts[idx][:, None, :] - pts[None, :, :]
            return np.sqrt(np.sum(diff * diff, axis=-1))
        # hyperbolic-half-plane
        x, y = pts[:, 0], pts[:, 1]
        xi, yi = x[idx][:, None], y[idx][:, None]
        sq = (xi - x[None, :]) ** 2 + (yi - y[None, :]) ** 2
        return np.arccosh(1.0 + sq / (2.0 * yi * y[None, :]))

    def distance_row(self, i):
        if self._dmat is not None:
            return self._dmat[i]
        return self._rows_from_formula(np.array([i]))[0]

    def distance(self, i, j):
        if self._dmat is not None:
            return float(self._dmat[i, j])
        return self.metric_at(self.coords[i], self.coords[j])

    def distance_matrix(self):
        """Dense matrix, materialized lazily; refuses above the dense cap."""
        if self._dmat is None:
            if self.n > MAX_DENSE:
                raise ValueError(
                    f"dense distance matrix capped at {MAX_DENSE} points")
            d = self._rows_from_formula(np.arange(self.n))
            np.fill_diagonal(d, 0.0)
            d.setflags(write=False)
            self._dmat = d
        return self._dmat

    def dist_to_coords(self, p):
        """Distances from raw coordinates p to every sample point."""
        pts = self.coords
        if self.metric == "euclidean":
            return np.linalg.norm(pts - np.asarray(p, float)[None, :], axis=1)
        if self.metric == "hyperbolic-half-plane":
            p = np.asarray(p, float)
            sq = (pts[:, 0] - p[0]) ** 2 + (pts[:, 1] - p[1]) ** 2
            return np.arccosh(1.0 + sq / (2.0 * pts[:, 1] * p[1]))
        raise ValueError("explicit-matrix space has no off-sample metric")

    def nearest(self, p):
        """Index of the nearest sample point to coordinates p, and distance."""
        d = self.dist_to_coords(p)
        i = int(np.argmin(d))
        return i, float(d[i])

    def diameter(self):
        if self._diameter is None:
            self._diameter = float(self.distance_matrix().max())
        return self._diameter

    def min_positive_distance(self):
        if self._min_positive is None:
            d = self.distance_matrix().copy()
            np.fill_diagonal(d, np.inf)
            self._min_positive = float(d.min()) if self.n > 1 else 1.0
        return self._min_positive

    # -- grid combinatorics --------------------------------------------------

    @property
    def is_grid(self):
        return self.grid_shape is not None

    def _neighbors(self):
        """Moore neighborhood lists (indices within one cell in every axis)."""
        if self._neighbor_cache is not None:
            return self._neighbor_cache
        if not self.is_grid:
            raise ValueError("neighbor structure requires a grid sample")
        shape = self.grid_shape
        dim = len(shape)
        idx = np.arange(self.n).reshape(shape)
        offsets = [o for o in itertools.product((-1, 0, 1), repeat=dim)
                   if any(o)]
        neigh = [[] for _ in range(self.n)]
        for off in offsets:
            src = [slice(None)] * dim
            dst = [slice(None)] * dim
            for ax, o in enumerate(off):
                if o == 1:
                    src[ax] = slice(0, shape[ax] - 1)
                    dst[ax] = slice(1, shape[ax])
                elif o == -1:
                    src[ax] = slice(1, shape[ax])
                    dst[ax] = slice(0, shape[ax] - 1)
            for a, b in zip(idx[tuple(src)].ravel(), idx[tuple(dst)].ravel()):
                neigh[a].append(int(b))
        self._neighbor_cache = neigh
        return neigh

    def closure(self, ps):
        """One-cell dilation on grids; identity on abstract finite spaces."""
        if not self.is_grid:
            return ps
        mask = ps.mask.copy()
        neigh = self._neighbors()
        for i in ps.indices():
            mask[neigh[i]] = True
        return PointSet(mask)

    def interior(self, ps):
        """One-cell erosion on grids (relative to the window); identity otherwise."""
        if not self.is_grid:
            return ps
        neigh = self._neighbors()
        mask = ps.mask.copy()
        for i in ps.indices():
            for j in neigh[i]:
                if not ps.mask[j]:
                    mask[i] = False
                    break
        return PointSet(mask)

    def __repr__(self):
        kind = f"grid{self.grid_shape}" if self.is_grid else "finite"
        return f"MetricSample({kind}, n={self.n}, metric={self.metric!r}, h={self.h:g})"


def _check_metric_axioms(dmat, rng_seed=0):
    n = dmat.shape[0]
    if dmat.shape != (n, n):
        raise ValueError("distance matrix must be square")
    if np.any(dmat < 0):
        raise ValueError("distance matrix has negative entries")
    if not np.allclose(np.diag(dmat), 0.0, atol=0.0):
        raise ValueError("distance matrix diagonal must be zero")
    if not np.array_equal(dmat, dmat.T):
        raise ValueError("distance matrix must be symmetric")
    off = dmat + np.eye(n)
    if np.any(off <= 0):
        raise ValueError("distinct points must have positive distance")
    if n <= TRIANGLE_EXHAUSTIVE_LIMIT:
        for z in range(n):
            # d(x,y) <= d(x,z) + d(z,y), checked for all (x,y) at once
            bound = dmat[:, z:z + 1] + dmat[z:z + 1, :]
            bad = np.argwhere(dmat > bound + 1e-12)
            if bad.size:
                x, y = bad[0]
                raise ValueError(
                    f"triangle inequality fails: d({x},{y})={dmat[x, y]:g} > "
                    f"d({x},{z})+d({z},{y})={bound[x, y]:g}")
    else:
        rng = np.random.default_rng(rng_seed)
        xs = rng.integers(0, n, TRIANGLE_SAMPLES)
        ys = rng.integers(0, n, TRIANGLE_SAMPLES)
        zs = rng.integers(0, n, TRIANGLE_SAMPLES)
        lhs = dmat[xs, ys]
        rhs = dmat[xs, zs] + dmat[zs, ys]
        bad = np.argmax(lhs > rhs + 1e-12)
        if lhs[bad] > rhs[bad] + 1e-12:
            raise ValueError(
                f"triangle inequality fails on sampled triple "
                f"({xs[bad]},{ys[bad]},{zs[bad]})")


def build_finite_space(points, distance_matrix, coords=None):
    """Validated finite metric space from an explicit distance matrix; h = 0."""
    dmat = np.asarray(distance_matrix, dtype=float).copy()
    n = len(points) if points is not None else dmat.shape[0]
    if dmat.ndim != 2 or dmat.shape != (n, n):
        raise ValueError(
            f"distance matrix shape {dmat.shape} does not match {n} points")
    if n > MAX_DENSE:
        raise ValueError(f"explicit matrices capped at {MAX_DENSE} points")
    _check_metric_axioms(dmat)
    return MetricSample(coords=coords, metric="matrix", dmat=dmat, h=0.0,
                        labels=list(points) if points is not None else None)


def build_point_cloud(coords, metric="euclidean"):
    """Finite space from coordinates with a named metric; h = 0."""
    coords = np.asarray(coords, dtype=float)
    if coords.ndim != 2:
        raise ValueError("coords must be (n, dim)")
    if metric not in METRIC_NAMES:
        raise ValueError(f"unknown metric {metric!r}")
    if metric == "hyperbolic-half-plane":
        if coords.shape[1] != 2 or np.any(coords[:, 1] <= 0):
            raise ValueError("hyperbolic-half-plane needs 2D points with y > 0")
    return MetricSample(coords=coords, metric=metric, h=0.0)


def build_grid_space(box, cells, metric="euclidean"):
    """Grid sample at cell centers of an axis-aligned box.

    box is a sequence of per-axis (lo, hi); cells the per-axis cell counts.
    h is the metric diameter of the widest cell (for the euclidean metric this
    is the Euclidean cell diagonal).
    """
    box = [(float(lo), float(hi)) for lo, hi in box]
    cells = [int(c) for c in cells]
    if len(box) != len(cells):
        raise ValueError("box and cells must have matching dimension")
    for (lo, hi), c in zip(box, cells):
        if not lo < hi:
            raise ValueError(f"need lo < hi per axis, got [{lo}, {hi}]")
        if c < 1:
            raise ValueError("need at least one cell per axis")
    if metric not in METRIC_NAMES:
        raise ValueError(f"unknown metric {metric!r}")
    dim = len(box)
    if metric == "hyperbolic-half-plane":
        if dim != 2:
            raise ValueError("hyperbolic-half-plane requires a 2D box")
        if box[1][0] <= 0:
            raise ValueError("hyperbolic-half-plane requires heights > 0")
    axes = []
    widths = []
    for (lo, hi), c in zip(box, cells):
        w = (hi - lo) / c
        widths.append(w)
        axes.append(lo + w * (np.arange(c) + 0.5))
    mesh = np.meshgrid(*axes, indexing="ij")
    coords = np.stack([m.ravel() for m in mesh], axis=-1)
    widths = np.asarray(widths)
    if metric == "euclidean":
        h = float(np.linalg.norm(widths))
    else:
        # widest cell in the hyperbolic metric sits at the lowest heights
        y_lo = box[1][0]
        corner_a = np.array([0.0, y_lo])
        corner_b = np.array([widths[0], y_lo + widths[1]])
        h = _hyperbolic_half_plane(corner_a, corner_b)
    return MetricSample(coords=coords, metric=metric, h=h,
                        grid_shape=tuple(cells), box=box)


def dist_to_set(space, x, S):
    """min over s in S of d(x, s); zero iff x belongs to S."""
    if S.size() == 0:
        raise ValueError("dist_to_set needs a nonempty set")
    row = space.distance_row(int(x))
    return float(row[S.mask].min())


def dist_to_set_field(space, S):
    """dist_to_set for every point at once, as an array."""
    if S.size() == 0:
        raise ValueError("dist_to_set needs a nonempty set")
    d = space.distance_matrix()
    return d[:, S.mask].min(axis=1)
