"""Error functions: positive tolerance fields and their calibration searches.

The calibration routines realize, on a finite sample, the epsilon-delta
guarantees that hold for continuous error functions: a ratio band around
eps(x) inside small balls, and control of image distances under the map or
the flow over a time window.  Each returned delta is certified by
construction: rescanning all pairs (the tests do) reproduces the guarantee.
"""

import numpy as np

from ._kernels import SINK
from .space import PointSet, dist_to_set_field
from . import systems as _systems

LADDER_STEPS = 41  # geometric ladder h * 2^m, m = 0..40, capped at diameter


class ErrorFunction:
    """Strictly positive tolerance value per sample point."""

    __slots__ = ("values", "provenance", "meta")

    def __init__(self, values, provenance="constant", meta=None):
        values = np.asarray(values, dtype=float).copy()
        if values.ndim != 1:
            raise ValueError("error function values must be a flat array")
        if np.any(values <= 0) or not np.all(np.isfinite(values)):
            raise ValueError("error function values must be finite and > 0")
        values.setflags(write=False)
        self.values = values
        self.provenance = provenance
        self.meta = meta or {}

    def scaled(self, factor):
        if factor <= 0:
            raise ValueError("scale factor must be positive")
        return ErrorFunction(self.values * factor, self.provenance, dict(self.meta))

    def pointwise_min(self, other):
        return ErrorFunction(np.minimum(self.values, other.values), "calibrated")

    def __repr__(self):
        v = self.values
        return (f"ErrorFunction({self.provenance}, min={v.min():g}, "
                f"max={v.max():g})")


_FORMULAS = {
    "x": lambda coords: coords[:, 0],
    "y": lambda coords: coords[:, 1],
    "norm": lambda coords: np.linalg.norm(coords, axis=1),
}


def make_error(space, spec):
    """Build a validated ErrorFunction from a constant, array, formula name,
    or callable on coordinates."""
    if isinstance(spec, (int, float)):
        return ErrorFunction(np.full(space.n, float(spec)), "constant")
    if isinstance(spec, str):
        if spec not in _FORMULAS:
            raise ValueError(f"unknown error formula {spec!r}; have {sorted(_FORMULAS)}")
        if space.coords is None:
            raise ValueError("formula error functions need coordinates")
        return ErrorFunction(_FORMULAS[spec](space.coords), "formula")
    if callable(spec):
        return ErrorFunction(spec(space.coords), "formula")
    return ErrorFunction(np.asarray(spec, dtype=float), "per-point")


def snap_floor(space, system):
    """Smallest tolerance that dominates snapping artifacts (0 if exact)."""
    if getattr(system, "snapped", False):
        return 2.0 * (system.max_snap + space.h)
    return 0.0


def check_snap_bound(space, system, eps):
    """Reject tolerances below the snapping floor for genuinely snapped systems.

    Trap-derived fields are exempt: their validity is established by the
    post-hoc ball verification in trapping_error instead.
    """
    if eps.provenance == "trap-derived":
        return
    floor = snap_floor(space, system)
    if floor > 0 and float(eps.values.min()) < floor:
        raise ValueError(
            f"error function minimum {eps.values.min():g} is below the snap "
            f"bound 2*(snap+h) = {floor:g}; chains would be snapping artifacts")


def radius_ladder(space):
    """Geometric radius ladder {base * 2^m} capped at the space diameter."""
    base = space.h if space.h > 0 else space.min_positive_distance()
    diam = space.diameter()
    rungs = base * np.exp2(np.arange(LADDER_STEPS))
    rungs = np.minimum(rungs, diam)
    return np.unique(rungs)


def _largest_rung(rungs, vdist):
    """Largest rung strictly below vdist per point (nan where none fits)."""
    pos = np.searchsorted(rungs, vdist, side="left") - 1
    out = np.where(pos >= 0, rungs[np.maximum(pos, 0)], np.nan)
    return out


def _delta_from_violations(space, violation, kind):
    """Turn a pairwise violation mask into the per-point ladder delta.

    Rungs are accepted strictly below the nearest violator's distance, so the
    returned radius certifies even for closed balls; where no rung fits, half
    the violator distance is used (always positive on a finite sample).
    """
    dmat = space.distance_matrix()
    vd = np.where(violation, dmat, np.inf).min(axis=1)
    rungs = radius_ladder(space)
    delta = _largest_rung(rungs, vd)
    delta = np.where(np.isnan(delta), vd / 2.0, delta)
    return ErrorFunction(delta, "calibrated", {"kind": kind})


def calibrate_ratio(space, eps):
    """delta with: d(x,y) < delta(x)  =>  eps(x)/2 < eps(y) < 3 eps(x)/2."""
    e = eps.values
    lo = 0.5 * e[:, None]
    hi = 1.5 * e[:, None]
    violation = (e[None, :] <= lo) | (e[None, :] >= hi)
    np.fill_diagonal(violation, False)
    return _delta_from_violations(space, violation, "ratio")


def _flow_images(space, system, times):
    """Exact flow images of every sample point at the given times.

    Returns (coords[t][i], eps-lookup index[t][i]); escaped points get index
    SINK and nan coordinates.
    """
    box = space.box
    n = space.n
    all_pts = []
    all_idx = []
    for t in times:
        pts = np.empty_like(space.coords)
        idx = np.empty(n, dtype=np.int64)
        for i in range(n):
            y = np.atleast_1d(_systems.evaluate(system, t, space.coords[i]))
            if box is not None and not all(
                    lo <= v <= hi for v, (lo, hi) in zip(y, box)):
                pts[i] = np.nan
                idx[i] = SINK
                continue
            pts[i] = y
            idx[i], _ = space.nearest(y)
        all_pts.append(pts)
        all_idx.append(idx)
    return all_pts, all_idx


def calibrate_pushforward(space, system, eps, T=None, ladder_points=21):
    """delta with: d(x,y) < delta(x) => d(Phi(t,x),Phi(t,y)) < eps(Phi(t,x)).

    For discrete systems the single map step is checked; for continuous ones
    every time on a ladder over [0, T] with step <= T/20.  The tolerance at an
    off-sample image is looked up at the nearest sample point.
    """
    e = eps.values
    n = space.n
    if system.time_kind == "discrete":
        tab = system if system.is_tabulated else _systems.tabulate(system, space)
        img = tab.img
        dmat = space.distance_matrix()
        violation = np.zeros((n, n), dtype=bool)
        sunk = img == SINK
        violation[sunk, :] = True
        violation[:, sunk] = True
        ok = ~sunk
        oki = np.nonzero(ok)[0]
        sub = dmat[np.ix_(img[oki], img[oki])] >= e[img[oki]][:, None]
        violation[np.ix_(oki, oki)] |= sub
        np.fill_diagonal(violation, False)
        return _delta_from_violations(space, violation, "pushforward-map")
    if T is None or T <= 0:
        raise ValueError("flow calibration needs a positive horizon T")
    k = max(int(np.ceil(ladder_points)) - 1, 20)
    times = np.linspace(0.0, T, k + 1)
    pts, idx = _flow_images(space, system, times)
    violation = np.zeros((n, n), dtype=bool)
    for pt, ix in zip(pts, idx):
        sunk = ix == SINK
        violation[sunk, :] = True
        violation[:, sunk] = True
        oki = np.nonzero(~sunk)[0]
        if oki.size == 0:
            continue
        if space.metric == "euclidean":
            diff = pt[oki][:, None, :] - pt[oki][None, :, :]
            dd = np.sqrt(np.sum(diff * diff, axis=-1))
        else:
            p = pt[oki]
            sq = ((p[:, None, 0] - p[None, :, 0]) ** 2
                  + (p[:, None, 1] - p[None, :, 1]) ** 2)
            dd = np.arccosh(1.0 + sq / (2.0 * p[:, None, 1] * p[None, :, 1]))
        violation[np.ix_(oki, oki)] |= dd >= e[ix[oki]][:, None]
    np.fill_diagonal(violation, False)
    out = _delta_from_violations(space, violation, "pushforward-flow")
    out.meta["ladder_times"] = times
    out.meta["ladder_step"] = float(times[1] - times[0])
    return out


def trapping_error(space, system, region, T, kind="trapping", step_T=None):
    """Tolerance field derived from a trapping region.

    eps(x) = min(1, (dist to closure(swept forward image) + dist to the
    complement of the region) / 2); verified post hoc: the sampled eps-ball
    around every swept image point stays inside the region.
    """
    from . import conley  # local import; conley builds on chains/errfn users

    if isinstance(region, conley.TrappingRegion):
        trap = region
    else:
        check = conley.is_trapping(space, system, region, T, kind=kind,
                                   step_T=step_T)
        if not check.certified:
            raise ValueError(
                f"region is not {kind} at horizon {T}; witness point "
                f"{check.witness}")
        trap = check.trap
    swept_closed = space.closure(trap.swept)
    diam_cap = space.diameter() + 1.0
    if swept_closed.size() > 0:
        d_swept = dist_to_set_field(space, swept_closed)
    else:
        d_swept = np.full(space.n, diam_cap)
    complement = trap.region.complement()
    if complement.size() > 0:
        d_comp = dist_to_set_field(space, complement)
    else:
        d_comp = np.full(space.n, diam_cap)
    values = np.minimum(0.5 * (d_swept + d_comp), 1.0)
    if np.any(values <= 0):
        bad = int(np.argmin(values))
        raise ValueError(
            f"trap-derived tolerance degenerates at point {bad}; "
            "resolution too coarse for this region")
    eps = ErrorFunction(values, "trap-derived",
                        {"kind": trap.kind, "T": trap.T})
    # post-hoc check of the ball property on every sampled forward image
    dmat = space.distance_matrix()
    inside = trap.region.mask
    for w in trap.swept.indices():
        ball = dmat[w] < values[w]
        if np.any(ball & ~inside):
            witness = int(np.nonzero(ball & ~inside)[0][0])
            raise ValueError(
                f"trap tolerance verification failed: ball around swept "
                f"point {w} leaves the region at {witness} "
                "(resolution too coarse)")
    return eps
