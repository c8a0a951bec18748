"""Discrete-time maps and continuous-time flows over metric samples.

A SystemModel evaluates Phi(t, x).  Continuous systems are either closed-form
built-ins or ODE right-hand sides integrated with fixed-step RK4; discrete
systems are either pointwise step maps or tabulated image indices over a
sample (escapes absorb into a sink index, clamp to the window, or raise,
according to the escape policy).
"""

import numpy as np

from ._kernels import SINK
from .space import PointSet

RK_STEP_CAP = 0.01


class SystemModel:
    """A flow or semiflow; immutable, evaluation is pure."""

    def __init__(self, name, time_kind, directionality, flow_map=None,
                 rhs=None, step_map=None, img=None, escape="absorb",
                 T=1.0, max_snap=0.0, rk_step=RK_STEP_CAP):
        self.name = name
        self.time_kind = time_kind
        self.directionality = directionality
        self.flow_map = flow_map
        self.rhs = rhs
        self.step_map = step_map
        self.img = None if img is None else np.asarray(img, dtype=np.int64)
        if self.img is not None:
            self.img.setflags(write=False)
        self.escape = escape
        self.T = float(T)
        self.max_snap = float(max_snap)
        self.rk_step = float(rk_step)
        self._pre = None  # preimage lists, built lazily for tabulated systems

    @property
    def is_discrete(self):
        return self.time_kind == "discrete"

    @property
    def is_tabulated(self):
        return self.img is not None

    @property
    def snapped(self):
        """True when built by snapping and the snapping actually moved points."""
        return self.is_tabulated and self.max_snap > 0.0

    def preimages(self):
        if self._pre is None:
            if not self.is_tabulated:
                raise ValueError("preimages need a tabulated system")
            n = self.img.shape[0]
            pre = [[] for _ in range(n)]
            for i, j in enumerate(self.img):
                if j != SINK:
                    pre[j].append(i)
            self._pre = [np.asarray(p, dtype=np.int64) for p in pre]
        return self._pre

    def __repr__(self):
        return (f"SystemModel({self.name!r}, {self.time_kind}, "
                f"{self.directionality})")


# ---------------------------------------------------------------------------
# built-in systems
# ---------------------------------------------------------------------------

def _logistic(t, x):
    x = np.asarray(x, float)
    et = np.exp(t)
    return x * et / (1.0 - x + x * et)


def _exp_decay(t, x):
    return np.asarray(x, float) * np.exp(-t)


def _exp_growth(t, x):
    return np.asarray(x, float) * np.exp(t)


def _translation(t, x):
    return np.asarray(x, float) + t


def _translation_half_plane(t, x):
    x = np.asarray(x, float)
    return np.array([x[0] + t, x[1]])


_BUILTIN_FLOWS = {
    "logistic-flow": _logistic,
    "exp-decay": _exp_decay,
    "exp-growth": _exp_growth,
    "translation": _translation,
    "translation-half-plane": _translation_half_plane,
}

_ODE_CATALOG = {
    "logistic": lambda x: x * (1.0 - x),
    "linear-decay": lambda x: -x,
    "double-well": lambda x: -x * (x * x - 1.0),
}


def builtin_flow(name, escape="absorb"):
    """Closed-form continuous flow from the built-in catalogue."""
    if name not in _BUILTIN_FLOWS:
        raise ValueError(f"unknown builtin flow {name!r}; "
                         f"have {sorted(_BUILTIN_FLOWS)}")
    return SystemModel(name, "continuous", "flow",
                       flow_map=_BUILTIN_FLOWS[name], escape=escape)


def ode_flow(name, rk_step=RK_STEP_CAP, escape="absorb"):
    """Continuous flow given by an ODE right-hand side, integrated by RK4."""
    if name not in _ODE_CATALOG:
        raise ValueError(f"unknown ODE {name!r}; have {sorted(_ODE_CATALOG)}")
    return SystemModel(f"ode-{name}", "continuous", "flow",
                       rhs=_ODE_CATALOG[name], rk_step=rk_step, escape=escape)


def tabulated_system(img, directionality="semiflow", name="tabulated",
                     escape="absorb", T=1.0, max_snap=0.0):
    """Discrete system from explicit image indices (SINK = escaped)."""
    img = np.asarray(img, dtype=np.int64)
    n = img.shape[0]
    if np.any((img < SINK) | (img >= n)):
        raise ValueError("tabulated images must be point indices or SINK")
    if directionality == "flow":
        interior = img[img != SINK]
        if interior.size != n or np.unique(interior).size != n:
            raise ValueError("a tabulated flow must be a permutation")
    return SystemModel(name, "discrete", directionality, img=img,
                       escape=escape, T=T, max_snap=max_snap)


def pointwise_map(fn, directionality="semiflow", name="map", escape="absorb",
                  T=1.0):
    """Discrete system from a pointwise step map on coordinates."""
    return SystemModel(name, "discrete", directionality, step_map=fn,
                       escape=escape, T=T)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def _rk4(rhs, x0, t, step_cap):
    """Fixed-step RK4 from 0 to t (t may be negative)."""
    if t == 0:
        return np.asarray(x0, float)
    span = abs(t)
    step = min(step_cap, span / 100.0)
    nsteps = max(1, int(round(span / step)))
    hstep = t / nsteps
    x = np.asarray(x0, float)
    for _ in range(nsteps):
        k1 = np.asarray(rhs(x), float)
        k2 = np.asarray(rhs(x + 0.5 * hstep * k1), float)
        k3 = np.asarray(rhs(x + 0.5 * hstep * k2), float)
        k4 = np.asarray(rhs(x + hstep * k3), float)
        x = x + (hstep / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def _check_time(system, t):
    if system.directionality == "semiflow" and t < 0:
        raise ValueError("negative time is not admissible for a semiflow")


def evaluate(system, t, x):
    """Phi(t, x) on raw coordinates (continuous) or indices (tabulated).

    Tabulated evaluation returns SINK once the orbit escapes.
    """
    _check_time(system, t)
    if system.time_kind == "continuous":
        if system.flow_map is not None:
            return system.flow_map(t, np.asarray(x, float))
        return _rk4(system.rhs, x, t, system.rk_step)
    # discrete
    ti = int(round(t))
    if abs(t - ti) > 1e-9:
        raise ValueError("discrete systems take integer times")
    if system.is_tabulated:
        i = int(x)
        if ti < 0:
            img = system.img
            inv = np.full_like(img, SINK)
            inv[img[img != SINK]] = np.nonzero(img != SINK)[0]
            for _ in range(-ti):
                if i == SINK:
                    return SINK
                i = int(inv[i])
            return i
        for _ in range(ti):
            if i == SINK:
                return SINK
            i = int(system.img[i])
        return i
    y = np.asarray(x, float)
    if ti < 0:
        raise ValueError("pointwise discrete maps evaluate forward only")
    for _ in range(ti):
        y = np.asarray(system.step_map(y), float)
    return y


def _in_box(p, box):
    p = np.atleast_1d(np.asarray(p, float))
    return all(lo <= v <= hi for v, (lo, hi) in zip(p, box))


def evaluate_snapped(system, space, t, i):
    """Phi(t, .) from sample index i, snapped back to the sample.

    Returns (index, snap_distance); (SINK, nan) when the image leaves the
    window under the absorb policy.
    """
    if system.is_tabulated:
        j = evaluate(system, t, i)
        return j, 0.0
    x = space.coords[int(i)]
    y = np.atleast_1d(evaluate(system, t, x))
    box = space.box
    if box is not None and not _in_box(y, box):
        if system.escape == "error":
            raise ValueError(f"image of point {i} escaped the window: {y}")
        if system.escape == "absorb":
            return SINK, float("nan")
        y = np.clip(y, [lo for lo, _ in box], [hi for _, hi in box])
    j, snap = space.nearest(y)
    return j, snap


# ---------------------------------------------------------------------------
# derived systems
# ---------------------------------------------------------------------------

def discretize(system, T):
    """T-discretization of a continuous flow/semiflow: one step is Phi(T, .)."""
    if system.time_kind != "continuous":
        raise ValueError("discretize takes a continuous system")
    if T <= 0:
        raise ValueError("discretization time must be positive")
    if system.flow_map is not None:
        fm = system.flow_map
        step = lambda x: fm(T, x)
    else:
        rhs, cap = system.rhs, system.rk_step
        step = lambda x: _rk4(rhs, x, T, cap)
    return SystemModel(f"{system.name}-disc{T:g}", "discrete",
                       system.directionality, step_map=step,
                       escape=system.escape, T=T)


def reverse_time(system):
    """Time reversal Phi^sigma(t, x) = Phi(-t, x); flows only."""
    if system.directionality != "flow":
        raise ValueError("time reversal needs a flow")
    if system.time_kind == "continuous":
        if system.flow_map is not None:
            fm = system.flow_map
            return SystemModel(f"{system.name}-rev", "continuous", "flow",
                               flow_map=lambda t, x: fm(-t, x),
                               escape=system.escape)
        rhs = system.rhs
        return SystemModel(f"{system.name}-rev", "continuous", "flow",
                           rhs=lambda x: -np.asarray(rhs(x), float),
                           rk_step=system.rk_step, escape=system.escape)
    if not system.is_tabulated:
        raise ValueError("cannot reverse a pointwise discrete map")
    inv = np.empty_like(system.img)
    inv[system.img] = np.arange(system.img.shape[0])
    return SystemModel(f"{system.name}-rev", "discrete", "flow", img=inv,
                       escape=system.escape, T=system.T,
                       max_snap=system.max_snap)


def power(system, k):
    """k-fold composition of a discrete system's step map."""
    if system.time_kind != "discrete":
        raise ValueError("power takes a discrete system")
    k = int(k)
    if k < 1:
        raise ValueError("power needs k >= 1")
    if k == 1:
        return system
    if system.is_tabulated:
        img = system.img
        out = np.arange(img.shape[0], dtype=np.int64)
        for _ in range(k):
            nxt = np.where(out == SINK, SINK, img[np.maximum(out, 0)])
            out = nxt
        return SystemModel(f"{system.name}^({k})", "discrete",
                           system.directionality, img=out,
                           escape=system.escape, T=system.T * k,
                           max_snap=system.max_snap)
    base = system.step_map

    def step(x, _k=k, _f=base):
        for _ in range(_k):
            x = _f(x)
        return x

    return SystemModel(f"{system.name}^({k})", "discrete",
                       system.directionality, step_map=step,
                       escape=system.escape, T=system.T * k)


def tabulate(system, space):
    """Snap a discrete system's step map onto a sample; records max snap."""
    if system.time_kind != "discrete":
        raise ValueError("tabulate takes a discrete system (discretize first)")
    if system.is_tabulated:
        return system
    img = np.empty(space.n, dtype=np.int64)
    max_snap = 0.0
    box = space.box
    for i in range(space.n):
        y = np.atleast_1d(np.asarray(system.step_map(space.coords[i]), float))
        if box is not None and not _in_box(y, box):
            if system.escape == "error":
                raise ValueError(f"image of point {i} escaped the window: {y}")
            if system.escape == "absorb":
                img[i] = SINK
                continue
            y = np.clip(y, [lo for lo, _ in box], [hi for _, hi in box])
        j, snap = space.nearest(y)
        img[i] = j
        max_snap = max(max_snap, snap)
    return SystemModel(f"{system.name}-tab", "discrete",
                       system.directionality, img=img, escape=system.escape,
                       T=system.T, max_snap=max_snap)


def _as_tabulated(space, system, step_T=None):
    if system.is_tabulated:
        return system
    if system.time_kind == "continuous":
        system = discretize(system, step_T if step_T else 1.0)
    return tabulate(system, space)


def orbit(space, system, A, direction="forward", horizon=100, step_T=None):
    """Forward or backward orbit of a point set on the sample.

    Iterates the (tabulated) step map up to `horizon` steps, stopping early
    once the accumulated set stabilizes.  Backward orbits are computed via
    preimages, matching the semiflow definition of Orb^-.
    """
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    tab = _as_tabulated(space, system, step_T)
    mask = A.mask.copy()
    if direction == "forward":
        # frontier-only iteration: each point's image is processed exactly
        # once, so an empty frontier means the accumulated set is invariant
        frontier = A.indices()
        img = tab.img
        for _ in range(horizon):
            nxt = img[frontier]
            nxt = np.unique(nxt[nxt != SINK])
            new = nxt[~mask[nxt]]
            if new.size == 0:
                break
            mask[new] = True
            frontier = new
    elif direction == "backward":
        pre = tab.preimages()
        frontier = A.indices()
        for _ in range(horizon):
            nxt = [p for j in frontier for p in pre[j]]
            if not nxt:
                break
            nxt = np.unique(np.asarray(nxt, dtype=np.int64))
            new = nxt[~mask[nxt]]
            if new.size == 0:
                break
            mask[new] = True
            frontier = new
    else:
        raise ValueError("direction must be 'forward' or 'backward'")
    return PointSet(mask)
