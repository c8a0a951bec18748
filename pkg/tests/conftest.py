import numpy as np
import pytest

import chainrec as cr


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # JIT compile the hot kernels once so timed tests measure steady state
    from chainrec import _kernels

    _kernels.warmup()


def line_space(coords):
    return cr.build_point_cloud(np.asarray(coords, float)[:, None])


@pytest.fixture
def path_map():
    """a -> b -> c with c fixed, on a line with unit spacing."""
    space = line_space([0.0, 1.0, 2.0])
    system = cr.tabulated_system([1, 2, 2], name="path")
    return space, system


def snap_map_to_grid(space, fn):
    """Exact tabulated map: image cell of fn(center), ground truth by fiat."""
    img = np.empty(space.n, dtype=np.int64)
    for i in range(space.n):
        y = np.atleast_1d(fn(space.coords[i]))
        img[i], _ = space.nearest(y)
    return cr.tabulated_system(img, name="snapped")


@pytest.fixture
def double_well():
    """Gradient-like double-well map on 100 cells: sinks near +-1, source at 0.

    The box is chosen so a cell center sits exactly at 0; the drift is steep
    enough that no other cell is snap-fixed.
    """
    space = cr.build_grid_space([(-1.515, 1.485)], [100])
    system = snap_map_to_grid(space, lambda x: x + 0.6 * x * (1.0 - x * x))
    return space, system


def random_cloud_map(rng, n, dim=2, sinks=False):
    """Random point cloud with a random tabulated self-map."""
    coords = rng.uniform(0.0, 1.0, size=(n, dim))
    space = cr.build_point_cloud(coords)
    img = rng.integers(0, n, size=n)
    if sinks:
        img[rng.uniform(size=n) < 0.05] = -1
    system = cr.tabulated_system(img, name="random")
    return space, system


@pytest.fixture
def logistic_grid():
    space = cr.build_grid_space([(0.0, 1.0)], [100])
    flow = cr.builtin_flow("logistic-flow")
    tab = cr.tabulate(cr.discretize(flow, 1.0), space)
    return space, flow, tab
