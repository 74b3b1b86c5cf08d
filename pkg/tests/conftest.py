import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def central_diff(node, f, h=1e-5, entries=None):
    """Finite-difference gradient of scalar f() w.r.t. a leaf node's value.

    entries: optional list of multi-indices to probe (full sweep otherwise).
    """
    base = node.value.copy()
    g = np.zeros_like(base)
    if entries is None:
        it = np.nditer(base, flags=["multi_index"])
        entries = []
        for _ in it:
            entries.append(it.multi_index)
    for idx in entries:
        vp = base.copy()
        vp[idx] += h
        vp.setflags(write=False)
        node.value = vp
        fp = float(f())
        vm = base.copy()
        vm[idx] -= h
        vm.setflags(write=False)
        node.value = vm
        fm = float(f())
        g[idx] = (fp - fm) / (2.0 * h)
    base.setflags(write=False)
    node.value = base
    return g


def rel_err(a, b, floor=1e-9):
    a = np.asarray(a)
    b = np.asarray(b)
    return float(np.max(np.abs(a - b) / (np.abs(b) + floor)))
