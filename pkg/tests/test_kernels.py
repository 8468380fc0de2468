"""Both kernel backends against each other and against convergence orders."""

import math

import numpy as np
import pytest

from mevsindy import _kernels_py, kernels
from mevsindy.model import linear_model, table1_model

try:
    from mevsindy import _ckernels
except ImportError:
    _ckernels = None

BACKENDS = [pytest.param(_kernels_py, id="python"),
            pytest.param(_ckernels, id="cython",
                         marks=pytest.mark.skipif(_ckernels is None, reason="extension not built"))]


def test_dispatch_backend():
    assert kernels.BACKEND in ("cython", "python")


def _linear_error(backend, dt, t_end=10.0):
    m = linear_model(2.0, 0.0)
    n = int(round(t_end / dt))
    states, done = backend.rk4_poly(np.array([1.0, 0.0]), 0.0, dt, n, n, *m.compiled(), 0.0, 1.0)
    assert done == n
    return abs(states[-1, 0] - math.cos(2 * t_end))


@pytest.mark.parametrize("backend", BACKENDS)
def test_rk4_fourth_order(backend):
    errs = [_linear_error(backend, dt) for dt in (0.04, 0.02, 0.01)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(orders - 4) < 0.2)


@pytest.mark.parametrize("backend", BACKENDS)
def test_trapezoid_second_order(backend):
    # window integral of cos over [-1, 1] converges as h^2
    errs = []
    for n in (20, 40, 80):
        dt = 1.0 / n
        s = np.arange(-n, n + 1) * dt
        total = backend.sliding_trapezoid(np.cos(s), n)[0] * dt
        errs.append(abs(total - 2 * math.sin(1.0)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(orders - 2) < 0.05)


@pytest.mark.parametrize("backend", BACKENDS)
def test_linear_propagate_harmonic(backend):
    # undamped oscillator: one period returns the identity
    n = 400
    a = np.zeros((2 * n + 1, 2, 2))
    a[:, 0, 1] = 1.0
    a[:, 1, 0] = -4.0
    phi = backend.rk4_linear_propagate(a, math.pi / n)
    assert np.allclose(phi, np.eye(2), atol=1e-8)


def test_backends_agree():
    if _ckernels is None:
        pytest.skip("extension not built")
    rng = np.random.default_rng(0)
    args = (np.zeros(2), 0.0, 0.01, 3000, 7, *table1_model().compiled(), 0.5, 1.999)
    a, na = _kernels_py.rk4_poly(*args)
    b, nb = _ckernels.rk4_poly(*args)
    assert na == nb and np.allclose(a, b, rtol=1e-12, atol=1e-12)
    g = rng.normal(size=5000)
    assert np.allclose(_kernels_py.sliding_trapezoid(g, 31), _ckernels.sliding_trapezoid(g, 31),
                       atol=1e-10)
    p, q = rng.random((300, 2)), rng.random((200, 2))
    assert _kernels_py.chamfer_directed(p, q) == pytest.approx(_ckernels.chamfer_directed(p, q),
                                                               rel=1e-12)


@pytest.mark.parametrize("backend", BACKENDS)
def test_rk4_blow_up_flag(backend):
    from mevsindy.model import IdentifiedModel
    from mevsindy.terms import Term
    m = IdentifiedModel(1, [1.0], [[(Term.monomial(1, x={0: 2}), -1.0)]], [[0.0, 0.0]])
    _, done = backend.rk4_poly(np.array([5.0, 0.0]), 0.0, 0.01, 10000, 1, *m.compiled(), 0.0, 1.0)
    assert done < 10000
