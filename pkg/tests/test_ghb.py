import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.interpolate import CubicSpline

from mevsindy.errors import IncompatibleProblems, MissingLinearTerm, WindowOutOfRange
from mevsindy.ghb import (CandidateLibrary, EvolutionaryRegressionProblem, assemble_library,
                          assemble_targets, build_problem, frequency_normalize,
                          harmonic_index_set, merge_problems, periodic_average)
from mevsindy.series import ForcingConfig, TimeSeries
from mevsindy.signal import HarmonicDecomposition, HarmonicEnvelope, decompose
from mevsindy.sparse import identify
from mevsindy.terms import Term

T = 0.01 * np.arange(5000)


# -- averaging -----------------------------------------------------------------------

def test_average_cos_weight():
    pa = periodic_average(np.cos(2 * T), T, 2.0, "cos", 1)
    assert np.nanmax(np.abs(pa - 1.0)) < 1e-4


def test_average_sin_weight():
    pa = periodic_average(np.cos(2 * T), T, 2.0, "sin", 1)
    assert np.nanmax(np.abs(pa)) < 1e-4


def test_average_unit_constant():
    pa = periodic_average(np.full_like(T, 3.0), T, 2.0)
    assert np.nanmax(np.abs(pa - 3.0)) < 1e-10


def test_average_window_out_of_range():
    with pytest.raises(WindowOutOfRange):
        periodic_average(np.cos(2 * T), T, 2.0, at=np.array([0, 100]))


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5), n=st.integers(1, 3))
def test_average_is_linear(a, b, n):
    f, g = np.cos(2 * T) ** 2, np.sin(3 * T)
    lhs = periodic_average(a * f + b * g, T, 2.0, "cos", n)
    rhs = a * periodic_average(f, T, 2.0, "cos", n) + b * periodic_average(g, T, 2.0, "cos", n)
    assert np.nanmax(np.abs(lhs - rhs)) < 1e-9 * (1 + abs(a) + abs(b))


# -- index set and library -----------------------------------------------------------

def test_harmonic_index_order():
    assert harmonic_index_set([2, 0, 1]) == [(0, "a"), (1, "cos"), (1, "sin"), (2, "cos"), (2, "sin")]


def test_library_names():
    lib = CandidateLibrary.build(1, 0)
    assert lib.names[:5] == ["x1", "x1^2", "x1^3", "x1^4", "x1^5"]
    assert lib.names[-2:] == ["cos(Omega t)", "sin(Omega t)"]
    assert lib.index_of_linear(0) == 0
    assert len(CandidateLibrary.build(3, 1)) == 10 + 2 * 6 + 2


def test_library_rejects_duplicates():
    with pytest.raises(Exception):
        CandidateLibrary((Term.monomial(1, x={0: 1}), Term.monomial(1, x={0: 1})))


def _tone_series(w=2.0, forcing=None):
    t = 0.01 * np.arange(4000)
    x = np.sin(w * t)
    return TimeSeries(0.0, 0.01, x, w * np.cos(w * t), forcing)


def test_library_linear_sin_row():
    ts = _tone_series()
    lib = CandidateLibrary((Term.monomial(1, x={0: 1}),))
    idx = np.arange(500, 3500)
    theta, measured = assemble_library(ts, lib, 2.0, [1], None, idx)
    assert measured
    assert np.max(np.abs(theta[1, :, 0] + 1.0)) < 1e-3   # (1, sin)
    assert np.max(np.abs(theta[0, :, 0])) < 1e-3         # (1, cos)


def test_library_forcing_cos_row():
    ts = _tone_series(forcing=ForcingConfig(1.0, 2.0))
    lib = CandidateLibrary((Term.forcing_cos(),))
    theta, _ = assemble_library(ts, lib, 2.0, [1], ts.forcing, np.arange(500, 3500))
    assert np.max(np.abs(theta[0, :, 0] + 1.0)) < 1e-3


def test_library_cubic_matches_quadrature(table1_training):
    ts = table1_training
    w = 1.9998
    lib = CandidateLibrary((Term.monomial(1, x={0: 3}),))
    idx = np.array([30000, 55555, 80001])
    theta, _ = assemble_library(ts, lib, w, [1], ts.forcing, idx)
    t, x = ts.times, ts.channel(0)
    spline = CubicSpline(t, x)
    half = np.pi / w
    scale = np.max(np.abs(x)) ** 3
    for k, i in enumerate(idx):
        ref, _ = quad(lambda s: spline(s) ** 3 * np.cos(w * s), t[i] - half, t[i] + half,
                      limit=400, epsabs=1e-12)
        ref *= -w / np.pi
        assert abs(theta[0, k, 0] - ref) < 1e-6 * scale


# -- targets ---------------------------------------------------------------------------

def _decomp(n_samples=3000, a0=None, b=None, c=None, w=2.0, dt=0.01):
    envs = {}
    orders = []
    if a0 is not None:
        envs[0] = HarmonicEnvelope(0, np.full(n_samples, a0), valid=(0, n_samples))
        orders.append(0)
    if b is not None:
        envs[1] = HarmonicEnvelope(1, np.full(n_samples, np.hypot(b, c)), np.full(n_samples, 0.0),
                                   np.full(n_samples, b), np.full(n_samples, c), (0, n_samples))
        orders.append(1)
    return HarmonicDecomposition(w, orders, envs, (0, n_samples), 0.0, dt)


def test_targets_constant_first_harmonic():
    y = assemble_targets(_decomp(b=0.4, c=-0.2))
    assert np.max(np.abs(y)) < 1e-9


def test_targets_constant_mean():
    y = assemble_targets(_decomp(a0=0.3))
    assert np.allclose(y[0], 4.0 * 0.3, atol=1e-9)


def test_targets_match_true_rhs(table1_training):
    """Envelope-side rows against the averaged true right-hand side."""
    ts = table1_training
    d = decompose(ts, 0, orders=[0, 1])
    p = build_problem(ts, d, CandidateLibrary.build(1, 0))
    xi = np.zeros(p.n_terms)
    names = p.names
    xi[names.index("x1")] = 4.0 - p.omega_hat ** 2
    xi[names.index("v1")] = 1e-2
    xi[names.index("x1^2")] = 1e-2
    xi[names.index("x1^3")] = 1e-4
    xi[names.index("cos(Omega t)")] = -1.0
    fit = p.library @ xi
    rel = np.linalg.norm(p.targets - fit) / np.linalg.norm(fit)
    assert rel < 5e-2


# -- normalization and merging -------------------------------------------------------

def _problem(seed=0, omega_hat=2.0, n=400, terms=None):
    rng = np.random.default_rng(seed)
    terms = terms or (Term.monomial(1, x={0: 1}), Term.monomial(1, x={0: 3}), Term.forcing_cos())
    lib = rng.normal(size=(3, n, len(terms)))
    y = lib @ np.array([0.3, 0.01, -1.0][:len(terms)])
    return EvolutionaryRegressionProblem(omega_hat, harmonic_index_set([0, 1]), y, lib,
                                         np.arange(n) * 0.01, 0, terms, 0.01)


def test_normalize_identity():
    p = _problem()
    q = frequency_normalize(p, p.omega_hat)
    assert np.array_equal(q.targets, p.targets)


def test_normalize_keeps_assembled_stiffness():
    p = _problem()
    q = frequency_normalize(p, 1.9)
    xp = identify(p).values
    xq = identify(q).values
    assert xp[0] + p.omega_hat ** 2 == pytest.approx(xq[0] + q.omega_hat ** 2, rel=1e-9)


def test_normalize_needs_linear_term():
    p = _problem(terms=(Term.monomial(1, x={0: 3}), Term.forcing_cos()))
    with pytest.raises(MissingLinearTerm):
        frequency_normalize(p, 1.9)


def test_merge_with_itself():
    p = _problem()
    m = merge_problems([p, p])
    assert m.segments == (400, 400)
    assert np.allclose(identify(m).values, identify(p).values, rtol=1e-10, atol=1e-12)


def test_merge_incompatible_libraries():
    p = _problem()
    q = _problem(terms=(Term.monomial(1, x={0: 1}), Term.monomial(1, x={0: 2}), Term.forcing_cos()))
    with pytest.raises(IncompatibleProblems):
        merge_problems([p, q])


def test_merge_requires_common_frequency():
    with pytest.raises(IncompatibleProblems):
        merge_problems([_problem(omega_hat=2.0), _problem(omega_hat=2.1)])


def test_problem_save_load(tmp_path):
    p = _problem()
    p.save(tmp_path / "p.npz")
    q = EvolutionaryRegressionProblem.load(tmp_path / "p.npz")
    assert q.names == p.names
    assert np.array_equal(q.targets, p.targets)
